//! Negative loglikelihood objectives over unconstrained parameter vectors.

use std::f64::consts::PI;

use crate::circular::{log_sum_exp, pgl_log_mixture, AngleSample, PnKernel};
use crate::error::{domain, Result};
use crate::gl::{check_spd, GlDensity, ObservationMatrix};
use crate::quadrature::{gamma_rule_cached, MAX_ORDER};

use super::transform::{gl_eta_len, unpack_gl, unpack_pgl, unpack_pn, PGL_ETA_LEN, PN_ETA_LEN};

/// Contribution of one observation whose every mixture term underflows.
pub const UNDERFLOW_PENALTY: f64 = 1e10;
/// Per-observation value used when η maps to parameters the objective cannot evaluate.
pub const INVALID_PENALTY: f64 = 1e12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// Observations that contributed a penalty instead of a loglikelihood term.
    pub penalized: usize,
}

impl ObjectiveValue {
    fn invalid(n: usize) -> Self {
        Self { value: INVALID_PENALTY * n as f64, penalized: n }
    }
}

fn check_order(h: usize) -> Result<()> {
    if h == 0 || h > MAX_ORDER {
        return domain(format!("quadrature order must be in 1..={MAX_ORDER}, got {h}"));
    }
    Ok(())
}

fn check_len(eta: &[f64], k: usize) -> Result<()> {
    if eta.len() != k {
        return domain(format!("parameter vector needs {k} entries, got {}", eta.len()));
    }
    Ok(())
}

/// Quadrature approximation of the GL negative loglikelihood.
#[derive(Debug, Clone)]
pub struct GlGqObjective<'a> {
    data: &'a ObservationMatrix,
    order: usize,
}

impl<'a> GlGqObjective<'a> {
    pub fn new(data: &'a ObservationMatrix, order: usize) -> Result<Self> {
        if data.is_empty() {
            return domain("objective needs at least one observation");
        }
        check_order(order)?;
        Ok(Self { data, order })
    }

    pub fn eta_len(&self) -> usize {
        gl_eta_len(self.data.dim())
    }

    /// Objective at `eta`; parameters that cannot be evaluated give a large finite value.
    pub fn evaluate(&self, eta: &[f64]) -> ObjectiveValue {
        self.try_evaluate(eta).unwrap_or_else(|_| ObjectiveValue::invalid(self.data.len()))
    }

    fn try_evaluate(&self, eta: &[f64]) -> Result<ObjectiveValue> {
        let d = self.data.dim();
        let p = unpack_gl(eta, d)?;
        let rule = gamma_rule_cached(p.alpha(), self.order)?;
        let chol = check_spd(p.sigma())?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let u = l.solve_lower_triangular(p.mu()).expect("cholesky factor is nonsingular");
        let mu_quad = u.norm_squared();

        let half_d = 0.5 * d as f64;
        let consts: Vec<f64> = rule
            .nodes()
            .iter()
            .zip(rule.log_weights())
            .map(|(&v, &lw)| lw - half_d * (LN_2PI + v.ln()) - 0.5 * log_det)
            .collect();
        let inv_nodes: Vec<f64> = rule.nodes().iter().map(|v| 1.0 / v).collect();

        let theta = p.theta().as_slice();
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        let mut penalized = 0;
        for y in self.data.rows() {
            // z = L⁻¹(y − θ) by forward substitution.
            for i in 0..d {
                let mut acc = y[i] - theta[i];
                for j in 0..i {
                    acc -= l[(i, j)] * z[j];
                }
                z[i] = acc / l[(i, i)];
            }
            let q2: f64 = z.iter().map(|v| v * v).sum();
            let linear: f64 = z.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            let mix = log_sum_exp(
                consts
                    .iter()
                    .zip(rule.nodes())
                    .zip(&inv_nodes)
                    .map(|((&c, &v), &iv)| c - 0.5 * (q2 * iv + v * mu_quad)),
            );
            let ll = linear + mix;
            if ll.is_finite() {
                total -= ll;
            } else {
                total += UNDERFLOW_PENALTY;
                penalized += 1;
            }
        }
        Ok(ObjectiveValue { value: total, penalized })
    }
}

/// −Σᵢ log Σₕ f_N(yᵢ | θ + vₕμ, vₕΣ) wₕ with the H-point rule at α = exp(ζ).
pub fn gl_gq_negloglik(eta: &[f64], data: &ObservationMatrix, order: usize) -> Result<ObjectiveValue> {
    let obj = GlGqObjective::new(data, order)?;
    check_len(eta, obj.eta_len())?;
    Ok(obj.evaluate(eta))
}

/// Analytic GL negative loglikelihood.
#[derive(Debug, Clone)]
pub struct GlDirectObjective<'a> {
    data: &'a ObservationMatrix,
}

impl<'a> GlDirectObjective<'a> {
    pub fn new(data: &'a ObservationMatrix) -> Result<Self> {
        if data.is_empty() {
            return domain("objective needs at least one observation");
        }
        Ok(Self { data })
    }

    pub fn evaluate(&self, eta: &[f64]) -> ObjectiveValue {
        self.try_evaluate(eta).unwrap_or_else(|_| ObjectiveValue::invalid(self.data.len()))
    }

    fn try_evaluate(&self, eta: &[f64]) -> Result<ObjectiveValue> {
        let p = unpack_gl(eta, self.data.dim())?;
        let density = GlDensity::new(&p)?;
        let scale = p.sigma().diagonal().iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
        let mut total = 0.0;
        let mut penalized = 0;
        for y in self.data.rows() {
            let ll = match density.logpdf(y) {
                Ok(v) => v,
                // Exact tie with θ while α ≤ d/2: nudge off the pole.
                Err(crate::GlError::Singularity(_)) => {
                    let mut nudged = y.to_vec();
                    nudged[0] += 1e-12 * scale.max(f64::MIN_POSITIVE);
                    density.logpdf(&nudged)?
                }
                Err(e) => return Err(e),
            };
            if ll.is_finite() {
                total -= ll;
            } else {
                total += UNDERFLOW_PENALTY;
                penalized += 1;
            }
        }
        Ok(ObjectiveValue { value: total, penalized })
    }
}

/// Quadrature approximation of the PGL negative loglikelihood.
#[derive(Debug, Clone)]
pub struct PglGqObjective<'a> {
    data: &'a AngleSample,
    order: usize,
}

impl<'a> PglGqObjective<'a> {
    pub fn new(data: &'a AngleSample, order: usize) -> Result<Self> {
        if data.is_empty() {
            return domain("objective needs at least one observation");
        }
        check_order(order)?;
        Ok(Self { data, order })
    }

    pub fn evaluate(&self, eta: &[f64]) -> ObjectiveValue {
        self.try_evaluate(eta).unwrap_or_else(|_| ObjectiveValue::invalid(self.data.len()))
    }

    fn try_evaluate(&self, eta: &[f64]) -> Result<ObjectiveValue> {
        let p = unpack_pgl(eta)?;
        let rule = gamma_rule_cached(p.alpha(), self.order)?;
        let kernel = PnKernel::new(p.theta(), &p.sigma())?;
        let mut total = 0.0;
        let mut penalized = 0;
        for &omega in self.data.as_slice() {
            let ll = pgl_log_mixture(&kernel, omega, &rule);
            if ll.is_finite() {
                total -= ll;
            } else {
                total += UNDERFLOW_PENALTY;
                penalized += 1;
            }
        }
        Ok(ObjectiveValue { value: total, penalized })
    }
}

/// −Σᵢ log Σₕ f_PN(ωᵢ | vₕ) wₕ with the H-point rule at α = exp(ζ).
pub fn pgl_gq_negloglik(eta: &[f64], data: &AngleSample, order: usize) -> Result<ObjectiveValue> {
    check_len(eta, PGL_ETA_LEN)?;
    Ok(PglGqObjective::new(data, order)?.evaluate(eta))
}

/// Projected normal negative loglikelihood over η = (θ₁, θ₂, δ₁, δ₂).
#[derive(Debug, Clone)]
pub struct PnObjective<'a> {
    data: &'a AngleSample,
}

impl<'a> PnObjective<'a> {
    pub fn new(data: &'a AngleSample) -> Result<Self> {
        if data.is_empty() {
            return domain("objective needs at least one observation");
        }
        Ok(Self { data })
    }

    pub fn evaluate(&self, eta: &[f64]) -> ObjectiveValue {
        self.try_evaluate(eta).unwrap_or_else(|_| ObjectiveValue::invalid(self.data.len()))
    }

    fn try_evaluate(&self, eta: &[f64]) -> Result<ObjectiveValue> {
        let (theta, phi, rho) = unpack_pn(eta)?;
        let kernel = PnKernel::new(theta, &crate::circular::constrained_sigma(phi, rho))?;
        let mut total = 0.0;
        let mut penalized = 0;
        for &omega in self.data.as_slice() {
            let ll = kernel.log_density(omega, 1.0);
            if ll.is_finite() {
                total -= ll;
            } else {
                total += UNDERFLOW_PENALTY;
                penalized += 1;
            }
        }
        Ok(ObjectiveValue { value: total, penalized })
    }
}

pub fn pn_negloglik(eta: &[f64], data: &AngleSample) -> Result<ObjectiveValue> {
    check_len(eta, PN_ETA_LEN)?;
    Ok(PnObjective::new(data)?.evaluate(eta))
}

/// n log 2π, the negative loglikelihood of the circular uniform law.
pub fn uniform_negloglik(n: usize) -> f64 {
    n as f64 * (2.0 * PI).ln()
}
