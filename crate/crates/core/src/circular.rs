//! Distributions on the circle: projected normal, projected generalized
//! Laplace (PGL) and von Mises.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{domain, ensure_finite, GlError, Result};
use crate::gl::parse_csv_row;
use crate::integrate::{gauss_kronrod, Tolerance};
use crate::quadrature::QuadratureRule;
use crate::specfun::{bessel_i_ratio_and_log_i0, log_gamma, log_pn_bracket};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Reduces an angle to (−π, π].
pub fn wrap_angle(w: f64) -> f64 {
    let mut a = w.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Single-pass log Σ exp(tᵢ).
pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for t in terms {
        if t == f64::NEG_INFINITY {
            continue;
        }
        if t > max {
            sum = sum * (max - t).exp() + 1.0;
            max = t;
        } else {
            sum += (t - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        max
    } else {
        max + sum.ln()
    }
}

/// PGL parameters; Σ = [[φ², ρφ], [ρφ, 1]].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PGLParams {
    theta: [f64; 2],
    phi: f64,
    rho: f64,
    alpha: f64,
}

impl PGLParams {
    pub fn new(theta: [f64; 2], phi: f64, rho: f64, alpha: f64) -> Result<Self> {
        ensure_finite("theta", theta[0])?;
        ensure_finite("theta", theta[1])?;
        if !(phi > 0.0 && phi.is_finite()) {
            return domain(format!("phi must be positive, got {phi}"));
        }
        if !(rho.abs() < 1.0) {
            return domain(format!("rho must lie in (-1, 1), got {rho}"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        Ok(Self { theta, phi, rho, alpha })
    }

    /// Builds the parameters from a covariance with unit (2,2) entry.
    pub fn from_sigma(theta: [f64; 2], sigma: &Matrix2<f64>, alpha: f64) -> Result<Self> {
        if (sigma[(1, 1)] - 1.0).abs() > 1e-12 || (sigma[(0, 1)] - sigma[(1, 0)]).abs() > 1e-12 {
            return domain("PGL covariance must be symmetric with sigma_22 = 1");
        }
        let phi = sigma[(0, 0)].sqrt();
        Self::new(theta, phi, sigma[(0, 1)] / phi, alpha)
    }

    pub fn theta(&self) -> [f64; 2] {
        self.theta
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn sigma(&self) -> Matrix2<f64> {
        constrained_sigma(self.phi, self.rho)
    }
}

pub(crate) fn constrained_sigma(phi: f64, rho: f64) -> Matrix2<f64> {
    Matrix2::new(phi * phi, rho * phi, rho * phi, 1.0)
}

/// n angles in (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSample(Vec<f64>);

impl AngleSample {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return domain("angle sample must be nonempty");
        }
        if let Some(w) = angles.iter().find(|w| !(**w > -PI && **w <= PI)) {
            return domain(format!("angle {w} outside (-pi, pi]"));
        }
        Ok(Self(angles))
    }

    /// Wraps arbitrary finite radians into (−π, π].
    pub fn from_radians(angles: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = angles.into_iter().collect();
        for &w in &v {
            ensure_finite("angle", w)?;
        }
        Self::new(v.into_iter().map(wrap_angle).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// (Σ cos ω, Σ sin ω) / n.
    pub fn mean_resultant(&self) -> (f64, f64) {
        let n = self.0.len() as f64;
        let (c, s) = self.0.iter().fold((0.0, 0.0), |(c, s), w| (c + w.cos(), s + w.sin()));
        (c / n, s / n)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for w in &self.0 {
            writeln!(out, "{w:.16e}")?;
        }
        Ok(())
    }

    /// Reads one angle per line; values are wrapped into (−π, π].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut v = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = parse_csv_row(line, idx + 1)?;
            if row.len() != 1 {
                return Err(GlError::Parse {
                    line: idx + 1,
                    msg: format!("expected a single angle column, found {}", row.len()),
                });
            }
            v.push(row[0]);
        }
        if v.is_empty() {
            return Err(GlError::Parse { line: 0, msg: "no angles".into() });
        }
        Self::from_radians(v)
    }
}

/// Von Mises parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMParams {
    pub location: f64,
    pub concentration: f64,
}

impl VMParams {
    pub fn new(location: f64, concentration: f64) -> Result<Self> {
        ensure_finite("location", location)?;
        if !(concentration >= 0.0 && concentration.is_finite()) {
            return domain(format!("concentration must be nonnegative, got {concentration}"));
        }
        Ok(Self { location: wrap_angle(location), concentration })
    }
}

/// Angle density of N(θ, vΣ) with the per-direction pieces precomputed.
#[derive(Debug, Clone)]
pub struct PnKernel {
    theta: Vector2<f64>,
    sigma_inv: Matrix2<f64>,
    /// θᵀΣ⁻¹θ
    c: f64,
    log_const: f64,
}

impl PnKernel {
    pub fn new(theta: [f64; 2], sigma: &Matrix2<f64>) -> Result<Self> {
        ensure_finite("theta", theta[0])?;
        ensure_finite("theta", theta[1])?;
        let det = sigma.determinant();
        if !(sigma[(0, 0)] > 0.0 && det > 0.0) || (sigma[(0, 1)] - sigma[(1, 0)]).abs() > 1e-12 {
            return domain("sigma must be symmetric positive definite");
        }
        let sigma_inv = sigma.try_inverse().ok_or_else(|| GlError::Domain("sigma is singular".into()))?;
        let theta = Vector2::new(theta[0], theta[1]);
        let c = theta.dot(&(sigma_inv * theta));
        Ok(Self { theta, sigma_inv, c, log_const: -LN_2PI - 0.5 * det.ln() })
    }

    /// (wᵀΣ⁻¹w, wᵀΣ⁻¹θ) for w = (cos ω, sin ω).
    pub fn direction_terms(&self, omega: f64) -> (f64, f64) {
        let w = Vector2::new(omega.cos(), omega.sin());
        let sw = self.sigma_inv * w;
        (w.dot(&sw), sw.dot(&self.theta))
    }

    pub fn theta_quadratic(&self) -> f64 {
        self.c
    }

    /// Log-density given the direction terms from [`Self::direction_terms`].
    #[inline]
    pub fn log_density_from_terms(&self, a: f64, b: f64, v: f64) -> f64 {
        let q = b / (v * a).sqrt();
        self.log_const - 0.5 * self.c / v - a.ln() + log_pn_bracket(q)
    }

    pub fn log_density(&self, omega: f64, v: f64) -> f64 {
        let (a, b) = self.direction_terms(omega);
        self.log_density_from_terms(a, b, v)
    }
}

/// Log-density of the angle of N(θ, vΣ).
pub fn pn_conditional_logpdf(omega: f64, theta: [f64; 2], sigma: &Matrix2<f64>, v: f64) -> Result<f64> {
    ensure_finite("omega", omega)?;
    if !(v > 0.0 && v.is_finite()) {
        return domain(format!("mixing scale must be positive, got {v}"));
    }
    Ok(PnKernel::new(theta, sigma)?.log_density(wrap_angle(omega), v))
}

/// Log-density of the projected normal PN(θ, Σ).
pub fn pn_logpdf(omega: f64, theta: [f64; 2], sigma: &Matrix2<f64>) -> Result<f64> {
    pn_conditional_logpdf(omega, theta, sigma, 1.0)
}

/// PGL log-density approximated with the gamma rule: log Σₕ f_PN(ω | vₕ) wₕ.
pub fn pgl_logpdf(omega: f64, p: &PGLParams, rule: &QuadratureRule) -> Result<f64> {
    ensure_finite("omega", omega)?;
    check_rule(p, rule)?;
    let kernel = PnKernel::new(p.theta, &p.sigma())?;
    Ok(pgl_log_mixture(&kernel, wrap_angle(omega), rule))
}

pub(crate) fn check_rule(p: &PGLParams, rule: &QuadratureRule) -> Result<()> {
    if (rule.alpha() - p.alpha).abs() > 1e-12 * p.alpha {
        return domain(format!(
            "quadrature rule built for alpha = {} but parameters have alpha = {}",
            rule.alpha(),
            p.alpha
        ));
    }
    Ok(())
}

pub(crate) fn pgl_log_mixture(kernel: &PnKernel, omega: f64, rule: &QuadratureRule) -> f64 {
    let (a, b) = kernel.direction_terms(omega);
    log_sum_exp(
        rule.nodes()
            .iter()
            .zip(rule.log_weights())
            .map(|(&v, &lw)| lw + kernel.log_density_from_terms(a, b, v)),
    )
}

/// PGL log-density by adaptive integration over the gamma mixing variable.
///
/// Integrates on t with v = α eᵗ. For α ≤ 1/2 the density diverges in the
/// direction of θ; there the result is the integral truncated at a tiny v.
pub fn pgl_logpdf_exact(omega: f64, p: &PGLParams) -> Result<f64> {
    ensure_finite("omega", omega)?;
    let kernel = PnKernel::new(p.theta, &p.sigma())?;
    let (a, b) = kernel.direction_terms(wrap_angle(omega));
    let alpha = p.alpha;
    let lg = log_gamma(alpha)?;
    let log_integrand = |t: f64| {
        let v = alpha * t.exp();
        kernel.log_density_from_terms(a, b, v) + alpha * v.ln() - v - lg
    };
    let v_lo = (alpha.min(1.0) * 10f64.powf(-12.0 / alpha)).max(1e-300);
    let v_hi = alpha + 15.0 * alpha.sqrt() + 40.0;
    let (t_lo, t_hi) = ((v_lo / alpha).ln(), (v_hi / alpha).ln());
    let shift = (0..=64)
        .map(|k| log_integrand(t_lo + (t_hi - t_lo) * k as f64 / 64.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = Tolerance { abs: 0.0, rel: 1e-10, max_intervals: 4000 };
    let (value, _) = gauss_kronrod(|t| (log_integrand(t) - shift).exp(), t_lo, t_hi, tol)?;
    Ok(value.ln() + shift)
}

/// n PGL angles: atan2 of symmetric GL₂(θ, Σ, 0, α) draws.
pub fn sample_pgl<R: Rng + ?Sized>(p: &PGLParams, n: usize, rng: &mut R) -> Result<AngleSample> {
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    let gamma = Gamma::new(p.alpha, 1.0).map_err(|e| GlError::Domain(e.to_string()))?;
    // Cholesky factor of [[φ², ρφ], [ρφ, 1]].
    let (l11, l21, l22) = (p.phi, p.rho, (1.0 - p.rho * p.rho).sqrt());
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: f64 = gamma.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let sv = v.sqrt();
        let s1 = p.theta[0] + sv * l11 * z1;
        let s2 = p.theta[1] + sv * (l21 * z1 + l22 * z2);
        if s1 == 0.0 && s2 == 0.0 {
            continue;
        }
        out.push(wrap_angle(s2.atan2(s1)));
    }
    AngleSample::new(out)
}

/// n projected normal angles: atan2 of N(θ, Σ) draws.
pub fn sample_pn<R: Rng + ?Sized>(theta: [f64; 2], sigma: &Matrix2<f64>, n: usize, rng: &mut R) -> Result<AngleSample> {
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    PnKernel::new(theta, sigma)?;
    let l11 = sigma[(0, 0)].sqrt();
    let l21 = sigma[(1, 0)] / l11;
    let l22 = (sigma[(1, 1)] - l21 * l21).sqrt();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let s1 = theta[0] + l11 * z1;
        let s2 = theta[1] + l21 * z1 + l22 * z2;
        if s1 == 0.0 && s2 == 0.0 {
            continue;
        }
        out.push(wrap_angle(s2.atan2(s1)));
    }
    AngleSample::new(out)
}

/// Von Mises log-density κ cos(ω − μ₀) − log(2π I₀(κ)).
pub fn vm_logpdf(omega: f64, p: &VMParams) -> Result<f64> {
    ensure_finite("omega", omega)?;
    let (_, log_i0) = bessel_i_ratio_and_log_i0(p.concentration)?;
    Ok(p.concentration * (omega - p.location).cos() - LN_2PI - log_i0)
}

/// Best–Fisher rejection sampler for the von Mises distribution.
pub fn sample_vm<R: Rng + ?Sized>(p: &VMParams, n: usize, rng: &mut R) -> Result<AngleSample> {
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    let kappa = p.concentration;
    let mut out = Vec::with_capacity(n);
    if kappa < 1e-8 {
        for _ in 0..n {
            out.push(wrap_angle(PI * (2.0 * rng.random::<f64>() - 1.0)));
        }
        return AngleSample::new(out);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    while out.len() < n {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let step = f.clamp(-1.0, 1.0).acos();
            let w = if u3 > 0.5 { p.location + step } else { p.location - step };
            out.push(wrap_angle(w));
        }
    }
    AngleSample::new(out)
}

pub const VM_KAPPA_CAP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmDegeneracy {
    /// Mean resultant length is zero; κ = 0 and the location is arbitrary.
    ZeroResultant,
    /// Mean resultant length is (numerically) one; κ capped.
    ConcentrationCapped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmFit {
    pub params: VMParams,
    pub loglik: f64,
    pub degeneracy: Option<VmDegeneracy>,
}

fn vm_kappa_initial(r: f64) -> f64 {
    if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    }
}

/// Closed-form location and Newton-solved concentration maximizing the VM likelihood.
pub fn vm_fit(data: &AngleSample) -> Result<VmFit> {
    let n = data.len();
    if n < 2 {
        return Err(GlError::Precondition(format!("von Mises fit needs n >= 2, got {n}")));
    }
    let (c, s) = data.mean_resultant();
    let rbar = c.hypot(s);
    let location = if rbar > 0.0 { wrap_angle(s.atan2(c)) } else { 0.0 };
    let (kappa, degeneracy) = if rbar < 1e-15 {
        (0.0, Some(VmDegeneracy::ZeroResultant))
    } else if rbar >= 1.0 - 1e-12 {
        (VM_KAPPA_CAP, Some(VmDegeneracy::ConcentrationCapped))
    } else {
        let mut kappa = vm_kappa_initial(rbar).min(VM_KAPPA_CAP);
        for _ in 0..100 {
            let (a, _) = bessel_i_ratio_and_log_i0(kappa)?;
            let deriv = 1.0 - a * a - a / kappa;
            let step = (a - rbar) / deriv;
            let next = (kappa - step).clamp(0.5 * kappa, 2.0 * kappa);
            let done = (next - kappa).abs() <= 1e-10 * kappa.max(1e-10);
            kappa = next;
            if done {
                break;
            }
        }
        if kappa >= VM_KAPPA_CAP {
            (VM_KAPPA_CAP, Some(VmDegeneracy::ConcentrationCapped))
        } else {
            (kappa, None)
        }
    };
    let (_, log_i0) = bessel_i_ratio_and_log_i0(kappa)?;
    let nf = n as f64;
    let loglik = nf * (kappa * rbar - LN_2PI - log_i0);
    Ok(VmFit { params: VMParams { location, concentration: kappa }, loglik, degeneracy })
}
