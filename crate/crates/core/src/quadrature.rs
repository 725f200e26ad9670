//! Gauss rules with respect to the gamma(α, 1) probability density.
//!
//! Nodes are the eigenvalues of the Jacobi matrix of the generalized Laguerre
//! polynomials with parameter α − 1 (Golub–Welsch); weights are the
//! Christoffel numbers of the same three-term recurrence, in log form.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{domain, GlError, Result};

pub const MAX_ORDER: usize = 200;
pub const DEFAULT_ORDER: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    alpha: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// (node, weight) pairs in ascending node order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// H-point Gauss rule for the gamma(α, 1) probability measure.
///
/// Weights are held in log form: for large H the outermost weights fall
/// below the smallest positive double while staying exactly usable in
/// log-sum-exp accumulations.
pub fn gamma_rule(alpha: f64, order: usize) -> Result<QuadratureRule> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return domain(format!("gamma rule shape must be positive, got {alpha}"));
    }
    if order == 0 || order > MAX_ORDER {
        return domain(format!("gamma rule order must be in 1..={MAX_ORDER}, got {order}"));
    }
    // Jacobi matrix of the monic generalized Laguerre recurrence, parameter α − 1.
    let diag: Vec<f64> = (0..order).map(|k| 2.0 * k as f64 + alpha).collect();
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            (k * (k + alpha - 1.0)).sqrt()
        })
        .collect();

    let mut nodes = diag.clone();
    let mut work = off.clone();
    work.push(0.0);
    tridiagonal_ql(&mut nodes, &mut work)?;
    nodes.sort_by(f64::total_cmp);

    let log_weights: Vec<f64> = nodes.iter().map(|&x| christoffel_log_weight(x, &diag, &off)).collect();
    if nodes[0] <= 0.0 || nodes.windows(2).any(|w| w[0] >= w[1]) || log_weights.iter().any(|w| !w.is_finite()) {
        return Err(GlError::Numeric(format!(
            "gamma rule (alpha={alpha}, H={order}) produced an invalid node or weight"
        )));
    }
    let weights = log_weights.iter().map(|w| w.exp()).collect();
    Ok(QuadratureRule { alpha, nodes, weights, log_weights })
}

/// log of 1 / Σₖ pₖ(x)² for the orthonormal polynomials of the Jacobi matrix.
fn christoffel_log_weight(x: f64, diag: &[f64], off: &[f64]) -> f64 {
    const RESCALE: f64 = 1e100;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 1.0;
    let mut log_scale = 0.0;
    for k in 0..diag.len() - 1 {
        let coupling_prev = if k == 0 { 0.0 } else { off[k - 1] };
        let next = ((x - diag[k]) * cur - coupling_prev * prev) / off[k];
        prev = cur;
        cur = next;
        sum += cur * cur;
        if cur.abs() > RESCALE {
            prev /= RESCALE;
            cur /= RESCALE;
            sum /= RESCALE * RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    -(sum.ln() + 2.0 * log_scale)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit-shift QL.
///
/// `diag` is overwritten with the eigenvalues; `off[i]` couples rows i and
/// i+1 and has one trailing slot.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64]) -> Result<()> {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(GlError::Numeric("tridiagonal QL did not converge".into()));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

const CACHE_SLOTS: usize = 16;

thread_local! {
    static RULE_CACHE: RefCell<Vec<Arc<QuadratureRule>>> = const { RefCell::new(Vec::new()) };
}

/// [`gamma_rule`] through a small per-thread memo keyed on (α, H).
pub fn gamma_rule_cached(alpha: f64, order: usize) -> Result<Arc<QuadratureRule>> {
    let hit = RULE_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        let pos = cache
            .iter()
            .position(|r| r.alpha.to_bits() == alpha.to_bits() && r.order() == order)?;
        let rule = cache.remove(pos);
        cache.push(rule.clone());
        Some(rule)
    });
    if let Some(rule) = hit {
        return Ok(rule);
    }
    let rule = Arc::new(gamma_rule(alpha, order)?);
    RULE_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        if cache.len() == CACHE_SLOTS {
            cache.remove(0);
        }
        cache.push(rule.clone());
    });
    Ok(rule)
}

/// Σₕ f(vₕ) wₕ, the rule's approximation of E f(V) for V ~ gamma(α, 1).
pub fn mixture_expectation(rule: &QuadratureRule, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    let mut acc = 0.0;
    for (v, w) in rule.iter() {
        let fv = f(v);
        if !fv.is_finite() {
            return Err(GlError::Numeric(format!(
                "integrand is {fv} at quadrature node {v}"
            )));
        }
        acc += fv * w;
    }
    Ok(acc)
}
