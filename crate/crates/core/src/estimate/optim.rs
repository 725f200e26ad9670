//! Derivative-free simplex search and a finite-difference quasi-Newton method.
//!
//! Both minimize `f: &[f64] -> f64`. Non-finite objective values are treated
//! as +∞, so a penalized or undefined region repels the search instead of
//! aborting it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, GlError, Result};

pub const DEFAULT_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    SimplexDiameter,
    ObjectiveSpread,
    Gradient,
    RelativeObjective,
    RelativeParameter,
    ClosedForm,
    IterationCap,
    LineSearchFailure,
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Self::IterationCap | Self::LineSearchFailure | Self::NonFinite)
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::SimplexDiameter => "simplex_diameter",
            Self::ObjectiveSpread => "objective_spread",
            Self::Gradient => "gradient",
            Self::RelativeObjective => "relative_objective",
            Self::RelativeParameter => "relative_parameter",
            Self::ClosedForm => "closed_form",
            Self::IterationCap => "iteration_cap",
            Self::LineSearchFailure => "line_search_failure",
            Self::NonFinite => "non_finite",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [
            Self::SimplexDiameter,
            Self::ObjectiveSpread,
            Self::Gradient,
            Self::RelativeObjective,
            Self::RelativeParameter,
            Self::ClosedForm,
            Self::IterationCap,
            Self::LineSearchFailure,
            Self::NonFinite,
        ]
        .into_iter()
        .find(|t| t.code() == code)
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Keep the best objective value after every iteration in the outcome.
    pub trace: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub fevals: usize,
    pub reason: Termination,
    pub trace: Vec<f64>,
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn check_start(x0: &[f64]) -> Result<()> {
    if x0.is_empty() {
        return domain("starting point must have at least one coordinate");
    }
    if x0.iter().any(|x| !x.is_finite()) {
        return domain("starting point has a non-finite coordinate");
    }
    Ok(())
}

/// Finite starting value, jittering the start when the objective is undefined there.
fn finite_start<F: FnMut(&[f64]) -> f64>(f: &mut Counted<F>, x0: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut x = x0.to_vec();
    let mut v = f.eval(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a17);
    let mut attempt = 0;
    while !v.is_finite() {
        attempt += 1;
        if attempt > 20 {
            return Err(GlError::Numeric("objective is not finite at or near the starting point".into()));
        }
        let scale = 1e-3 * attempt as f64;
        x = x0.iter().map(|&xi| xi + scale * (1.0 + xi.abs()) * rng.random_range(-1.0..1.0)).collect();
        v = f.eval(&x);
    }
    Ok((x, v))
}

const NM_DIAMETER_TOL: f64 = 1e-8;
const NM_SPREAD_TOL: f64 = 1e-10;

/// Nelder–Mead simplex with reflection 1, expansion 2, contraction ½, shrink ½.
///
/// Stops when the simplex fits in an ∞-norm ball of radius 1e-8 around its
/// best vertex, or when the vertex objectives agree to 1e-10 relative
/// (tol·(|f_best| + tol)).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimOutcome> {
    check_start(x0)?;
    let mut f = Counted { f, calls: 0 };
    let (start, f0) = finite_start(&mut f, x0)?;
    let n = start.len();

    let max_abs = start.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let step = if max_abs > 0.0 { 0.1 * max_abs } else { 0.1 };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.clone(), f0));
    for j in 0..n {
        let mut x = start.clone();
        x[j] += step;
        let v = f.eval(&x);
        simplex.push((x, v));
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let reason = loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if opts.trace {
            trace.push(simplex[0].1);
        }
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if worst.is_finite() && (worst - best).abs() <= NM_SPREAD_TOL * (best.abs() + NM_SPREAD_TOL) {
            break Termination::ObjectiveSpread;
        }
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if diameter < NM_DIAMETER_TOL {
            break Termination::SimplexDiameter;
        }
        if iterations >= opts.max_iter {
            break Termination::IterationCap;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect()
        };
        let worst_x = simplex[n].0.clone();
        let xr = along(-1.0, &worst_x);
        let fr = f.eval(&xr);
        if fr < best {
            let xe = along(-2.0, &worst_x);
            let fe = f.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst {
            let xc = along(-0.5, &worst_x);
            let fc = f.eval(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(0.5, &worst_x);
            let fc = f.eval(&xc);
            let ok = fc < worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = f.eval(x);
        }
    };
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    let reason = if value.is_finite() { reason } else { Termination::NonFinite };
    Ok(OptimOutcome { x, value, initial_value: f0, iterations, fevals: f.calls, reason, trace })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNewtonOptions {
    pub base: OptimOptions,
    /// Scale the initial and reset inverse Hessian by diagonal curvature estimates.
    pub auto_scale: bool,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self { base: OptimOptions::default(), auto_scale: true }
    }
}

const GRAD_TOL: f64 = 1e-6;
const REL_F_TOL: f64 = 1e-10;
const REL_X_TOL: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const MAX_FIRST_STEP: f64 = 10.0;

/// Central-difference step for coordinate `x`.
pub fn fd_step(x: f64) -> f64 {
    (1e-7 * x.abs()).max(1e-6)
}

/// Central-difference gradient and diagonal second differences at `x` with value `fx`.
fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut Counted<F>, x: &[f64], fx: f64) -> (Vec<f64>, Vec<f64>) {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    let mut curv = vec![0.0; x.len()];
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let fp = f.eval(&probe);
        probe[j] = x[j] - h;
        let fm = f.eval(&probe);
        probe[j] = x[j];
        grad[j] = (fp - fm) / (2.0 * h);
        curv[j] = (fp - 2.0 * fx + fm) / (h * h);
    }
    (grad, curv)
}

/// Central-difference gradient of `f` at `x` using [`fd_step`].
pub fn numerical_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let fx = f(x);
    let mut counted = Counted { f: &mut f, calls: 0 };
    fd_gradient(&mut counted, x, fx).0
}

fn initial_inverse_hessian(curv: &[f64], auto_scale: bool) -> Vec<Vec<f64>> {
    let n = curv.len();
    let mut h = vec![vec![0.0; n]; n];
    let top = curv.iter().filter(|c| c.is_finite()).fold(0.0f64, |m, &c| m.max(c));
    for j in 0..n {
        h[j][j] = if auto_scale && top > 0.0 {
            let c = if curv[j].is_finite() { curv[j] } else { top };
            1.0 / c.max(1e-6 * top)
        } else {
            1.0
        };
    }
    h
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// BFGS on central-difference gradients with Armijo backtracking by
/// safeguarded quadratic interpolation.
///
/// With `auto_scale` the inverse Hessian starts (and restarts) from the
/// reciprocal diagonal second differences gathered alongside each gradient;
/// otherwise from the identity.
pub fn quasi_newton<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &QuasiNewtonOptions) -> Result<OptimOutcome> {
    check_start(x0)?;
    let mut f = Counted { f, calls: 0 };
    let (mut x, f0) = finite_start(&mut f, x0)?;
    let mut fx = f0;
    let n = x.len();
    let (mut g, mut curv) = fd_gradient(&mut f, &x, fx);
    let mut h = initial_inverse_hessian(&curv, opts.auto_scale);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut restarted = false;
    let mut stalled = false;

    let reason = loop {
        if opts.base.trace {
            trace.push(fx);
        }
        if g.iter().any(|v| !v.is_finite()) {
            break Termination::NonFinite;
        }
        if inf_norm(&g) < GRAD_TOL {
            break Termination::Gradient;
        }
        if iterations >= opts.base.max_iter {
            break Termination::IterationCap;
        }

        let mut p: Vec<f64> = mat_vec(&h, &g).iter().map(|v| -v).collect();
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = initial_inverse_hessian(&curv, opts.auto_scale);
            p = mat_vec(&h, &g).iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let mut t = if iterations == 0 { (MAX_FIRST_STEP / inf_norm(&p)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + t * pi).collect();
            let ft = f.eval(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            // Minimizer of the quadratic through f(x), its slope and f(x + t p),
            // kept within [t/10, t/2].
            let next = if ft.is_finite() {
                let curvature = ft - fx - slope * t;
                -slope * t * t / (2.0 * curvature)
            } else {
                0.1 * t
            };
            t = if next.is_finite() { next.clamp(0.1 * t, 0.5 * t) } else { 0.5 * t };
        }
        let Some((x_new, f_new)) = accepted else {
            if restarted {
                break Termination::LineSearchFailure;
            }
            restarted = true;
            h = initial_inverse_hessian(&curv, opts.auto_scale);
            continue;
        };
        iterations += 1;
        restarted = false;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let (g_new, curv_new) = fd_gradient(&mut f, &x_new, f_new);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let f_change = (fx - f_new).abs();
        let x_scale = inf_norm(&x_new).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        curv = curv_new;

        if inf_norm(&s) <= REL_X_TOL * x_scale {
            break Termination::RelativeParameter;
        }
        if f_change <= REL_F_TOL * fx.abs().max(1.0) {
            // A small change after a shortened step may only reflect a poor
            // inverse Hessian: retry once from the diagonal before stopping.
            if t == 1.0 || stalled {
                break Termination::RelativeObjective;
            }
            stalled = true;
            h = initial_inverse_hessian(&curv, opts.auto_scale);
            continue;
        }
        stalled = false;

        let sy = dot(&s, &y);
        if sy > 1e-12 * inf_norm(&s) * inf_norm(&y) * n as f64 && sy > 0.0 {
            if iterations == 1 && !opts.auto_scale {
                // Shanno–Phua rescaling of the identity start.
                let gamma = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= gamma);
            }
            let rho = 1.0 / sy;
            let hy = mat_vec(&h, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    };
    let reason = if fx.is_finite() { reason } else { Termination::NonFinite };
    Ok(OptimOutcome { x, value: fx, initial_value: f0, iterations, fevals: f.calls, reason, trace })
}
