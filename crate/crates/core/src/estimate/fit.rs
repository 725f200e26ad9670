use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::circular::{vm_fit, AngleSample, PGLParams};
use crate::error::{GlError, Result};
use crate::gl::{GLParams, ObservationMatrix};

use super::objective::{GlDirectObjective, GlGqObjective, ObjectiveValue, PglGqObjective, PnObjective};
use super::optim::{nelder_mead, quasi_newton, OptimOptions, OptimOutcome, QuasiNewtonOptions, Termination};
use super::transform::{gl_eta_len, pack_gl, pack_pgl, unpack_gl, unpack_pgl, unpack_pn, EtaVector};
use super::{FitResult, FittedParams, Method, ObjectiveKind, OptimizerKind};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Starting point; the moment-based initializer is used when absent.
    pub init: Option<EtaVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: super::optim::DEFAULT_MAX_ITER, init: None }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Moment-matching start: θ₀ = median, μ₀ = mean − median, α₀ = 1 and
/// Σ₀ = S − μ₀μ₀ᵀ with its eigenvalues floored at 1e-6 of the mean variance.
pub fn initial_eta_gl(data: &ObservationMatrix) -> Result<EtaVector> {
    let (n, d) = (data.len(), data.dim());
    if n < 2 {
        return Err(GlError::Precondition("initialization needs at least two observations".into()));
    }
    let mean = DVector::from_iterator(d, (0..d).map(|j| data.column(j).sum::<f64>() / n as f64));
    let med = DVector::from_iterator(d, (0..d).map(|j| median(data.column(j).collect())));
    let mut cov = DMatrix::zeros(d, d);
    for y in data.rows() {
        let r = DVector::from_column_slice(y) - &mean;
        cov += &r * r.transpose();
    }
    cov /= (n - 1) as f64;
    for j in 0..d {
        if !(cov[(j, j)] > 1e-14 * (1.0 + mean[j] * mean[j])) {
            return Err(GlError::Precondition(format!("sample variance of coordinate {j} is degenerate")));
        }
    }
    let mu = &mean - &med;
    let eig = SymmetricEigen::new(&cov - &mu * mu.transpose());
    let floor = 1e-6 * cov.trace() / d as f64;
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let mut sigma = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    sigma = 0.5 * (&sigma + sigma.transpose());
    pack_gl(&GLParams::new(med, sigma, mu, 1.0)?)
}

/// θ₀ = unit vector along the circular mean direction, φ₀ = 1, ρ₀ = 0, α₀ = 1.
pub fn initial_eta_pgl(data: &AngleSample) -> EtaVector {
    let (c, s) = data.mean_resultant();
    let r = c.hypot(s);
    let theta = if r > 0.0 { [c / r, s / r] } else { [1.0, 0.0] };
    pack_pgl(&PGLParams::new(theta, 1.0, 0.0, 1.0).expect("fixed start is valid"))
}

fn run_optimizer(
    method: &Method,
    opts: &FitOptions,
    eta0: &[f64],
    mut objective: impl FnMut(&[f64]) -> ObjectiveValue,
) -> Result<(OptimOutcome, usize, f64)> {
    let base = OptimOptions { max_iter: opts.max_iter, trace: false };
    let f = |x: &[f64]| objective(x).value;
    let start = Instant::now();
    let outcome = match method.optimizer {
        OptimizerKind::NelderMead => nelder_mead(f, eta0, &base)?,
        OptimizerKind::Bfgs => quasi_newton(f, eta0, &QuasiNewtonOptions { base, auto_scale: false })?,
        OptimizerKind::QuasiNewton => quasi_newton(f, eta0, &QuasiNewtonOptions { base, auto_scale: true })?,
        OptimizerKind::ClosedForm => {
            return Err(GlError::Domain(format!("method {method} has no iterative optimizer")));
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let penalized = objective(&outcome.x).penalized;
    Ok((outcome, penalized, elapsed))
}

fn finish(
    method: Method,
    outcome: OptimOutcome,
    penalized: usize,
    elapsed: f64,
    params_hat: FittedParams,
) -> FitResult {
    let loglik = -outcome.value;
    let reason = if penalized > 0 || !loglik.is_finite() { Termination::NonFinite } else { outcome.reason };
    FitResult {
        eta_hat: EtaVector(outcome.x),
        params_hat,
        loglik,
        initial_loglik: -outcome.initial_value,
        converged: reason.converged(),
        reason,
        iterations: outcome.iterations,
        function_evals: outcome.fevals,
        elapsed_seconds: elapsed,
        method,
        penalized,
    }
}

fn start_point(opts: &FitOptions, k: usize, default: impl FnOnce() -> Result<EtaVector>) -> Result<EtaVector> {
    let eta0 = match &opts.init {
        Some(e) => e.clone(),
        None => default()?,
    };
    if eta0.len() != k {
        return Err(GlError::Domain(format!("starting point needs {k} entries, got {}", eta0.len())));
    }
    Ok(eta0)
}

fn quadrature_nodes(method: &Method) -> Result<usize> {
    method.nodes.ok_or_else(|| GlError::Domain(format!("method {method} needs a quadrature order")))
}

/// Maximum likelihood fit of a GL distribution.
pub fn fit_gl(data: &ObservationMatrix, method: Method, opts: &FitOptions) -> Result<FitResult> {
    let d = data.dim();
    let k = gl_eta_len(d);
    if data.len() < k + 1 {
        return Err(GlError::Precondition(format!(
            "fitting a {d}-dimensional GL needs at least {} observations, got {}",
            k + 1,
            data.len()
        )));
    }
    let eta0 = start_point(opts, k, || initial_eta_gl(data))?;
    let (outcome, penalized, elapsed) = match method.objective {
        ObjectiveKind::Quadrature => {
            let obj = GlGqObjective::new(data, quadrature_nodes(&method)?)?;
            run_optimizer(&method, opts, eta0.as_slice(), |x| obj.evaluate(x))?
        }
        ObjectiveKind::Analytic => {
            let obj = GlDirectObjective::new(data)?;
            run_optimizer(&method, opts, eta0.as_slice(), |x| obj.evaluate(x))?
        }
    };
    let params = unpack_gl(&outcome.x, d)?;
    Ok(finish(method, outcome, penalized, elapsed, FittedParams::Gl(params)))
}

/// Maximum likelihood fit of a PGL distribution by the quadrature objective.
pub fn fit_pgl(data: &AngleSample, method: Method, opts: &FitOptions) -> Result<FitResult> {
    if data.len() < 6 {
        return Err(GlError::Precondition(format!("PGL fit needs n >= 6, got {}", data.len())));
    }
    if method.objective != ObjectiveKind::Quadrature {
        return Err(GlError::Domain(format!("PGL has no closed-form density; method {method} is not available")));
    }
    let eta0 = start_point(opts, super::PGL_ETA_LEN, || Ok(initial_eta_pgl(data)))?;
    let obj = PglGqObjective::new(data, quadrature_nodes(&method)?)?;
    let (outcome, penalized, elapsed) = run_optimizer(&method, opts, eta0.as_slice(), |x| obj.evaluate(x))?;
    let params = unpack_pgl(&outcome.x)?;
    Ok(finish(method, outcome, penalized, elapsed, FittedParams::Pgl(params)))
}

/// Projected normal fit under Σ₂₂ = 1 with the curvature-scaled quasi-Newton method.
pub fn fit_pn(data: &AngleSample, opts: &FitOptions) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(GlError::Precondition(format!("PN fit needs n >= 5, got {}", data.len())));
    }
    let eta0 = start_point(opts, super::PN_ETA_LEN, || Ok(EtaVector(initial_eta_pgl(data).0[..4].to_vec())))?;
    let obj = PnObjective::new(data)?;
    let method = Method::DIRECT_ML_QN;
    let (outcome, penalized, elapsed) = run_optimizer(&method, opts, eta0.as_slice(), |x| obj.evaluate(x))?;
    let (theta, phi, rho) = unpack_pn(&outcome.x)?;
    Ok(finish(method, outcome, penalized, elapsed, FittedParams::Pn { theta, phi, rho }))
}

/// von Mises fit as a [`FitResult`]; η = (location, log κ).
pub fn fit_vm(data: &AngleSample) -> Result<FitResult> {
    let start = Instant::now();
    let fit = vm_fit(data)?;
    let elapsed = start.elapsed().as_secs_f64();
    let p = fit.params;
    Ok(FitResult {
        eta_hat: EtaVector(vec![p.location, p.concentration.ln()]),
        params_hat: FittedParams::Vm(p),
        loglik: fit.loglik,
        initial_loglik: fit.loglik,
        converged: fit.loglik.is_finite(),
        reason: if fit.loglik.is_finite() { Termination::ClosedForm } else { Termination::NonFinite },
        iterations: 0,
        function_evals: 0,
        elapsed_seconds: elapsed,
        method: Method::CLOSED_FORM,
        penalized: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gl::sample_gl;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn initializer_matches_moments() {
        let data = ObservationMatrix::new(1, vec![0.0, 1.0, 2.0, 10.0]).unwrap();
        let p = unpack_gl(initial_eta_gl(&data).unwrap().as_slice(), 1).unwrap();
        assert!((p.theta()[0] - 1.5).abs() < 1e-12);
        assert!((p.mu()[0] - 1.75).abs() < 1e-12);
        let var = (3.25f64.powi(2) + 2.25f64.powi(2) + 1.25f64.powi(2) + 6.75f64.powi(2)) / 3.0;
        assert!((p.sigma()[(0, 0)] - (var - 1.75 * 1.75)).abs() < 1e-10);
        assert!((p.alpha() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_data_rejected() {
        let data = ObservationMatrix::new(1, vec![3.0; 20]).unwrap();
        assert!(matches!(fit_gl(&data, Method::GQ_QN_H20, &FitOptions::default()), Err(GlError::Precondition(_))));
    }

    #[test]
    fn too_few_observations() {
        let data = ObservationMatrix::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(fit_gl(&data, Method::GQ_QN_H20, &FitOptions::default()).is_err());
        let angles = AngleSample::from_radians([0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert!(matches!(fit_pgl(&angles, Method::GQ_QN_H20, &FitOptions::default()), Err(GlError::Precondition(_))));
    }

    #[test]
    fn quick_gl_fit_improves_on_start() {
        let p = GLParams::univariate(1.0, 1.0, 3.0, 2.0).unwrap();
        let data = sample_gl(&p, 200, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for method in [Method::GQ_QN_H20, Method::GQ_NM_H20, Method::DIRECT_ML] {
            let fit = fit_gl(&data, method, &FitOptions::default()).unwrap();
            assert!(fit.converged, "{method}: {:?}", fit.reason);
            assert!(fit.loglik >= fit.initial_loglik);
            assert!(fit.iterations <= 5000);
        }
    }
}
