//! Laplace, asymmetric Laplace and generalized Laplace (GL) distributions in
//! one and d dimensions.

use std::f64::consts::{LN_2, SQRT_2};
use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{domain, ensure_finite, GlError, Result};
use crate::specfun::{log_bessel_k, log_gamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters (θ, Σ, μ, α) of a d-dimensional GL distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GLParams {
    theta: DVector<f64>,
    sigma: DMatrix<f64>,
    mu: DVector<f64>,
    alpha: f64,
}

impl GLParams {
    pub fn new(theta: DVector<f64>, sigma: DMatrix<f64>, mu: DVector<f64>, alpha: f64) -> Result<Self> {
        let d = theta.len();
        if d == 0 {
            return domain("dimension must be at least 1");
        }
        if sigma.nrows() != d || sigma.ncols() != d || mu.len() != d {
            return domain(format!(
                "inconsistent dimensions: theta {d}, sigma {}x{}, mu {}",
                sigma.nrows(),
                sigma.ncols(),
                mu.len()
            ));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        for x in theta.iter().chain(sigma.iter()).chain(mu.iter()) {
            ensure_finite("parameter entry", *x)?;
        }
        check_spd(&sigma)?;
        Ok(Self { theta, sigma, mu, alpha })
    }

    /// Univariate GL(θ, σ, μ, α) with scale σ, i.e. Σ = σ².
    pub fn univariate(theta: f64, sigma: f64, mu: f64, alpha: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        Self::new(
            DVector::from_element(1, theta),
            DMatrix::from_element(1, 1, sigma * sigma),
            DVector::from_element(1, mu),
            alpha,
        )
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub(crate) fn check_spd(sigma: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let d = sigma.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return domain(format!("sigma is not symmetric at ({i},{j})"));
            }
        }
    }
    Cholesky::new(sigma.clone()).ok_or_else(|| GlError::Domain("sigma is not positive definite".into()))
}

/// n observations of dimension d, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl ObservationMatrix {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return domain(format!(
                "observation matrix needs n >= 1 rows of dimension {dim}, got {} values",
                values.len()
            ));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return domain(format!("observation entries must be finite, got {x}"));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return domain("rows have differing lengths");
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Headerless CSV, one observation per row, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut dim = 0;
        let mut values = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = parse_csv_row(line, idx + 1)?;
            if dim == 0 {
                dim = row.len();
            } else if row.len() != dim {
                return Err(GlError::Parse {
                    line: idx + 1,
                    msg: format!("expected {dim} columns, found {}", row.len()),
                });
            }
            values.extend(row);
        }
        if values.is_empty() {
            return Err(GlError::Parse { line: 0, msg: "no observations".into() });
        }
        Self::new(dim, values)
    }
}

pub(crate) fn parse_csv_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            let field = field.trim();
            match field.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(GlError::Parse { line: lineno, msg: format!("invalid number '{field}'") }),
            }
        })
        .collect()
}

fn check_scale(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        domain(format!("sigma must be positive, got {sigma}"))
    }
}

/// Log-density of the classical Laplace L(θ, σ) with variance σ².
pub fn logpdf_laplace(y: f64, theta: f64, sigma: f64) -> Result<f64> {
    check_scale(sigma)?;
    Ok(-(SQRT_2 * sigma).ln() - SQRT_2 * (y - theta).abs() / sigma)
}

/// Log-density of the asymmetric Laplace AL(θ, σ, μ).
pub fn logpdf_al(y: f64, theta: f64, sigma: f64, mu: f64) -> Result<f64> {
    check_scale(sigma)?;
    let s = (2.0 * sigma * sigma + mu * mu).sqrt();
    let rate = if y >= theta { (s - mu) / (sigma * sigma) } else { (s + mu) / (sigma * sigma) };
    Ok(-((2.0 + mu * mu / (sigma * sigma)).sqrt() * sigma).ln() - rate * (y - theta).abs())
}

/// Shared GL log-density given Q, P, μᵀΣ⁻¹(y−θ) and log|Σ|.
fn gl_log_kernel(q: f64, p: f64, linear: f64, log_det: f64, d: usize, alpha: f64) -> Result<f64> {
    let half_d = 0.5 * d as f64;
    let nu = alpha - half_d;
    let bessel_part = if q > 0.0 {
        nu * (q.ln() - p.ln()) + log_bessel_k(nu, q * p)?
    } else if nu > 0.0 {
        // (Q/P)^ν K_ν(QP) → Γ(ν) 2^(ν−1) P^(−2ν) as Q → 0.
        log_gamma(nu)? + (nu - 1.0) * LN_2 - 2.0 * nu * p.ln()
    } else {
        return Err(GlError::Singularity(format!(
            "GL density is infinite at y = theta when alpha ({alpha}) <= d/2 ({half_d})"
        )));
    };
    Ok(LN_2 + linear - half_d * LN_2PI - log_gamma(alpha)? - 0.5 * log_det + bessel_part)
}

/// Log-density of the univariate GL at `y`.
pub fn logpdf_gl_uni(y: f64, p: &GLParams) -> Result<f64> {
    if p.dim() != 1 {
        return domain(format!("univariate density needs d = 1, got d = {}", p.dim()));
    }
    ensure_finite("y", y)?;
    let (theta, var, mu) = (p.theta[0], p.sigma[(0, 0)], p.mu[0]);
    let sigma = var.sqrt();
    let r = y - theta;
    let q = r.abs() / sigma;
    let pp = (2.0 + mu * mu / var).sqrt();
    gl_log_kernel(q, pp, mu * r / var, var.ln(), 1, p.alpha)
}

/// Precomputed factorization for evaluating a GL density at many points.
#[derive(Debug, Clone)]
pub struct GlDensity {
    params: GLParams,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    sigma_inv_mu: DVector<f64>,
    p: f64,
}

impl GlDensity {
    pub fn new(params: &GLParams) -> Result<Self> {
        let chol = check_spd(&params.sigma)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let sigma_inv_mu = chol.solve(&params.mu);
        let p = (2.0 + params.mu.dot(&sigma_inv_mu)).sqrt();
        Ok(Self { params: params.clone(), chol, log_det, sigma_inv_mu, p })
    }

    /// Q(y, θ, Σ) = √((y−θ)ᵀΣ⁻¹(y−θ)).
    pub fn mahalanobis(&self, y: &[f64]) -> f64 {
        let r = DVector::from_column_slice(y) - &self.params.theta;
        let z = self.chol.l().solve_lower_triangular(&r).expect("cholesky factor is nonsingular");
        z.norm()
    }

    pub fn logpdf(&self, y: &[f64]) -> Result<f64> {
        let d = self.params.dim();
        if y.len() != d {
            return domain(format!("observation has dimension {}, expected {d}", y.len()));
        }
        for &v in y {
            ensure_finite("y", v)?;
        }
        let r = DVector::from_column_slice(y) - &self.params.theta;
        let z = self.chol.l().solve_lower_triangular(&r).expect("cholesky factor is nonsingular");
        let q = z.norm();
        gl_log_kernel(q, self.p, self.sigma_inv_mu.dot(&r), self.log_det, d, self.params.alpha)
    }
}

/// Log-density of the d-dimensional GL at `y`.
pub fn logpdf_gl_multi(y: &[f64], p: &GLParams) -> Result<f64> {
    GlDensity::new(p)?.logpdf(y)
}

/// Closed-form mean θ + αμ and covariance α(Σ + μμᵀ).
pub fn gl_moments(p: &GLParams) -> (DVector<f64>, DMatrix<f64>) {
    let mean = &p.theta + &p.mu * p.alpha;
    let cov = (&p.sigma + &p.mu * p.mu.transpose()) * p.alpha;
    (mean, cov)
}

/// n draws of θ + Vμ + √V Z with V ~ gamma(α, 1), Z ~ N(0, Σ).
pub fn sample_gl<R: Rng + ?Sized>(p: &GLParams, n: usize, rng: &mut R) -> Result<ObservationMatrix> {
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    let d = p.dim();
    let chol = check_spd(&p.sigma)?;
    let lower = chol.l();
    let gamma = Gamma::new(p.alpha, 1.0).map_err(|e| GlError::Domain(e.to_string()))?;
    let mut values = Vec::with_capacity(n * d);
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        let v: f64 = gamma.sample(rng);
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let lz = &lower * &z;
        let sv = v.sqrt();
        for j in 0..d {
            values.push(p.theta[j] + v * p.mu[j] + sv * lz[j]);
        }
    }
    ObservationMatrix::new(d, values)
}

/// Log-density of the radial variable R of the symmetric GL's polar representation.
pub fn radial_logpdf(r: f64, d: usize, alpha: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("radius must be positive, got {r}"));
    }
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return domain(format!("alpha must be positive, got {alpha}"));
    }
    let half_d = 0.5 * d as f64;
    let s = half_d + alpha;
    Ok(LN_2 + (s - 1.0) * r.ln() + log_bessel_k(-alpha + half_d, SQRT_2 * r)?
        - (s - 2.0) * 0.5 * LN_2
        - log_gamma(alpha)?
        - log_gamma(half_d)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laplace_at_location() {
        let v = logpdf_laplace(0.0, 0.0, 1.0).unwrap();
        assert!((v - (-(2f64.sqrt()).ln())).abs() < 1e-15);
        let v = logpdf_laplace(1.0, 0.0, 1.0).unwrap();
        assert!((v - (-0.346_573_590_279_972_6 - SQRT_2)).abs() < 1e-14);
        assert!(logpdf_laplace(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn al_reduces_to_laplace() {
        for y in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let a = logpdf_al(y, 0.3, 1.7, 0.0).unwrap();
            let b = logpdf_laplace(y, 0.3, 1.7).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
        let (s, mu) = (2.0, -1.5);
        let at = logpdf_al(1.0, 1.0, s, mu).unwrap();
        assert!((at + ((2.0 + mu * mu / (s * s)).sqrt() * s).ln()).abs() < 1e-15);
    }

    #[test]
    fn gl_alpha_one_is_al() {
        let p = GLParams::univariate(0.5, 1.3, -0.8, 1.0).unwrap();
        for k in -40..=40 {
            let y = 0.5 + k as f64 * 0.173;
            let a = logpdf_gl_uni(y, &p).unwrap();
            let b = logpdf_al(y, 0.5, 1.3, -0.8).unwrap();
            assert!((a - b).abs() < 1e-10, "y={y}: {a} vs {b}");
        }
    }

    #[test]
    fn singular_point_contract() {
        let p = GLParams::univariate(0.0, 1.0, 0.0, 0.5).unwrap();
        assert!(matches!(logpdf_gl_uni(0.0, &p), Err(GlError::Singularity(_))));
        let p = GLParams::univariate(0.0, 1.0, 0.4, 2.0).unwrap();
        let at = logpdf_gl_uni(0.0, &p).unwrap();
        let near = logpdf_gl_uni(1e-7, &p).unwrap();
        assert!((at - near).abs() < 1e-6);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GLParams::univariate(0.0, -1.0, 0.0, 1.0).is_err());
        assert!(GLParams::univariate(0.0, 1.0, 0.0, 0.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GLParams::new(DVector::zeros(2), bad, DVector::zeros(2), 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(GLParams::new(DVector::zeros(2), asym, DVector::zeros(2), 1.0).is_err());
        assert!(GLParams::new(DVector::zeros(2), DMatrix::identity(2, 2), DVector::zeros(3), 1.0).is_err());
    }

    #[test]
    fn moments_closed_form() {
        let p = GLParams::univariate(1.0, 1.0, 3.0, 2.0).unwrap();
        let (m, c) = gl_moments(&p);
        assert_eq!((m[0], c[(0, 0)]), (7.0, 20.0));
        let p = GLParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            DVector::from_vec(vec![2.0, 3.0]),
            2.0,
        )
        .unwrap();
        let (m, c) = gl_moments(&p);
        assert_eq!(m.as_slice(), &[4.0, 6.0]);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[12.0, 14.0, 14.0, 22.0]));
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = GLParams::univariate(1.0, 1.0, 3.0, 2.0).unwrap();
        let a = sample_gl(&p, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_gl(&p, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(sample_gl(&p, 0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn location_equivariance() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7]);
        let mu = DVector::from_vec(vec![0.4, -1.0]);
        let p = GLParams::new(DVector::from_vec(vec![0.5, -0.25]), sigma.clone(), mu.clone(), 1.7).unwrap();
        let shifted = GLParams::new(DVector::from_vec(vec![2.5, 0.75]), sigma, mu, 1.7).unwrap();
        let a = logpdf_gl_multi(&[1.0, 1.0], &p).unwrap();
        let b = logpdf_gl_multi(&[3.0, 2.0], &shifted).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let m = ObservationMatrix::new(2, vec![0.1, -1e-300, 7.0 / 3.0, 12345.678]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = ObservationMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(m, back);
        let err = ObservationMatrix::read_csv("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GlError::Parse { line: 2, .. }));
        let err = ObservationMatrix::read_csv("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GlError::Parse { line: 2, .. }));
    }
}
