//! Unconstrained parameter vectors and their invertible maps to model parameters.
//!
//! GL: η = (θ, δ, μ, ζ) where δ is the upper triangle (row-major, diagonal
//! included) of the symmetric matrix logarithm of Σ and α = exp(ζ).
//! PGL: η = (θ₁, θ₂, δ₁, δ₂, ζ) with φ = exp(δ₁), ρ = tanh(δ₂).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::circular::PGLParams;
use crate::error::{domain, Result};
use crate::gl::{check_spd, GLParams};

#[derive(Debug, Clone, PartialEq)]
pub struct EtaVector(pub Vec<f64>);

impl EtaVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for EtaVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// k = d(d + 5)/2 + 1.
pub fn gl_eta_len(d: usize) -> usize {
    d * (d + 5) / 2 + 1
}

pub const PGL_ETA_LEN: usize = 5;
pub const PN_ETA_LEN: usize = 4;

fn map_symmetric(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&vals) * v.transpose()
}

/// Symmetric matrix logarithm of an SPD matrix.
pub fn spd_log(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_spd(sigma)?;
    Ok(map_symmetric(sigma, f64::ln))
}

pub fn sym_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = map_symmetric(m, f64::exp);
    // Enforce exact symmetry lost to rounding in V D Vᵀ.
    let d = out.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

fn upper_triangle(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    let d = m.nrows();
    (0..d).flat_map(move |i| (i..d).map(move |j| m[(i, j)]))
}

fn from_upper_triangle(d: usize, values: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut it = values.iter();
    for i in 0..d {
        for j in i..d {
            let v = *it.next().expect("triangle length checked by caller");
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn pack_gl(p: &GLParams) -> Result<EtaVector> {
    let log_sigma = spd_log(p.sigma())?;
    let mut eta = Vec::with_capacity(gl_eta_len(p.dim()));
    eta.extend(p.theta().iter());
    eta.extend(upper_triangle(&log_sigma));
    eta.extend(p.mu().iter());
    eta.push(p.alpha().ln());
    Ok(EtaVector(eta))
}

pub fn unpack_gl(eta: &[f64], d: usize) -> Result<GLParams> {
    if eta.len() != gl_eta_len(d) {
        return domain(format!("GL parameter vector for d = {d} needs {} entries, got {}", gl_eta_len(d), eta.len()));
    }
    let tri = d * (d + 1) / 2;
    let theta = DVector::from_column_slice(&eta[..d]);
    let sigma = sym_exp(&from_upper_triangle(d, &eta[d..d + tri]));
    let mu = DVector::from_column_slice(&eta[d + tri..2 * d + tri]);
    GLParams::new(theta, sigma, mu, eta[2 * d + tri].exp())
}

pub fn pack_pgl(p: &PGLParams) -> EtaVector {
    let [t1, t2] = p.theta();
    EtaVector(vec![t1, t2, p.phi().ln(), p.rho().atanh(), p.alpha().ln()])
}

pub fn unpack_pgl(eta: &[f64]) -> Result<PGLParams> {
    if eta.len() != PGL_ETA_LEN {
        return domain(format!("PGL parameter vector needs 5 entries, got {}", eta.len()));
    }
    PGLParams::new([eta[0], eta[1]], eta[2].exp(), eta[3].tanh(), eta[4].exp())
}

/// Projected normal under the Σ₂₂ = 1 constraint: η = (θ₁, θ₂, δ₁, δ₂).
pub fn unpack_pn(eta: &[f64]) -> Result<([f64; 2], f64, f64)> {
    if eta.len() != PN_ETA_LEN {
        return domain(format!("PN parameter vector needs 4 entries, got {}", eta.len()));
    }
    let (phi, rho) = (eta[2].exp(), eta[3].tanh());
    if !(phi > 0.0 && phi.is_finite() && rho.abs() < 1.0) {
        return domain("PN scale parameters out of range");
    }
    Ok(([eta[0], eta[1]], phi, rho))
}
