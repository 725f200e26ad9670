//! Maximum likelihood fitting: parameter transforms, quadrature objectives,
//! optimizers and the GL, PGL, PN and von Mises fitters.

mod fit;
mod objective;
mod optim;
mod transform;

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::circular::{PGLParams, VMParams};
use crate::error::{GlError, Result};
use crate::gl::GLParams;

pub use fit::{fit_gl, fit_pgl, fit_pn, fit_vm, initial_eta_gl, initial_eta_pgl, FitOptions};
pub use objective::{
    gl_gq_negloglik, pgl_gq_negloglik, pn_negloglik, uniform_negloglik, GlDirectObjective, GlGqObjective,
    ObjectiveValue, PglGqObjective, PnObjective, INVALID_PENALTY, UNDERFLOW_PENALTY,
};
pub use optim::{
    fd_step, nelder_mead, numerical_gradient, quasi_newton, OptimOptions, OptimOutcome, QuasiNewtonOptions,
    Termination, DEFAULT_MAX_ITER,
};
pub use transform::{
    gl_eta_len, pack_gl, pack_pgl, spd_log, sym_exp, unpack_gl, unpack_pgl, unpack_pn, EtaVector, PGL_ETA_LEN,
    PN_ETA_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    /// Gamma-quadrature approximation of the mixture likelihood.
    Quadrature,
    /// Closed-form density.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    NelderMead,
    /// BFGS from an identity inverse Hessian.
    Bfgs,
    /// BFGS with curvature-scaled inverse Hessian.
    QuasiNewton,
    /// Moment equations solved directly.
    ClosedForm,
}

impl OptimizerKind {
    fn short(self) -> &'static str {
        match self {
            Self::NelderMead => "nm",
            Self::Bfgs => "bfgs",
            Self::QuasiNewton => "qn",
            Self::ClosedForm => "closed",
        }
    }
}

/// Objective, optimizer and quadrature order of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub objective: ObjectiveKind,
    pub optimizer: OptimizerKind,
    pub nodes: Option<usize>,
}

impl Method {
    pub const GQ_NM_H20: Method = Method::gq(OptimizerKind::NelderMead, 20);
    pub const GQ_NM_H30: Method = Method::gq(OptimizerKind::NelderMead, 30);
    pub const GQ_BFGS_H20: Method = Method::gq(OptimizerKind::Bfgs, 20);
    pub const GQ_QN_H20: Method = Method::gq(OptimizerKind::QuasiNewton, 20);
    pub const DIRECT_ML: Method =
        Method { objective: ObjectiveKind::Analytic, optimizer: OptimizerKind::NelderMead, nodes: None };
    pub const DIRECT_ML_QN: Method =
        Method { objective: ObjectiveKind::Analytic, optimizer: OptimizerKind::QuasiNewton, nodes: None };
    pub const CLOSED_FORM: Method =
        Method { objective: ObjectiveKind::Analytic, optimizer: OptimizerKind::ClosedForm, nodes: None };

    pub const fn gq(optimizer: OptimizerKind, nodes: usize) -> Method {
        Method { objective: ObjectiveKind::Quadrature, optimizer, nodes: Some(nodes) }
    }

    /// Canonical name such as `gq_qn_h20` or `direct_ml`.
    pub fn name(&self) -> String {
        match (self.objective, self.optimizer) {
            (ObjectiveKind::Quadrature, opt) => format!("gq_{}_h{}", opt.short(), self.nodes.unwrap_or(0)),
            (ObjectiveKind::Analytic, OptimizerKind::NelderMead) => "direct_ml".into(),
            (ObjectiveKind::Analytic, OptimizerKind::ClosedForm) => "closed_form".into(),
            (ObjectiveKind::Analytic, opt) => format!("direct_ml_{}", opt.short()),
        }
    }

    /// Parses canonical names; `-` and `_` are interchangeable and a missing
    /// `_hN` suffix on quadrature methods takes `nodes` (default 20).
    pub fn parse(name: &str, nodes: Option<usize>) -> Result<Method> {
        let norm = name.trim().to_ascii_lowercase().replace('-', "_");
        let bad = || GlError::Domain(format!("unknown method '{name}'"));
        match norm.as_str() {
            "direct_ml" | "direct_ml_nm" => return Ok(Self::DIRECT_ML),
            "direct_ml_qn" => return Ok(Self::DIRECT_ML_QN),
            "direct_ml_bfgs" => {
                return Ok(Method { optimizer: OptimizerKind::Bfgs, ..Self::DIRECT_ML });
            }
            "closed_form" => return Ok(Self::CLOSED_FORM),
            _ => {}
        }
        let rest = norm.strip_prefix("gq_").ok_or_else(bad)?;
        let (opt, suffix) = rest.split_once('_').map_or((rest, None), |(a, b)| (a, Some(b)));
        let optimizer = match opt {
            "nm" => OptimizerKind::NelderMead,
            "bfgs" => OptimizerKind::Bfgs,
            "qn" => OptimizerKind::QuasiNewton,
            _ => return Err(bad()),
        };
        let from_name = match suffix {
            None => None,
            Some(s) => Some(s.strip_prefix('h').and_then(|h| h.parse::<usize>().ok()).ok_or_else(bad)?),
        };
        let h = match (from_name, nodes) {
            (Some(a), Some(b)) if a != b => {
                return Err(GlError::Domain(format!("method '{name}' conflicts with {b} nodes")));
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => crate::quadrature::DEFAULT_ORDER,
        };
        if h == 0 || h > crate::quadrature::MAX_ORDER {
            return Err(GlError::Domain(format!("quadrature order {h} out of range")));
        }
        Ok(Method::gq(optimizer, h))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedParams {
    Gl(GLParams),
    Pgl(PGLParams),
    /// Projected normal with Σ = [[φ², ρφ], [ρφ, 1]].
    Pn { theta: [f64; 2], phi: f64, rho: f64 },
    Vm(VMParams),
}

impl FittedParams {
    pub fn model(&self) -> &'static str {
        match self {
            Self::Gl(_) => "gl",
            Self::Pgl(_) => "pgl",
            Self::Pn { .. } => "pn",
            Self::Vm(_) => "vm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub eta_hat: EtaVector,
    pub params_hat: FittedParams,
    pub loglik: f64,
    pub initial_loglik: f64,
    pub converged: bool,
    pub reason: Termination,
    pub iterations: usize,
    pub function_evals: usize,
    pub elapsed_seconds: f64,
    pub method: Method,
    /// Observations penalized by the objective at the reported optimum.
    pub penalized: usize,
}

fn matrix_rows(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| json!(m.row(i).iter().collect::<Vec<_>>())).collect())
}

impl FitResult {
    /// Flat JSON document; non-finite numbers become `null`.
    pub fn to_json(&self) -> Value {
        let mut doc = Map::new();
        doc.insert("model".into(), json!(self.params_hat.model()));
        doc.insert("method".into(), json!(self.method.name()));
        doc.insert("h".into(), json!(self.method.nodes));
        doc.insert("loglik".into(), json!(self.loglik));
        doc.insert("converged".into(), json!(self.converged));
        doc.insert("reason".into(), json!(self.reason.code()));
        doc.insert("iterations".into(), json!(self.iterations));
        doc.insert("fevals".into(), json!(self.function_evals));
        doc.insert("elapsed_seconds".into(), json!(self.elapsed_seconds));
        doc.insert("eta".into(), json!(self.eta_hat.as_slice()));
        match &self.params_hat {
            FittedParams::Gl(p) => {
                doc.insert("theta".into(), json!(p.theta().as_slice()));
                doc.insert("sigma".into(), matrix_rows(p.sigma()));
                doc.insert("mu".into(), json!(p.mu().as_slice()));
                doc.insert("alpha".into(), json!(p.alpha()));
            }
            FittedParams::Pgl(p) => {
                doc.insert("theta".into(), json!(p.theta()));
                doc.insert("phi".into(), json!(p.phi()));
                doc.insert("rho".into(), json!(p.rho()));
                doc.insert("alpha".into(), json!(p.alpha()));
            }
            FittedParams::Pn { theta, phi, rho } => {
                doc.insert("theta".into(), json!(theta));
                doc.insert("phi".into(), json!(phi));
                doc.insert("rho".into(), json!(rho));
            }
            FittedParams::Vm(p) => {
                doc.insert("location".into(), json!(p.location));
                doc.insert("kappa".into(), json!(p.concentration));
            }
        }
        Value::Object(doc)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_json()).map_err(std::io::Error::from)?;
        writeln!(out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::GQ_NM_H20,
            Method::GQ_NM_H30,
            Method::GQ_BFGS_H20,
            Method::GQ_QN_H20,
            Method::DIRECT_ML,
            Method::DIRECT_ML_QN,
            Method::CLOSED_FORM,
        ] {
            assert_eq!(Method::parse(&m.name(), None).unwrap(), m);
        }
        assert_eq!(Method::GQ_QN_H20.name(), "gq_qn_h20");
        assert_eq!(Method::parse("gq-qn", Some(20)).unwrap(), Method::GQ_QN_H20);
        assert_eq!(Method::parse("gq-nm", None).unwrap(), Method::GQ_NM_H20);
        assert_eq!(Method::parse("gq-nm-h30", None).unwrap(), Method::GQ_NM_H30);
        assert!(Method::parse("gq-nm-h30", Some(20)).is_err());
        assert!(Method::parse("gq-xx", None).is_err());
        assert!(Method::parse("gq-qn", Some(0)).is_err());
        assert!(Method::parse("em", None).is_err());
    }
}
