use std::f64::consts::PI;

use glfit::circular::{pgl_logpdf, pn_logpdf, wrap_angle, AngleSample, PGLParams};
use glfit::estimate::{Method, OptimizerKind};
use glfit::gl::{logpdf_gl_uni, GLParams, GlDensity, ObservationMatrix};
use glfit::quadrature::gamma_rule;
use glfit::simharness::{summarize, ReplicationRecord};
use glfit::specfun::{bessel_k, log_bessel_k};
use nalgebra::{DMatrix, DVector, Matrix2, Rotation2};
use proptest::prelude::*;

fn record(rep: usize, converged: bool, loglik: f64) -> ReplicationRecord {
    ReplicationRecord {
        scenario: "s".into(),
        method: "m".into(),
        n: 10,
        rep,
        seed: rep as u64,
        converged,
        reason: if converged { "gradient" } else { "iteration_cap" }.into(),
        loglik: converged.then_some(loglik),
        time_s: None,
        fitted_mean: None,
        fitted_cov: None,
        sq_err_ev: converged.then_some(loglik * loglik),
        sq_err_var: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bessel_recurrence(nu in 0.0f64..25.0, x in 0.01f64..60.0) {
        let lhs = bessel_k(nu + 1.0, x).unwrap();
        let rhs = bessel_k((nu - 1.0).abs(), x).unwrap() + 2.0 * nu / x * bessel_k(nu, x).unwrap();
        prop_assert!(((lhs - rhs) / lhs).abs() < 1e-9, "nu={nu} x={x} {lhs} {rhs}");
    }

    #[test]
    fn bessel_decreasing_in_x(nu in 0.0f64..10.0, x in 0.01f64..100.0) {
        prop_assert!(log_bessel_k(nu, x * 1.01).unwrap() < log_bessel_k(nu, x).unwrap());
    }

    #[test]
    fn gamma_rule_is_exact_for_polynomials(alpha in 0.2f64..30.0, h in 2usize..40) {
        // E V^k = Γ(α+k)/Γ(α) for k < 2H
        let rule = gamma_rule(alpha, h).unwrap();
        for k in 0..4usize.min(2 * h) {
            let exact: f64 = (0..k).map(|j| alpha + j as f64).product();
            let got: f64 = rule.iter().map(|(v, w)| w * v.powi(k as i32)).sum();
            prop_assert!(((got - exact) / exact).abs() < 1e-10, "k={k} {got} {exact}");
        }
    }

    #[test]
    fn gl_location_equivariance(theta in -5.0f64..5.0, sigma in 0.2f64..4.0, mu in -3.0f64..3.0, alpha in 0.6f64..8.0, y in -10.0f64..10.0, c in -20.0f64..20.0) {
        let a = GLParams::univariate(theta, sigma, mu, alpha).unwrap();
        let b = GLParams::univariate(theta + c, sigma, mu, alpha).unwrap();
        let (la, lb) = (logpdf_gl_uni(y, &a), logpdf_gl_uni(y + c, &b));
        if let (Ok(la), Ok(lb)) = (la, lb) {
            prop_assert!((la - lb).abs() < 1e-9 * (1.0 + la.abs()));
        }
    }

    #[test]
    fn gl_univariate_and_matrix_forms_agree(theta in -3.0f64..3.0, sigma in 0.3f64..3.0, mu in -2.0f64..2.0, alpha in 0.6f64..6.0, y in -8.0f64..8.0) {
        prop_assume!((y - theta).abs() > 1e-6);
        let p = GLParams::univariate(theta, sigma, mu, alpha).unwrap();
        let q = GLParams::new(DVector::from_element(1, theta), DMatrix::from_element(1, 1, sigma * sigma), DVector::from_element(1, mu), alpha).unwrap();
        let a = logpdf_gl_uni(y, &p).unwrap();
        let b = GlDensity::new(&q).unwrap().logpdf(&[y]).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn pgl_is_periodic(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, phi in 0.3f64..5.0, rho in -0.9f64..0.9, alpha in 0.3f64..10.0, w in -PI..PI) {
        let p = PGLParams::new([t1, t2], phi, rho, alpha).unwrap();
        let rule = gamma_rule(alpha, 20).unwrap();
        let a = pgl_logpdf(w, &p, &rule).unwrap();
        let b = pgl_logpdf(w + 2.0 * PI, &p, &rule).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn pn_rotation_equivariance(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, s11 in 0.2f64..4.0, s22 in 0.2f64..4.0, r in -0.9f64..0.9, beta in -PI..PI, w in -PI..PI) {
        let s12 = r * (s11 * s22).sqrt();
        let sigma = Matrix2::new(s11, s12, s12, s22);
        let rot = Rotation2::new(beta);
        let m = rot.matrix();
        let th = m * nalgebra::Vector2::new(t1, t2);
        let rotated = m * sigma * m.transpose();
        let a = pn_logpdf(w, [t1, t2], &sigma).unwrap();
        let b = pn_logpdf(wrap_angle(w + beta), [th[0], th[1]], &rotated).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} {b}");
    }

    #[test]
    fn observation_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..40), d in 1usize..4) {
        let n = values.len() / d;
        prop_assume!(n > 0);
        let m = ObservationMatrix::new(d, values[..n * d].to_vec()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = ObservationMatrix::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows().collect::<Vec<_>>(), m.rows().collect::<Vec<_>>());
    }

    #[test]
    fn angle_csv_round_trip(values in prop::collection::vec(-PI..PI, 1..40)) {
        let a = AngleSample::from_radians(values).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = AngleSample::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.as_slice(), a.as_slice());
    }

    #[test]
    fn summaries_exclude_failures(outcomes in prop::collection::vec((any::<bool>(), -500.0f64..0.0), 1..60)) {
        let records: Vec<ReplicationRecord> = outcomes.iter().enumerate().map(|(i, &(ok, ll))| record(i, ok, ll)).collect();
        let table = summarize(&records).unwrap();
        let row = table.get("s", "m").unwrap();
        let good: Vec<f64> = outcomes.iter().filter(|o| o.0).map(|o| o.1).collect();
        let failed = outcomes.len() - good.len();
        prop_assert!((row.failure_proportion - failed as f64 / outcomes.len() as f64).abs() < 1e-15);
        if good.is_empty() {
            prop_assert!(row.mean_loglik.is_none());
        } else {
            let mean = good.iter().sum::<f64>() / good.len() as f64;
            prop_assert!((row.mean_loglik.unwrap() - mean).abs() < 1e-9);
            let mse = good.iter().map(|v| v * v).sum::<f64>() / good.len() as f64;
            prop_assert!((row.mse_ev.unwrap() - mse).abs() < 1e-6 * mse.max(1.0));
        }
    }

    #[test]
    fn method_names_round_trip(opt in 0usize..3, h in 1usize..200) {
        let kind = [OptimizerKind::NelderMead, OptimizerKind::Bfgs, OptimizerKind::QuasiNewton][opt];
        let m = Method::gq(kind, h);
        prop_assert_eq!(Method::parse(&m.name(), None).unwrap(), m);
        prop_assert_eq!(Method::parse(&m.name().replace('_', "-"), Some(h)).unwrap(), m);
    }
}
