//! Scalar special functions: modified Bessel functions, log-gamma, and the
//! standard normal pdf/cdf with a Mills-ratio-safe bracket.

use std::f64::consts::PI;

use crate::error::{domain, ensure_finite, Result};

const EPS: f64 = 1e-16;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TEMME_SWITCH: f64 = 2.0;
const CF2_MAX_ITER: usize = 100_000;

/// Taylor coefficients of 1/Γ(z) = Σ c_k z^k, k = 1..=26.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns `(gam1, gam2, 1/Γ(1+μ), 1/Γ(1-μ))` for |μ| ≤ 1/2, where
/// gam1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / 2μ and gam2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    // c_k with k odd (index even) build gam2, k even build gam1.
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pw = 1.0;
    for pair in RECIP_GAMMA.chunks(2) {
        gam2 += pair[0] * pw;
        if let Some(c) = pair.get(1) {
            gam1 -= c * pw;
        }
        pw *= mu2;
    }
    let gampl = gam2 - mu * gam1;
    let gammi = gam2 + mu * gam1;
    (gam1, gam2, gampl, gammi)
}

/// log K_μ(x) and K_{μ+1}(x)/K_μ(x) for |μ| ≤ 1/2 by the Temme series (x < 2).
fn temme_series(mu: f64, x: f64) -> Result<(f64, f64)> {
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mut i = 1.0;
    loop {
        ff = (i * ff + p + q) / (i * i - mu * mu);
        c *= dd / i;
        p /= i - mu;
        q /= i + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - i * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
        i += 1.0;
        if i > 500.0 {
            return Err(crate::GlError::Numeric(format!(
                "Temme series for K_{mu}({x}) did not converge"
            )));
        }
    }
    Ok((sum.ln(), sum1 / sum / x2))
}

/// log K_μ(x) and K_{μ+1}(x)/K_μ(x) for |μ| ≤ 1/2 by Steed's continued fraction (x ≥ 2).
fn steed_cf2(mu: f64, x: f64) -> Result<(f64, f64)> {
    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut converged = false;
    for i in 2..CF2_MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(crate::GlError::Numeric(format!(
            "continued fraction for K_{mu}({x}) did not converge"
        )));
    }
    let h = a1 * h;
    let log_k = 0.5 * (PI / (2.0 * x)).ln() - x - s.ln();
    Ok((log_k, (mu + x + 0.5 - h) / x))
}

/// Logarithm of the modified Bessel function of the third kind, log K_ν(x).
///
/// Never underflows or overflows for finite arguments: the base orders are
/// evaluated in log form and the forward recurrence in ν runs on ratios.
pub fn log_bessel_k(nu: f64, x: f64) -> Result<f64> {
    ensure_finite("order", nu)?;
    ensure_finite("argument", x)?;
    if x <= 0.0 {
        return domain(format!("K_nu requires x > 0, got {x}"));
    }
    let nu = nu.abs();
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut log_k, mut ratio) = if x < TEMME_SWITCH {
        temme_series(mu, x)?
    } else {
        steed_cf2(mu, x)?
    };
    for i in 1..=(nl as usize) {
        log_k += ratio.ln();
        ratio = 2.0 * (mu + i as f64) / x + 1.0 / ratio;
    }
    Ok(log_k)
}

/// Modified Bessel function of the third kind K_ν(x), x > 0.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    log_bessel_k(nu, x).map(f64::exp)
}

/// log Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    ensure_finite("argument", x)?;
    if x <= 0.0 {
        return domain(format!("log_gamma requires x > 0, got {x}"));
    }
    Ok(libm::lgamma(x))
}

#[inline]
pub(crate) fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density and distribution function at `x`.
pub fn normal_pdf_cdf(x: f64) -> Result<(f64, f64)> {
    ensure_finite("x", x)?;
    Ok((std_normal_pdf(x), std_normal_cdf(x)))
}

/// Threshold below which `1 + qΦ(q)/φ(q)` switches to the asymptotic expansion.
pub const MILLS_SWITCH: f64 = -8.0;

/// `log(1 + qΦ(q)/φ(q))`, the bracket of the projected normal density.
///
/// Finite for every finite `q`; large negative `q` uses the asymptotic
/// Mills-ratio series, large positive `q` is assembled in log form.
pub fn log_pn_bracket(q: f64) -> f64 {
    if q >= 0.0 {
        (std_normal_pdf(q) + q * std_normal_cdf(q)).ln() + 0.5 * q * q + LN_SQRT_2PI
    } else if q >= MILLS_SWITCH {
        (1.0 + q * std_normal_cdf(q) / std_normal_pdf(q)).ln()
    } else {
        mills_tail(-q).ln()
    }
}

/// `1 + qΦ(q)/φ(q)` for `q = -t`, t > 8: Σ_k (-1)^(k+1) (2k-1)!! / t^(2k).
fn mills_tail(t: f64) -> f64 {
    let inv_t2 = 1.0 / (t * t);
    let mut term = inv_t2;
    let mut sum = term;
    let mut k = 1.0;
    loop {
        let next = -term * (2.0 * k + 1.0) * inv_t2;
        if next.abs() >= term.abs() || next.abs() < EPS * sum.abs() {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum
}

/// `1 + qΦ(q)/φ(q)`; overflows to infinity only for q beyond ~38.
pub fn pn_bracket(q: f64) -> f64 {
    log_pn_bracket(q).exp()
}

const I_SERIES_MAX: f64 = 30.0;

fn bessel_i01_series(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 0.5 * x;
    let mut i0 = t0;
    let mut i1 = t1;
    let mut k = 1.0;
    while t0 > EPS * i0 || t1 > EPS * i1 {
        t0 *= y / (k * k);
        t1 *= y / (k * (k + 1.0));
        i0 += t0;
        i1 += t1;
        k += 1.0;
    }
    (i0, i1)
}

/// Σ_k (-1)^k a_k(ν)/x^k from I_ν(x) ~ e^x/√(2πx) Σ ...
fn bessel_i_asymptotic_sum(order: f64, x: f64) -> f64 {
    let m = 4.0 * order * order;
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (m - odd * odd) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < EPS * sum.abs() {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum
}

/// `(I₁(κ)/I₀(κ), log I₀(κ))` for κ ≥ 0.
pub fn bessel_i_ratio_and_log_i0(kappa: f64) -> Result<(f64, f64)> {
    ensure_finite("kappa", kappa)?;
    if kappa < 0.0 {
        return domain(format!("concentration must be nonnegative, got {kappa}"));
    }
    if kappa == 0.0 {
        return Ok((0.0, 0.0));
    }
    if kappa <= I_SERIES_MAX {
        let (i0, i1) = bessel_i01_series(kappa);
        Ok((i1 / i0, i0.ln()))
    } else {
        let s0 = bessel_i_asymptotic_sum(0.0, kappa);
        let s1 = bessel_i_asymptotic_sum(1.0, kappa);
        let log_i0 = kappa - 0.5 * (2.0 * PI * kappa).ln() + s0.ln();
        Ok((s1 / s0, log_i0))
    }
}
