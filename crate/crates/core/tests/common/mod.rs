//! Integration oracles written independently of the library's own quadrature.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson with Richardson correction.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Simpson over consecutive breakpoints, so kinks can sit on panel edges.
pub fn simpson_pieces<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], tol: f64) -> f64 {
    breaks.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum()
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre over unit-aligned panels of width `h`.
pub fn composite_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, h: f64, rule: &[(f64, f64)]) -> f64 {
    let panels = ((b - a) / h).round() as usize;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let half = 0.5 * h;
        for &(x, w) in rule {
            total += w * half * f(lo + half * (x + 1.0));
        }
    }
    total
}

/// Periodic trapezoid over one turn; spectrally accurate for smooth integrands.
pub fn circle_trapezoid<F: Fn(f64) -> f64>(f: F, points: usize) -> f64 {
    let h = 2.0 * PI / points as f64;
    (0..points).map(|k| f(-PI + h * k as f64)).sum::<f64>() * h
}

/// log Γ(x) for x > 0 by Lanczos (g = 7, n = 9).
pub fn lanczos_log_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - lanczos_log_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// ∫₀^∞ N_d(y; θ + vμ, vΣ) gamma(v; α, 1) dv, integrated on t = ln v.
/// `sigma` is row-major d×d with d ∈ {1, 2}.
pub fn mixture_density(y: &[f64], theta: &[f64], sigma: &[f64], mu: &[f64], alpha: f64) -> f64 {
    let d = y.len();
    let (inv, det): (Vec<f64>, f64) = match d {
        1 => (vec![1.0 / sigma[0]], sigma[0]),
        2 => {
            let det = sigma[0] * sigma[3] - sigma[1] * sigma[2];
            (vec![sigma[3] / det, -sigma[1] / det, -sigma[2] / det, sigma[0] / det], det)
        }
        _ => panic!("dimension {d} not supported by the oracle"),
    };
    let lg = lanczos_log_gamma(alpha);
    let log_integrand = |t: f64| {
        let v = t.exp();
        let r: Vec<f64> = (0..d).map(|i| y[i] - theta[i] - v * mu[i]).collect();
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += r[i] * inv[i * d + j] * r[j];
            }
        }
        -0.5 * d as f64 * (2.0 * PI * v).ln() - 0.5 * det.ln() - 0.5 * quad / v + (alpha - 1.0) * v.ln() - v - lg + t
    };
    // Locate the peak on a coarse grid, then integrate around it.
    let (lo, hi) = (-60.0f64, 7.0f64);
    let grid: Vec<f64> = (0..=2000).map(|k| lo + (hi - lo) * k as f64 / 2000.0).collect();
    let peak = grid.iter().map(|&t| log_integrand(t)).fold(f64::NEG_INFINITY, f64::max);
    let g = |t: f64| (log_integrand(t) - peak).exp();
    // Panels of width 0.25 keep the coarse first Simpson pass from missing the bump.
    let breaks: Vec<f64> = (0..=268).map(|k| lo + 0.25 * k as f64).collect();
    simpson_pieces(&g, &breaks, 1e-15) * peak.exp()
}

/// Angle density of N(θ, vΣ) by direct radial integration: ∫₀^∞ r N(r w) dr.
pub fn projected_normal_density(omega: f64, theta: [f64; 2], sigma: [f64; 4], v: f64) -> f64 {
    let s = [sigma[0] * v, sigma[1] * v, sigma[2] * v, sigma[3] * v];
    let det = s[0] * s[3] - s[1] * s[2];
    let inv = [s[3] / det, -s[1] / det, -s[2] / det, s[0] / det];
    let (c, sn) = (omega.cos(), omega.sin());
    let f = |r: f64| {
        let (x, y) = (r * c - theta[0], r * sn - theta[1]);
        let q = x * (inv[0] * x + inv[1] * y) + y * (inv[2] * x + inv[3] * y);
        r * (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    };
    // The Gaussian along the ray sits at r* = wᵀΣ⁻¹θ / wᵀΣ⁻¹w with width (wᵀΣ⁻¹w)^(-1/2).
    let a = c * (inv[0] * c + inv[1] * sn) + sn * (inv[2] * c + inv[3] * sn);
    let b = c * (inv[0] * theta[0] + inv[1] * theta[1]) + sn * (inv[2] * theta[0] + inv[3] * theta[1]);
    let (center, width) = ((b / a).max(0.0), 1.0 / a.sqrt());
    let upper = center + 40.0 * width;
    let mut breaks = vec![0.0];
    for k in -8..=8 {
        let p = center + k as f64 * width;
        if p > 0.0 && p < upper {
            breaks.push(p);
        }
    }
    breaks.push(upper);
    simpson_pieces(&f, &breaks, 1e-16)
}
