//! Special functions used by the closed-form distributions.
//!
//! Hermite polynomials follow the physicists' convention, i.e. the generating
//! function is `exp(-t² + 2tx) = Σ H_n(x) tⁿ/n!`. The probabilists' `He_n`
//! would silently corrupt the strong-drive distribution; do not swap them.

use num_complex::Complex64;

/// Laguerre polynomial `L_n(x)` by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Physicists' Hermite polynomial `H_n(z)` for complex argument.
pub fn hermite(n: usize, z: Complex64) -> Complex64 {
    let mut prev = Complex64::new(1.0, 0.0);
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * z;
    for k in 1..n {
        let next = 2.0 * z * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Real-argument convenience wrapper around [`hermite`].
pub fn hermite_real(n: usize, x: f64) -> f64 {
    hermite(n, Complex64::new(x, 0.0)).re
}

/// `ln(n!)`: exact product for `n <= 20`, Stirling series above.
pub fn log_factorial(n: usize) -> f64 {
    if n <= 20 {
        let mut p: u64 = 1;
        for k in 2..=n as u64 {
            p *= k;
        }
        return (p as f64).ln();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln C(n, k)`.
pub fn log_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    log_factorial(n) - log_factorial(k) - log_factorial(n - k)
}

/// Relative residual of `Σ_k C(n,k) H_{2n-2k}(x) H_{2k}(y) = (-4)ⁿ n! L_n(x² + y²)`.
pub fn hermite_laguerre_residual(n: usize, x: f64, y: f64) -> f64 {
    let mut lhs = 0.0;
    for k in 0..=n {
        let c = log_binomial(n, k).exp().round();
        lhs += c * hermite_real(2 * n - 2 * k, x) * hermite_real(2 * k, y);
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let rhs = sign * 4f64.powi(n as i32) * log_factorial(n).exp() * laguerre(n, x * x + y * y);
    (lhs - rhs).abs() / rhs.abs().max(1.0)
}
