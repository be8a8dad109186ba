//! Closed-form excitation distributions and limits.
//!
//! All probabilities are diagonal elements `P_n = ρ_nn` of the reduced
//! density matrix for an initial coherent system state.

use std::fmt;

use num_complex::{Complex, Complex64};
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::model::{bose_occupation, BathMode};
use crate::specfun::log_factorial;

/// Below this `η` the Laguerre law is replaced by its Poisson limit.
pub const POISSON_SWITCH_ETA: f64 = 1e-8;
/// Below this `|α₂ φ_I|` the Hermite series is replaced by the resonant Poisson law.
pub const RESONANT_SWITCH: f64 = 1e-10;
/// Tail probability accepted by [`auto_n_cut`].
pub const TAIL_TOLERANCE: f64 = 1e-8;
pub const N_CUT_CAP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Laguerre,
    PoissonLimit,
    HermiteSeries,
    ResonantPoisson,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Laguerre => "laguerre",
            Branch::PoissonLimit => "poisson_limit",
            Branch::HermiteSeries => "hermite_series",
            Branch::ResonantPoisson => "resonant_poisson",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PnResult {
    pub n: usize,
    pub p: f64,
    pub branch: Branch,
}

fn poisson_pmf(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - log_factorial(n)).exp()
}

/// Poisson law with mean `|Z|²`.
pub fn pn_poisson(z: Complex64, n: usize) -> PnResult {
    PnResult { n, p: poisson_pmf(z.norm_sqr(), n), branch: Branch::PoissonLimit }
}

/// `P_0 … P_n_max` of the displaced thermal law with coherent amplitude `Z`
/// and thermal excitation `η`.
pub fn pn_laguerre_all(z: Complex64, eta: f64, n_max: usize) -> Vec<PnResult> {
    assert!(eta >= 0.0, "eta must be non-negative");
    let z2 = z.norm_sqr();
    if eta < POISSON_SWITCH_ETA {
        return (0..=n_max).map(|n| pn_poisson(z, n)).collect();
    }
    // ℓ_n = rⁿ L_n(x), x = -|Z|²/(η(1+η)), r = η/(1+η)
    let r = eta / (1.0 + eta);
    let rx = -z2 / ((1.0 + eta) * (1.0 + eta));
    let pref = (-z2 / (1.0 + eta)).exp() / (1.0 + eta);
    let mut out = Vec::with_capacity(n_max + 1);
    let (mut prev, mut cur) = (0.0, 1.0);
    for n in 0..=n_max {
        out.push(PnResult { n, p: pref * cur, branch: Branch::Laguerre });
        let nf = n as f64;
        let next = (r * (2.0 * nf + 1.0) - rx) * cur - r * r * nf * prev;
        prev = cur;
        cur = next / (nf + 1.0);
    }
    out
}

pub fn pn_laguerre(z: Complex64, eta: f64, n: usize) -> PnResult {
    pn_laguerre_all(z, eta, n)[n]
}

/// Mean excitation `|Z|² + η`.
pub fn mean_excitation(z: Complex64, eta: f64) -> f64 {
    z.norm_sqr() + eta
}

/// Smallest `N ≤ 128` with `1 - Σ_{n≤N} P_n < 1e-8` for the displaced thermal
/// envelope of mean `|Z|² + η`.
pub fn auto_n_cut(z_abs2: f64, eta: f64) -> usize {
    let probs = pn_laguerre_all(Complex64::new(z_abs2.sqrt(), 0.0), eta, N_CUT_CAP);
    let mut acc = 0.0;
    for pr in &probs {
        acc += pr.p;
        if 1.0 - acc < TAIL_TOLERANCE {
            return pr.n;
        }
    }
    N_CUT_CAP
}

/// Ground-state evolution without dissipation with the `λλ̄φ_I²` term
/// dropped:
/// `P_n = Σ_s (-1)ˢ cⁿ⁺ˢ/(n! s!) |H_{n+s}(x)|²`, `c = |α₂ φ_I α₁|`,
/// `x = -ζ/(2√(α₂ φ_I α₁))`.
///
/// The series alternates; terms are accumulated as `ê_k = H_k(x) cᵏ/²/√k!`.
pub fn pn_hermite(
    alpha1: Complex64,
    alpha2: f64,
    phi_i: f64,
    zeta: Complex64,
    n: usize,
    s_max: usize,
) -> Result<PnResult> {
    pn_hermite_branch(alpha1, alpha2, phi_i, zeta, n, s_max, false)
}

fn pn_hermite_branch(
    alpha1: Complex64,
    alpha2: f64,
    phi_i: f64,
    zeta: Complex64,
    n: usize,
    s_max: usize,
    flip_root: bool,
) -> Result<PnResult> {
    let w = alpha2 * phi_i * alpha1;
    if (alpha2 * phi_i).abs() < RESONANT_SWITCH || w.norm() == 0.0 {
        return Ok(resonant_poisson(zeta, n));
    }
    let root = if flip_root { -w.sqrt() } else { w.sqrt() };
    let x = -zeta / (2.0 * root);
    let r = w.norm().sqrt();
    // Terms grow like e^{|ζ|²} before cancelling, so the recurrence and the
    // sum run in double-double arithmetic.
    let dd = |z: Complex64| Complex::new(TwoFloat::from(z.re), TwoFloat::from(z.im));
    let two_xr = dd(2.0 * x * r);
    let two_r2 = TwoFloat::from(2.0 * r * r);
    let k_max = n + s_max;
    let mut e: Vec<Complex<TwoFloat>> = Vec::with_capacity(k_max + 1);
    e.push(Complex::new(TwoFloat::from(1.0), TwoFloat::from(0.0)));
    if k_max >= 1 {
        e.push(two_xr);
    }
    // only TwoFloat / f64 division keeps full precision, so 1/√(k+1) is
    // formed as √(k+1)/(k+1)
    for k in 1..k_max {
        let sk = TwoFloat::from(k as f64).sqrt();
        let inv = TwoFloat::from((k + 1) as f64).sqrt() / ((k + 1) as f64);
        let next = (two_xr * e[k] - e[k - 1] * (two_r2 * sk)) * inv;
        e.push(next);
    }
    // (n+s)!/(n! s!)
    let mut weight = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(0.0);
    let mut last = f64::INFINITY;
    let mut small_run = 0;
    for s in 0..=s_max {
        let k = n + s;
        if s > 0 {
            weight = weight * (k as f64) / (s as f64);
        }
        let term = e[k].norm_sqr() * weight;
        let mag = term.hi();
        sum = if s % 2 == 0 { sum + term } else { sum - term };
        let falling = mag <= last;
        last = mag;
        // relative to the running sum, not the peak: the sum can be many
        // orders below the largest term
        if falling && mag <= 1e-17 * sum.hi().abs().max(1e-300) {
            small_run += 1;
            if small_run == 2 {
                return Ok(finish_hermite(n, sum.hi()));
            }
        } else {
            small_run = 0;
        }
    }
    if last > 1e-13 * sum.hi().abs().max(1e-30) {
        return Err(Error::SeriesNotConverged { n, s_max });
    }
    Ok(finish_hermite(n, sum.hi()))
}

fn finish_hermite(n: usize, sum: f64) -> PnResult {
    // cancellation noise below zero
    let p = if sum < 0.0 && sum > -1e-12 { 0.0 } else { sum };
    PnResult { n, p, branch: Branch::HermiteSeries }
}

/// Default truncation for [`pn_hermite`], sized from the mean `|ζ|²`.
pub fn hermite_s_max(zeta: Complex64) -> usize {
    120 + 4 * zeta.norm_sqr().ceil() as usize
}

/// Poisson law with mean `|ζ|²`, the limit of the Hermite series where
/// `α₂` vanishes (`ω₀t = mπ`).
pub fn resonant_poisson(zeta: Complex64, n: usize) -> PnResult {
    PnResult { n, p: poisson_pmf(zeta.norm_sqr(), n), branch: Branch::ResonantPoisson }
}

/// `(ζ₁, ζ₂, ζ)` for `k(t) = k₀ sin νt`, no dissipation, the `φ_I²` frequency
/// shift neglected.
pub fn zeta_sinusoidal(
    k0: f64,
    nu: f64,
    omega0: f64,
    phi_i: f64,
    t: f64,
) -> Result<(Complex64, Complex64, Complex64)> {
    if (nu - omega0).abs() < 1e-9 {
        return Err(Error::ResonantDrive { nu, omega0 });
    }
    let den = nu * nu - omega0 * omega0;
    let rot = Complex64::new(0.0, -omega0 * t).exp();
    let z1 = k0 * (nu * rot - nu * (nu * t).cos() + Complex64::new(0.0, omega0 * (nu * t).sin())) / den;
    let z2 = k0 * (omega0 * (nu * t).sin() - nu * (omega0 * t).sin()) / (omega0 * (omega0 * omega0 - nu * nu));
    let z = z1 - 2.0 * phi_i * z2;
    Ok((z1, Complex64::new(z2, 0.0), z))
}

/// Large-time (`t ≫ 1/χ₀`) values of `|Z|²` and `η` for a sinusoidal drive
/// and a memoryless bath:
/// `z2 = k₀²[8ν² + 2(χ₀² + 4ω₀²)] / [(4ν² + χ₀² - 4ω₀²)² + 16χ₀²ω₀²]`,
/// `η∞ = Σ_k 4|f_k|² n̄_k / (χ₀² + 4(ω₀ - ω_k)²)`.
///
/// `z2` is the period average of `|ζ₁|²`; the instantaneous value oscillates
/// around it at frequency `2ν`.
pub fn large_time_limits(
    k0: f64,
    nu: f64,
    omega0: f64,
    chi0: f64,
    bath_modes: &[BathMode],
    beta: f64,
) -> (f64, f64) {
    let num = k0 * k0 * (8.0 * nu * nu + 2.0 * (chi0 * chi0 + 4.0 * omega0 * omega0));
    let d = 4.0 * nu * nu + chi0 * chi0 - 4.0 * omega0 * omega0;
    let z2 = num / (d * d + 16.0 * chi0 * chi0 * omega0 * omega0);
    let eta_inf = bath_modes
        .iter()
        .map(|m| {
            let det = omega0 - m.omega;
            4.0 * m.coupling.norm_sqr() / (chi0 * chi0 + 4.0 * det * det) * bose_occupation(beta, m.omega)
        })
        .sum();
    (z2, eta_inf)
}

/// One row per `η`: `(η, [P_0 … P_{n_max}])` at fixed `|Z|²`.
pub fn eta_sweep(z2: f64, etas: &[f64], n_max: usize) -> Vec<(f64, Vec<f64>)> {
    let z = Complex64::new(z2.sqrt(), 0.0);
    etas.iter()
        .map(|&eta| (eta, pn_laguerre_all(z, eta, n_max).iter().map(|r| r.p).collect()))
        .collect()
}

/// Strong-drive table `(τ, [P_0 … P_{n_max}])` with `τ = ω₀t`, using the
/// undamped `α₁ = e^{-iω₀t}`, `α₂ = sin(ω₀t)/ω₀`.
pub fn tau_sweep(
    k0: f64,
    nu: f64,
    omega0: f64,
    phi_i: f64,
    taus: &[f64],
    n_max: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    taus.iter()
        .map(|&tau| {
            let t = tau / omega0;
            let alpha1 = Complex64::new(0.0, -tau).exp();
            let alpha2 = tau.sin() / omega0;
            let (_, _, zeta) = zeta_sinusoidal(k0, nu, omega0, phi_i, t)?;
            let s_max = hermite_s_max(zeta);
            let ps = (0..=n_max)
                .map(|n| pn_hermite(alpha1, alpha2, phi_i, zeta, n, s_max).map(|r| r.p))
                .collect::<Result<Vec<_>>>()?;
            Ok((tau, ps))
        })
        .collect()
}

/// `(ω₀t, α₂ φ_I)` is near a removable singularity when `ω₀t ≈ mπ`.
pub fn is_resonant_time(omega0: f64, t: f64) -> bool {
    let m = (omega0 * t / std::f64::consts::PI).round();
    m >= 1.0 && (omega0 * t - m * std::f64::consts::PI).abs() < 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{hermite, laguerre};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn laguerre_law_examples() {
        assert!((pn_laguerre(c(0.0, 0.0), 1.0, 0).p - 0.5).abs() < 1e-15);
        assert_eq!(pn_laguerre(c(0.0, 0.0), 1.0, 0).branch, Branch::Laguerre);
        // thermal: (1/(1+η)) (η/(1+η))ⁿ
        for n in 0..10 {
            let p = pn_laguerre(c(0.0, 0.0), 2.0, n).p;
            assert!((p - (1.0 / 3.0) * (2.0f64 / 3.0).powi(n as i32)).abs() < 1e-15);
        }
        let z = c(3.849f64.sqrt(), 0.0);
        let ps = pn_laguerre_all(z, 0.0, 20);
        let argmax = (0..=20).max_by(|&a, &b| ps[a].p.total_cmp(&ps[b].p)).unwrap();
        assert_eq!(argmax, 3);
        assert_eq!(ps[0].branch, Branch::PoissonLimit);
    }

    #[test]
    fn laguerre_law_matches_printed_form() {
        for &(z2, eta) in &[(0.5f64, 0.3), (2.0, 1.5), (4.0, 0.01), (0.0, 3.0)] {
            let z = c(z2.sqrt(), 0.0);
            let ps = pn_laguerre_all(z, eta, 25);
            for (n, pr) in ps.iter().enumerate() {
                let direct = (-z2 / (1.0 + eta)).exp() / (1.0 + eta)
                    * (eta / (1.0 + eta)).powi(n as i32)
                    * laguerre(n, -z2 / (eta * (1.0 + eta)));
                assert!((pr.p - direct).abs() < 1e-13 * direct.max(1e-300) + 1e-300, "n={n}");
            }
        }
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(pn_poisson(c(0.0, 0.0), 0).p, 1.0);
        assert_eq!(pn_poisson(c(0.0, 0.0), 3).p, 0.0);
        assert!((pn_poisson(c(0.0, 1.0), 1).p - (-1f64).exp()).abs() < 1e-15);
        assert!((pn_poisson(c(0.6, 0.8), 1).p - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn mean_excitation_examples() {
        assert_eq!(mean_excitation(c(0.0, 0.0), 0.5), 0.5);
        assert_eq!(mean_excitation(c(1.0, 0.0), 0.0), 1.0);
        for z2 in [0.0f64, 0.7, 2.5, 5.0] {
            for eta in [0.0, 0.3, 1.0, 2.0] {
                let ps = pn_laguerre_all(c(0.0, z2.sqrt()), eta, 200);
                let mean: f64 = ps.iter().map(|r| r.n as f64 * r.p).sum();
                assert!((mean - (z2 + eta)).abs() < 1e-8, "z2={z2} eta={eta}: {mean}");
            }
        }
    }

    #[test]
    fn laguerre_normalization_and_tail_rule() {
        for zi in 0..=10 {
            for ei in 0..=6 {
                let (z2, eta) = (0.5 * zi as f64, 0.5 * ei as f64);
                let nc = auto_n_cut(z2, eta);
                assert!(nc < N_CUT_CAP);
                let total: f64 = pn_laguerre_all(c(z2.sqrt(), 0.0), eta, nc).iter().map(|r| r.p).sum();
                assert!(1.0 - total < 1e-8);
                assert!(total <= 1.0 + 1e-12);
            }
        }
        assert_eq!(auto_n_cut(0.0, 0.0), 0);
        assert_eq!(auto_n_cut(1e6, 0.0), N_CUT_CAP);
    }

    #[test]
    fn small_eta_limit_is_poisson() {
        for z2 in [0.3f64, 1.0, 4.0] {
            let z = c(z2.sqrt(), 0.0);
            for n in 0..=20 {
                let lag = pn_laguerre(z, 1e-7, n).p;
                let poi = pn_poisson(z, n).p;
                assert!((lag - poi).abs() < 1e-6);
                assert!((pn_laguerre(z, 1e-10, n).p - poi).abs() < 1e-6);
            }
        }
        // both sides of the switch agree
        let z = c(1.3, 0.0);
        for n in 0..10 {
            let below = pn_laguerre(z, 0.99e-8, n).p;
            let above = pn_laguerre(z, 1.01e-8, n).p;
            assert!((below - above).abs() < 1e-6);
        }
    }

    #[test]
    fn hermite_vacuum_without_drive() {
        let zero = c(0.0, 0.0);
        let p0 = pn_hermite(c(1.0, 0.0), 1e-6, 0.1, zero, 0, 40).unwrap();
        assert!((p0.p - 1.0).abs() < 1e-6);
        assert_eq!(p0.branch, Branch::HermiteSeries);
        let r = pn_hermite(c(1.0, 0.0), 0.0, 0.1, c(0.5, 0.5), 2, 40).unwrap();
        assert_eq!(r.branch, Branch::ResonantPoisson);
        assert!((r.p - resonant_poisson(c(0.5, 0.5), 2).p).abs() < 1e-16);
    }

    #[test]
    fn hermite_series_without_drive() {
        // ζ = 0: only even H_k(0) survive and P_0 = Σ_j C(2j, j) κ²ʲ = 1/√(1-4κ²)
        let kappa = 0.12;
        let alpha1 = c(0.0, -1.0);
        let p0 = pn_hermite(alpha1, kappa / 0.1, 0.1, c(0.0, 0.0), 0, 80).unwrap().p;
        assert!((p0 - 1.0 / (1.0 - 4.0 * kappa * kappa).sqrt()).abs() < 1e-12, "{p0}");
        let p1 = pn_hermite(alpha1, kappa / 0.1, 0.1, c(0.0, 0.0), 1, 80).unwrap().p;
        // Σ_j 2j C(2j, j) κ²ʲ with alternating sign
        let k2 = kappa * kappa;
        assert!((p1 + 4.0 * k2 / (1.0 - 4.0 * k2).powf(1.5)).abs() < 1e-12, "{p1}");
    }

    #[test]
    fn hermite_sums_to_one_for_either_sign_of_alpha2() {
        let alpha1 = Complex64::from_polar(1.0, -2.0);
        let zeta = c(0.4, -0.9);
        for alpha2 in [-0.9, -0.3, 0.3, 0.9] {
            let ps: Vec<f64> = (0..40)
                .map(|n| pn_hermite(alpha1, alpha2, 0.1, zeta, n, 100).unwrap().p)
                .collect();
            // negativity is bounded by the dropped 4φ_I²α₂² term
            let floor = -4.0 * (0.1f64 * alpha2).powi(2);
            assert!(ps.iter().all(|&p| p >= floor && p <= 1.0), "{alpha2}: {ps:?}");
            let total: f64 = ps.iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "{alpha2}: {total}");
        }
    }

    #[test]
    fn hermite_root_branch_is_irrelevant() {
        let alpha1 = Complex64::from_polar(1.0, 2.7);
        for n in 0..6 {
            let a = pn_hermite_branch(alpha1, 0.6, 0.1, c(1.1, 0.4), n, 100, false).unwrap().p;
            let b = pn_hermite_branch(alpha1, 0.6, 0.1, c(1.1, 0.4), n, 100, true).unwrap().p;
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_tends_to_poisson_for_small_phi() {
        let zeta = c(1.2, 0.0);
        for n in 0..8 {
            let h = pn_hermite(c(0.0, -1.0), 0.7, 1e-7, zeta, n, 80).unwrap().p;
            assert!((h - pn_poisson(zeta, n).p).abs() < 1e-6);
        }
    }

    #[test]
    fn hermite_continuity_at_resonant_times() {
        let (k0, nu, phi_i) = (1.0, 0.9, 0.1);
        let t0 = std::f64::consts::PI;
        let (_, _, z0) = zeta_sinusoidal(k0, nu, 1.0, phi_i, t0).unwrap();
        for eps in [1e-4, 1e-5, 1e-6] {
            let t = t0 + eps;
            let (_, _, z) = zeta_sinusoidal(k0, nu, 1.0, phi_i, t).unwrap();
            for n in 0..5 {
                let h = pn_hermite(c(0.0, -t).exp(), t.sin(), phi_i, z, n, hermite_s_max(z)).unwrap().p;
                let p = resonant_poisson(z0, n).p;
                assert!((h - p).abs() < 50.0 * eps, "eps={eps} n={n}: {h} vs {p}");
            }
        }
    }

    #[test]
    fn hermite_reports_non_convergence() {
        let r = pn_hermite(c(1.0, 0.0), 0.5, 0.1, c(3.0, 0.0), 0, 3);
        assert!(matches!(r, Err(Error::SeriesNotConverged { n: 0, s_max: 3 })));
    }

    #[test]
    fn resonant_poisson_examples() {
        assert_eq!(resonant_poisson(c(0.0, 0.0), 0).p, 1.0);
        assert_eq!(resonant_poisson(c(0.0, 0.0), 1).p, 0.0);
        let total: f64 = (0..=100).map(|n| resonant_poisson(c(1.5, -2.0), n).p).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(is_resonant_time(1.0, 2.0 * std::f64::consts::PI));
        assert!(!is_resonant_time(1.0, 2.0));
        assert!(!is_resonant_time(1.0, 0.0));
    }

    #[test]
    fn zeta_sinusoidal_examples() {
        let (a, b, z) = zeta_sinusoidal(0.7, 0.6, 1.0, 0.1, 0.0).unwrap();
        assert!(a.norm() < 1e-16 && b.norm() < 1e-16 && z.norm() < 1e-16);
        let (a, b, z) = zeta_sinusoidal(0.0, 0.6, 1.0, 0.1, 3.0).unwrap();
        assert_eq!((a, b, z), (c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)));
        assert!(matches!(
            zeta_sinusoidal(1.0, 1.0, 1.0, 0.1, 1.0),
            Err(Error::ResonantDrive { .. })
        ));
    }

    #[test]
    fn zeta_sinusoidal_matches_printed_combination() {
        let (k0, nu, w, phi_i, t) = (0.8, 0.7, 1.3, 0.05, 4.2);
        let (_, _, z) = zeta_sinusoidal(k0, nu, w, phi_i, t).unwrap();
        let printed = k0
            * (nu * w * c(0.0, -w * t).exp() - nu * w * (nu * t).cos()
                + (2.0 * phi_i / w + c(0.0, 1.0)) * w * w * (nu * t).sin()
                - 2.0 * nu * phi_i * (w * t).sin())
            / (w * (nu * nu - w * w));
        assert!((z - printed).norm() < 1e-14);
    }

    #[test]
    fn large_time_examples() {
        let modes = [BathMode { omega: 1.1, coupling: c(0.1, 0.0) }];
        assert_eq!(large_time_limits(0.0, 0.99, 1.0, 0.1, &modes, 1.0).0, 0.0);
        assert_eq!(large_time_limits(0.02, 0.99, 1.0, 0.1, &modes, f64::INFINITY).1, 0.0);
        let (z2, _) = large_time_limits(0.02, 0.99, 1.0, 0.1, &[], 1.0);
        assert!((z2 - 0.0385).abs() < 1e-4, "{z2}");
        let (z2, _) = large_time_limits(0.2, 0.99, 1.0, 0.1, &[], 1.0);
        assert!((z2 - 3.849).abs() < 1e-3, "{z2}");
    }

    #[test]
    fn eta_inf_matches_long_time_quadrature() {
        // M(t) = f ∫₀ᵗ e^{-iω_k(t-t')} α₁(t') dt' with α₁ = e^{-(iω₀ + χ₀/2)t'}
        let (w0, chi0) = (1.0, 0.1);
        for wk in [0.7, 1.0, 1.1, 1.6] {
            let f = c(0.1, 0.05);
            let t = 1000.0;
            let g = c(chi0 / 2.0, w0 - wk);
            let m = f * c(0.0, -wk * t).exp() * (1.0 - (-g * t).exp()) / g;
            let modes = [BathMode { omega: wk, coupling: f }];
            let (_, eta) = large_time_limits(0.0, 0.5, w0, chi0, &modes, 1.0);
            let direct = m.norm_sqr() * bose_occupation(1.0, wk);
            assert!((eta - direct).abs() < 1e-12 * direct.max(1.0), "wk={wk}");
        }
    }

    #[test]
    fn hermite_large_zeta_frozen_values() {
        // reference sums evaluated at 60 digits; the terms reach ~1e8 here
        let cases: [(Complex64, f64, Complex64, &[(usize, f64)]); 2] = [
            (
                c(0.15801754785294744, -1.0077979576834721),
                1.007797957683473,
                c(3.5610839076396967, 1.3327425381905236),
                &[
                    (0, 1.4798919529911593e-6),
                    (1, 1.9146004759419541e-5),
                    (2, 1.237538954831681e-4),
                    (3, 5.3371292341128147e-4),
                    (4, 1.7304281101795922e-3),
                ],
            ),
            (
                c(0.0, -2.0).exp(),
                0.3,
                c(4.0, 1.5),
                &[(0, 3.0288037534083397e-8), (3, 2.2816875892435485e-5), (6, 9.0705616537540317e-4), (12, 3.6327574706961741e-2)],
            ),
        ];
        for (a1, a2, zeta, want) in cases {
            for &(n, p) in want {
                let got = pn_hermite(a1, a2, 0.1, zeta, n, hermite_s_max(zeta)).unwrap().p;
                assert!((got - p).abs() < 1e-9 * p, "n={n}: {got:e} vs {p:e}");
            }
        }
    }

    #[test]
    fn fig3_excitations_appear_in_order() {
        let taus: Vec<f64> = (0..=400).map(|i| i as f64 * 0.02).collect();
        let rows = tau_sweep(1.0, 0.9, 1.0, 0.1, &taus, 4).unwrap();
        for (_, ps) in &rows {
            assert!(ps.iter().all(|&p| p >= -0.04 && p <= 1.04));
            assert!(ps.iter().sum::<f64>() <= 1.0 + 0.04);
        }
        let peak_time = |n: usize| {
            rows.iter().max_by(|a, b| a.1[n].total_cmp(&b.1[n])).map(|r| r.0).unwrap()
        };
        let peaks: Vec<f64> = (1..=4).map(peak_time).collect();
        assert!(peaks.windows(2).all(|w| w[0] < w[1]), "{peaks:?}");
    }

    proptest! {
        #[test]
        fn zeta_parts_identity(k0 in -2.0..2.0f64, nu in 0.1..3.0f64, t in 0.0..20.0f64) {
            prop_assume!((nu - 1.0).abs() > 1e-3);
            let (z1, z2, z) = zeta_sinusoidal(k0, nu, 1.0, 0.1, t).unwrap();
            prop_assert!((z - (z1 - 0.2 * z2)).norm() < 1e-12 * (1.0 + z.norm()));
        }

        #[test]
        fn laguerre_probabilities_in_unit_interval(z2 in 0.0..5.0f64, eta in 0.0..3.0f64) {
            let ps = pn_laguerre_all(c(z2.sqrt(), 0.0), eta, 60);
            prop_assert!(ps.iter().all(|r| (0.0..=1.0).contains(&r.p)));
        }
    }

    #[test]
    fn complex_hermite_argument_is_used() {
        // guard against silently dropping the imaginary part of x
        let x = c(0.3, 0.8);
        assert!((hermite(3, x) - hermite(3, c(0.3, 0.0))).norm() > 1e-3);
    }
}
