//! Generating-function extraction of reduced density matrix elements.
//!
//! The normal characteristic function `G(λ, λ̄) = Tr[ρ e^{λa†} e^{-λ̄a}]` of a
//! Gaussian state is `exp` of a quadratic form. Writing
//! `G = Σ c_pq λᵖ λ̄^q`,
//!
//! ```text
//! ρ_nm = (-1)ⁿ/√(m!n!) Σ_s (m+s)!(n+s)!/s! · c_{m+s,n+s}
//! ```
//!
//! Coefficients are stored scaled, `d_pq = c_pq √(p!q!)`, which keeps them
//! O(1) for Gaussian exponents; the extraction weights become
//! `√(C(m+s,s) C(n+s,s))`.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::Serialize;

use crate::closedform::auto_n_cut;
use crate::coefficients::{propagate, theta_quadratic, zeta_combined, CoefficientSet};
use crate::error::{Error, Result};
use crate::linalg::{expm, CMatrix};
use crate::model::{BathSpec, SystemSpec};
use crate::specfun::{log_binomial, log_factorial};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub const DEFAULT_ORDER_CEILING: usize = 64;
pub const DEFAULT_EXTRA_S: usize = 24;
const ABS_FLOOR: f64 = 1e-14;

/// `c0 + l1 λ + l2 λ̄ + q20 λ² + q02 λ̄² + q11 λλ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadraticForm {
    pub c0: Complex64,
    pub l1: Complex64,
    pub l2: Complex64,
    pub q20: Complex64,
    pub q02: Complex64,
    pub q11: Complex64,
}

impl QuadraticForm {
    pub fn eval(&self, lam: Complex64, lam_bar: Complex64) -> Complex64 {
        self.c0
            + self.l1 * lam
            + self.l2 * lam_bar
            + self.q20 * lam * lam
            + self.q02 * lam_bar * lam_bar
            + self.q11 * lam * lam_bar
    }

    /// Exponent for `ρ†`, from `G_{ρ†}(λ, λ̄) = conj(G(-conj(λ̄), -conj(λ)))`.
    pub fn adjoint(&self) -> Self {
        QuadraticForm {
            c0: self.c0.conj(),
            l1: -self.l2.conj(),
            l2: -self.l1.conj(),
            q20: self.q02.conj(),
            q02: self.q20.conj(),
            q11: self.q11.conj(),
        }
    }
}

/// Truncated bivariate series with factorial-scaled storage
/// `d_pq = c_pq √(p!q!)`, `p, q ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiSeries {
    order: usize,
    coef: Vec<Complex64>,
}

impl BiSeries {
    pub fn zero(order: usize) -> Self {
        BiSeries { order, coef: vec![ZERO; (order + 1) * (order + 1)] }
    }

    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coef[0] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Scaled coefficient `d_pq`.
    pub fn scaled(&self, p: usize, q: usize) -> Complex64 {
        self.coef[p * (self.order + 1) + q]
    }

    /// Plain Taylor coefficient `c_pq`.
    pub fn coefficient(&self, p: usize, q: usize) -> Complex64 {
        self.scaled(p, q) * (-0.5 * (log_factorial(p) + log_factorial(q))).exp()
    }

    fn set(&mut self, p: usize, q: usize, v: Complex64) {
        self.coef[p * (self.order + 1) + q] = v;
    }

    /// Series of `exp(v λ^dp λ̄^dq)`: `d_{k dp, k dq} = vᵏ/k! √((k dp)!(k dq)!)`.
    fn exp_monomial(order: usize, v: Complex64, dp: usize, dq: usize) -> Self {
        let mut s = Self::one(order);
        if v == ZERO {
            return s;
        }
        let (lnv, arg) = (v.norm().ln(), v.arg());
        let mut k = 1;
        while k * dp <= order && k * dq <= order {
            let kf = k as f64;
            let ln_mag = kf * lnv - log_factorial(k)
                + 0.5 * (log_factorial(k * dp) + log_factorial(k * dq));
            s.set(k * dp, k * dq, Complex64::from_polar(ln_mag.exp(), kf * arg));
            k += 1;
        }
        s
    }

    /// Truncated product in scaled storage:
    /// `d_pq = Σ_{i,j} √(C(p,i) C(q,j)) a_{p-i,q-j} b_ij`.
    pub fn mul(&self, other: &Self, sqrt_binom: &[Vec<f64>]) -> Self {
        assert_eq!(self.order, other.order);
        let k = self.order;
        let nz: Vec<(usize, usize, Complex64)> = (0..=k)
            .flat_map(|i| (0..=k).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, other.scaled(i, j)))
            .filter(|t| t.2 != ZERO)
            .collect();
        let mut out = Self::zero(k);
        for p in 0..=k {
            for q in 0..=k {
                let mut acc = ZERO;
                for &(i, j, b) in &nz {
                    if i <= p && j <= q {
                        acc += self.scaled(p - i, q - j) * b * (sqrt_binom[p][i] * sqrt_binom[q][j]);
                    }
                }
                out.set(p, q, acc);
            }
        }
        out
    }
}

fn sqrt_binomials(k: usize) -> Vec<Vec<f64>> {
    (0..=k)
        .map(|p| (0..=p).map(|i| (0.5 * log_binomial(p, i)).exp()).collect())
        .collect()
}

/// Taylor coefficients of `exp(q(λ, λ̄))` through degree `order` in each
/// variable, in scaled storage. Factors are multiplied in the fixed order
/// λλ̄, λ², λ̄², λ, λ̄.
pub fn exp_quadratic(q: &QuadraticForm, order: usize) -> Result<BiSeries> {
    exp_quadratic_with_ceiling(q, order, DEFAULT_ORDER_CEILING)
}

pub fn exp_quadratic_with_ceiling(q: &QuadraticForm, order: usize, ceiling: usize) -> Result<BiSeries> {
    if order > ceiling {
        return Err(Error::OrderTooLarge { order, ceiling });
    }
    let sb = sqrt_binomials(order);
    let mut acc = BiSeries::exp_monomial(order, q.q11, 1, 1);
    for (v, dp, dq) in [(q.q20, 2, 0), (q.q02, 0, 2), (q.l1, 1, 0), (q.l2, 0, 1)] {
        if v != ZERO {
            acc = acc.mul(&BiSeries::exp_monomial(order, v, dp, dq), &sb);
        }
    }
    if q.c0 != ZERO {
        let f = q.c0.exp();
        acc.coef.iter_mut().for_each(|d| *d *= f);
    }
    Ok(acc)
}

/// `ρ_nm = (-1)ⁿ Σ_{s≤S_max} √(C(m+s,s) C(n+s,s)) d_{m+s,n+s}`.
///
/// Stops once two consecutive terms fall below `1e-14·|sum|`; otherwise the
/// last retained term must be below `1e-10·|sum|` or the absolute floor
/// `1e-14` (elements of a unit-trace matrix).
pub fn rho_element(series: &BiSeries, n: usize, m: usize, s_max: usize) -> Result<Complex64> {
    let k = series.order();
    if m + s_max > k || n + s_max > k {
        return Err(Error::OrderTooLarge { order: m.max(n) + s_max, ceiling: k });
    }
    let mut sum = ZERO;
    let mut last = f64::INFINITY;
    let mut quiet = 0;
    for s in 0..=s_max {
        let w = (0.5 * (log_binomial(m + s, s) + log_binomial(n + s, s))).exp();
        let term = series.scaled(m + s, n + s) * w;
        sum += term;
        last = term.norm();
        if last <= 1e-14 * sum.norm() {
            quiet += 1;
            if quiet == 2 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if quiet < 2 && last > 1e-10 * sum.norm() && last > ABS_FLOOR {
        return Err(Error::TruncationNotConverged { n, m, s_max, last });
    }
    Ok(if n % 2 == 0 { sum } else { -sum })
}

/// Exponent of the generating function for an initial coherent system state
/// `|γ⟩` and a thermal bath at inverse temperature `beta`.
pub fn build_exponent(cs: &CoefficientSet, i: usize, gamma: Complex64, beta: f64) -> Result<QuadraticForm> {
    let phi = cs.spec.phi;
    let a1 = cs.alpha1[i];
    let a2 = cs.alpha2[i];
    let zeta = zeta_combined(cs, i, phi);
    let (a_mixed, b, c) = match cs.spec.bath {
        BathSpec::Memoryless { .. } if beta.is_finite() => {
            return Err(Error::Unsupported(
                "finite temperature needs a discrete bath; the memoryless bath is taken at zero temperature",
            ))
        }
        _ => {
            let th = theta_quadratic(cs, i, beta);
            (th.a_mixed, th.b_lam2, th.c_lambar2)
        }
    };
    Ok(QuadraticForm {
        c0: ZERO,
        l1: I * zeta.conj() + gamma.conj() * a1.conj() + 2.0 * I * gamma * phi.conj() * a2,
        l2: I * zeta - gamma * a1 + 2.0 * I * gamma.conj() * phi * a2,
        q11: -4.0 * phi.norm_sqr() * a2 * a2 - a_mixed,
        q20: I * a2 * phi.conj() * a1.conj() + b,
        q02: -I * a2 * phi * a1 + c,
    })
}

/// Truncation controls for [`rho_matrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoOptions {
    /// Fock cutoff; chosen from the tail rule when `None`.
    pub n_cut: Option<usize>,
    /// Contraction depth; `n_cut + 24` when `None`.
    pub s_max: Option<usize>,
    pub order_ceiling: usize,
}

impl Default for RhoOptions {
    fn default() -> Self {
        RhoOptions { n_cut: None, s_max: None, order_ceiling: DEFAULT_ORDER_CEILING }
    }
}

impl RhoOptions {
    pub fn fixed(n_cut: usize) -> Self {
        RhoOptions { n_cut: Some(n_cut), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedDensityMatrix {
    pub t: f64,
    pub n_cut: usize,
    #[serde(serialize_with = "ser_rho")]
    pub rho: CMatrix,
    pub trace_deficit: f64,
    #[serde(skip)]
    pub truncation_order: usize,
}

fn ser_rho<S: serde::Serializer>(rho: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(rho.len()))?;
    for r in 0..rho.nrows() {
        for c in 0..rho.ncols() {
            seq.serialize_element(&[rho[(r, c)].re, rho[(r, c)].im])?;
        }
    }
    seq.end()
}

impl ReducedDensityMatrix {
    pub fn dim(&self) -> usize {
        self.n_cut + 1
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.rho[(n, m)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|n| self.rho[(n, n)].re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.rho[(n, n)].re).collect()
    }

    /// `max |ρ_nm - conj(ρ_mn)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("density matrix serializes")
    }
}

/// Fock cutoff from the displaced-thermal tail envelope with mean
/// `|l1 l2| + |q11| + 2 max(|q20|, |q02|)`.
pub fn default_n_cut(form: &QuadraticForm) -> usize {
    let eta = form.q11.norm() + 2.0 * form.q20.norm().max(form.q02.norm());
    auto_n_cut((form.l1 * form.l2).norm(), eta)
}

/// `n_cut + 24`, deepened when the contraction decays slowly. Term `s` is
/// bounded by `C(n_cut+s, s) rˢ e^{2√(sP/r)}` with
/// `r = |q11| + 2 max(|q20|, |q02|)` and `P = |l1 l2|` (a Poisson factor
/// `Pˢ/s!` when `r = 0`).
pub fn default_s_max(form: &QuadraticForm, n_cut: usize) -> usize {
    let r = form.q11.norm() + 2.0 * form.q20.norm().max(form.q02.norm());
    let p = (form.l1 * form.l2).norm();
    let base = n_cut + DEFAULT_EXTRA_S;
    if r >= 1.0 {
        return base;
    }
    let target = ABS_FLOOR.ln() - 2.0;
    for s in 1..10_000 {
        let sf = s as f64;
        let ln_term = if r > 0.0 {
            sf * r.ln() + 2.0 * (sf * p / r).sqrt()
        } else if p > 0.0 {
            sf * p.ln() - log_factorial(s)
        } else {
            f64::NEG_INFINITY
        };
        if ln_term + log_binomial(n_cut + s, s) < target {
            return base.max(s);
        }
    }
    base
}

/// `ρ(t)` at grid index `i` of an existing propagation.
pub fn rho_from_coefficients(
    cs: &CoefficientSet,
    i: usize,
    gamma: Complex64,
    opts: &RhoOptions,
) -> Result<ReducedDensityMatrix> {
    let form = build_exponent(cs, i, gamma, cs.spec.beta)?;
    rho_from_form(&form, cs.grid[i], opts)
}

/// Density matrix generated by an explicit exponent `form`.
///
/// The linear part is the mean displacement `β = ⟨a⟩ = -l2`. Expanding it
/// directly costs about `e^{|β|²}` in cancellation, so the series is only used
/// for the centred state `ρ₀ = D(β)† ρ D(β)` and the displacement is applied
/// afterwards as a unitary matrix once `|β|² > 1`.
pub fn rho_from_form(form: &QuadraticForm, t: f64, opts: &RhoOptions) -> Result<ReducedDensityMatrix> {
    let n_cut = opts.n_cut.unwrap_or_else(|| default_n_cut(form));
    let beta = -form.l2;
    let displace = beta.norm_sqr() > 1.0;
    let centred = if displace { QuadraticForm { l1: form.l1 + form.l2.conj(), l2: ZERO, ..*form } } else { *form };
    let inner_cut = if displace { centred_cut(&centred) } else { n_cut };
    let s_max = opts.s_max.unwrap_or_else(|| default_s_max(&centred, inner_cut));
    let order = inner_cut + s_max;
    if order > opts.order_ceiling {
        return Err(Error::OrderTooLarge { order, ceiling: opts.order_ceiling });
    }
    let series = exp_quadratic_with_ceiling(&centred, order, opts.order_ceiling)?;
    let dim0 = inner_cut + 1;
    let mut rho0 = CMatrix::zeros(dim0, dim0);
    for n in 0..dim0 {
        for m in 0..dim0 {
            rho0[(n, m)] = rho_element(&series, n, m, s_max)?;
        }
    }
    let dim = n_cut + 1;
    let rho = if !displace {
        rho0
    } else {
        let d = displacement(beta, dim, dim0);
        &d * rho0 * d.adjoint()
    };
    let trace: f64 = (0..dim).map(|n| rho[(n, n)].re).sum();
    Ok(ReducedDensityMatrix {
        t,
        n_cut,
        rho,
        trace_deficit: 1.0 - trace,
        truncation_order: s_max,
    })
}

/// Cutoff for a zero-mean state whose population tail is bounded by a
/// thermal law with mean `r + |l1|²`; kept to 1e-14.
fn centred_cut(form: &QuadraticForm) -> usize {
    let mean = form.q11.norm() + 2.0 * form.q20.norm().max(form.q02.norm()) + form.l1.norm_sqr();
    if mean == 0.0 {
        return 0;
    }
    let ratio = mean / (1.0 + mean);
    ((1e-14f64).ln() / ratio.ln()).ceil() as usize + 4
}

/// `⟨n|D(β)|k⟩` for `n < rows`, `k < cols`, from the exponential of
/// `β a† - β̄ a` on a space large enough that its edge is never reached.
fn displacement(beta: Complex64, rows: usize, cols: usize) -> CMatrix {
    let b = beta.norm();
    let size = rows.max(cols) + (b * b + 12.0 * b).ceil() as usize + 40;
    let mut gen = CMatrix::zeros(size, size);
    for n in 1..size {
        let s = (n as f64).sqrt();
        gen[(n, n - 1)] = beta * s;
        gen[(n - 1, n)] = -beta.conj() * s;
    }
    expm(&gen).view((0, 0), (rows, cols)).into_owned()
}

/// Reduced density matrix at time `t` for the initial state `|γ⟩⟨γ| ⊗ ρ_thermal`.
pub fn rho_matrix(spec: &SystemSpec, gamma: Complex64, t: f64, opts: &RhoOptions) -> Result<ReducedDensityMatrix> {
    let grid: Vec<f64> = if t == 0.0 { vec![0.0] } else { vec![0.0, t] };
    let cs = propagate(spec, &grid)?;
    rho_from_coefficients(&cs, grid.len() - 1, gamma, opts)
}
