//! Time-dependent coefficient functions of the Heisenberg-picture solution
//!
//! ```text
//! a(t) = α₁ a + (-2iφ α₂) a† - i Σ_j M_j b_j - i Σ_j (2iφ) N_j b_j† - i ζ₁ - i (2iφ) ζ₂
//! ```
//!
//! The operator vector `(a, a†, b₁, b₁†, …)` obeys a closed linear system
//! `ẋ = A x + d(t)`, so all coefficients are read off the fundamental matrix
//! `e^{At}` and its inhomogeneous response. No eigendecomposition of `A` is
//! used, so degenerate spectra (a bath mode resonant with `ω₀`) need no
//! special treatment.
//!
//! Two details make the extraction well defined at `φ = 0`:
//!
//! * The propagation runs in a rescaled frame where the `a†`-sector
//!   (`a†, b_j†`) is multiplied by `φ`. The `a ← a†` entry of the generator
//!   becomes `-2i` and the `a† ← a` entry `2i|φ|²`; the spectrum is unchanged
//!   and the `a†(0)` column yields `α₂` itself rather than `φα₂`.
//! * Drives are generated by a small linear system (`cos νt, sin νt` for a
//!   sinusoid, `1, t` for piecewise-linear tables) appended to the state, so
//!   the inhomogeneous terms are exact as well. The `k` and `k̄` injections are
//!   kept in separate blocks, giving `ζ₁` and `ζ₂` individually.
//!
//! Resulting conventions, checked against direct quadrature in the tests:
//! `M_j(t) = f_j ∫₀ᵗ e^{-iω_j(t-t')} α₁(t') dt'` and
//! `N_j(t) = f̄_j ∫₀ᵗ e^{+iω_j(t-t')} α₂(t') dt'`; `α₂` is real.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result, SpecViolation};
use crate::linalg::{expm, CMatrix};
use crate::model::{bose_occupation, validate_spec, BathSpec, DriveSpec, SystemSpec};
use crate::report::fmt_f64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Commutator defect above which [`propagate`] reports `StepSizeTooCoarse`.
pub const DEFECT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub spec: SystemSpec,
    pub grid: Vec<f64>,
    pub alpha1: Vec<Complex64>,
    pub alpha2: Vec<Complex64>,
    /// `m_coef[i][j]` is `M_j(grid[i])`.
    pub m_coef: Vec<Vec<Complex64>>,
    pub n_coef: Vec<Vec<Complex64>>,
    pub zeta1: Vec<Complex64>,
    pub zeta2: Vec<Complex64>,
}

/// Bath-operator coefficients of
/// `b_j(t) = Σ_k [Λ_jk b_k + Λ'_jk b_k†] - Γ_j a - Γ'_j a† - Ω_j`.
#[derive(Debug, Clone)]
pub struct BathCoefficientSet {
    pub grid: Vec<f64>,
    pub lambda: Vec<CMatrix>,
    pub lambda_prime: Vec<CMatrix>,
    pub gamma: Vec<Vec<Complex64>>,
    pub gamma_prime: Vec<Vec<Complex64>>,
    pub omega: Vec<Vec<Complex64>>,
}

/// Thermal bath contribution to the generating-function exponent:
/// `-a_mixed λλ̄ + b_lam2 λ² + c_lambar2 λ̄²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalQuadratic {
    pub a_mixed: f64,
    pub b_lam2: Complex64,
    pub c_lambar2: Complex64,
    pub beta: f64,
    pub t: f64,
}

/// Constant generator of `ẋ = A x + d(t)` for `x = (a, a†, b₁, b₁†, …)`.
#[derive(Debug, Clone)]
pub struct LinearGenerator {
    pub matrix: CMatrix,
    pub n_modes: usize,
    drive: DriveSpec,
}

impl LinearGenerator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Drive injection `d(t) = (-ik, ik̄, 0, …)`.
    pub fn drive_vector(&self, t: f64) -> Result<DVector<Complex64>> {
        let k = crate::model::drive_eval(&self.drive, t)?;
        let mut d = DVector::zeros(self.dim());
        d[0] = -I * k;
        d[1] = I * k.conj();
        Ok(d)
    }
}

/// Bath response function `χ(Δt) = Σ_j |f_j|² e^{-iω_j Δt}`.
pub fn response_function(bath: &BathSpec, dt: f64) -> Result<Complex64> {
    match bath {
        BathSpec::None => Ok(ZERO),
        BathSpec::Memoryless { .. } => {
            Err(Error::Unsupported("a memoryless response has no pointwise value"))
        }
        BathSpec::Discrete(modes) => Ok(modes
            .iter()
            .map(|m| m.coupling.norm_sqr() * Complex64::new(0.0, -m.omega * dt).exp())
            .sum()),
    }
}

fn generator_matrix(spec: &SystemSpec, rescaled: bool) -> CMatrix {
    let modes = spec.bath.modes();
    let n = 2 * (modes.len() + 1);
    let mut a = CMatrix::zeros(n, n);
    a[(0, 0)] = -I * spec.omega0;
    a[(1, 1)] = I * spec.omega0;
    if let BathSpec::Memoryless { chi0 } = spec.bath {
        a[(0, 0)] -= chi0 / 2.0;
        a[(1, 1)] -= chi0 / 2.0;
    }
    if rescaled {
        a[(0, 1)] = -2.0 * I;
        a[(1, 0)] = 2.0 * I * spec.phi.norm_sqr();
    } else {
        a[(0, 1)] = -2.0 * I * spec.phi;
        a[(1, 0)] = 2.0 * I * spec.phi.conj();
    }
    for (j, m) in modes.iter().enumerate() {
        let (b, bd) = (2 + 2 * j, 3 + 2 * j);
        a[(0, b)] = -I * m.coupling;
        a[(1, bd)] = I * m.coupling.conj();
        a[(b, b)] = -I * m.omega;
        a[(bd, bd)] = I * m.omega;
        a[(b, 0)] = -I * m.coupling.conj();
        a[(bd, 1)] = I * m.coupling;
    }
    a
}

/// Generator of the Heisenberg equations for a discrete or empty bath.
pub fn assemble_generator(spec: &SystemSpec) -> Result<LinearGenerator> {
    let spec = validate_spec(spec)?;
    if matches!(spec.bath, BathSpec::Memoryless { .. }) {
        return Err(Error::Unsupported(
            "memoryless bath has no finite generator; use closed_form_alpha",
        ));
    }
    Ok(LinearGenerator {
        matrix: generator_matrix(&spec, false),
        n_modes: spec.n_modes(),
        drive: spec.drive.clone(),
    })
}

/// Linear system generating the drive: `k(t) = b · y(t)`, `ẏ = D y`.
struct DriveGenerator {
    dim: usize,
    gen: CMatrix,
    y0: DVector<Complex64>,
    /// `(segment start, b)`, sorted by start.
    segments: Vec<(f64, Vec<Complex64>)>,
    end: f64,
}

impl DriveGenerator {
    fn new(drive: &DriveSpec) -> Self {
        let c = |x: f64| Complex64::new(x, 0.0);
        match drive {
            DriveSpec::Zero => DriveGenerator {
                dim: 0,
                gen: CMatrix::zeros(0, 0),
                y0: DVector::zeros(0),
                segments: vec![(0.0, vec![])],
                end: f64::INFINITY,
            },
            DriveSpec::Sinusoidal { k0, nu } => DriveGenerator {
                dim: 2,
                gen: CMatrix::from_row_slice(2, 2, &[c(0.0), c(-nu), c(*nu), c(0.0)]),
                y0: DVector::from_vec(vec![c(1.0), c(0.0)]),
                segments: vec![(0.0, vec![c(0.0), c(*k0)])],
                end: f64::INFINITY,
            },
            DriveSpec::Tabulated { times, values } => {
                let segments = times
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(t, v)| {
                        let slope = (v[1] - v[0]) / (t[1] - t[0]);
                        (t[0], vec![v[0] - slope * t[0], slope])
                    })
                    .collect();
                DriveGenerator {
                    dim: 2,
                    gen: CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(1.0), c(0.0)]),
                    y0: DVector::from_vec(vec![c(1.0), c(0.0)]),
                    segments,
                    end: times[times.len() - 1],
                }
            }
        }
    }

    fn segment_at(&self, t: f64) -> &[Complex64] {
        let idx = self.segments.partition_point(|s| s.0 <= t).saturating_sub(1);
        &self.segments[idx].1
    }
}

/// Raw fundamental-matrix data at one grid point, in the rescaled frame.
struct Snapshot {
    s: CMatrix,
    w_k: DVector<Complex64>,
    w_kbar: DVector<Complex64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidSpec(vec![SpecViolation::BadGrid(m.to_string())]));
    if grid.is_empty() {
        return bad("time grid is empty");
    }
    if grid[0] != 0.0 {
        return bad("time grid must start at 0");
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return bad("time grid must be strictly increasing");
    }
    Ok(())
}

fn run_fundamental(spec: &SystemSpec, grid: &[f64]) -> Result<Vec<Snapshot>> {
    check_grid(grid)?;
    let a = generator_matrix(spec, true);
    let n = a.nrows();
    let drive = DriveGenerator::new(&spec.drive);
    let m = drive.dim;
    let t_last = grid[grid.len() - 1];
    if t_last > drive.end {
        return Err(Error::OutOfRange { t: t_last, start: 0.0, end: drive.end });
    }

    let mut stops: Vec<f64> = grid.to_vec();
    stops.extend(drive.segments.iter().map(|s| s.0).filter(|&t| t > 0.0 && t < t_last));
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let na = n + 2 * m;
    let augmented = |t: f64| {
        let mut big = CMatrix::zeros(na, na);
        big.view_mut((0, 0), (n, n)).copy_from(&a);
        let b = drive.segment_at(t);
        for (c, &bc) in b.iter().enumerate() {
            big[(0, n + c)] = -I * bc;
            big[(1, n + m + c)] = I * bc.conj();
        }
        big.view_mut((n, n), (m, m)).copy_from(&drive.gen);
        big.view_mut((n + m, n + m), (m, m)).copy_from(&drive.gen);
        big
    };

    let mut phi = CMatrix::identity(na, na);
    let mut out = Vec::with_capacity(grid.len());
    let mut gi = 0;
    let mut t = 0.0;
    for &stop in &stops {
        if stop > t {
            phi = expm(&(augmented(t) * Complex64::new(stop - t, 0.0))) * phi;
            t = stop;
        }
        if gi < grid.len() && grid[gi] == stop {
            let s = phi.view((0, 0), (n, n)).into_owned();
            let (w_k, w_kbar) = if m > 0 {
                (
                    phi.view((0, n), (n, m)) * &drive.y0,
                    phi.view((0, n + m), (n, m)) * &drive.y0,
                )
            } else {
                (DVector::zeros(n), DVector::zeros(n))
            };
            out.push(Snapshot { s, w_k, w_kbar });
            gi += 1;
        }
    }
    Ok(out)
}

/// Propagates the Heisenberg solution over `grid` (strictly increasing,
/// starting at 0) and extracts `α₁, α₂, M_j, N_j, ζ₁, ζ₂`.
pub fn propagate(spec: &SystemSpec, grid: &[f64]) -> Result<CoefficientSet> {
    let spec = validate_spec(spec)?;
    let snaps = run_fundamental(&spec, grid)?;
    let n_modes = spec.n_modes();
    let mut cs = CoefficientSet {
        spec,
        grid: grid.to_vec(),
        alpha1: Vec::with_capacity(grid.len()),
        alpha2: Vec::with_capacity(grid.len()),
        m_coef: Vec::with_capacity(grid.len()),
        n_coef: Vec::with_capacity(grid.len()),
        zeta1: Vec::with_capacity(grid.len()),
        zeta2: Vec::with_capacity(grid.len()),
    };
    for snap in &snaps {
        let s = &snap.s;
        cs.alpha1.push(s[(0, 0)]);
        cs.alpha2.push(s[(0, 1)] / (-2.0 * I));
        cs.m_coef.push((0..n_modes).map(|j| I * s[(0, 2 + 2 * j)]).collect());
        cs.n_coef.push((0..n_modes).map(|j| s[(0, 3 + 2 * j)] / 2.0).collect());
        cs.zeta1.push(I * snap.w_k[0]);
        cs.zeta2.push(snap.w_kbar[0] / 2.0);
    }
    if !matches!(cs.spec.bath, BathSpec::Memoryless { .. }) {
        for i in 0..cs.grid.len() {
            let defect = commutator_defect(&cs, i);
            if defect > DEFECT_TOLERANCE {
                return Err(Error::StepSizeTooCoarse { t: cs.grid[i], defect, tol: DEFECT_TOLERANCE });
            }
        }
    }
    Ok(cs)
}

/// Bath-operator coefficients from the same fundamental solution.
pub fn bath_coefficients(spec: &SystemSpec, grid: &[f64]) -> Result<BathCoefficientSet> {
    let spec = validate_spec(spec)?;
    if !matches!(spec.bath, BathSpec::Discrete(_)) {
        return Err(Error::Unsupported("bath coefficients need a discrete bath"));
    }
    let snaps = run_fundamental(&spec, grid)?;
    let nm = spec.n_modes();
    let phi = spec.phi;
    let mut out = BathCoefficientSet {
        grid: grid.to_vec(),
        lambda: vec![],
        lambda_prime: vec![],
        gamma: vec![],
        gamma_prime: vec![],
        omega: vec![],
    };
    for snap in &snaps {
        let s = &snap.s;
        out.lambda.push(CMatrix::from_fn(nm, nm, |j, k| s[(2 + 2 * j, 2 + 2 * k)]));
        out.lambda_prime.push(CMatrix::from_fn(nm, nm, |j, k| phi * s[(2 + 2 * j, 3 + 2 * k)]));
        out.gamma.push((0..nm).map(|j| -s[(2 + 2 * j, 0)]).collect());
        out.gamma_prime.push((0..nm).map(|j| -phi * s[(2 + 2 * j, 1)]).collect());
        out.omega
            .push((0..nm).map(|j| -(snap.w_k[2 + 2 * j] + phi * snap.w_kbar[2 + 2 * j])).collect());
    }
    Ok(out)
}

/// `(α₁(t), α₂(t))` in closed form for an empty or memoryless bath, with the
/// `4φ_I²` shift of the oscillation frequency neglected.
pub fn closed_form_alpha(spec: &SystemSpec, t: f64) -> Result<(Complex64, Complex64)> {
    let w = spec.omega0;
    let decay = match spec.bath {
        BathSpec::None => 0.0,
        BathSpec::Memoryless { chi0 } => chi0 / 2.0,
        BathSpec::Discrete(_) => {
            return Err(Error::Unsupported("closed-form alpha needs an empty or memoryless bath"))
        }
    };
    let env = (-decay * t).exp();
    Ok((
        env * Complex64::new(0.0, -w * t).exp(),
        Complex64::new(env * (w * t).sin() / w, 0.0),
    ))
}

/// `| |α₁|² - 4|φ|²|α₂|² + Σ_j (|M_j|² - 4|φ|²|N_j|²) - 1 |`, i.e. the
/// deviation of `[a(t), a†(t)]` from 1.
pub fn commutator_defect(cs: &CoefficientSet, i: usize) -> f64 {
    let p2 = 4.0 * cs.spec.phi.norm_sqr();
    let mut c = cs.alpha1[i].norm_sqr() - p2 * cs.alpha2[i].norm_sqr();
    for (m, n) in cs.m_coef[i].iter().zip(&cs.n_coef[i]) {
        c += m.norm_sqr() - p2 * n.norm_sqr();
    }
    (c - 1.0).abs()
}

/// Thermal excitation `η(t) = Σ_k |M_k|² / (e^{βω_k} - 1)`.
pub fn eta(cs: &CoefficientSet, i: usize, beta: f64) -> f64 {
    cs.spec
        .bath
        .modes()
        .iter()
        .zip(&cs.m_coef[i])
        .map(|(mode, m)| m.norm_sqr() * bose_occupation(beta, mode.omega))
        .sum()
}

/// Bath normal characteristic function exponent for a thermal initial bath.
///
/// Per mode with occupation `n̄_k` and `B = Σ_k (M_k b_k + 2iφ N_k b_k†)`:
/// `a_mixed = Σ_k [n̄_k |M_k|² + (1 + n̄_k) 4|φ|² |N_k|²]`,
/// `b_lam2 = iφ̄ Σ_k (1 + 2n̄_k) N̄_k M̄_k`,
/// `c_lambar2 = -iφ Σ_k (1 + 2n̄_k) N_k M_k`.
pub fn theta_quadratic(cs: &CoefficientSet, i: usize, beta: f64) -> ThermalQuadratic {
    let phi = cs.spec.phi;
    let p2 = 4.0 * phi.norm_sqr();
    let mut a = 0.0;
    let mut nm_sum = ZERO;
    for ((mode, m), n) in cs.spec.bath.modes().iter().zip(&cs.m_coef[i]).zip(&cs.n_coef[i]) {
        let occ = bose_occupation(beta, mode.omega);
        a += occ * m.norm_sqr() + (1.0 + occ) * p2 * n.norm_sqr();
        nm_sum += (1.0 + 2.0 * occ) * n * m;
    }
    ThermalQuadratic {
        a_mixed: a,
        b_lam2: I * phi.conj() * nm_sum.conj(),
        c_lambar2: -I * phi * nm_sum,
        beta,
        t: cs.grid[i],
    }
}

/// `Z = -iζ₁ + γα₁`, the coherent amplitude of the `φ = 0` distribution.
pub fn big_z(cs: &CoefficientSet, i: usize, gamma: Complex64) -> Complex64 {
    -I * cs.zeta1[i] + gamma * cs.alpha1[i]
}

/// `ζ = ζ₁ + 2iφζ₂`.
pub fn zeta_combined(cs: &CoefficientSet, i: usize, phi: Complex64) -> Complex64 {
    cs.zeta1[i] + 2.0 * I * phi * cs.zeta2[i]
}

impl CoefficientSet {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.spec.n_modes()
    }

    /// CSV with header; columns `t`, Re/Im of `α₁, α₂, ζ₁, ζ₂`, then Re/Im of
    /// `M_j, N_j` for each bath mode.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        for name in ["alpha1", "alpha2", "zeta1", "zeta2"] {
            header.push(format!("re_{name}"));
            header.push(format!("im_{name}"));
        }
        for j in 1..=self.n_modes() {
            for name in ["M", "N"] {
                header.push(format!("re_{name}{j}"));
                header.push(format!("im_{name}{j}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![fmt_f64(self.grid[i])];
            let mut push = |z: Complex64| {
                row.push(fmt_f64(z.re));
                row.push(fmt_f64(z.im));
            };
            push(self.alpha1[i]);
            push(self.alpha2[i]);
            push(self.zeta1[i]);
            push(self.zeta2[i]);
            for j in 0..self.n_modes() {
                push(self.m_coef[i][j]);
                push(self.n_coef[i][j]);
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BathMode;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn linspace(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
    }

    fn one_mode(omega: f64, f: Complex64) -> BathSpec {
        BathSpec::Discrete(vec![BathMode { omega, coupling: f }])
    }

    fn desk_spec() -> SystemSpec {
        SystemSpec {
            omega0: 1.0,
            phi: c(0.0, 0.05),
            drive: DriveSpec::Sinusoidal { k0: 0.05, nu: 0.95 },
            bath: one_mode(1.1, c(0.1, 0.0)),
            beta: 1.0,
        }
    }

    fn many_modes(n: usize) -> BathSpec {
        BathSpec::Discrete(
            (0..n)
                .map(|j| BathMode {
                    omega: 0.6 + 0.17 * j as f64,
                    coupling: Complex64::from_polar(0.05 + 0.01 * j as f64, 0.7 * j as f64),
                })
                .collect(),
        )
    }

    /// Composite Simpson on a uniform grid with an even number of intervals.
    fn simpson(h: f64, f: &[Complex64]) -> Complex64 {
        let n = f.len() - 1;
        assert!(n % 2 == 0);
        let mut acc = f[0] + f[n];
        for (i, v) in f.iter().enumerate().take(n).skip(1) {
            acc += v * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn response_function_examples() {
        let b = one_mode(1.0, c(1.0, 0.0));
        assert!((response_function(&b, 0.0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!((response_function(&b, PI).unwrap() - c(-1.0, 0.0)).norm() < 1e-15);
        let two = BathSpec::Discrete(vec![
            BathMode { omega: 1.0, coupling: c(1.0, 0.0) },
            BathMode { omega: 2.0, coupling: c(1.0, 0.0) },
        ]);
        assert_eq!(response_function(&two, 0.0).unwrap(), c(2.0, 0.0));
        assert!(matches!(
            response_function(&BathSpec::Memoryless { chi0: 0.1 }, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn generator_examples() {
        let g = assemble_generator(&SystemSpec::free(1.0)).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.0, -1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(g.matrix, expected);

        let mut spec = SystemSpec::free(1.0);
        spec.phi = c(0.0, 0.1);
        let g = assemble_generator(&spec).unwrap();
        assert!((g.matrix[(0, 1)] - (-2.0 * I * spec.phi)).norm() < 1e-16);
        assert!((g.matrix[(1, 0)] - 2.0 * I * spec.phi.conj()).norm() < 1e-16);

        spec.bath = one_mode(1.3, c(0.2, 0.1));
        let g = assemble_generator(&spec).unwrap();
        assert_eq!(g.dim(), 4);
        assert_eq!(g.matrix[(0, 2)], -I * c(0.2, 0.1));
        assert_eq!(g.matrix[(2, 0)], -I * c(0.2, -0.1));

        spec.drive = DriveSpec::Sinusoidal { k0: 2.0, nu: PI };
        let d = g.drive_vector(0.0).unwrap();
        assert!(d.iter().all(|z| z.norm() == 0.0));

        spec.bath = BathSpec::Memoryless { chi0: 0.1 };
        assert!(matches!(assemble_generator(&spec), Err(Error::Unsupported(_))));
    }

    #[test]
    fn free_oscillator_coefficients() {
        let grid = linspace(10.0, 40);
        let cs = propagate(&SystemSpec::free(1.3), &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((cs.alpha1[i] - c(0.0, -1.3 * t).exp()).norm() < 1e-12);
            assert!((cs.alpha2[i] - c((1.3 * t).sin() / 1.3, 0.0)).norm() < 1e-12);
            assert_eq!(cs.zeta1[i], c(0.0, 0.0));
            assert_eq!(commutator_defect(&cs, i), 0.0f64.max(commutator_defect(&cs, i)));
            assert!(commutator_defect(&cs, i) < 1e-13);
        }
    }

    #[test]
    fn two_photon_coefficients_without_bath() {
        let phi_i = 0.1;
        let mut spec = SystemSpec::free(1.0);
        spec.phi = c(0.0, phi_i);
        let grid = linspace(8.0, 32);
        let cs = propagate(&spec, &grid).unwrap();
        // exact: L(s) = s² + Ω², Ω² = ω₀² - 4φ_I²
        let om = (1.0 - 4.0 * phi_i * phi_i).sqrt();
        for (i, &t) in grid.iter().enumerate() {
            let a2 = (om * t).sin() / om;
            assert!((cs.alpha2[i] - c(a2, 0.0)).norm() < 1e-12);
            assert!(cs.alpha2[i].im.abs() < 1e-14);
            let a1 = c((om * t).cos(), -(om * t).sin() / om);
            assert!((cs.alpha1[i] - a1).norm() < 1e-12);
            // leading order: sin(ω₀t)/ω₀ up to O(φ_I²)
            assert!((cs.alpha2[i].re - t.sin()).abs() < 4.0 * phi_i * phi_i * (t + 1.0));
            assert!(commutator_defect(&cs, i) < 1e-12);
        }
    }

    #[test]
    fn small_time_bath_coefficients() {
        let f = c(0.3, -0.2);
        let mut spec = SystemSpec::free(1.0);
        spec.bath = one_mode(1.7, f);
        spec.phi = c(0.0, 0.1);
        let grid = vec![0.0, 1e-4, 2e-4];
        let cs = propagate(&spec, &grid).unwrap();
        let bc = bath_coefficients(&spec, &grid).unwrap();
        for i in 1..3 {
            let t = grid[i];
            assert!((cs.m_coef[i][0] / t - f).norm() < 5.0 * t);
            assert!((bc.gamma[i][0] / t - I * f.conj()).norm() < 5.0 * t);
        }
        assert_eq!(bc.lambda[0], CMatrix::identity(1, 1));
        assert_eq!(bc.gamma[0][0], c(0.0, 0.0));
        assert_eq!(bc.gamma_prime[0][0], c(0.0, 0.0));
        assert_eq!(bc.omega[0][0], c(0.0, 0.0));
    }

    #[test]
    fn decoupled_bath_rotates_freely() {
        let mut spec = SystemSpec::free(1.0);
        spec.bath = BathSpec::Discrete(vec![
            BathMode { omega: 0.8, coupling: c(0.0, 0.0) },
            BathMode { omega: 1.9, coupling: c(0.0, 0.0) },
        ]);
        spec.drive = DriveSpec::Sinusoidal { k0: 0.3, nu: 0.5 };
        let grid = linspace(5.0, 10);
        let bc = bath_coefficients(&spec, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            for j in 0..2 {
                for k in 0..2 {
                    let w = [0.8, 1.9][j];
                    let expected = if j == k { c(0.0, -w * t).exp() } else { c(0.0, 0.0) };
                    assert!((bc.lambda[i][(j, k)] - expected).norm() < 1e-13);
                    assert!(bc.lambda_prime[i][(j, k)].norm() < 1e-15);
                }
                assert!(bc.gamma[i][j].norm() < 1e-15);
                assert!(bc.omega[i][j].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_alpha_examples() {
        let spec = SystemSpec::free(2.0);
        let (a1, a2) = closed_form_alpha(&spec, PI / 2.0).unwrap();
        assert!((a1 - c(-1.0, 0.0)).norm() < 1e-15);
        assert!(a2.norm() < 1e-15);
        let (_, a2) = closed_form_alpha(&spec, PI / 4.0).unwrap();
        assert!((a2.re - 0.5).abs() < 1e-15);
        let mut spec = SystemSpec::free(1.0);
        spec.bath = BathSpec::Memoryless { chi0: 0.1 };
        let (a1, _) = closed_form_alpha(&spec, 2000.0).unwrap();
        assert!(a1.norm() < 1e-40);
        spec.bath = one_mode(1.0, c(0.1, 0.0));
        assert!(closed_form_alpha(&spec, 1.0).is_err());
    }

    #[test]
    fn memoryless_propagation_matches_closed_form() {
        let mut spec = SystemSpec::free(1.0);
        spec.bath = BathSpec::Memoryless { chi0: 0.1 };
        let grid = linspace(30.0, 30);
        let cs = propagate(&spec, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let (a1, a2) = closed_form_alpha(&spec, t).unwrap();
            assert!((cs.alpha1[i] - a1).norm() < 1e-12);
            // 1/L(s) with L = (s + χ₀/2)² + ω₀²
            assert!((cs.alpha2[i] - a2).norm() < 1e-12);
        }
    }

    #[test]
    fn commutator_defect_examples() {
        let grid = linspace(1.0, 4);
        let mut cs = propagate(&SystemSpec::free(1.0), &grid).unwrap();
        assert_eq!(commutator_defect(&cs, 0), 0.0);
        cs.alpha1[1] *= 1.1;
        assert!((commutator_defect(&cs, 1) - 0.21).abs() < 1e-12);
    }

    #[test]
    fn eta_and_theta_examples() {
        let grid = vec![0.0, 1.0];
        let cs = propagate(&SystemSpec::free(1.0), &grid).unwrap();
        assert_eq!(eta(&cs, 1, 0.7), 0.0);
        let th = theta_quadratic(&cs, 1, 0.7);
        assert_eq!((th.a_mixed, th.b_lam2, th.c_lambar2), (0.0, c(0.0, 0.0), c(0.0, 0.0)));

        let mut spec = SystemSpec::free(1.0);
        spec.bath = one_mode(1.0, c(0.2, 0.0));
        let mut cs = propagate(&spec, &grid).unwrap();
        assert_eq!(eta(&cs, 1, f64::INFINITY), 0.0);
        cs.m_coef[1][0] = Complex64::from_polar(1.0, 0.4);
        assert!((eta(&cs, 1, 2f64.ln()) - 1.0).abs() < 1e-14);

        // φ = 0: no squeezing terms and a_mixed = η
        let cs = propagate(&spec, &linspace(4.0, 4)).unwrap();
        let th = theta_quadratic(&cs, 4, 0.8);
        assert_eq!(th.b_lam2, c(0.0, 0.0));
        assert_eq!(th.c_lambar2, c(0.0, 0.0));
        assert!((th.a_mixed - eta(&cs, 4, 0.8)).abs() < 1e-16);

        // zero temperature, one mode, φ = iφ_I
        spec.phi = c(0.0, 0.15);
        let cs = propagate(&spec, &linspace(3.0, 3)).unwrap();
        let th = theta_quadratic(&cs, 3, f64::INFINITY);
        let (m, n) = (cs.m_coef[3][0], cs.n_coef[3][0]);
        assert!(n.norm() > 1e-3);
        assert!((th.a_mixed - 4.0 * 0.15f64.powi(2) * n.norm_sqr()).abs() < 1e-16);
        assert!((th.b_lam2 - I * spec.phi.conj() * (n * m).conj()).norm() < 1e-16);
        assert!((th.c_lambar2 + I * spec.phi * n * m).norm() < 1e-16);
    }

    #[test]
    fn big_z_and_zeta_examples() {
        let grid = linspace(2.0, 2);
        let cs = propagate(&SystemSpec::free(1.0), &grid).unwrap();
        assert_eq!(big_z(&cs, 2, c(0.0, 0.0)), c(0.0, 0.0));
        assert!((big_z(&cs, 2, c(1.0, 0.0)) - c(0.0, -2.0).exp()).norm() < 1e-14);
        assert_eq!(zeta_combined(&cs, 2, c(0.0, 0.1)), c(0.0, 0.0));

        let mut spec = desk_spec();
        spec.phi = c(0.0, 0.0);
        let cs = propagate(&spec, &grid).unwrap();
        assert_eq!(zeta_combined(&cs, 2, c(0.0, 0.0)), cs.zeta1[2]);
    }

    #[test]
    fn sinusoidal_zeta_matches_quadrature() {
        let (k0, nu) = (0.7, 0.6);
        let mut spec = SystemSpec::free(1.0);
        spec.drive = DriveSpec::Sinusoidal { k0, nu };
        let t = 7.3;
        let cs = propagate(&spec, &[0.0, t]).unwrap();
        let n = 20_000;
        let h = t / n as f64;
        let f1: Vec<_> = (0..=n)
            .map(|i| {
                let tp = i as f64 * h;
                c(0.0, -(t - tp)).exp() * k0 * (nu * tp).sin()
            })
            .collect();
        let f2: Vec<_> = (0..=n)
            .map(|i| {
                let tp = i as f64 * h;
                c((t - tp).sin() * k0 * (nu * tp).sin(), 0.0)
            })
            .collect();
        assert!((cs.zeta1[1] - simpson(h, &f1)).norm() < 1e-11);
        assert!((cs.zeta2[1] - simpson(h, &f2)).norm() < 1e-11);
    }

    #[test]
    fn tabulated_drive_matches_equivalent_quadrature() {
        let mut spec = SystemSpec::free(1.0);
        spec.phi = c(0.0, 0.07);
        let times = vec![0.0, 0.5, 1.7, 2.0, 4.0];
        let values = vec![c(0.0, 0.0), c(0.3, -0.1), c(-0.2, 0.4), c(0.1, 0.1), c(0.0, 0.0)];
        spec.drive = DriveSpec::Tabulated { times, values };
        let grid = vec![0.0, 1.0, 3.5];
        let cs = propagate(&spec, &grid).unwrap();
        // fine reference run for α₁, α₂, then direct convolution
        let n = 7000;
        let fine = linspace(3.5, n);
        let free = propagate(&SystemSpec { drive: DriveSpec::Zero, ..spec.clone() }, &fine).unwrap();
        let h = 3.5 / n as f64;
        let t = 3.5;
        let f1: Vec<_> = (0..=n)
            .map(|i| free.alpha1[n - i] * crate::model::drive_eval(&spec.drive, i as f64 * h).unwrap())
            .collect();
        let f2: Vec<_> = (0..=n)
            .map(|i| {
                free.alpha2[n - i] * crate::model::drive_eval(&spec.drive, i as f64 * h).unwrap().conj()
            })
            .collect();
        // kinks in k(t) limit Simpson to O(h²) near breakpoints
        assert!((cs.zeta1[2] - simpson(h, &f1)).norm() < 1e-7, "{} vs {}", cs.zeta1[2], simpson(h, &f1));
        assert!((cs.zeta2[2] - simpson(h, &f2)).norm() < 1e-7);
        let _ = t;
        assert!(propagate(&spec, &[0.0, 5.0]).is_err());
    }

    #[test]
    fn initial_conditions() {
        let cs = propagate(&desk_spec(), &[0.0, 1.0]).unwrap();
        assert_eq!(cs.alpha1[0], c(1.0, 0.0));
        for z in [cs.alpha2[0], cs.m_coef[0][0], cs.n_coef[0][0], cs.zeta1[0], cs.zeta2[0]] {
            assert_eq!(z, c(0.0, 0.0));
        }
    }

    #[test]
    fn commutator_preserved_for_many_modes() {
        let grid = linspace(50.0, 100);
        for (n, phi_i) in [(1, 0.2), (3, -0.15), (8, 0.2), (8, 0.0)] {
            let spec = SystemSpec {
                omega0: 1.0,
                phi: c(0.0, phi_i),
                drive: DriveSpec::Sinusoidal { k0: 0.1, nu: 0.9 },
                bath: many_modes(n),
                beta: 1.0,
            };
            let cs = propagate(&spec, &grid).unwrap();
            for i in 0..cs.len() {
                assert!(commutator_defect(&cs, i) < 1e-9, "n={n} t={}", grid[i]);
            }
        }
    }

    #[test]
    fn fundamental_matrix_is_symplectic() {
        for (n, phi_i) in [(1, 0.05), (3, 0.2), (5, -0.1)] {
            let spec = SystemSpec {
                omega0: 1.0,
                phi: c(0.0, phi_i),
                drive: DriveSpec::Zero,
                bath: many_modes(n),
                beta: 1.0,
            };
            let g = assemble_generator(&spec).unwrap();
            let dim = g.dim();
            let j = CMatrix::from_fn(dim, dim, |r, c_| {
                if r != c_ {
                    c(0.0, 0.0)
                } else if r % 2 == 0 {
                    c(1.0, 0.0)
                } else {
                    c(-1.0, 0.0)
                }
            });
            for t in [0.5, 7.0, 30.0] {
                let s = expm(&(&g.matrix * c(t, 0.0)));
                let defect = (&s * &j * s.adjoint() - &j).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(defect < 1e-8, "n={n} t={t}: {defect}");
            }
            // the rescaled frame reproduces the physical a-row
            let cs = propagate(&spec, &[0.0, 7.0]).unwrap();
            let s = expm(&(&g.matrix * c(7.0, 0.0)));
            assert!((s[(0, 0)] - cs.alpha1[1]).norm() < 1e-12);
            assert!((s[(0, 1)] - (-2.0 * I * spec.phi * cs.alpha2[1])).norm() < 1e-12);
            assert!((s[(0, 2)] - (-I * cs.m_coef[1][0])).norm() < 1e-12);
            assert!((s[(0, 3)] - (-I * 2.0 * I * spec.phi * cs.n_coef[1][0])).norm() < 1e-12);
            // adjoint row: a†(t) has +2iφ̄α₂ a(0) with real α₂
            assert!((s[(1, 0)] - 2.0 * I * spec.phi.conj() * cs.alpha2[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn drive_response_matches_physical_inhomogeneous_solution() {
        // physical a-row offset -iζ₁ - i(2iφ)ζ₂ against the augmented physical system
        let spec = desk_spec();
        let cs = propagate(&spec, &[0.0, 6.0]).unwrap();
        let g = assemble_generator(&spec).unwrap();
        let n = g.dim();
        let nu = 0.95;
        let mut big = CMatrix::zeros(n + 2, n + 2);
        big.view_mut((0, 0), (n, n)).copy_from(&g.matrix);
        big[(0, n + 1)] = -I * 0.05;
        big[(1, n + 1)] = I * 0.05;
        big[(n, n + 1)] = c(-nu, 0.0);
        big[(n + 1, n)] = c(nu, 0.0);
        let e = expm(&(big * c(6.0, 0.0)));
        let offset = e[(0, n)];
        let expected = -I * cs.zeta1[1] - I * (2.0 * I * spec.phi) * cs.zeta2[1];
        assert!((offset - expected).norm() < 1e-13);
    }

    #[test]
    fn bath_kernels_match_quadrature() {
        let spec = SystemSpec {
            omega0: 1.0,
            phi: c(0.0, 0.12),
            drive: DriveSpec::Zero,
            bath: BathSpec::Discrete(vec![
                BathMode { omega: 1.1, coupling: c(0.1, 0.05) },
                BathMode { omega: 0.6, coupling: c(0.0, 0.2) },
            ]),
            beta: 1.0,
        };
        let n = 4000;
        let t = 10.0;
        let grid = linspace(t, n);
        let h = t / n as f64;
        let cs = propagate(&spec, &grid).unwrap();
        for (j, mode) in spec.bath.modes().iter().enumerate() {
            let kernel = |sign: f64, a: &[Complex64]| -> Vec<Complex64> {
                (0..=n)
                    .map(|i| c(0.0, sign * mode.omega * (t - grid[i])).exp() * a[i])
                    .collect()
            };
            let m_minus = mode.coupling * simpson(h, &kernel(-1.0, &cs.alpha1));
            let m_plus = mode.coupling * simpson(h, &kernel(1.0, &cs.alpha1));
            let n_plus = mode.coupling.conj() * simpson(h, &kernel(1.0, &cs.alpha2));
            let n_minus = mode.coupling.conj() * simpson(h, &kernel(-1.0, &cs.alpha2));
            let (m, nn) = (cs.m_coef[n][j], cs.n_coef[n][j]);
            assert!((m - m_minus).norm() < 1e-7, "M_{j}: {m} vs {m_minus}");
            assert!((nn - n_plus).norm() < 1e-7, "N_{j}: {nn} vs {n_plus}");
            // the opposite phase convention is clearly excluded
            assert!((m - m_plus).norm() > 1e-3);
            assert!((nn - n_minus).norm() > 1e-3);
        }
    }

    #[test]
    fn drive_linearity() {
        let grid = linspace(6.0, 12);
        let mut spec = desk_spec();
        let a = propagate(&spec, &grid).unwrap();
        spec.drive = DriveSpec::Sinusoidal { k0: 0.15, nu: 0.95 };
        let b = propagate(&spec, &grid).unwrap();
        for i in 0..grid.len() {
            assert!((b.zeta1[i] - 3.0 * a.zeta1[i]).norm() < 1e-13);
            assert!((b.zeta2[i] - 3.0 * a.zeta2[i]).norm() < 1e-13);
            assert_eq!(a.alpha1[i], b.alpha1[i]);
            assert_eq!(a.m_coef[i], b.m_coef[i]);
            assert_eq!(a.n_coef[i], b.n_coef[i]);
        }
    }

    #[test]
    fn eta_decreases_with_beta() {
        let mut spec = desk_spec();
        spec.bath = many_modes(4);
        let cs = propagate(&spec, &linspace(8.0, 4)).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..60 {
            let beta = 0.05 * 1.3f64.powi(k);
            let e = eta(&cs, 4, beta);
            assert!(e < last || e == 0.0);
            last = e;
        }
        assert!(last < 1e-20);
        assert_eq!(eta(&cs, 4, f64::INFINITY), 0.0);
    }

    #[test]
    fn bad_grids_are_rejected() {
        let spec = SystemSpec::free(1.0);
        assert!(matches!(propagate(&spec, &[0.5, 1.0]), Err(Error::InvalidSpec(_))));
        assert!(matches!(propagate(&spec, &[0.0, 1.0, 1.0]), Err(Error::InvalidSpec(_))));
        assert!(matches!(propagate(&spec, &[]), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn csv_layout() {
        let cs = propagate(&desk_spec(), &[0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        cs.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,re_alpha1,im_alpha1,re_alpha2,im_alpha2,re_zeta1,im_zeta1,re_zeta2,im_zeta2,re_M1,im_M1,re_N1,im_N1"
        );
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 13);
        assert!(lines[1].starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
    }
}
