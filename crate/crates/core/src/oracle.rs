//! Brute-force reference: the full system ⊗ bath Hamiltonian on a truncated
//! Fock space, propagated directly and partial-traced to `ρ_S(t)`.
//!
//! The initial state `|γ⟩⟨γ| ⊗ ρ_thermal` is kept as an ensemble of pure
//! states `|γ⟩ ⊗ |n_bath⟩` weighted by the thermal populations, which is
//! exactly the same density matrix. Each step applies a fourth-order Magnus
//! propagator
//!
//! ```text
//! Ω = -i h/2 (H₁ + H₂) - √3/12 h² [H₂, H₁],   H_i = H(t + (1/2 ∓ √3/6) h)
//! ```
//!
//! through a Taylor series for `e^Ω ψ`, so no dense exponential is formed.
//! Steps are halved until the reduced matrices stop changing.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfunc::ReducedDensityMatrix;
use crate::linalg::{expm_apply, CMatrix, SparseFamily, SparseMatrix};
use crate::model::{drive_eval, validate_spec, BathSpec, SystemSpec};
use crate::specfun::log_factorial;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub const DEFAULT_DIM_CEILING: usize = 4096;
pub const DEFAULT_THERMAL_TAIL: f64 = 1e-10;
pub const STEP_TOLERANCE: f64 = 1e-8;
pub const MAX_HALVINGS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffPlan {
    pub n_sys: usize,
    pub n_bath: Vec<usize>,
    /// Initial step; derived from the Hamiltonian norm when `None`.
    pub dt: Option<f64>,
    pub dim_ceiling: usize,
    /// Largest thermal population discarded by the bath truncation.
    pub thermal_tail: f64,
}

impl CutoffPlan {
    pub fn new(n_sys: usize, n_bath: Vec<usize>) -> Self {
        CutoffPlan {
            n_sys,
            n_bath,
            dt: None,
            dim_ceiling: DEFAULT_DIM_CEILING,
            thermal_tail: DEFAULT_THERMAL_TAIL,
        }
    }

    pub fn bath_dim(&self) -> usize {
        self.n_bath.iter().map(|n| n + 1).product()
    }

    pub fn dim(&self) -> usize {
        (self.n_sys + 1) * self.bath_dim()
    }

    fn check(&self, spec: &SystemSpec) -> Result<()> {
        if !matches!(spec.bath, BathSpec::Discrete(_) | BathSpec::None) {
            return Err(Error::Unsupported("the oracle needs a discrete (or empty) bath"));
        }
        if self.n_bath.len() != spec.n_modes() {
            return Err(Error::Config(format!(
                "cutoff plan lists {} bath cutoffs for {} modes",
                self.n_bath.len(),
                spec.n_modes()
            )));
        }
        if self.n_sys < 1 {
            return Err(Error::Config("n_sys must be at least 1".into()));
        }
        let dim = self.dim();
        if dim > self.dim_ceiling {
            return Err(Error::DimensionCeiling { dim, ceiling: self.dim_ceiling });
        }
        Ok(())
    }

    /// Mixed-radix strides, system slowest.
    fn strides(&self) -> (usize, Vec<usize>) {
        let mut strides = vec![0; self.n_bath.len()];
        let mut acc = 1;
        for j in (0..self.n_bath.len()).rev() {
            strides[j] = acc;
            acc *= self.n_bath[j] + 1;
        }
        (acc, strides)
    }
}

/// Total state as a weighted ensemble of pure states (columns of `vectors`).
#[derive(Debug, Clone)]
pub struct FullState {
    pub weights: Vec<f64>,
    pub vectors: CMatrix,
    pub n_sys: usize,
    pub bath_dim: usize,
}

impl FullState {
    /// Dense `ρ_total = Σ_k w_k |ψ_k⟩⟨ψ_k|`.
    pub fn rho_total(&self) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, w) in self.weights.iter().enumerate() {
            scaled.column_mut(k).scale_mut(*w);
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn trace(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * self.vectors.column(k).norm_squared())
            .sum()
    }
}

/// Time-independent pieces of `H(t) = H₀ + k(t) a† + k̄(t) a`.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub h0: SparseMatrix,
    pub a_dag: SparseMatrix,
    pub a: SparseMatrix,
}

impl HamiltonianParts {
    pub fn at(&self, k: Complex64) -> SparseMatrix {
        self.h0.add(&self.a_dag.scale(k)).add(&self.a.scale(k.conj()))
    }
}

pub fn hamiltonian_parts(spec: &SystemSpec, plan: &CutoffPlan) -> Result<HamiltonianParts> {
    let spec = validate_spec(spec)?;
    plan.check(&spec)?;
    let dim = plan.dim();
    let (bd, strides) = plan.strides();
    let modes = spec.bath.modes();
    let sq = |n: usize| (n as f64).sqrt();
    let digit = |b: usize, j: usize| (b / strides[j]) % (plan.n_bath[j] + 1);

    let mut h0 = Vec::new();
    let mut ad = Vec::new();
    let mut an = Vec::new();
    for n in 0..=plan.n_sys {
        for b in 0..bd {
            let i = n * bd + b;
            let mut diag = spec.omega0 * (n as f64 + 0.5);
            for (j, m) in modes.iter().enumerate() {
                diag += m.omega * digit(b, j) as f64;
            }
            h0.push((i, i, Complex64::new(diag, 0.0)));
            if n + 2 <= plan.n_sys {
                // φ a†² and φ̄ a²
                let v = sq(n + 1) * sq(n + 2);
                let up = (n + 2) * bd + b;
                h0.push((up, i, spec.phi * v));
                h0.push((i, up, spec.phi.conj() * v));
            }
            if n < plan.n_sys {
                let up = (n + 1) * bd + b;
                ad.push((up, i, Complex64::new(sq(n + 1), 0.0)));
                an.push((i, up, Complex64::new(sq(n + 1), 0.0)));
                // f_j a† b_j and f̄_j b_j† a
                for (j, m) in modes.iter().enumerate() {
                    let nb = digit(b, j);
                    if nb >= 1 {
                        let target = up - strides[j];
                        let v = sq(n + 1) * sq(nb);
                        h0.push((target, i, m.coupling * v));
                        h0.push((i, target, m.coupling.conj() * v));
                    }
                }
            }
        }
    }
    Ok(HamiltonianParts {
        h0: SparseMatrix::from_triplets(dim, h0),
        a_dag: SparseMatrix::from_triplets(dim, ad),
        a: SparseMatrix::from_triplets(dim, an),
    })
}

/// Full Hamiltonian at time `t` on the truncated space.
pub fn build_hamiltonian(spec: &SystemSpec, plan: &CutoffPlan, t: f64) -> Result<SparseMatrix> {
    let parts = hamiltonian_parts(spec, plan)?;
    Ok(parts.at(drive_eval(&spec.drive, t)?))
}

/// Diagonal of the thermal bath factor over the bath basis.
pub fn thermal_bath_state(spec: &SystemSpec, plan: &CutoffPlan) -> Result<Vec<f64>> {
    plan.check(spec)?;
    let modes = spec.bath.modes();
    let mut per_mode = Vec::with_capacity(modes.len());
    for (j, m) in modes.iter().enumerate() {
        let nb = plan.n_bath[j];
        if spec.beta.is_infinite() {
            let mut p = vec![0.0; nb + 1];
            p[0] = 1.0;
            per_mode.push(p);
            continue;
        }
        let x = spec.beta * m.omega;
        let tail = (-x * (nb + 1) as f64).exp();
        if tail > plan.thermal_tail {
            return Err(Error::CutoffTooSmallForTemperature {
                mode: j,
                cutoff: nb,
                tail,
                tol: plan.thermal_tail,
            });
        }
        let raw: Vec<f64> = (0..=nb).map(|n| (-x * n as f64).exp()).collect();
        let z: f64 = raw.iter().sum();
        per_mode.push(raw.into_iter().map(|p| p / z).collect());
    }
    let (bd, strides) = plan.strides();
    Ok((0..bd)
        .map(|b| {
            per_mode
                .iter()
                .enumerate()
                .map(|(j, p)| p[(b / strides[j]) % (plan.n_bath[j] + 1)])
                .product()
        })
        .collect())
}

/// `|γ⟩` truncated at `n_sys` and renormalized.
pub fn truncated_coherent(gamma: Complex64, n_sys: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..=n_sys)
        .map(|n| {
            if n == 0 {
                ONE
            } else {
                gamma.powu(n as u32) * (-0.5 * log_factorial(n)).exp()
            }
        })
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

pub fn initial_state(spec: &SystemSpec, plan: &CutoffPlan, gamma: Complex64) -> Result<FullState> {
    let bath = thermal_bath_state(spec, plan)?;
    let sys = truncated_coherent(gamma, plan.n_sys);
    let bd = plan.bath_dim();
    let members: Vec<(usize, f64)> = bath.iter().copied().enumerate().filter(|(_, w)| *w > 0.0).collect();
    let mut vectors = CMatrix::zeros(plan.dim(), members.len());
    for (k, &(b, _)) in members.iter().enumerate() {
        for (n, &amp) in sys.iter().enumerate() {
            vectors[(n * bd + b, k)] = amp;
        }
    }
    Ok(FullState {
        weights: members.iter().map(|m| m.1).collect(),
        vectors,
        n_sys: plan.n_sys,
        bath_dim: bd,
    })
}

struct Stepper {
    family: SparseFamily,
    drive: crate::model::DriveSpec,
}

impl Stepper {
    fn new(parts: &HamiltonianParts, drive: &crate::model::DriveSpec) -> Self {
        let ca = parts.a_dag.commutator(&parts.h0);
        let cb = parts.a.commutator(&parts.h0);
        let cc = parts.a_dag.commutator(&parts.a);
        let family = SparseFamily::new(&[&parts.h0, &parts.a_dag, &parts.a, &ca, &cb, &cc]);
        Stepper { family, drive: drive.clone() }
    }

    fn step(&self, psi: &CMatrix, t: f64, h: f64) -> Result<CMatrix> {
        let r3 = 3f64.sqrt();
        let k1 = drive_eval(&self.drive, t + h * (0.5 - r3 / 6.0))?;
        let k2 = drive_eval(&self.drive, t + h * (0.5 + r3 / 6.0))?;
        let d = k2 - k1;
        let mi = Complex64::new(0.0, -1.0);
        let c2 = Complex64::new(-r3 / 12.0 * h * h, 0.0);
        let coeffs = [
            mi * h,
            mi * (h / 2.0) * (k1 + k2),
            mi * (h / 2.0) * (k1 + k2).conj(),
            c2 * d,
            c2 * d.conj(),
            c2 * (d * k1.conj() - d.conj() * k1),
        ];
        let (omega, bound) = self.family.combine(&coeffs);
        Ok(expm_apply(&omega, bound, psi))
    }
}

/// Propagates `state` from `t0` to `t1` with steps no longer than `dt`.
pub fn evolve(spec: &SystemSpec, plan: &CutoffPlan, state: &FullState, t0: f64, t1: f64, dt: f64) -> Result<FullState> {
    let parts = hamiltonian_parts(spec, plan)?;
    let stepper = Stepper::new(&parts, &spec.drive);
    let mut out = state.clone();
    out.vectors = advance(&stepper, &state.vectors, t0, t1, dt)?;
    Ok(out)
}

fn advance(stepper: &Stepper, psi: &CMatrix, t0: f64, t1: f64, dt: f64) -> Result<CMatrix> {
    if t1 <= t0 {
        return Ok(psi.clone());
    }
    let n = ((t1 - t0) / dt).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut cur = psi.clone();
    for i in 0..n {
        cur = stepper.step(&cur, t0 + i as f64 * h, h)?;
    }
    Ok(cur)
}

/// Partial trace over the bath.
pub fn reduce(state: &FullState, t: f64) -> ReducedDensityMatrix {
    let ns = state.n_sys + 1;
    let bd = state.bath_dim;
    let mut rho = CMatrix::zeros(ns, ns);
    for (k, &w) in state.weights.iter().enumerate() {
        let col = state.vectors.column(k);
        for n in 0..ns {
            for m in 0..ns {
                let mut acc = ZERO;
                for b in 0..bd {
                    acc += col[n * bd + b] * col[m * bd + b].conj();
                }
                rho[(n, m)] += acc * w;
            }
        }
    }
    let trace: f64 = (0..ns).map(|n| rho[(n, n)].re).sum();
    ReducedDensityMatrix { t, n_cut: state.n_sys, rho, trace_deficit: 1.0 - trace, truncation_order: 0 }
}

/// Partial trace of a dense `ρ_total` with `n_sys + 1` system levels.
pub fn reduce_dense(rho_total: &CMatrix, n_sys: usize) -> CMatrix {
    let ns = n_sys + 1;
    let bd = rho_total.nrows() / ns;
    CMatrix::from_fn(ns, ns, |n, m| (0..bd).map(|b| rho_total[(n * bd + b, m * bd + b)]).sum())
}

/// `max_{n,m ≤ n_max} |a_nm - b_nm|`.
pub fn compare(analytic: &ReducedDensityMatrix, oracle: &ReducedDensityMatrix, n_max: usize) -> f64 {
    assert!(n_max <= analytic.n_cut && n_max <= oracle.n_cut, "n_max exceeds a cutoff");
    let mut worst: f64 = 0.0;
    for n in 0..=n_max {
        for m in 0..=n_max {
            worst = worst.max((analytic.get(n, m) - oracle.get(n, m)).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRun {
    #[serde(skip)]
    pub rhos: Vec<ReducedDensityMatrix>,
    pub dt: f64,
    pub halvings: usize,
    pub last_change: f64,
}

fn run_fixed(stepper: &Stepper, init: &FullState, times: &[f64], dt: f64) -> Result<Vec<ReducedDensityMatrix>> {
    let mut psi = init.vectors.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut state = init.clone();
    for &target in times {
        psi = advance(stepper, &psi, t, target, dt)?;
        t = target;
        state.vectors = psi.clone();
        out.push(reduce(&state, t));
    }
    Ok(out)
}

/// Reduced matrices at `times` (non-decreasing, from 0) for the initial state
/// `|γ⟩⟨γ| ⊗ ρ_thermal`, halving the step until every element changes by
/// less than `1e-8`.
pub fn run(spec: &SystemSpec, plan: &CutoffPlan, gamma: Complex64, times: &[f64]) -> Result<OracleRun> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Config("oracle times must be non-negative and non-decreasing".into()));
    }
    let parts = hamiltonian_parts(spec, plan)?;
    let init = initial_state(spec, plan, gamma)?;
    let stepper = Stepper::new(&parts, &spec.drive);
    let kmax = times
        .iter()
        .map(|&t| drive_eval(&spec.drive, t).map(|k| k.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let hnorm = parts.h0.norm1() + 2.0 * kmax.max(1.0) * parts.a_dag.norm1();
    let mut dt = plan.dt.unwrap_or(1.0 / hnorm);
    let mut prev = run_fixed(&stepper, &init, times, dt)?;
    let mut change = f64::INFINITY;
    for halvings in 1..=MAX_HALVINGS {
        dt /= 2.0;
        let next = run_fixed(&stepper, &init, times, dt)?;
        change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| compare(a, b, a.n_cut))
            .fold(0.0, f64::max);
        prev = next;
        if change < STEP_TOLERANCE {
            return Ok(OracleRun { rhos: prev, dt, halvings, last_change: change });
        }
    }
    Err(Error::NoConvergenceInStepHalving { change, halvings: MAX_HALVINGS })
}
