//! Physical scenario: a quadratic bosonic mode with two-photon term `φ`,
//! a classical drive `k(t)` and a bosonic bath, in units where `ħ = 1` and
//! frequencies are measured in units of `ω₀` (times are `τ = ω₀t`).
//!
//! The real part of `φ` only renormalizes mass and frequency, so it has to be
//! absorbed into `ω₀` before a scenario is built; validation rejects it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SpecViolation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriveSpec {
    Zero,
    /// `k(t) = k0 sin(ν t)`.
    Sinusoidal { k0: f64, nu: f64 },
    /// Piecewise-linear interpolation of complex samples; grid starts at 0.
    Tabulated { times: Vec<f64>, values: Vec<Complex64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathMode {
    pub omega: f64,
    pub coupling: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BathSpec {
    None,
    Discrete(Vec<BathMode>),
    /// Memoryless response `χ(t) = χ₀ δ(t)`.
    Memoryless { chi0: f64 },
}

impl BathSpec {
    pub fn modes(&self) -> &[BathMode] {
        match self {
            BathSpec::Discrete(m) => m,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub omega0: f64,
    pub phi: Complex64,
    pub drive: DriveSpec,
    pub bath: BathSpec,
    /// Inverse temperature `βħω₀`; `f64::INFINITY` is zero temperature.
    pub beta: f64,
}

impl SystemSpec {
    /// Isolated, undriven oscillator at zero temperature.
    pub fn free(omega0: f64) -> Self {
        SystemSpec {
            omega0,
            phi: Complex64::new(0.0, 0.0),
            drive: DriveSpec::Zero,
            bath: BathSpec::None,
            beta: f64::INFINITY,
        }
    }

    pub fn phi_im(&self) -> f64 {
        self.phi.im
    }

    pub fn phi_re(&self) -> f64 {
        self.phi.re
    }

    pub fn n_modes(&self) -> usize {
        self.bath.modes().len()
    }

    /// Bose occupation `1/(e^{βω}-1)` of a bath frequency.
    pub fn bose(&self, omega: f64) -> f64 {
        bose_occupation(self.beta, omega)
    }
}

pub fn bose_occupation(beta: f64, omega: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / (beta * omega).exp_m1()
    }
}

/// Checks every scenario invariant and returns the spec unchanged when all
/// hold, or the full list of violations.
pub fn validate_spec(spec: &SystemSpec) -> Result<SystemSpec> {
    let mut bad = Vec::new();
    if !(spec.omega0 > 0.0 && spec.omega0.is_finite()) {
        bad.push(SpecViolation::NonPositiveFrequency { what: "omega0".into(), value: spec.omega0 });
    }
    if !(spec.beta > 0.0) {
        bad.push(SpecViolation::BadTemperature { beta: spec.beta });
    }
    if spec.phi.re != 0.0 {
        bad.push(SpecViolation::NonzeroPhiReal { phi_re: spec.phi.re });
    }
    if !(spec.phi.norm() < spec.omega0 / 2.0) {
        bad.push(SpecViolation::UnstableTwoPhoton {
            phi_abs: spec.phi.norm(),
            limit: spec.omega0 / 2.0,
        });
    }
    match &spec.drive {
        DriveSpec::Zero => {}
        DriveSpec::Sinusoidal { k0, nu } => {
            if !(*k0 >= 0.0) {
                bad.push(SpecViolation::BadDrive(format!("k0 must be >= 0 (got {k0})")));
            }
            if !(*nu > 0.0) {
                bad.push(SpecViolation::NonPositiveFrequency { what: "drive.nu".into(), value: *nu });
            }
        }
        DriveSpec::Tabulated { times, values } => {
            if times.len() != values.len() {
                bad.push(SpecViolation::BadGrid(format!(
                    "{} times but {} values",
                    times.len(),
                    values.len()
                )));
            }
            if times.len() < 2 {
                bad.push(SpecViolation::BadGrid("tabulated drive needs at least two samples".into()));
            } else if times[0] != 0.0 {
                bad.push(SpecViolation::BadGrid(format!("grid must start at 0 (got {})", times[0])));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                bad.push(SpecViolation::BadGrid("grid must be strictly increasing".into()));
            }
        }
    }
    match &spec.bath {
        BathSpec::None => {}
        BathSpec::Discrete(modes) => {
            for (j, m) in modes.iter().enumerate() {
                if !(m.omega > 0.0) {
                    bad.push(SpecViolation::NonPositiveFrequency {
                        what: format!("bath.omega[{j}]"),
                        value: m.omega,
                    });
                }
            }
        }
        BathSpec::Memoryless { chi0 } => {
            if !(*chi0 >= 0.0) {
                bad.push(SpecViolation::NegativeDamping { chi0: *chi0 });
            }
        }
    }
    if bad.is_empty() {
        Ok(spec.clone())
    } else {
        Err(Error::InvalidSpec(bad))
    }
}

/// Drive amplitude `k(t)`.
pub fn drive_eval(drive: &DriveSpec, t: f64) -> Result<Complex64> {
    match drive {
        DriveSpec::Zero => Ok(Complex64::new(0.0, 0.0)),
        DriveSpec::Sinusoidal { k0, nu } => Ok(Complex64::new(k0 * (nu * t).sin(), 0.0)),
        DriveSpec::Tabulated { times, values } => {
            let (start, end) = (times[0], times[times.len() - 1]);
            if !(t >= start && t <= end) {
                return Err(Error::OutOfRange { t, start, end });
            }
            let i = match times.binary_search_by(|x| x.total_cmp(&t)) {
                Ok(i) => return Ok(values[i]),
                Err(i) => i - 1,
            };
            let w = (t - times[i]) / (times[i + 1] - times[i]);
            Ok(values[i] * (1.0 - w) + values[i + 1] * w)
        }
    }
}

/// One-sided Laplace transform `χ̃(s)` of the bath response function.
///
/// A memoryless bath puts its δ at the lower integration limit, so only half
/// of it is picked up: `χ̃(s) = χ₀/2`.
pub fn susceptibility_laplace(bath: &BathSpec, s: Complex64) -> Result<Complex64> {
    match bath {
        BathSpec::None => Ok(Complex64::new(0.0, 0.0)),
        BathSpec::Memoryless { chi0 } => Ok(Complex64::new(chi0 / 2.0, 0.0)),
        BathSpec::Discrete(modes) => {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in modes {
                let den = s + Complex64::new(0.0, m.omega);
                if den == Complex64::new(0.0, 0.0) {
                    return Err(Error::PoleHit { omega: m.omega });
                }
                acc += m.coupling.norm_sqr() / den;
            }
            Ok(acc)
        }
    }
}
