use std::fmt;

use thiserror::Error;

/// A single violated scenario invariant, reported by [`crate::model::validate_spec`].
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    NonPositiveFrequency { what: String, value: f64 },
    UnstableTwoPhoton { phi_abs: f64, limit: f64 },
    NonzeroPhiReal { phi_re: f64 },
    BadTemperature { beta: f64 },
    BadDrive(String),
    BadGrid(String),
    NegativeDamping { chi0: f64 },
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecViolation::NonPositiveFrequency { what, value } => {
                write!(f, "{what} must be > 0 (got {value})")
            }
            SpecViolation::UnstableTwoPhoton { phi_abs, limit } => {
                write!(f, "|phi| = {phi_abs} must be < omega0/2 = {limit}")
            }
            SpecViolation::NonzeroPhiReal { phi_re } => write!(
                f,
                "Re(phi) = {phi_re} must be 0; absorb it into renormalized mass and frequency first"
            ),
            SpecViolation::BadTemperature { beta } => {
                write!(f, "beta must be > 0 or +inf (got {beta})")
            }
            SpecViolation::BadDrive(msg) => write!(f, "drive: {msg}"),
            SpecViolation::BadGrid(msg) => write!(f, "grid: {msg}"),
            SpecViolation::NegativeDamping { chi0 } => write!(f, "chi0 must be >= 0 (got {chi0})"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", join(.0))]
    InvalidSpec(Vec<SpecViolation>),
    #[error("time {t} is outside the tabulated drive range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("laplace variable hits the bath pole at s = -i*{omega}")]
    PoleHit { omega: f64 },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("commutator defect {defect:e} at t = {t} exceeds {tol:e}")]
    StepSizeTooCoarse { t: f64, defect: f64, tol: f64 },
    #[error("series order {order} exceeds the ceiling {ceiling}")]
    OrderTooLarge { order: usize, ceiling: usize },
    #[error("rho[{n}][{m}] did not converge within s_max = {s_max} (last term {last:e})")]
    TruncationNotConverged { n: usize, m: usize, s_max: usize, last: f64 },
    #[error("alternating series for n = {n} did not converge within s_max = {s_max}")]
    SeriesNotConverged { n: usize, s_max: usize },
    #[error("drive frequency {nu} is resonant with omega0 = {omega0}")]
    ResonantDrive { nu: f64, omega0: f64 },
    #[error("Fock space dimension {dim} exceeds the ceiling {ceiling}")]
    DimensionCeiling { dim: usize, ceiling: usize },
    #[error("bath mode {mode}: thermal tail {tail:e} beyond cutoff {cutoff} exceeds {tol:e}")]
    CutoffTooSmallForTemperature { mode: usize, cutoff: usize, tail: f64, tol: f64 },
    #[error("step halving did not converge: change {change:e} after {halvings} halvings")]
    NoConvergenceInStepHalving { change: f64, halvings: usize },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn join(v: &[SpecViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
