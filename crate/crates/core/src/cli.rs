//! Scenario runner behind the `quadbath` binary.
//!
//! A scenario is a TOML file:
//!
//! ```toml
//! [system]
//! omega0 = 1.0
//! phi_im = 0.05          # two-photon coupling φ = i·phi_im
//! beta = 1.0             # βħω₀, `inf` for zero temperature
//!
//! [drive]
//! kind = "sinusoidal"    # "zero" | "sinusoidal" | "tabulated"
//! k0 = 0.05
//! nu = 0.95
//! # tabulated: times = [...], values = [[re, im], ...]
//!
//! [bath]
//! kind = "discrete"      # "none" | "discrete" | "memoryless"
//! modes = [{ omega = 1.1, coupling = [0.1, 0.0] }]
//! # memoryless: chi0 = 0.1
//!
//! [initial]
//! gamma = [0.5, 0.0]
//!
//! [run]
//! times = [0.0, 1.0, 2.0]   # or t_end = 10.0 and steps = 100
//! n_cut = 8                 # optional; tail rule when absent
//! s_max = 40                # optional
//! order_ceiling = 64
//!
//! [oracle]                  # oracle-compare only
//! n_sys = 14
//! n_bath = [10]
//! bound = 1e-4
//!
//! [fig]                     # fig1 | fig2 | fig3 only, all optional
//! eta_max = 3.0
//! points = 301
//! ```
//!
//! `--override section.key=value` edits the parsed table before validation;
//! the value is read as a TOML value (`--override system.beta=inf`).
//!
//! Exit codes: 0 success, 1 comparison failure, 2 configuration error,
//! 3 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Deserialize;

use crate::closedform::{
    eta_sweep, hermite_s_max, large_time_limits, pn_hermite, pn_laguerre_all, tau_sweep, Branch, PnResult,
};
use crate::coefficients::{big_z, eta, propagate, zeta_combined};
use crate::error::{Error, Result};
use crate::genfunc::{rho_from_coefficients, ReducedDensityMatrix, RhoOptions, DEFAULT_ORDER_CEILING};
use crate::model::{validate_spec, BathMode, BathSpec, DriveSpec, SystemSpec};
use crate::oracle::{self, CutoffPlan, DEFAULT_DIM_CEILING, DEFAULT_THERMAL_TAIL};
use crate::report::{fmt_f64, json_f64};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPARE_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "quadbath", version, about = "Reduced density matrices of a driven quadratic mode in a bosonic bath")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// `section.key=value`, applied after the file is read. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Coefficient functions on the run grid (coeffs.csv).
    Coeffs,
    /// Closed-form excitation probabilities (pn.csv).
    Pn,
    /// Full density matrices (rho.json).
    Rho,
    /// Generating function against the truncated-Fock reference (oracle_report.json).
    OracleCompare,
    /// P_0..P_3 against η at k₀ = 0.02, χ₀ = 0.1, ν = 0.99 (fig1.csv).
    Fig1,
    /// P_0..P_4 against η at k₀ = 0.2, χ₀ = 0.1, ν = 0.99 (fig2.csv).
    Fig2,
    /// P_0..P_4 against τ at k₀ = 1, φ_I = 0.1, ν = 0.9 (fig3.csv).
    Fig3,
}

impl Command {
    fn is_figure(self) -> bool {
        matches!(self, Command::Fig1 | Command::Fig2 | Command::Fig3)
    }
}

/// Scenario file contents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub bath: BathSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    pub oracle: Option<OracleSection>,
    pub fig: Option<FigSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "one")]
    pub omega0: f64,
    #[serde(default)]
    pub phi_im: f64,
    #[serde(default = "infinity")]
    pub beta: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveSection {
    #[default]
    Zero,
    Sinusoidal { k0: f64, nu: f64 },
    Tabulated { times: Vec<f64>, values: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BathSection {
    #[default]
    None,
    Discrete { modes: Vec<ModeEntry> },
    Memoryless { chi0: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub omega: f64,
    pub coupling: [f64; 2],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub gamma: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub times: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub steps: Option<usize>,
    pub n_cut: Option<usize>,
    pub s_max: Option<usize>,
    #[serde(default = "default_ceiling")]
    pub order_ceiling: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { times: None, t_end: None, steps: None, n_cut: None, s_max: None, order_ceiling: DEFAULT_ORDER_CEILING }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n_sys: usize,
    pub n_bath: Vec<usize>,
    #[serde(default = "default_bound")]
    pub bound: f64,
    /// Largest Fock index compared; defaults to the smaller of both cutoffs.
    pub n_compare: Option<usize>,
    pub dt: Option<f64>,
    #[serde(default = "default_tail")]
    pub thermal_tail: f64,
    #[serde(default = "default_dim_ceiling")]
    pub dim_ceiling: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigSection {
    pub eta_max: Option<f64>,
    pub tau_max: Option<f64>,
    pub points: Option<usize>,
}

fn one() -> f64 {
    1.0
}
fn infinity() -> f64 {
    f64::INFINITY
}
fn default_ceiling() -> usize {
    DEFAULT_ORDER_CEILING
}
fn default_bound() -> f64 {
    1e-4
}
fn default_tail() -> f64 {
    DEFAULT_THERMAL_TAIL
}
fn default_dim_ceiling() -> usize {
    DEFAULT_DIM_CEILING
}

impl RunConfig {
    pub fn spec(&self) -> Result<SystemSpec> {
        let drive = match &self.drive {
            DriveSection::Zero => DriveSpec::Zero,
            DriveSection::Sinusoidal { k0, nu } => DriveSpec::Sinusoidal { k0: *k0, nu: *nu },
            DriveSection::Tabulated { times, values } => DriveSpec::Tabulated {
                times: times.clone(),
                values: values.iter().map(|v| Complex64::new(v[0], v[1])).collect(),
            },
        };
        let bath = match &self.bath {
            BathSection::None => BathSpec::None,
            BathSection::Discrete { modes } => BathSpec::Discrete(
                modes
                    .iter()
                    .map(|m| BathMode { omega: m.omega, coupling: Complex64::new(m.coupling[0], m.coupling[1]) })
                    .collect(),
            ),
            BathSection::Memoryless { chi0 } => BathSpec::Memoryless { chi0: *chi0 },
        };
        validate_spec(&SystemSpec {
            omega0: self.system.omega0,
            phi: Complex64::new(0.0, self.system.phi_im),
            drive,
            bath,
            beta: self.system.beta,
        })
    }

    pub fn gamma(&self) -> Complex64 {
        Complex64::new(self.initial.gamma[0], self.initial.gamma[1])
    }

    /// Requested output times, non-decreasing and non-negative.
    pub fn times(&self) -> Result<Vec<f64>> {
        let r = &self.run;
        let times = match (&r.times, r.t_end, r.steps) {
            (Some(t), None, None) => t.clone(),
            (None, Some(t_end), Some(steps)) if steps > 0 && t_end > 0.0 => {
                (0..=steps).map(|i| t_end * i as f64 / steps as f64).collect()
            }
            (None, None, None) => return Err(Error::Config("run: give `times` or `t_end` and `steps`".into())),
            _ => return Err(Error::Config("run: `times` excludes `t_end`/`steps`; both of those need positive values".into())),
        };
        if times.is_empty() {
            return Err(Error::Config("run.times is empty".into()));
        }
        if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("run.times must be finite, non-negative and non-decreasing".into()));
        }
        Ok(times)
    }

    pub fn rho_options(&self) -> RhoOptions {
        RhoOptions { n_cut: self.run.n_cut, s_max: self.run.s_max, order_ceiling: self.run.order_ceiling }
    }
}

/// Reads the scenario, applies overrides and deserializes with the failing
/// field path in the error.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{entry}` is not key=value")))?;
    let key = key.trim();
    let doc: toml::Table = format!("v = {}", raw.trim())
        .parse()
        .or_else(|_| format!("v = {}", toml::Value::String(raw.trim().to_string())).parse())
        .map_err(|e: toml::de::Error| Error::Config(format!("override `{entry}`: {e}")))?;
    let value = doc["v"].clone();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::StepSizeTooCoarse { .. }
        | Error::OrderTooLarge { .. }
        | Error::TruncationNotConverged { .. }
        | Error::SeriesNotConverged { .. }
        | Error::NoConvergenceInStepHalving { .. }
        | Error::PoleHit { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(path) => Some(load_config(path, &cli.overrides)?),
        None if cli.command.is_figure() => {
            if cli.overrides.is_empty() {
                None
            } else {
                Some(parse_config("[system]\n", &cli.overrides)?)
            }
        }
        None => return Err(Error::Config("--config is required for this command".into())),
    };
    fs::create_dir_all(&cli.out).map_err(|e| Error::Config(format!("{}: {e}", cli.out.display())))?;
    let (name, body, code) = match cli.command {
        Command::Coeffs => ("coeffs.csv", cmd_coeffs(config.as_ref().unwrap())?, EXIT_OK),
        Command::Pn => ("pn.csv", cmd_pn(config.as_ref().unwrap())?, EXIT_OK),
        Command::Rho => ("rho.json", cmd_rho(config.as_ref().unwrap())?, EXIT_OK),
        Command::OracleCompare => {
            let report = cmd_oracle_compare(config.as_ref().unwrap())?;
            let code = if report.pass { EXIT_OK } else { EXIT_COMPARE_FAILED };
            ("oracle_report.json", report.to_json(), code)
        }
        Command::Fig1 => ("fig1.csv", cmd_fig(1, config.as_ref().and_then(|c| c.fig.as_ref()))?, EXIT_OK),
        Command::Fig2 => ("fig2.csv", cmd_fig(2, config.as_ref().and_then(|c| c.fig.as_ref()))?, EXIT_OK),
        Command::Fig3 => ("fig3.csv", cmd_fig(3, config.as_ref().and_then(|c| c.fig.as_ref()))?, EXIT_OK),
    };
    let path = cli.out.join(name);
    fs::File::create(&path).and_then(|mut f| f.write_all(body.as_bytes()))?;
    println!("{}", path.display());
    if code == EXIT_COMPARE_FAILED {
        eprintln!("oracle comparison exceeded the bound; see {}", path.display());
    }
    Ok(code)
}

/// Strictly increasing propagation grid from 0 covering `times`, and the
/// grid index of each requested time.
fn propagation_grid(times: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut grid = vec![0.0];
    let mut index = Vec::with_capacity(times.len());
    for &t in times {
        if t > *grid.last().unwrap() {
            grid.push(t);
        }
        index.push(grid.len() - 1);
    }
    (grid, index)
}

pub fn cmd_coeffs(config: &RunConfig) -> Result<String> {
    let spec = config.spec()?;
    let (grid, _) = propagation_grid(&config.times()?);
    let cs = propagate(&spec, &grid)?;
    let mut buf = Vec::new();
    cs.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV is ASCII"))
}

pub fn cmd_pn(config: &RunConfig) -> Result<String> {
    let spec = config.spec()?;
    let gamma = config.gamma();
    let times = config.times()?;
    let (grid, index) = propagation_grid(&times);
    let laguerre = spec.phi.im == 0.0;
    let hermite = !laguerre && matches!(spec.bath, BathSpec::None) && gamma == Complex64::new(0.0, 0.0);
    if !laguerre && !hermite {
        return Err(Error::Config(
            "pn needs phi = 0, or no bath with gamma = 0; use `rho` for the general case".into(),
        ));
    }
    let cs = propagate(&spec, &grid)?;
    let mut rows: Vec<(f64, Vec<PnResult>)> = Vec::with_capacity(times.len());
    for (&t, &i) in times.iter().zip(&index) {
        let row = if laguerre {
            let z = big_z(&cs, i, gamma);
            let e = eta(&cs, i, spec.beta);
            let n_max = config.run.n_cut.unwrap_or_else(|| crate::closedform::auto_n_cut(z.norm_sqr(), e));
            pn_laguerre_all(z, e, n_max)
        } else {
            let zeta = zeta_combined(&cs, i, spec.phi);
            let n_max = config.run.n_cut.unwrap_or(4);
            let s_max = config.run.s_max.unwrap_or_else(|| hermite_s_max(zeta));
            (0..=n_max)
                .map(|n| pn_hermite(cs.alpha1[i], cs.alpha2[i].re, spec.phi.im, zeta, n, s_max))
                .collect::<Result<Vec<_>>>()?
        };
        rows.push((t, row));
    }
    let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut out = String::from("t,branch");
    for n in 0..width {
        write!(out, ",P{n}").unwrap();
    }
    out.push('\n');
    for (t, row) in rows {
        let branch = row.first().map(|r| r.branch).unwrap_or(Branch::Laguerre);
        write!(out, "{},{}", fmt_f64(t), branch).unwrap();
        for n in 0..width {
            out.push(',');
            out.push_str(&row.get(n).map(|r| fmt_f64(r.p)).unwrap_or_default());
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_rho(config: &RunConfig) -> Result<String> {
    let mats = rho_series(config)?;
    let mut out = String::from("{\"matrices\":[");
    for (k, m) in mats.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(&rho_json(m));
    }
    out.push_str("]}\n");
    Ok(out)
}

fn rho_series(config: &RunConfig) -> Result<Vec<ReducedDensityMatrix>> {
    let spec = config.spec()?;
    let times = config.times()?;
    let (grid, index) = propagation_grid(&times);
    let cs = propagate(&spec, &grid)?;
    let opts = config.rho_options();
    times
        .iter()
        .zip(&index)
        .map(|(&t, &i)| {
            let mut m = rho_from_coefficients(&cs, i, config.gamma(), &opts)?;
            m.t = t;
            Ok(m)
        })
        .collect()
}

fn rho_json(m: &ReducedDensityMatrix) -> String {
    let mut s = format!(
        "{{\"t\":{},\"n_cut\":{},\"trace_deficit\":{},\"rho\":[",
        json_f64(m.t),
        m.n_cut,
        json_f64(m.trace_deficit)
    );
    let dim = m.dim();
    for n in 0..dim {
        for k in 0..dim {
            if n + k > 0 {
                s.push(',');
            }
            let z = m.get(n, k);
            write!(s, "[{},{}]", json_f64(z.re), json_f64(z.im)).unwrap();
        }
    }
    s.push_str("]}");
    s
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub times: Vec<f64>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub bound: f64,
    pub n_compare: usize,
    pub dim: usize,
    pub dt: f64,
    pub halvings: usize,
    pub step_change: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn to_json(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| json_f64(*x)).collect::<Vec<_>>().join(",");
        format!(
            "{{\"pass\":{},\"max_deviation\":{},\"bound\":{},\"n_compare\":{},\"dim\":{},\"dt\":{},\"halvings\":{},\"step_change\":{},\"times\":[{}],\"deviations\":[{}]}}\n",
            self.pass,
            json_f64(self.max_deviation),
            json_f64(self.bound),
            self.n_compare,
            self.dim,
            json_f64(self.dt),
            self.halvings,
            json_f64(self.step_change),
            list(&self.times),
            list(&self.deviations)
        )
    }
}

pub fn cmd_oracle_compare(config: &RunConfig) -> Result<OracleReport> {
    let spec = config.spec()?;
    let oc = config
        .oracle
        .as_ref()
        .ok_or_else(|| Error::Config("oracle-compare needs an [oracle] section".into()))?;
    let times = config.times()?;
    let mut plan = CutoffPlan::new(oc.n_sys, oc.n_bath.clone());
    plan.dt = oc.dt;
    plan.thermal_tail = oc.thermal_tail;
    plan.dim_ceiling = oc.dim_ceiling;
    let run = oracle::run(&spec, &plan, config.gamma(), &times)?;
    let analytic = rho_series(config)?;
    let n_cut = analytic.iter().map(|m| m.n_cut).min().unwrap_or(0);
    let n_compare = oc.n_compare.unwrap_or(n_cut.min(oc.n_sys)).min(n_cut).min(oc.n_sys);
    let deviations: Vec<f64> =
        analytic.iter().zip(&run.rhos).map(|(a, o)| oracle::compare(a, o, n_compare)).collect();
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(OracleReport {
        times,
        deviations,
        max_deviation,
        bound: oc.bound,
        n_compare,
        dim: plan.dim(),
        dt: run.dt,
        halvings: run.halvings,
        step_change: run.last_change,
        pass: max_deviation <= oc.bound,
    })
}

fn linspace(end: f64, points: usize) -> Vec<f64> {
    let n = points.max(2) - 1;
    (0..=n).map(|i| end * i as f64 / n as f64).collect()
}

/// Figure presets. Figures 1 and 2 sweep `η` at the large-time `|Z|²` of a
/// memoryless bath; figure 3 sweeps `τ = ω₀t` through the Hermite series.
pub fn cmd_fig(which: u8, fig: Option<&FigSection>) -> Result<String> {
    let fig = fig.cloned().unwrap_or_default();
    let points = fig.points.unwrap_or(301);
    if points < 2 {
        return Err(Error::Config("fig.points must be at least 2".into()));
    }
    let (label, rows) = match which {
        1 | 2 => {
            let (k0, n_max) = if which == 1 { (0.02, 3) } else { (0.2, 4) };
            let (z2, _) = large_time_limits(k0, 0.99, 1.0, 0.1, &[], f64::INFINITY);
            ("eta", eta_sweep(z2, &linspace(fig.eta_max.unwrap_or(3.0), points), n_max))
        }
        3 => ("tau", tau_sweep(1.0, 0.9, 1.0, 0.1, &linspace(fig.tau_max.unwrap_or(8.0), points), 4)?),
        _ => unreachable!("figure presets are 1..=3"),
    };
    let mut out = String::from(label);
    for n in 0..rows.first().map_or(0, |r| r.1.len()) {
        write!(out, ",P{n}").unwrap();
    }
    out.push('\n');
    for (x, ps) in rows {
        out.push_str(&fmt_f64(x));
        for p in ps {
            out.push(',');
            out.push_str(&fmt_f64(p));
        }
        out.push('\n');
    }
    Ok(out)
}
