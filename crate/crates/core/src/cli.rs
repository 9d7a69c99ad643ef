//! Batch front-end: configuration parsing and the `simulate`, `sweep`,
//! `fiber` and `trajectories` commands.
//!
//! Every command returns the text of its output file. The resolved
//! configuration is embedded in each output so a run can be repeated from
//! the output alone.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{fiber_compare, perturbative_fidelity, success_probability_ideal, AnalysisError, FiberReport};
use crate::dynamics::{derive_seed, DynamicsError, IntegratorConfig, TrajectorySummary};
use crate::model::{Advisory, Channel, FiberMode, FiberParams, ModelError, SystemParams};
use crate::protocol::{
    emitted_pair_postselect, ideal_probe_schedule, run_schedule, scheme_schedule, OutcomeTally,
    ProtocolError, ProtocolOptions, RunMode, Scheme, SchemeKind, ScheduleRun,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("`{key}`: {message}")]
    Semantic { key: String, message: String },
}

impl ConfigError {
    fn semantic(key: &str, message: impl fmt::Display) -> Self {
        ConfigError::Semantic {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numerical instability: {0}")]
    Instability(String),
    #[error(transparent)]
    Run(ProtocolError),
    #[error("failed to encode output: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Encode(_) => 3,
            CliError::Instability(_) => 4,
            CliError::Run(_) => 1,
        }
    }
}

fn unstable(e: &DynamicsError) -> bool {
    matches!(e, DynamicsError::Instability { .. } | DynamicsError::StepLimit { .. })
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        let hit = match &e {
            ProtocolError::Dynamics(d) => unstable(d),
            ProtocolError::Analysis(a) => matches!(a.as_ref(), AnalysisError::Dynamics(d) if unstable(d)),
            _ => false,
        };
        if hit {
            CliError::Instability(e.to_string())
        } else {
            CliError::Run(e)
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        ProtocolError::from(e).into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    TwoPhoton,
    TwoAtom,
    AtomPhoton,
    /// Photons only, ideal photon counting after the hopping step.
    IdealProbe,
}

impl Experiment {
    pub fn scheme_kind(self) -> Option<SchemeKind> {
        match self {
            Experiment::TwoPhoton => Some(SchemeKind::TwoPhoton),
            Experiment::TwoAtom => Some(SchemeKind::TwoAtom),
            Experiment::AtomPhoton => Some(SchemeKind::AtomPhoton),
            Experiment::IdealProbe => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Experiment::TwoPhoton => "two_photon",
            Experiment::TwoAtom => "two_atom",
            Experiment::AtomPhoton => "atom_photon",
            Experiment::IdealProbe => "ideal_probe",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Deterministic,
    Trajectories,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeConfig {
    pub kind: ModeKind,
    /// Ensemble size in trajectory mode.
    pub n: usize,
    pub seed: u64,
    /// Keep pre-jump states and report the emitted-pair selection.
    pub emitted_pair: bool,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            kind: ModeKind::Deterministic,
            n: 1000,
            seed: 0,
            emitted_pair: false,
        }
    }
}

/// Either an explicit mode list or a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default = "default_fiber_count")]
    pub count: usize,
    /// Detuning of mode 0; half a spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<FiberMode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default = "default_fiber_samples")]
    pub samples: usize,
}

fn default_fiber_count() -> usize {
    5
}

fn default_fiber_samples() -> usize {
    4000
}

impl FiberConfig {
    pub fn params(&self) -> Result<FiberParams, ConfigError> {
        if let Some(modes) = &self.modes {
            if self.coupling.is_some() || self.spacing.is_some() {
                return Err(ConfigError::semantic("fiber.modes", "give either `modes` or `coupling`/`spacing`, not both"));
            }
            return Ok(FiberParams { modes: modes.clone() });
        }
        let coupling = self
            .coupling
            .ok_or_else(|| ConfigError::semantic("fiber.coupling", "required without `modes`"))?;
        let spacing = self
            .spacing
            .ok_or_else(|| ConfigError::semantic("fiber.spacing", "required without `modes`"))?;
        if !(spacing > 0.0) {
            return Err(ConfigError::semantic("fiber.spacing", "must be positive"));
        }
        if self.count == 0 {
            return Err(ConfigError::semantic("fiber.count", "must be at least 1"));
        }
        let offset = self.offset.unwrap_or(0.5 * spacing);
        Ok(FiberParams::uniform_grid(self.count, coupling, spacing, offset))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    G,
    Hopping,
    Kappa,
    Gamma,
    BranchingG0,
    ProbeDetuning,
    /// `κ = x·J`.
    KappaOverHopping,
    /// `γ = x·g`.
    GammaOverG,
    /// `γ = κ = x·g/2`, i.e. `x = (γ+κ)/g`.
    LossOverG,
}

impl SweepParameter {
    pub fn apply(self, params: &mut SystemParams, opts: &mut ProtocolOptions, x: f64) {
        match self {
            SweepParameter::G => params.g = x,
            SweepParameter::Hopping => params.hopping = x,
            SweepParameter::Kappa => params.kappa = x,
            SweepParameter::Gamma => params.gamma = x,
            SweepParameter::BranchingG0 => params.branching_g0 = x,
            SweepParameter::ProbeDetuning => opts.probe_detuning = x,
            SweepParameter::KappaOverHopping => params.kappa = x * params.hopping,
            SweepParameter::GammaOverG => params.gamma = x * params.g,
            SweepParameter::LossOverG => {
                params.gamma = 0.5 * x * params.g;
                params.kappa = params.gamma;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Experiment,
    #[serde(default = "default_true")]
    pub compensate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemParams,
    #[serde(default)]
    pub protocol: ProtocolOptions,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<FiberConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_true() -> bool {
    true
}

fn model_key(e: &ModelError) -> &'static str {
    let name = match e {
        ModelError::NegativeRate { name, .. } | ModelError::NonFinite { name, .. } => *name,
        ModelError::Branching(_) => "branching_g0",
        _ => "",
    };
    match name {
        "g" => "system.g",
        "J" => "system.hopping",
        "kappa" => "system.kappa",
        "gamma" => "system.gamma",
        "branching_g0" => "system.branching_g0",
        _ => "fiber",
    }
}

/// Parse and validate a TOML configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = parse_unvalidated(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Syntax and schema only; overrides are applied before validation.
pub fn parse_unvalidated(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((1, 1));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl ExperimentConfig {
    pub fn minimal(scheme: Experiment, system: SystemParams) -> Self {
        Self {
            scheme,
            compensate: true,
            output: None,
            system,
            protocol: ProtocolOptions::default(),
            integrator: IntegratorConfig::default(),
            mode: ModeConfig::default(),
            fiber: None,
            sweep: None,
        }
    }

    /// Semantic checks; returns the advisories of the base parameters.
    pub fn validate(&self) -> Result<Vec<Advisory>, ConfigError> {
        let advisories = self
            .system
            .validate()
            .map_err(|e| ConfigError::semantic(model_key(&e), &e))?;
        if !(self.system.g > 0.0) {
            return Err(ConfigError::semantic("system.g", "must be positive"));
        }
        self.integrator
            .validate()
            .map_err(|e| ConfigError::semantic("integrator", e))?;
        let p = &self.protocol;
        if p.n_max == 0 {
            return Err(ConfigError::semantic("protocol.n_max", "must be at least 1"));
        }
        if !p.probe_detuning.is_finite() {
            return Err(ConfigError::semantic("protocol.probe_detuning", "must be finite"));
        }
        if let Some(t) = p.emission_tail {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::semantic("protocol.emission_tail", "must be positive"));
            }
        }
        if self.mode.kind == ModeKind::Trajectories && self.mode.n == 0 {
            return Err(ConfigError::semantic("mode.n", "must be at least 1"));
        }
        if let Some(f) = &self.fiber {
            f.params()?
                .validate()
                .map_err(|e| ConfigError::semantic("fiber", e))?;
            if f.samples < 16 {
                return Err(ConfigError::semantic("fiber.samples", "must be at least 16"));
            }
            if let Some(d) = f.duration {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(ConfigError::semantic("fiber.duration", "must be positive"));
                }
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(ConfigError::semantic("sweep.values", "must not be empty"));
            }
            for &x in &s.values {
                let (params, _) = self.point(Some((s.parameter, x)));
                params
                    .validate()
                    .map_err(|e| ConfigError::semantic("sweep.values", format!("value {x}: {e}")))?;
            }
        }
        Ok(advisories)
    }

    /// Resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Encode(e.to_string()))
    }

    fn point(&self, sweep: Option<(SweepParameter, f64)>) -> (SystemParams, ProtocolOptions) {
        let mut params = self.system;
        let mut opts = self.protocol;
        if let Some((p, x)) = sweep {
            p.apply(&mut params, &mut opts, x);
        }
        (params, opts)
    }

    fn run_mode(&self, seed: u64) -> RunMode {
        match self.mode.kind {
            ModeKind::Deterministic => RunMode::Deterministic,
            ModeKind::Trajectories => RunMode::Trajectories { n: self.mode.n, seed },
        }
    }
}

/// Command-line overrides, applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<ModeKind>,
    pub n: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        if let Some(s) = self.seed {
            cfg.mode.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode.kind = m;
        }
        if let Some(n) = self.n {
            cfg.mode.n = n;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    /// Which result column the formula predicts.
    pub quantity: String,
    pub value: f64,
    pub abs_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmittedPairRecord {
    pub total: usize,
    pub heralded: usize,
    pub selected: usize,
    pub fraction: f64,
    pub fidelity: f64,
    pub mean_sector_weight: f64,
}

/// One simulated parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    pub seed: u64,
    pub params: SystemParams,
    pub herald_probability: f64,
    pub herald_stderr: Option<f64>,
    pub heralded_count: Option<usize>,
    pub fidelity: f64,
    pub sector_fidelity: f64,
    pub sector_weight: f64,
    pub phase_correction: f64,
    pub reference: Option<Reference>,
    /// Heralded qubit state, row-major `[re, im]` pairs.
    pub qubit_state: Vec<Vec<[f64; 2]>>,
    pub tallies: Vec<OutcomeTally>,
    pub advisories: Vec<Advisory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitted_pair: Option<EmittedPairRecord>,
}

fn run_point(
    cfg: &ExperimentConfig,
    params: &SystemParams,
    opts: &ProtocolOptions,
    seed: u64,
    param: Option<f64>,
) -> Result<(PointRecord, ScheduleRun), CliError> {
    let schedule = match cfg.scheme.scheme_kind() {
        Some(kind) => scheme_schedule(Scheme { kind, compensate: cfg.compensate }, params, opts)?,
        None => ideal_probe_schedule(params)?,
    };
    let keep = cfg.mode.emitted_pair && cfg.mode.kind == ModeKind::Trajectories;
    let run = run_schedule(
        cfg.scheme.name(),
        &schedule,
        params,
        opts,
        cfg.run_mode(seed),
        &cfg.integrator,
        keep,
    )?;
    let r = &run.result;
    let reference = match cfg.scheme {
        Experiment::IdealProbe => {
            let v = success_probability_ideal(params.kappa, params.hopping)?;
            Some(Reference {
                quantity: "herald_prob".into(),
                value: v,
                abs_deviation: (r.herald_probability - v).abs(),
            })
        }
        Experiment::TwoPhoton | Experiment::TwoAtom => {
            let kind = cfg.scheme.scheme_kind().expect("scheme");
            let v = perturbative_fidelity(kind, params.gamma, params.kappa, params.g)?;
            Some(Reference {
                quantity: "fidelity".into(),
                value: v,
                abs_deviation: (r.fidelity - v).abs(),
            })
        }
        Experiment::AtomPhoton => None,
    };
    let emitted_pair = if keep {
        let s = emitted_pair_postselect(&run)?;
        Some(EmittedPairRecord {
            total: s.total,
            heralded: s.heralded,
            selected: s.selected,
            fraction: s.fraction,
            fidelity: s.fidelity,
            mean_sector_weight: s.mean_sector_weight,
        })
    } else {
        None
    };
    let m = r.qubit_state.matrix();
    let qubit_state = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect();
    let record = PointRecord {
        experiment: cfg.scheme.name().into(),
        param,
        seed,
        params: *params,
        herald_probability: r.herald_probability,
        herald_stderr: r.herald_stderr,
        heralded_count: r.heralded_count,
        fidelity: r.fidelity,
        sector_fidelity: r.sector_fidelity,
        sector_weight: r.sector_weight,
        phase_correction: r.phase_correction,
        reference,
        qubit_state,
        tallies: r.tallies.clone(),
        advisories: r.advisories.clone(),
        emitted_pair,
    };
    Ok((record, run))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Encode(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    config: String,
    seed: u64,
    result: &'a PointRecord,
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let (params, opts) = cfg.point(None);
    let (record, _) = run_point(cfg, &params, &opts, cfg.mode.seed, None)?;
    to_json(&SimulateOutput {
        config: cfg.to_toml()?,
        seed: cfg.mode.seed,
        result: &record,
    })
}

/// Sweep rows run concurrently; trajectory points use seeds derived from
/// the base seed and the row index.
pub fn sweep_records(cfg: &ExperimentConfig) -> Result<Vec<PointRecord>, CliError> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError::semantic("sweep", "section required for the sweep command"))?;
    sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let (params, opts) = cfg.point(Some((sweep.parameter, x)));
            let seed = match cfg.mode.kind {
                ModeKind::Deterministic => cfg.mode.seed,
                ModeKind::Trajectories => derive_seed(cfg.mode.seed, i as u64),
            };
            run_point(cfg, &params, &opts, seed, Some(x)).map(|(r, _)| r)
        })
        .collect()
}

fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "param",
    "herald_prob",
    "herald_stderr",
    "fidelity",
    "ref_formula_value",
    "abs_deviation",
    "seed",
    "ref_quantity",
    "sector_fidelity",
    "sector_weight",
    "heralded_count",
];

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let records = sweep_records(cfg)?;
    let mut out = String::new();
    for line in cfg.to_toml()?.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| CliError::Encode(e.to_string());
    w.write_record(SWEEP_COLUMNS).map_err(enc)?;
    for r in &records {
        let (rv, rd, rq) = match &r.reference {
            Some(x) => (sig12(x.value), sig12(x.abs_deviation), x.quantity.clone()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            sig12(r.param.unwrap_or(f64::NAN)),
            sig12(r.herald_probability),
            r.herald_stderr.map(sig12).unwrap_or_default(),
            sig12(r.fidelity),
            rv,
            rd,
            r.seed.to_string(),
            rq,
            sig12(r.sector_fidelity),
            sig12(r.sector_weight),
            r.heralded_count.map(|k| k.to_string()).unwrap_or_default(),
        ])
        .map_err(enc)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Encode(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| CliError::Encode(e.to_string()))?);
    Ok(out)
}

/// Recover the configuration embedded in a sweep CSV.
pub fn embedded_config_csv(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let toml: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("# ").or_else(|| (l == "#").then_some("")))
        .map(|l| format!("{l}\n"))
        .collect();
    parse_config(&toml)
}

#[derive(Serialize)]
struct FiberOutput<'a> {
    config: String,
    report: &'a FiberReport,
}

pub fn cmd_fiber(cfg: &ExperimentConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let f = cfg
        .fiber
        .as_ref()
        .ok_or_else(|| ConfigError::semantic("fiber", "section required for the fiber command"))?;
    let report = fiber_compare(&f.params()?, f.duration, f.samples, &cfg.integrator)?;
    to_json(&FiberOutput {
        config: cfg.to_toml()?,
        report: &report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpLine {
    pub time: f64,
    pub channel: Channel,
}

/// Per-trajectory record without state vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub index: usize,
    pub seed: u64,
    pub postselected: bool,
    pub survival_weight: f64,
    pub jumps: Vec<JumpLine>,
    pub outcomes: Vec<crate::dynamics::MeasurementOutcome>,
}

#[derive(Serialize)]
struct TrajectoriesOutput<'a> {
    config: String,
    seed: u64,
    summary: &'a PointRecord,
    ensemble: TrajectorySummary,
    trajectories: Vec<TrajectoryLine>,
}

/// Always samples trajectories, whatever `mode.kind` says.
pub fn cmd_trajectories(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut cfg = cfg.clone();
    cfg.mode.kind = ModeKind::Trajectories;
    cfg.validate()?;
    let (params, opts) = cfg.point(None);
    let (record, run) = run_point(&cfg, &params, &opts, cfg.mode.seed, None)?;
    let trajectories = run
        .records
        .iter()
        .map(|r| TrajectoryLine {
            index: r.index,
            seed: r.seed,
            postselected: r.postselected,
            survival_weight: r.survival_weight,
            jumps: r
                .jumps
                .iter()
                .map(|j| JumpLine {
                    time: j.time,
                    channel: j.channel,
                })
                .collect(),
            outcomes: r.outcomes.clone(),
        })
        .collect();
    to_json(&TrajectoriesOutput {
        config: cfg.to_toml()?,
        seed: cfg.mode.seed,
        summary: &record,
        ensemble: TrajectorySummary::from_records(&run.records),
        trajectories,
    })
}

/// Recover the configuration embedded in a JSON output.
pub fn embedded_config_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::semantic("config", e))?;
    let toml = v
        .get("config")
        .and_then(|c| c.as_str())
        .ok_or_else(|| ConfigError::semantic("config", "missing embedded configuration"))?;
    parse_config(toml)
}

pub fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Run one parameter point.
    Simulate,
    /// Run every value of the `[sweep]` section and write a CSV.
    Sweep,
    /// Compare the fiber model with its adiabatically eliminated form.
    Fiber,
    /// Sample trajectories and write per-trajectory records.
    Trajectories,
}

#[derive(Clone, Debug, clap::Parser)]
#[command(name = "herald", version, about = "Heralded cavity-QED entanglement simulator")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeKind>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
}

/// Execute a parsed command line; output goes to the configured path or
/// is returned for stdout.
pub fn execute(args: &Args) -> Result<Option<String>, CliError> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::semantic("--config", "a configuration file is required"))?;
    let text = read_config(path)?;
    let mut cfg = parse_unvalidated(&text)?;
    Overrides {
        output: args.output.clone(),
        seed: args.seed,
        mode: args.mode,
        n: args.n,
    }
    .apply(&mut cfg);
    cfg.validate()?;
    let out = match args.command {
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
        Command::Fiber => cmd_fiber(&cfg)?,
        Command::Trajectories => cmd_trajectories(&cfg)?,
    };
    match &cfg.output {
        Some(p) => {
            write_output(p, &out)?;
            Ok(None)
        }
        None => Ok(Some(out)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "scheme = \"two_photon\"\n[system]\ng = 1.0\nJ = 0.01\nkappa = 0.0\ngamma = 0.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.protocol.n_max, 2);
        assert_eq!(cfg.protocol.e_max, 2);
        assert_eq!(cfg.integrator.step_fraction, 0.01);
        assert_eq!(cfg.system.branching_g0, 0.5);
        assert_eq!(cfg.system.hopping, 0.01);
        assert!(cfg.compensate);
        assert_eq!(cfg.mode.kind, ModeKind::Deterministic);
    }

    #[test]
    fn negative_kappa_names_the_key() {
        let err = parse_config(&MINIMAL.replace("kappa = 0.0", "kappa = -0.1")).unwrap_err();
        match &err {
            ConfigError::Semantic { key, .. } => assert_eq!(key, "system.kappa"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(CliError::from(err).exit_code(), 2);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_config("scheme = \"two_photon\"\n[system]\ng = = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err:?}");
        let unknown = parse_config(&format!("{MINIMAL}kapa = 1.0\n")).unwrap_err();
        assert!(matches!(unknown, ConfigError::Syntax { line: 7, .. }), "{unknown:?}");
        assert!(unknown.to_string().contains("kapa"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.sweep = Some(SweepConfig {
            parameter: SweepParameter::LossOverG,
            values: vec![0.002, 0.02],
        });
        cfg.protocol.emission_tail = Some(5.0);
        cfg.fiber = Some(FiberConfig {
            coupling: Some(0.025),
            spacing: Some(1.0),
            count: 5,
            offset: None,
            modes: None,
            duration: None,
            samples: 100,
        });
        let back = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sweep_parameters_map_onto_rates() {
        let mut p = SystemParams::default();
        let mut o = ProtocolOptions::default();
        SweepParameter::LossOverG.apply(&mut p, &mut o, 0.02);
        assert_eq!((p.gamma, p.kappa), (0.01, 0.01));
        SweepParameter::KappaOverHopping.apply(&mut p, &mut o, 0.1);
        assert!((p.kappa - 0.001).abs() < 1e-15);
        SweepParameter::ProbeDetuning.apply(&mut p, &mut o, 0.2);
        assert_eq!(o.probe_detuning, 0.2);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let text = format!("{MINIMAL}[sweep]\nparameter = \"gamma\"\nvalues = []\n");
        assert!(matches!(parse_config(&text), Err(ConfigError::Semantic { .. })));
        let bad = format!("{MINIMAL}[sweep]\nparameter = \"omega\"\nvalues = [1.0]\n");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn instability_maps_to_exit_four() {
        let e = ProtocolError::Dynamics(DynamicsError::Instability {
            time: 1.0,
            what: "norm".into(),
        });
        assert_eq!(CliError::from(e).exit_code(), 4);
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
    }
}
