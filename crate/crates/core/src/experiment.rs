//! JSON-configured experiments: simulation runs, rate verification,
//! flocking checks and schedule generation.
//!
//! All randomness is seeded from the config, and every report embeds a
//! SHA-256 hash of the resolved config (plus any referenced schedule file),
//! so repeated runs produce byte-identical output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::AgentState;
use crate::integrate::{simulate_with_marks, Trajectory};
use crate::metrics::diameter;
use crate::model::{
    AgentMatrix, Condition, FirstOrderState, InteractionKernel, KernelBounds, ScalingMode,
    SecondOrderState, SystemConfig,
};
use crate::output::{write_metrics_csv, write_trajectory_csv, write_window_integrals_csv};
use crate::schedule::{
    gen_isc_star, gen_pe_matrix, validate_isc, validate_pe_all, ScheduleEntry, ScheduleMatrix,
    DEFAULT_GRID_FRACTION,
};
use crate::theory::{
    contraction_factor, dv_bound, flocking_check, flocking_radius, rate_sequence, FCase, FCaseKind,
    FlockingVerdict,
};

/// Relative tolerance for every verified bound, scaled by the initial
/// diameter of the checked quantity.
pub const VERIFY_REL_TOL: f64 = 1e-7;

/// Default step as a fraction of the window length.
pub const DEFAULT_STEP_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Io { .. } => 2,
            ExperimentError::Numeric(_) => 3,
        }
    }
}

impl From<crate::Error> for ExperimentError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::NonFinite { .. } => ExperimentError::Numeric(e.to_string()),
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

type XResult<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// Explicit link entries; absent links default to constant 1.
    Inline { entries: Vec<ScheduleEntry> },
    /// Schedule file, relative to the config file's directory.
    File { path: PathBuf },
    /// Every off-diagonal link constant.
    Constant { value: f64 },
    /// Square PE waves on every link, with a shared phase or seeded phases.
    SquarePe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duty_phase: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Star around `hub` (0-based) with seeded phases.
    IscStar { hub: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Explicit {
        positions: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocities: Option<Vec<Vec<f64>>>,
    },
    /// Independent uniform draws per coordinate.
    Uniform {
        low: f64,
        high: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity_low: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity_high: Option<f64>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_every")]
    pub every: usize,
}

fn default_every() -> usize {
    1
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub order: Order,
    pub kernel: InteractionKernel,
    pub schedule: ScheduleSpec,
    pub initial: InitialSpec,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// Command-line overrides applied before the config is resolved and hashed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub step: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum InitialState {
    First(FirstOrderState),
    Second(SecondOrderState),
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub matrix: ScheduleMatrix,
    pub initial: InitialState,
    pub step: f64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> XResult<Self> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    fn apply(&mut self, ov: &Overrides) {
        if let Some(step) = ov.step {
            self.step = Some(step);
        }
        if let Some(seed) = ov.seed {
            match &mut self.schedule {
                ScheduleSpec::SquarePe { seed: s, duty_phase: None } => *s = Some(seed),
                ScheduleSpec::IscStar { seed: s, .. } => *s = seed,
                _ => {}
            }
            if let InitialSpec::Uniform { seed: s, .. } = &mut self.initial {
                *s = seed;
            }
        }
    }
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> XResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            ExperimentError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config = ExperimentConfig::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::resolve(config, &base, overrides)
    }

    /// Resolves a parsed config; relative paths are taken from `base_dir`.
    pub fn resolve(mut config: ExperimentConfig, base_dir: &Path, overrides: &Overrides) -> XResult<Self> {
        config.apply(overrides);
        let sys = config.system.clone();
        if !(config.horizon.is_finite() && config.horizon > 0.0) {
            return Err(ExperimentError::Config(format!("horizon must be > 0, got {}", config.horizon)));
        }
        let step = config.step.unwrap_or(DEFAULT_STEP_FRACTION * sys.window);
        if !(step.is_finite() && step > 0.0) {
            return Err(ExperimentError::Config(format!("step must be > 0, got {step}")));
        }

        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&config).expect("config serializes"));

        let n = sys.n_agents;
        let matrix = match &config.schedule {
            ScheduleSpec::Inline { entries } => ScheduleMatrix::from_entries(n, entries)?,
            ScheduleSpec::File { path } => {
                let full = base_dir.join(path);
                let bytes = fs::read(&full).map_err(|e| {
                    ExperimentError::Config(format!("cannot read schedule {}: {e}", full.display()))
                })?;
                hasher.update(&bytes);
                let entries: Vec<ScheduleEntry> = serde_json::from_slice(&bytes).map_err(|e| {
                    ExperimentError::Config(format!("bad schedule file {}: {e}", full.display()))
                })?;
                ScheduleMatrix::from_entries(n, &entries)?
            }
            ScheduleSpec::Constant { value } => ScheduleMatrix::constant(n, *value)?,
            ScheduleSpec::SquarePe { duty_phase, seed } => {
                if duty_phase.is_none() && seed.is_none() {
                    return Err(ExperimentError::Config(
                        "square_pe schedule needs either duty_phase or seed".into(),
                    ));
                }
                gen_pe_matrix(n, sys.window, sys.service, *duty_phase, seed.unwrap_or(0))?
            }
            ScheduleSpec::IscStar { hub, seed } => gen_isc_star(n, sys.window, sys.service, *hub, *seed)?,
        };

        let initial = build_initial(&config, &sys)?;
        let config_hash = hex::encode(hasher.finalize());
        let out_dir = overrides
            .out
            .clone()
            .or_else(|| config.outputs.dir.as_ref().map(|d| base_dir.join(d)))
            .unwrap_or_else(|| base_dir.join("out"));
        Ok(Self { config, config_hash, matrix, initial, step, out_dir })
    }

    pub fn system(&self) -> &SystemConfig {
        &self.config.system
    }

    pub fn kernel(&self) -> &InteractionKernel {
        &self.config.kernel
    }

    /// Window boundaries `nT` inside the horizon.
    pub fn window_marks(&self) -> Vec<f64> {
        let t = self.system().window;
        let count = (self.config.horizon / t * (1.0 + 1e-12)).floor() as usize;
        (0..=count).map(|k| k as f64 * t).filter(|&m| m <= self.config.horizon).collect()
    }

    fn run<S: AgentState>(&self, initial: &S) -> XResult<Trajectory<S>> {
        let mut traj = simulate_with_marks(
            self.system(),
            self.kernel(),
            &self.matrix,
            initial,
            self.config.horizon,
            self.step,
            &self.window_marks(),
        )?;
        traj.meta.config_hash = Some(self.config_hash.clone());
        traj.meta.seed = match &self.config.initial {
            InitialSpec::Uniform { seed, .. } => Some(*seed),
            InitialSpec::Explicit { .. } => None,
        };
        Ok(traj)
    }
}

fn matrix_from(rows: &[Vec<f64>], sys: &SystemConfig, what: &str) -> XResult<AgentMatrix> {
    let m = AgentMatrix::from_rows(rows)?;
    if m.rows() != sys.n_agents || m.cols() != sys.dim {
        return Err(ExperimentError::Config(format!(
            "{what} must be {}x{}, got {}x{}",
            sys.n_agents,
            sys.dim,
            m.rows(),
            m.cols()
        )));
    }
    Ok(m)
}

fn uniform_matrix(rng: &mut ChaCha8Rng, sys: &SystemConfig, low: f64, high: f64) -> XResult<AgentMatrix> {
    if !(low.is_finite() && high.is_finite() && low <= high) {
        return Err(ExperimentError::Config(format!("bad uniform box [{low}, {high}]")));
    }
    let data = (0..sys.n_agents * sys.dim)
        .map(|_| if low == high { low } else { rng.gen_range(low..high) })
        .collect();
    Ok(AgentMatrix::from_flat(sys.n_agents, sys.dim, data)?)
}

fn build_initial(config: &ExperimentConfig, sys: &SystemConfig) -> XResult<InitialState> {
    match (&config.initial, config.order) {
        (InitialSpec::Explicit { positions, .. }, Order::First) => Ok(InitialState::First(
            FirstOrderState::new(matrix_from(positions, sys, "positions")?)?,
        )),
        (InitialSpec::Explicit { positions, velocities }, Order::Second) => {
            let v = velocities.as_ref().ok_or_else(|| {
                ExperimentError::Config("second-order run needs initial velocities".into())
            })?;
            Ok(InitialState::Second(SecondOrderState::new(
                matrix_from(positions, sys, "positions")?,
                matrix_from(v, sys, "velocities")?,
            )?))
        }
        (InitialSpec::Uniform { low, high, velocity_low, velocity_high, seed }, order) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let x = uniform_matrix(&mut rng, sys, *low, *high)?;
            match order {
                Order::First => Ok(InitialState::First(FirstOrderState::new(x)?)),
                Order::Second => {
                    let (vl, vh) = velocity_low.zip(*velocity_high).ok_or_else(|| {
                        ExperimentError::Config(
                            "second-order uniform init needs velocity_low and velocity_high".into(),
                        )
                    })?;
                    let v = uniform_matrix(&mut rng, sys, vl, vh)?;
                    Ok(InitialState::Second(SecondOrderState::new(x, v)?))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper,
    Lower,
}

/// One verified inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub kind: BoundKind,
    pub theoretical_bound: f64,
    pub empirical_value: f64,
    /// Slack in the bound's favour (negative when violated).
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn upper(name: impl Into<String>, bound: f64, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind: BoundKind::Upper,
            theoretical_bound: bound,
            empirical_value: value,
            margin: bound - value,
            tolerance,
            pass: value <= bound + tolerance,
        }
    }

    pub fn lower(name: impl Into<String>, bound: f64, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind: BoundKind::Lower,
            theoretical_bound: bound,
            empirical_value: value,
            margin: value - bound,
            tolerance,
            pass: value >= bound - tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Pass,
    Fail,
    /// The schedule does not satisfy the declared condition; no bound is asserted.
    InvalidPremise,
    /// The flocking criterion could not be established from the initial data.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Premise {
    pub condition: Condition,
    pub holds: bool,
    /// Links `(i, j)` failing PE, or pairs with no ISC witness.
    pub violations: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub condition: Condition,
    pub scaling: ScalingMode,
    pub kernel_bounds: KernelBounds,
    pub gamma_tilde: f64,
    pub gamma: f64,
    pub eta: u8,
    pub rate_sequence: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flocking: Option<FlockingVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config_hash: String,
    pub order: Order,
    pub status: ReportStatus,
    pub pass: bool,
    pub premise: Premise,
    pub theory: TheorySummary,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Validates the schedule against the declared condition.
pub fn check_premise(exp: &Experiment) -> XResult<Premise> {
    let sys = exp.system();
    let grid = DEFAULT_GRID_FRACTION * sys.window;
    let violations = match sys.condition {
        Condition::Pe => validate_pe_all(&exp.matrix, sys.window, sys.service, grid)?
            .into_iter()
            .filter(|(_, _, r)| !r.holds)
            .map(|(i, j, _)| (i, j))
            .collect::<Vec<_>>(),
        Condition::Isc => validate_isc(&exp.matrix, sys.window, sys.service, grid)?
            .witnesses
            .into_iter()
            .filter(|w| w.hub.is_none())
            .map(|w| (w.i, w.j))
            .collect(),
    };
    Ok(Premise { condition: sys.condition, holds: violations.is_empty(), violations })
}

fn theory_summary(
    exp: &Experiment,
    scale_diameter: f64,
    bound_radius: f64,
    flocking: Option<FlockingVerdict>,
) -> XResult<TheorySummary> {
    let sys = exp.system();
    let bounds = exp.kernel().bounds(sys.scaling, bound_radius)?;
    let coeffs = contraction_factor(sys.condition, sys.n_agents, sys.window, sys.service, bounds.k_min, bounds.k_max)?;
    let windows = exp.window_marks().len().saturating_sub(1) as u32;
    Ok(TheorySummary {
        condition: sys.condition,
        scaling: sys.scaling,
        kernel_bounds: bounds,
        gamma_tilde: coeffs.gamma_tilde,
        gamma: coeffs.gamma,
        eta: coeffs.eta,
        rate_sequence: rate_sequence(&coeffs, scale_diameter, windows),
        flocking,
    })
}

/// Largest single-step increase of a series.
fn max_increase(series: &[f64]) -> f64 {
    series.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

fn first_order_checks(
    exp: &Experiment,
    traj: &Trajectory<FirstOrderState>,
    theory: &TheorySummary,
    d0: f64,
) -> Vec<CheckRecord> {
    let tol = VERIFY_REL_TOL * d0;
    let mut checks = Vec::new();
    for (n, &t) in exp.window_marks().iter().enumerate() {
        let (_, s) = traj.state_near(t);
        checks.push(CheckRecord::upper(
            format!("diameter_rate[n={n}]"),
            theory.rate_sequence[n],
            diameter(&s.positions),
            tol,
        ));
    }
    let series: Vec<f64> = traj.states.iter().map(|s| diameter(&s.positions)).collect();
    checks.push(CheckRecord::upper("diameter_nonincreasing", 0.0, max_increase(&series), tol));
    checks
}

fn second_order_checks(
    exp: &Experiment,
    traj: &Trajectory<SecondOrderState>,
    case: &FCase,
    dx0: f64,
    dv0: f64,
) -> Vec<CheckRecord> {
    let tol = VERIFY_REL_TOL * dv0;
    let mut checks = Vec::new();
    for (n, &t) in exp.window_marks().iter().enumerate() {
        let (_, s) = traj.state_near(t);
        let (dxn, dvn) = (diameter(&s.positions), diameter(&s.velocities));
        checks.push(CheckRecord::upper(
            format!("velocity_diameter_estimate[n={n}]"),
            dv_bound(case, exp.kernel(), dx0, dv0, dxn, dvn),
            dvn,
            tol,
        ));
    }
    let series: Vec<f64> = traj.states.iter().map(|s| diameter(&s.velocities)).collect();
    checks.push(CheckRecord::upper("velocity_diameter_nonincreasing", 0.0, max_increase(&series), tol));
    checks
}

fn finish(checks: &[CheckRecord], premise: &Premise) -> (ReportStatus, bool) {
    if !premise.holds {
        (ReportStatus::InvalidPremise, false)
    } else if checks.iter().all(|c| c.pass) {
        (ReportStatus::Pass, true)
    } else {
        (ReportStatus::Fail, false)
    }
}

fn f_case(exp: &Experiment) -> XResult<FCase> {
    let sys = exp.system();
    Ok(FCase::for_kernel(
        FCaseKind::new(sys.condition, sys.scaling),
        exp.kernel(),
        sys.n_agents,
        sys.window,
        sys.service,
    )?)
}

/// Validates the premise, derives the guaranteed rates from the initial
/// data, simulates, and checks every bound at each window boundary.
pub fn verify(exp: &Experiment) -> XResult<VerificationReport> {
    let premise = check_premise(exp)?;
    let sys = exp.system();
    match &exp.initial {
        InitialState::First(x0) => {
            let d0 = diameter(&x0.positions);
            let theory = theory_summary(exp, d0, d0, None)?;
            let checks = if premise.holds {
                let traj = exp.run(x0)?;
                first_order_checks(exp, &traj, &theory, d0)
            } else {
                Vec::new()
            };
            let (status, pass) = finish(&checks, &premise);
            Ok(VerificationReport {
                config_hash: exp.config_hash.clone(),
                order: Order::First,
                status,
                pass,
                premise,
                theory,
                checks,
            })
        }
        InitialState::Second(s0) => {
            if !exp.kernel().is_nonincreasing() {
                return Err(ExperimentError::Config(
                    "second-order verification needs a non-increasing kernel".into(),
                ));
            }
            let dx0 = diameter(&s0.positions);
            let dv0 = diameter(&s0.velocities);
            let case = f_case(exp)?;
            let verdict = flocking_check(&case, exp.kernel(), dx0, dv0)?;
            let theory = theory_summary(exp, dv0, dx0 + sys.window * dv0, Some(verdict))?;
            let checks = if premise.holds {
                let traj = exp.run(s0)?;
                second_order_checks(exp, &traj, &case, dx0, dv0)
            } else {
                Vec::new()
            };
            let (status, pass) = finish(&checks, &premise);
            Ok(VerificationReport {
                config_hash: exp.config_hash.clone(),
                order: Order::Second,
                status,
                pass,
                premise,
                theory,
                checks,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockingReport {
    pub config_hash: String,
    pub status: ReportStatus,
    pub pass: bool,
    pub premise: Premise,
    pub verdict: FlockingVerdict,
    pub dx0: f64,
    pub dv0: f64,
    /// Guaranteed bound on `D_X(t)` for all `t`, when computable.
    pub radius: Option<f64>,
    pub max_dx: Option<f64>,
    pub final_dv: Option<f64>,
    pub checks: Vec<CheckRecord>,
}

impl FlockingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Evaluates the flocking criterion from the initial data; when it holds,
/// simulates and checks the guaranteed position bound and the velocity
/// estimate at every window boundary.
pub fn flocking(exp: &Experiment) -> XResult<FlockingReport> {
    let InitialState::Second(s0) = &exp.initial else {
        return Err(ExperimentError::Config("flocking needs a second-order config".into()));
    };
    let premise = check_premise(exp)?;
    let dx0 = diameter(&s0.positions);
    let dv0 = diameter(&s0.velocities);
    let case = f_case(exp)?;
    let verdict = flocking_check(&case, exp.kernel(), dx0, dv0)?;
    let mut report = FlockingReport {
        config_hash: exp.config_hash.clone(),
        status: ReportStatus::Inconclusive,
        pass: false,
        premise,
        verdict,
        dx0,
        dv0,
        radius: None,
        max_dx: None,
        final_dv: None,
        checks: Vec::new(),
    };
    if !report.premise.holds {
        report.status = ReportStatus::InvalidPremise;
        return Ok(report);
    }
    if !verdict.guaranteed {
        return Ok(report);
    }
    report.radius = flocking_radius(&case, exp.kernel(), dx0, dv0);
    let traj = exp.run(s0)?;
    let max_dx = traj.states.iter().map(|s| diameter(&s.positions)).fold(0.0, f64::max);
    report.max_dx = Some(max_dx);
    report.final_dv = Some(diameter(&traj.final_state().velocities));
    let mut checks = Vec::new();
    if let Some(r) = report.radius {
        checks.push(CheckRecord::upper("position_diameter_bounded", r, max_dx, VERIFY_REL_TOL * r.max(dx0)));
    }
    checks.extend(second_order_checks(exp, &traj, &case, dx0, dv0));
    let (status, pass) = finish(&checks, &report.premise);
    report.status = status;
    report.pass = pass;
    report.checks = checks;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub config_hash: String,
    pub steps: usize,
    pub trajectory_csv: PathBuf,
    pub metrics_csv: PathBuf,
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> XResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_outputs<S: AgentState>(exp: &Experiment, traj: &Trajectory<S>) -> XResult<SimulationSummary> {
    let every = exp.config.outputs.every;
    let trajectory_csv = exp.out_dir.join("trajectory.csv");
    let metrics_csv = exp.out_dir.join("metrics.csv");
    write_file(&trajectory_csv, |w| write_trajectory_csv(w, traj, every))?;
    write_file(&metrics_csv, |w| write_metrics_csv(w, traj, every))?;
    Ok(SimulationSummary {
        config_hash: exp.config_hash.clone(),
        steps: traj.len() - 1,
        trajectory_csv,
        metrics_csv,
    })
}

/// Simulates and writes `trajectory.csv` and `metrics.csv`.
pub fn cmd_simulate(config_path: &Path, overrides: &Overrides) -> XResult<SimulationSummary> {
    let exp = Experiment::load(config_path, overrides)?;
    match &exp.initial {
        InitialState::First(x0) => write_outputs(&exp, &exp.run(x0)?),
        InitialState::Second(s0) => write_outputs(&exp, &exp.run(s0)?),
    }
}

/// Runs [`verify`] and writes `report.json` plus `window_integrals.csv`.
pub fn cmd_verify(config_path: &Path, overrides: &Overrides) -> XResult<VerificationReport> {
    let exp = Experiment::load(config_path, overrides)?;
    let report = verify(&exp)?;
    let path = exp.out_dir.join("report.json");
    write_file(&path, |w| writeln!(w, "{}", report.to_json()))?;
    let quarter = 0.25 * exp.system().window;
    let count = (exp.config.horizon / quarter).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|k| k as f64 * quarter).collect();
    let diag = exp.out_dir.join("window_integrals.csv");
    write_file(&diag, |w| write_window_integrals_csv(w, &exp.matrix, exp.system().window, &times))?;
    Ok(report)
}

/// Runs [`flocking`] and writes `flocking.json`.
pub fn cmd_flocking(config_path: &Path, overrides: &Overrides) -> XResult<FlockingReport> {
    let exp = Experiment::load(config_path, overrides)?;
    let report = flocking(&exp)?;
    let path = exp.out_dir.join("flocking.json");
    write_file(&path, |w| writeln!(w, "{}", report.to_json()))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Pe,
    IscStar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenScheduleParams {
    pub kind: GeneratorKind,
    pub n_agents: usize,
    pub window: f64,
    pub service: f64,
    pub duty_phase: Option<f64>,
    pub hub: usize,
    pub seed: u64,
}

/// Generates a schedule, validates it against its own condition, and
/// writes it as a JSON entry list. Nothing is written when validation fails.
pub fn cmd_gen_schedule(params: &GenScheduleParams, out_path: &Path) -> XResult<ScheduleMatrix> {
    if params.n_agents < 2 {
        return Err(ExperimentError::Config(format!("need at least 2 agents, got {}", params.n_agents)));
    }
    let grid = DEFAULT_GRID_FRACTION * params.window;
    let matrix = match params.kind {
        GeneratorKind::Pe => {
            let m = gen_pe_matrix(params.n_agents, params.window, params.service, params.duty_phase, params.seed)?;
            let bad = validate_pe_all(&m, params.window, params.service, grid)?
                .into_iter()
                .filter(|(_, _, r)| !r.holds)
                .count();
            if bad > 0 {
                return Err(ExperimentError::Numeric(format!("{bad} generated links fail PE")));
            }
            m
        }
        GeneratorKind::IscStar => {
            let m = gen_isc_star(params.n_agents, params.window, params.service, params.hub, params.seed)?;
            if !validate_isc(&m, params.window, params.service, grid)?.holds {
                return Err(ExperimentError::Numeric("generated star fails ISC".into()));
            }
            m
        }
    };
    let text = serde_json::to_string_pretty(&matrix.to_entries()).expect("entries serialize");
    write_file(out_path, |w| writeln!(w, "{text}"))?;
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_AGENT: &str = r#"{
        "system": {"n_agents": 2, "dim": 1, "scaling": "fixed", "condition": "pe", "window": 1.0, "service": 1.0},
        "kernel": {"family": "constant", "c": 1.0},
        "schedule": {"kind": "constant", "value": 1.0},
        "initial": {"kind": "explicit", "positions": [[0.0], [1.0]]},
        "horizon": 2.0
    }"#;

    fn resolve(text: &str) -> XResult<Experiment> {
        Experiment::resolve(ExperimentConfig::from_json(text)?, Path::new("."), &Overrides::default())
    }

    #[test]
    fn two_agent_verify_passes() {
        let exp = resolve(TWO_AGENT).unwrap();
        assert_eq!(exp.window_marks(), vec![0.0, 1.0, 2.0]);
        let r = verify(&exp).unwrap();
        assert_eq!(r.status, ReportStatus::Pass);
        assert_eq!(r.theory.rate_sequence.len(), 3);
        assert!(r.checks.iter().all(|c| c.pass));
        let c1 = &r.checks[1];
        assert!((c1.empirical_value - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_schedule_is_invalid_premise() {
        let text = TWO_AGENT.replace(r#""value": 1.0"#, r#""value": 0.0"#);
        let r = verify(&resolve(&text).unwrap()).unwrap();
        assert_eq!(r.status, ReportStatus::InvalidPremise);
        assert!(!r.pass);
        assert!(r.checks.is_empty());
        assert_eq!(r.premise.violations, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn malformed_configs_rejected() {
        assert!(resolve("{").is_err());
        let bad_mu = TWO_AGENT.replace(r#""service": 1.0"#, r#""service": 2.0"#);
        assert!(matches!(resolve(&bad_mu), Err(ExperimentError::Config(_))));
        let bad_shape = TWO_AGENT.replace("[[0.0], [1.0]]", "[[0.0], [1.0], [2.0]]");
        assert!(matches!(resolve(&bad_shape), Err(ExperimentError::Config(_))));
        let unseeded = TWO_AGENT.replace(r#"{"kind": "constant", "value": 1.0}"#, r#"{"kind": "square_pe"}"#);
        assert!(matches!(resolve(&unseeded), Err(ExperimentError::Config(_))));
        let second_no_v = TWO_AGENT.replace(r#""horizon""#, r#""order": "second", "horizon""#);
        assert!(matches!(resolve(&second_no_v), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn seed_override_changes_hash() {
        let text = TWO_AGENT.replace(
            r#"{"kind": "explicit", "positions": [[0.0], [1.0]]}"#,
            r#"{"kind": "uniform", "low": -1.0, "high": 1.0, "seed": 3}"#,
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let a = Experiment::resolve(cfg.clone(), Path::new("."), &Overrides::default()).unwrap();
        let b = Experiment::resolve(cfg.clone(), Path::new("."), &Overrides::default()).unwrap();
        let c = Experiment::resolve(cfg, Path::new("."), &Overrides { seed: Some(4), ..Default::default() }).unwrap();
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        match (&a.initial, &c.initial) {
            (InitialState::First(x), InitialState::First(y)) => assert_ne!(x, y),
            _ => unreachable!(),
        }
    }

    #[test]
    fn check_record_directions() {
        assert!(CheckRecord::upper("u", 1.0, 1.0 + 1e-9, 1e-8).pass);
        assert!(!CheckRecord::upper("u", 1.0, 1.1, 1e-8).pass);
        assert!(CheckRecord::lower("l", 1.0, 0.95, 0.1).pass);
        assert!(!CheckRecord::lower("l", 1.0, 0.5, 0.1).pass);
        assert_eq!(CheckRecord::lower("l", 1.0, 1.5, 0.0).margin, 0.5);
    }
}
