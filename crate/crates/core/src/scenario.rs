//! Scenario files and the staged collect → learn → certify → simulate →
//! compare pipeline.
//!
//! Stages exchange data only through files in the output directory, so any
//! stage can be rerun on its own once its inputs exist:
//!
//! | stage    | reads                                   | writes |
//! |----------|-----------------------------------------|--------|
//! | collect  | –                                       | `collect_trajectory.csv`, `regressors.txt`, `collect_report.json` |
//! | learn    | `collect_trajectory.csv`                | `policy.json`, `learn_report.json` |
//! | certify  | `policy.json`                           | `certificate.json` |
//! | simulate | `policy.json`, `collect_trajectory.csv` | `schedule.json`, `closed_loop.csv` |
//! | compare  | `policy.json`, `schedule.json`, `closed_loop.csv`, `collect_trajectory.csv` | `internal_model.csv`, `observer_resilient.csv`, `metrics.csv`, `comparison.svg` |
//!
//! `all` runs every stage and then writes `summary.json`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    compare_runs, design_internal_model, simulate_internal_model, simulate_observer_resilient,
    write_metrics_csv, ObserverResilientController, RunMetrics,
};
use crate::collect::{build_regressors, check_rank_condition, RankReport};
use crate::dos::{check_duration, check_frequency, generate_schedule, AttackInterval, DosParams, DosSchedule, GeneratorOptions};
use crate::error::{Error, Result};
use crate::learn::{learn_resilient_policy, LadderStep, LearnerConfig, PiTraceEntry, ResilientPolicy};
use crate::matops::{self, from_rows};
use crate::model::{
    admissible_gain, check_controllability, check_transmission_rank, solve_are_kleinman,
    solve_regulator_equations, AccParams, Exosystem, KleinmanOptions, Plant,
};
use crate::plot;
use crate::resilience::{proof_constants, verify_envelope, EnvelopeReport, ResilienceCertificate};
use crate::sim::{integrate_open_loop, require_data_windows, simulate_closed_loop, ExplorationSpec, Trajectory};

/// The cruise-control benchmark scenario.
pub const ACC_CONFIG: &str = include_str!("../configs/acc.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    plant: RawPlant,
    exosystem: RawExosystem,
    #[serde(default)]
    simulation: RawSimulation,
    exploration: Option<ExplorationSpec>,
    #[serde(default)]
    dos: RawDos,
    #[serde(default)]
    learner: RawLearner,
    #[serde(default)]
    output: RawOutput,
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    preset: Option<String>,
    tau_h: Option<f64>,
    t_l: Option<f64>,
    k_l: Option<f64>,
    omega: Option<f64>,
    a: Option<Rows>,
    b: Option<Rows>,
    c: Option<Rows>,
    d: Option<Rows>,
    f: Option<Rows>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExosystem {
    s: Option<Rows>,
    v0: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulation {
    x0: Option<Vec<f64>>,
    dt: f64,
    collect_end: f64,
    horizon: f64,
    check_after: Option<f64>,
}

impl Default for RawSimulation {
    fn default() -> Self {
        Self {
            x0: None,
            dt: 1e-3,
            collect_end: 2.0,
            horizon: 60.0,
            check_after: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDos {
    eta: f64,
    tau_d: f64,
    kappa: f64,
    t: f64,
    schedule: Option<Vec<(f64, f64)>>,
    generator: GeneratorOptions,
}

impl Default for RawDos {
    fn default() -> Self {
        let p = DosParams::benchmark();
        Self {
            eta: p.eta,
            tau_d: p.tau_d,
            kappa: p.kappa,
            t: p.t_crit,
            schedule: None,
            generator: GeneratorOptions::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLearner {
    epsilon: Option<f64>,
    lambda_init: Option<f64>,
    growth: Option<f64>,
    c_tol: Option<f64>,
    k_max: Option<usize>,
    max_lambda_steps: Option<usize>,
    residual_tol: Option<f64>,
    q: Option<Rows>,
    q_scale: Option<f64>,
    k0: Option<Rows>,
    k0_inflation: Option<f64>,
    window: Option<f64>,
    window_gap: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: String,
    plots: bool,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            plots: true,
        }
    }
}

/// Where the admissible initial gain comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGain {
    Explicit(DMatrix<f64>),
    /// Model-based optimum for the weight `inflation · Q`.
    Model { inflation: f64 },
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub plant: Plant,
    pub exo: Exosystem,
    pub x0: DVector<f64>,
    pub dt: f64,
    pub collect_end: f64,
    pub horizon: f64,
    pub check_after: f64,
    pub exploration: ExplorationSpec,
    pub dos: DosParams,
    pub schedule: Option<DosSchedule>,
    pub generator: GeneratorOptions,
    pub learner: LearnerConfig,
    pub q: DMatrix<f64>,
    pub k0: InitialGain,
    pub window: f64,
    pub window_gap: f64,
    pub output_dir: PathBuf,
    pub plots: bool,
}

fn matrix(name: &str, rows: &Option<Rows>, problems: &mut Vec<String>) -> Option<DMatrix<f64>> {
    let rows = rows.as_ref()?;
    match from_rows(rows) {
        Ok(m) => Some(m),
        Err(e) => {
            problems.push(format!("{name}: {e}"));
            None
        }
    }
}

fn is_multiple(t: f64, dt: f64) -> bool {
    let k = (t / dt).round();
    k >= 1.0 && (k * dt - t).abs() <= 1e-9 * t.max(1.0)
}

/// Parses and validates a scenario, reporting every problem found.
pub fn load_and_validate(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut problems = Vec::new();

    let (plant, default_s, default_x0) = match raw.plant.preset.as_deref() {
        Some("acc") => {
            let d = AccParams::default();
            let acc = AccParams {
                tau_h: raw.plant.tau_h.unwrap_or(d.tau_h),
                t_l: raw.plant.t_l.unwrap_or(d.t_l),
                k_l: raw.plant.k_l.unwrap_or(d.k_l),
                omega: raw.plant.omega.unwrap_or(d.omega),
            };
            if raw.plant.a.is_some() || raw.plant.b.is_some() {
                problems.push("plant: give either preset = \"acc\" or explicit matrices, not both".into());
            }
            (Some(acc.plant()), Some(acc.exosystem_matrix()), Some(DVector::from_vec(vec![1.0, 0.5, 0.0])))
        }
        Some(other) => {
            problems.push(format!("plant: unknown preset '{other}' (known: acc)"));
            (None, None, None)
        }
        None => {
            let mats: Vec<Option<DMatrix<f64>>> = [
                ("plant.a", &raw.plant.a),
                ("plant.b", &raw.plant.b),
                ("plant.c", &raw.plant.c),
                ("plant.d", &raw.plant.d),
                ("plant.f", &raw.plant.f),
            ]
            .iter()
            .map(|(name, rows)| {
                let m = matrix(name, rows, &mut problems);
                if rows.is_none() {
                    problems.push(format!("{name} is required without a preset"));
                }
                m
            })
            .collect();
            let plant = match mats.as_slice() {
                [Some(a), Some(b), Some(c), Some(d), Some(f)] => {
                    match Plant::new(a.clone(), b.clone(), c.clone(), d.clone(), f.clone()) {
                        Ok(p) => Some(p),
                        Err(e) => {
                            problems.push(format!("plant: {e}"));
                            None
                        }
                    }
                }
                _ => None,
            };
            (plant, None, None)
        }
    };

    let s = matrix("exosystem.s", &raw.exosystem.s, &mut problems).or(default_s);
    let exo = match s {
        Some(s) => match Exosystem::new(s, DVector::from_vec(raw.exosystem.v0.clone())) {
            Ok(e) => Some(e),
            Err(e) => {
                problems.push(format!("exosystem: {e}"));
                None
            }
        },
        None => {
            problems.push("exosystem.s is required without a plant preset".into());
            None
        }
    };

    let sim = &raw.simulation;
    if !(sim.dt > 0.0) {
        problems.push(format!("simulation.dt must be positive, got {}", sim.dt));
    } else {
        for (name, t) in [("collect_end", sim.collect_end), ("horizon", sim.horizon)] {
            if !is_multiple(t, sim.dt) {
                problems.push(format!("simulation.{name} = {t} must be a positive multiple of dt"));
            }
        }
    }
    let check_after = sim.check_after.unwrap_or(2.0 * sim.horizon / 3.0);
    if !(0.0..sim.horizon).contains(&check_after) {
        problems.push(format!("simulation.check_after = {check_after} must lie in [0, horizon)"));
    }

    let dos = DosParams {
        eta: raw.dos.eta,
        tau_d: raw.dos.tau_d,
        kappa: raw.dos.kappa,
        t_crit: raw.dos.t,
    };
    if let Err(e) = dos.validate() {
        problems.push(format!("dos: {e}"));
    }
    let schedule = match &raw.dos.schedule {
        Some(pairs) => {
            let ivs = pairs.iter().map(|&(s, d)| AttackInterval::new(s, d)).collect();
            match DosSchedule::new(ivs, sim.horizon) {
                Ok(s) => {
                    if !check_frequency(&s, &dos) {
                        problems.push("dos.schedule violates the attack frequency budget (eta, tau_d)".into());
                    }
                    if !check_duration(&s, &dos) {
                        problems.push("dos.schedule violates the attack duration budget (kappa, T)".into());
                    }
                    Some(s)
                }
                Err(e) => {
                    problems.push(format!("dos.schedule: {e}"));
                    None
                }
            }
        }
        None => None,
    };

    let d = LearnerConfig::default();
    let rl = &raw.learner;
    let learner = LearnerConfig {
        epsilon: rl.epsilon.unwrap_or(d.epsilon),
        lambda_init: rl.lambda_init.unwrap_or(d.lambda_init),
        growth: rl.growth.unwrap_or(d.growth),
        c_tol: rl.c_tol.unwrap_or(d.c_tol),
        k_max: rl.k_max.unwrap_or(d.k_max),
        max_lambda_steps: rl.max_lambda_steps.unwrap_or(d.max_lambda_steps),
        residual_tol: rl.residual_tol.unwrap_or(d.residual_tol),
    };
    if let Err(e) = learner.validate() {
        problems.push(format!("learner: {e}"));
    }
    let window = rl.window.unwrap_or(0.05);
    let window_gap = rl.window_gap.unwrap_or(0.0);
    if sim.dt > 0.0 && !is_multiple(window, sim.dt) {
        problems.push(format!("learner.window = {window} must be a positive multiple of dt"));
    }
    if !(window_gap >= 0.0) || (window_gap > 0.0 && sim.dt > 0.0 && !is_multiple(window_gap, sim.dt)) {
        problems.push(format!("learner.window_gap = {window_gap} must be a nonnegative multiple of dt"));
    }
    let explicit_q = matrix("learner.q", &rl.q, &mut problems);
    let explicit_k0 = matrix("learner.k0", &rl.k0, &mut problems);
    let k0 = match explicit_k0 {
        Some(k) => InitialGain::Explicit(k),
        None => InitialGain::Model {
            inflation: rl.k0_inflation.unwrap_or(2.0),
        },
    };
    if let InitialGain::Model { inflation } = k0 {
        if !(inflation >= 1.0) {
            problems.push(format!("learner.k0_inflation must be at least 1, got {inflation}"));
        }
    }

    let Some(plant) = plant else {
        return Err(Error::Config(problems.join("; ")));
    };
    let (n, m) = (plant.n(), plant.m());
    let q = explicit_q.unwrap_or_else(|| DMatrix::identity(n, n) * rl.q_scale.unwrap_or(1.0));
    if q.shape() != (n, n) {
        problems.push(format!("learner.q must be {n}x{n}"));
    } else if matops::check_symmetric(&q).is_err() || !matops::is_positive_definite(&q, 0.0) {
        problems.push("learner.q must be symmetric positive definite".into());
    }
    if let InitialGain::Explicit(k) = &k0 {
        if k.shape() != (m, n) {
            problems.push(format!("learner.k0 must be {m}x{n}"));
        }
    }

    let x0 = match &sim.x0 {
        Some(v) => DVector::from_vec(v.clone()),
        None => default_x0.unwrap_or_else(|| DVector::zeros(n)),
    };
    if x0.len() != n {
        problems.push(format!("simulation.x0 has length {}, expected n = {n}", x0.len()));
    }
    let exploration = raw.exploration.unwrap_or_else(|| {
        if m == 1 {
            ExplorationSpec::benchmark()
        } else {
            ExplorationSpec::none(m)
        }
    });
    if exploration.channels.len() != m {
        problems.push(format!(
            "exploration has {} channels, expected m = {m}",
            exploration.channels.len()
        ));
    }

    let ctrb = check_controllability(&plant);
    if !ctrb.controllable {
        problems.push(format!(
            "stabilizability assumption violated: (A, B) is not controllable (controllability rank {} < {n})",
            ctrb.rank
        ));
    }
    if matops::numerical_rank(&plant.c, matops::RANK_TOL) != plant.r() {
        problems.push("C must have full row rank".into());
    }
    if let Some(exo) = &exo {
        match exo.check_compatible(&plant) {
            Err(e) => problems.push(format!("exosystem: {e}")),
            Ok(()) => match check_transmission_rank(&plant, exo) {
                Ok(true) => {}
                Ok(false) => problems.push(
                    "transmission zero assumption violated: rank [[A − λI, B], [C, 0]] < n + r at an eigenvalue of S"
                        .into(),
                ),
                Err(e) => problems.push(format!("exosystem: {e}")),
            },
        }
    }

    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    Ok(ScenarioConfig {
        seed: raw.seed.unwrap_or(0),
        plant,
        exo: exo.expect("checked above"),
        x0,
        dt: sim.dt,
        collect_end: sim.collect_end,
        horizon: sim.horizon,
        check_after,
        exploration,
        dos,
        schedule,
        generator: raw.dos.generator,
        learner,
        q,
        k0,
        window,
        window_gap,
        output_dir: PathBuf::from(raw.output.dir),
        plots: raw.output.plots,
    })
}

pub fn load_config_file(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::MissingInput {
        path: path.display().to_string(),
        hint: e.to_string(),
    })?;
    load_and_validate(&text).map_err(|e| e.in_stage(&format!("config {}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Collect,
    Learn,
    Certify,
    Simulate,
    Compare,
    All,
}

impl Stage {
    pub const NAMES: [&'static str; 6] = ["collect", "learn", "certify", "simulate", "compare", "all"];
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "collect" => Stage::Collect,
            "learn" => Stage::Learn,
            "certify" => Stage::Certify,
            "simulate" => Stage::Simulate,
            "compare" => Stage::Compare,
            "all" => Stage::All,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown stage '{other}' (expected one of {})",
                    Stage::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = *self as usize;
        f.write_str(Stage::NAMES[i])
    }
}

pub const COLLECT_CSV: &str = "collect_trajectory.csv";
pub const POLICY_JSON: &str = "policy.json";
pub const CERTIFICATE_JSON: &str = "certificate.json";
pub const SCHEDULE_JSON: &str = "schedule.json";
pub const CLOSED_LOOP_CSV: &str = "closed_loop.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, Serialize)]
pub struct CollectReport {
    pub windows: usize,
    pub window_length: f64,
    pub rank: RankReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnReport {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub lambda_attempts: usize,
    pub ladder: Vec<LadderStep>,
    pub phase1_rel_residual: f64,
    pub k_star: usize,
    pub pi_trace: Vec<PiTraceEntry>,
    pub sylvester_rel_residuals: Vec<f64>,
    pub trial_matrices: usize,
    pub policy: ResilientPolicy,
}

/// Learned quantities measured against model-based solutions.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub k_rel_error: f64,
    pub p_rel_error: f64,
    pub x_rel_error: f64,
    pub u_rel_error: f64,
    pub regulator_residual: f64,
    pub output_residual: f64,
    #[serde(with = "matops::rows_serde")]
    pub k_oracle: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleReport {
    pub schedule: DosSchedule,
    pub attack_fraction: f64,
    pub frequency_ok: bool,
    pub duration_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedLoopReport {
    pub envelope: EnvelopeReport,
    pub check_after: f64,
    pub max_error_after: f64,
    pub schedule_certified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dimensions {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub r: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub dimensions: Dimensions,
    pub collection: CollectReport,
    pub learning: LearnReport,
    pub oracle: OracleReport,
    pub certificate: ResilienceCertificate,
    pub schedule: ScheduleReport,
    pub closed_loop: ClosedLoopReport,
    pub metrics: Vec<RunMetrics>,
}

/// Runs pipeline stages against one output directory.
pub struct Pipeline<'a> {
    pub cfg: &'a ScenarioConfig,
    pub out: PathBuf,
    pub plots: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / denom
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a ScenarioConfig, out: impl Into<PathBuf>, plots: bool) -> Result<Self> {
        let out = out.into();
        fs::create_dir_all(&out)?;
        Ok(Self { cfg, out, plots })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn open(&self, name: &str, producer: Stage) -> Result<File> {
        let path = self.path(name);
        File::open(&path).map_err(|_| Error::MissingInput {
            path: path.display().to_string(),
            hint: format!("run the '{producer}' stage first"),
        })
    }

    fn read_trajectory(&self, name: &str, producer: Stage) -> Result<Trajectory> {
        let mut tr = Trajectory::read_csv(BufReader::new(self.open(name, producer)?))?;
        tr.dt = self.cfg.dt;
        Ok(tr)
    }

    fn read_policy(&self) -> Result<ResilientPolicy> {
        let f = self.open(POLICY_JSON, Stage::Learn)?;
        let p: ResilientPolicy = serde_json::from_reader(BufReader::new(f))?;
        p.check_dims(self.cfg.plant.n(), self.cfg.plant.m(), self.cfg.plant.q())?;
        Ok(p)
    }

    fn read_schedule(&self) -> Result<DosSchedule> {
        let f = self.open(SCHEDULE_JSON, Stage::Simulate)?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    fn windows(&self) -> Result<Vec<(f64, f64)>> {
        let (n, m, q) = (self.cfg.plant.n(), self.cfg.plant.m(), self.cfg.plant.q());
        require_data_windows(
            None,
            0.0,
            self.cfg.collect_end,
            self.cfg.window,
            self.cfg.window_gap,
            n * (n + 1) / 2 + (m + q) * n,
        )
    }

    /// Open-loop data collection with the exploration input.
    pub fn collect(&self) -> Result<CollectReport> {
        let c = self.cfg;
        let traj = integrate_open_loop(&c.plant, &c.exo, &c.exploration, None, &c.x0, c.collect_end, c.dt)?;
        traj.write_csv(BufWriter::new(File::create(self.path(COLLECT_CSV))?))?;
        let windows = self.windows()?;
        let regs = build_regressors(&traj, &windows, &DMatrix::zeros(c.plant.n(), c.plant.q()))?;
        regs.write_dump(BufWriter::new(File::create(self.path("regressors.txt"))?))?;
        let report = CollectReport {
            windows: windows.len(),
            window_length: c.window,
            rank: check_rank_condition(&regs, c.plant.n(), c.plant.m(), c.plant.q()),
        };
        write_json(&self.path("collect_report.json"), &report)?;
        Ok(report)
    }

    pub fn learn(&self) -> Result<LearnReport> {
        let c = self.cfg;
        let traj = self.read_trajectory(COLLECT_CSV, Stage::Collect)?;
        let windows = self.windows()?;
        let out = learn_resilient_policy(
            &traj,
            &windows,
            &c.plant.c,
            &c.plant.f,
            &c.q,
            c.dos.t_crit,
            &c.learner,
            |lambda_minus| match &c.k0 {
                InitialGain::Explicit(k) => Ok(k.clone()),
                InitialGain::Model { inflation } => admissible_gain(&c.plant, &c.q, lambda_minus, *inflation),
            },
        )?;
        write_json(&self.path(POLICY_JSON), &out.policy)?;
        let report = LearnReport {
            lambda_plus: out.phase1.lambda_plus,
            lambda_minus: out.policy.lambda_minus,
            lambda_attempts: out.phase1.attempts,
            ladder: out.phase1.ladder.clone(),
            phase1_rel_residual: out.phase1.rel_residual,
            k_star: out.pi.k_star,
            pi_trace: out.pi.trace.clone(),
            sylvester_rel_residuals: out.sylvester.iter().map(|s| s.rel_residual).collect(),
            trial_matrices: out.trial.len(),
            policy: out.policy,
        };
        write_json(&self.path("learn_report.json"), &report)?;
        Ok(report)
    }

    pub fn certify(&self) -> Result<ResilienceCertificate> {
        let p = self.read_policy()?;
        let cert = proof_constants(&p.p_k, &p.p_plus, &self.cfg.q, &self.cfg.dos, p.lambda_plus, p.lambda_minus)?;
        write_json(&self.path(CERTIFICATE_JSON), &cert)?;
        Ok(cert)
    }

    /// Closed-loop start: the state and exosystem at the end of collection.
    fn handover(&self) -> Result<(DVector<f64>, Exosystem)> {
        let collected = self.read_trajectory(COLLECT_CSV, Stage::Collect)?;
        let x = collected.x.last().cloned().ok_or_else(|| Error::MissingInput {
            path: self.path(COLLECT_CSV).display().to_string(),
            hint: "collection trajectory is empty".into(),
        })?;
        let v = collected.v.last().cloned().expect("same length as x");
        Ok((x, Exosystem::new(self.cfg.exo.s.clone(), v)?))
    }

    pub fn schedule(&self) -> Result<DosSchedule> {
        match &self.cfg.schedule {
            Some(s) => Ok(s.clone()),
            None => generate_schedule(self.cfg.seed, &self.cfg.dos, self.cfg.horizon, &self.cfg.generator),
        }
    }

    pub fn simulate(&self) -> Result<ScheduleReport> {
        let c = self.cfg;
        let policy = self.read_policy()?;
        let schedule = self.schedule()?;
        write_json(&self.path(SCHEDULE_JSON), &schedule)?;
        let (x0, exo) = self.handover()?;
        let tr = simulate_closed_loop(&c.plant, &exo, &policy, &schedule, &x0, c.horizon, c.dt)?;
        tr.write_csv(BufWriter::new(File::create(self.path(CLOSED_LOOP_CSV))?))?;
        Ok(ScheduleReport {
            attack_fraction: schedule.dos_measure(0.0, schedule.horizon())? / schedule.horizon(),
            frequency_ok: check_frequency(&schedule, &c.dos),
            duration_ok: check_duration(&schedule, &c.dos),
            schedule,
        })
    }

    pub fn compare(&self) -> Result<Vec<RunMetrics>> {
        let c = self.cfg;
        let policy = self.read_policy()?;
        let schedule = self.read_schedule()?;
        let learned = self.read_trajectory(CLOSED_LOOP_CSV, Stage::Simulate)?;
        let (x0, exo) = self.handover()?;

        let im = design_internal_model(&c.plant, &exo)?;
        let im_run = simulate_internal_model(&c.plant, &exo, &im, &schedule, &x0, c.horizon, c.dt)?;
        let k0 = admissible_gain(&c.plant, &c.q, policy.lambda_minus, 2.0)?;
        let k_star = solve_are_kleinman(&c.plant, &c.q, policy.lambda_minus, &k0, KleinmanOptions::default())?.k;
        let obs = ObserverResilientController::new(&c.plant, k_star)?;
        let obs_run = simulate_observer_resilient(&c.plant, &exo, &obs, &schedule, &x0, c.horizon, c.dt)?;
        im_run.write_csv(BufWriter::new(File::create(self.path("internal_model.csv"))?))?;
        obs_run.write_csv(BufWriter::new(File::create(self.path("observer_resilient.csv"))?))?;

        let runs = [
            ("learned", &learned),
            ("observer-resilient", &obs_run),
            ("internal-model", &im_run),
        ];
        let metrics = compare_runs(&runs)?;
        write_metrics_csv(&metrics, BufWriter::new(File::create(self.path(METRICS_CSV))?))?;
        if self.plots {
            plot::write_error_plot(
                &self.path("comparison.svg"),
                "Tracking error under DoS",
                &runs,
                0,
                Some(&schedule),
            )?;
        }
        Ok(metrics)
    }

    fn oracle(&self, policy: &ResilientPolicy) -> Result<OracleReport> {
        let c = self.cfg;
        let k0 = admissible_gain(&c.plant, &c.q, policy.lambda_minus, 2.0)?;
        let lqr = solve_are_kleinman(&c.plant, &c.q, policy.lambda_minus, &k0, KleinmanOptions::default())?;
        let reg = solve_regulator_equations(&c.plant, &c.exo)?;
        let (regulator_residual, output_residual) =
            crate::model::regulator_residuals(&c.plant, &c.exo.s, &policy.x, &policy.u);
        Ok(OracleReport {
            k_rel_error: rel(&policy.k, &lqr.k),
            p_rel_error: rel(&policy.p_k, &lqr.p),
            x_rel_error: rel(&policy.x, &reg.x),
            u_rel_error: rel(&policy.u, &reg.u),
            regulator_residual,
            output_residual,
            k_oracle: lqr.k,
        })
    }

    /// Every stage in order, then `summary.json`.
    pub fn all(&self) -> Result<Summary> {
        let c = self.cfg;
        let collection = self.collect().map_err(|e| e.in_stage("collect"))?;
        let learning = self.learn().map_err(|e| e.in_stage("learn"))?;
        let certificate = self.certify().map_err(|e| e.in_stage("certify"))?;
        let schedule = self.simulate().map_err(|e| e.in_stage("simulate"))?;
        let metrics = self.compare().map_err(|e| e.in_stage("compare"))?;
        let oracle = self.oracle(&learning.policy).map_err(|e| e.in_stage("oracle"))?;

        let closed = self.read_trajectory(CLOSED_LOOP_CSV, Stage::Simulate)?;
        let envelope = verify_envelope(&closed, &certificate, &learning.policy.x);
        let max_error_after = closed
            .times
            .iter()
            .zip(closed.error_norms())
            .filter(|(t, _)| **t > c.check_after)
            .map(|(_, e)| e)
            .fold(0.0, f64::max);
        let schedule_certified = schedule.schedule.frequency_defect(certificate.tau_d_bound) <= c.dos.eta + 1e-12
            && schedule.duration_ok;
        let summary = Summary {
            seed: c.seed,
            dimensions: Dimensions {
                n: c.plant.n(),
                m: c.plant.m(),
                q: c.plant.q(),
                r: c.plant.r(),
            },
            collection,
            learning,
            oracle,
            certificate,
            schedule,
            closed_loop: ClosedLoopReport {
                envelope,
                check_after: c.check_after,
                max_error_after,
                schedule_certified,
            },
            metrics,
        };
        write_json(&self.path(SUMMARY_JSON), &summary)?;
        Ok(summary)
    }
}

/// What a single pipeline invocation produced.
#[derive(Debug, Clone)]
pub enum StageOutput {
    Collect(CollectReport),
    Learn(Box<LearnReport>),
    Certify(ResilienceCertificate),
    Simulate(ScheduleReport),
    Compare(Vec<RunMetrics>),
    All(Box<Summary>),
}

pub fn run_pipeline(cfg: &ScenarioConfig, stage: Stage, out: &Path, plots: bool) -> Result<StageOutput> {
    let p = Pipeline::new(cfg, out, plots)?;
    let ctx = |e: Error| e.in_stage(&stage.to_string());
    Ok(match stage {
        Stage::Collect => StageOutput::Collect(p.collect().map_err(ctx)?),
        Stage::Learn => StageOutput::Learn(Box::new(p.learn().map_err(ctx)?)),
        Stage::Certify => StageOutput::Certify(p.certify().map_err(ctx)?),
        Stage::Simulate => StageOutput::Simulate(p.simulate().map_err(ctx)?),
        Stage::Compare => StageOutput::Compare(p.compare().map_err(ctx)?),
        Stage::All => StageOutput::All(Box::new(p.all()?)),
    })
}
