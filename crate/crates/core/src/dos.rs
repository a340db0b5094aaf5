//! Denial-of-service attack schedules.
//!
//! A schedule is a sorted list of disjoint half-open intervals `[h_l, h_l + τ_l)`
//! during which the measurement channel is unavailable. Two budgets constrain
//! admissible schedules:
//!
//! * frequency: `n(t_a, t_b) ≤ η + (t_b − t_a)/τ_D`
//! * duration:  `|Π_D(t_a, t_b)| ≤ κ + (t_b − t_a)/T`
//!
//! `n(t_a, t_b)` counts the attack intervals whose closure meets `[t_a, t_b]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when comparing schedule times against grid times.
pub const TIME_EPS: f64 = 1e-9;

const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct AttackInterval {
    pub start: f64,
    pub duration: f64,
}

impl AttackInterval {
    pub fn new(start: f64, duration: f64) -> Self {
        Self { start, duration }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

impl From<(f64, f64)> for AttackInterval {
    fn from((start, duration): (f64, f64)) -> Self {
        Self { start, duration }
    }
}

impl From<AttackInterval> for (f64, f64) {
    fn from(i: AttackInterval) -> Self {
        (i.start, i.duration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct DosSchedule {
    intervals: Vec<AttackInterval>,
    horizon: f64,
}

#[derive(Deserialize)]
struct RawSchedule {
    intervals: Vec<AttackInterval>,
    horizon: f64,
}

impl TryFrom<RawSchedule> for DosSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        DosSchedule::new(raw.intervals, raw.horizon)
    }
}

impl DosSchedule {
    pub fn new(intervals: Vec<AttackInterval>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Schedule(format!("horizon must be positive, got {horizon}")));
        }
        for (l, iv) in intervals.iter().enumerate() {
            if !(iv.duration > 0.0) || !iv.start.is_finite() || !iv.duration.is_finite() {
                return Err(Error::Schedule(format!(
                    "interval {l} has non-positive or non-finite duration {}",
                    iv.duration
                )));
            }
            if iv.start < 0.0 || iv.end() > horizon + TIME_EPS {
                return Err(Error::Schedule(format!(
                    "interval {l} = [{}, {}) leaves [0, {horizon}]",
                    iv.start,
                    iv.end()
                )));
            }
            if l > 0 && intervals[l - 1].end() > iv.start + TIME_EPS {
                return Err(Error::Schedule(format!(
                    "intervals {} and {l} overlap or are out of order",
                    l - 1
                )));
            }
        }
        Ok(Self { intervals, horizon })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn intervals(&self) -> &[AttackInterval] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether `t` lies in an attack interval (left-closed, right-open).
    pub fn is_attacked(&self, t: f64) -> bool {
        // First interval whose end is beyond t.
        let idx = self
            .intervals
            .partition_point(|iv| iv.end() - TIME_EPS <= t);
        self.intervals
            .get(idx)
            .is_some_and(|iv| iv.start - TIME_EPS <= t)
    }

    /// `|Π_D(t_a, t_b)|`: Lebesgue measure of the attacked part of `(t_a, t_b)`.
    pub fn dos_measure(&self, t_a: f64, t_b: f64) -> Result<f64> {
        check_window(t_a, t_b)?;
        Ok(self
            .intervals
            .iter()
            .map(|iv| (iv.end().min(t_b) - iv.start.max(t_a)).max(0.0))
            .sum())
    }

    /// `|Π_N(t_a, t_b)| = (t_b − t_a) − |Π_D(t_a, t_b)|`.
    pub fn normal_measure(&self, t_a: f64, t_b: f64) -> Result<f64> {
        Ok((t_b - t_a) - self.dos_measure(t_a, t_b)?)
    }

    /// Number of attack intervals whose closure intersects `[t_a, t_b]`.
    pub fn transition_count(&self, t_a: f64, t_b: f64) -> Result<usize> {
        check_window(t_a, t_b)?;
        Ok(self.count_touching(t_a, t_b))
    }

    fn count_touching(&self, t_a: f64, t_b: f64) -> usize {
        let started = self.intervals.partition_point(|iv| iv.start <= t_b + TIME_EPS);
        let finished = self.intervals.partition_point(|iv| iv.end() < t_a - TIME_EPS);
        started.saturating_sub(finished)
    }

    /// Window endpoints at which the budget constraints can be tight.
    fn candidate_times(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(2 * self.intervals.len() + 2);
        times.push(0.0);
        for iv in &self.intervals {
            times.push(iv.start);
            times.push(iv.end());
        }
        times.push(self.horizon);
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    fn prefix_durations(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.intervals.len() + 1);
        acc.push(0.0);
        for iv in &self.intervals {
            acc.push(acc.last().copied().unwrap_or(0.0) + iv.duration);
        }
        acc
    }

    /// Attack measure in `[0, t]` using precomputed prefix sums.
    fn measure_until(&self, prefix: &[f64], t: f64) -> f64 {
        let idx = self.intervals.partition_point(|iv| iv.end() <= t);
        let mut total = prefix[idx];
        if let Some(iv) = self.intervals.get(idx) {
            total += (t - iv.start).clamp(0.0, iv.duration);
        }
        total
    }

    /// Largest `n(t_a, t_b) − (t_b − t_a)/τ_D` over endpoint windows.
    pub fn frequency_defect(&self, tau_d: f64) -> f64 {
        let times = self.candidate_times();
        let mut worst = f64::NEG_INFINITY;
        for (i, &ta) in times.iter().enumerate() {
            // t_a = t_b is the limit of arbitrarily short windows.
            for &tb in &times[i..] {
                let d = self.count_touching(ta, tb) as f64 - (tb - ta) / tau_d;
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest `|Π_D(t_a, t_b)| − (t_b − t_a)/T` over endpoint windows.
    pub fn duration_defect(&self, t_crit: f64) -> f64 {
        let times = self.candidate_times();
        let prefix = self.prefix_durations();
        let at: Vec<f64> = times
            .iter()
            .map(|&t| self.measure_until(&prefix, t))
            .collect();
        let mut worst = 0.0f64;
        for i in 0..times.len() {
            for j in i + 1..times.len() {
                worst = worst.max((at[j] - at[i]) - (times[j] - times[i]) / t_crit);
            }
        }
        worst
    }
}

fn check_window(t_a: f64, t_b: f64) -> Result<()> {
    if !(t_a >= 0.0 && t_a < t_b) {
        return Err(Error::InvalidArgument(format!(
            "window bounds must satisfy 0 ≤ t_a < t_b, got [{t_a}, {t_b}]"
        )));
    }
    Ok(())
}

/// Frequency (`η`, `τ_D`) and duration (`κ`, `T`) budget parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosParams {
    pub eta: f64,
    pub tau_d: f64,
    pub kappa: f64,
    /// Duration criterion `T`.
    #[serde(rename = "t")]
    pub t_crit: f64,
}

impl DosParams {
    /// Cruise-control benchmark values: η = 1, τ_D = 1 s, κ = 0.5 s, T = 2.
    pub fn benchmark() -> Self {
        Self {
            eta: 1.0,
            tau_d: 1.0,
            kappa: 0.5,
            t_crit: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        // η = 1 still admits a single attack in an arbitrarily short window.
        if !(self.eta >= 1.0 && self.eta.is_finite()) {
            problems.push(format!("eta must be ≥ 1, got {}", self.eta));
        }
        if !(self.tau_d > 0.0 && self.tau_d.is_finite()) {
            problems.push(format!("tau_d must be > 0, got {}", self.tau_d));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            problems.push(format!("kappa must be > 0, got {}", self.kappa));
        }
        if !(self.t_crit > 1.0 && self.t_crit.is_finite()) {
            problems.push(format!("T must be > 1, got {}", self.t_crit));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Longest single attack the duration budget permits, `κT/(T − 1)`.
    pub fn max_single_attack(&self) -> f64 {
        self.kappa * self.t_crit / (self.t_crit - 1.0)
    }
}

pub fn check_frequency(schedule: &DosSchedule, params: &DosParams) -> bool {
    schedule.frequency_defect(params.tau_d) <= params.eta + BUDGET_SLACK
}

pub fn check_duration(schedule: &DosSchedule, params: &DosParams) -> bool {
    schedule.duration_defect(params.t_crit) <= params.kappa + BUDGET_SLACK
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOptions {
    /// Times are snapped to multiples of this step.
    pub grid: f64,
    /// Mean inter-arrival gap; `None` uses `τ_D`.
    pub mean_gap: Option<f64>,
    /// Durations are drawn from `[min_frac, max_frac] · κT/(T − 1)`.
    pub min_frac: f64,
    pub max_frac: f64,
    pub max_rejections: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            grid: 1e-3,
            mean_gap: None,
            min_frac: 0.2,
            max_frac: 1.0,
            max_rejections: 10_000,
        }
    }
}

/// Random schedule satisfying both budgets, deterministic per seed.
///
/// Arrivals follow exponential gaps; an arrival that would break the
/// frequency budget is dropped, and its duration is shortened until the
/// duration budget holds (dropped if nothing on the grid fits).
pub fn generate_schedule(
    seed: u64,
    params: &DosParams,
    horizon: f64,
    opts: &GeneratorOptions,
) -> Result<DosSchedule> {
    params.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if !(opts.grid > 0.0) || !(0.0 <= opts.min_frac && opts.min_frac <= opts.max_frac) {
        return Err(Error::InvalidArgument("invalid generator options".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_gap = opts.mean_gap.unwrap_or(params.tau_d);
    let max_len = params.max_single_attack();
    let grid_steps = (horizon / opts.grid).floor() as i64;
    let snap = |t: f64| ((t / opts.grid).round() as i64).clamp(0, grid_steps);
    // Dividing by an integral step count keeps decimal grids free of
    // representation noise (3010 / 1000 rather than 3010 · 0.001).
    let per_unit = 1.0 / opts.grid;
    let at = |k: i64| {
        if (per_unit - per_unit.round()).abs() < 1e-9 {
            k as f64 / per_unit.round()
        } else {
            k as f64 * opts.grid
        }
    };

    let mut accepted: Vec<AttackInterval> = Vec::new();
    let mut cursor: i64 = 0;
    let mut rejections = 0usize;
    loop {
        let u: f64 = rng.random();
        let gap = -mean_gap * (1.0 - u).ln();
        let start_k = snap(cursor as f64 * opts.grid + gap).max(cursor);
        if start_k >= grid_steps {
            break;
        }
        let frac = rng.random_range(opts.min_frac..=opts.max_frac);
        let mut dur_k = snap(frac * max_len).min(grid_steps - start_k);
        let start = at(start_k);
        let mut placed = false;
        while dur_k > 0 {
            let end_k = start_k + dur_k;
            let mut trial = accepted.clone();
            trial.push(AttackInterval::new(
                start,
                at(end_k - start_k),
            ));
            let sched = DosSchedule::new(trial, horizon)?;
            if !check_frequency(&sched, params) {
                break;
            }
            if check_duration(&sched, params) {
                accepted = sched.intervals;
                cursor = end_k + 1;
                placed = true;
                break;
            }
            dur_k /= 2;
        }
        if !placed {
            rejections += 1;
            if rejections > opts.max_rejections {
                return Err(Error::Schedule(format!(
                    "gave up after {rejections} rejected arrivals; the budgets are infeasible for horizon {horizon}"
                )));
            }
            cursor = start_k + 1;
        }
    }
    DosSchedule::new(accepted, horizon)
}
