//! Comparison controllers and run metrics.
//!
//! * [`InternalModelController`]: `u = −K_x x − K_z z`, `ż = Sz + G_2 e`,
//!   unaware of attacks; it holds the last received `x` and `e` while the
//!   channel is down.
//! * [`ObserverResilientController`]: `u = −K x̂` where `x̂` is propagated by
//!   the nominal model during attacks and reset to `x` otherwise.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dos::DosSchedule;
use crate::error::{Error, Result};
use crate::matops::{self, numerical_rank, RANK_TOL};
use crate::model::{kleinman, stabilizing_gain, Exosystem, KleinmanOptions, Plant};
use crate::sim::{simulate, Controller, Trajectory};

/// Settling threshold on `|e|`.
pub const SETTLING_BAND: f64 = 0.01;

fn pair_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut ctrb = DMatrix::zeros(n, n * b.ncols());
    let mut block = b.clone();
    for k in 0..n {
        ctrb.columns_mut(k * b.ncols(), b.ncols()).copy_from(&block);
        block = a * block;
    }
    numerical_rank(&ctrb, RANK_TOL) == n
}

#[derive(Debug, Clone)]
pub struct InternalModelController {
    pub kx: DMatrix<f64>,
    pub kz: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    s: DMatrix<f64>,
    c: DMatrix<f64>,
    f: DMatrix<f64>,
    held_x: DVector<f64>,
    held_e: DVector<f64>,
    was_attacked: bool,
}

impl InternalModelController {
    /// `[[A − BK_x, −BK_z], [G_2C, S]]`.
    pub fn augmented_matrix(&self, plant: &Plant) -> DMatrix<f64> {
        let (n, q) = (plant.n(), self.s.nrows());
        let mut m = DMatrix::zeros(n + q, n + q);
        m.view_mut((0, 0), (n, n)).copy_from(&(&plant.a - &plant.b * &self.kx));
        m.view_mut((0, n), (n, q)).copy_from(&(-(&plant.b * &self.kz)));
        m.view_mut((n, 0), (q, n)).copy_from(&(&self.g2 * &plant.c));
        m.view_mut((n, n), (q, q)).copy_from(&self.s);
        m
    }
}

/// Candidate `G_2` patterns tried in order until `(S, G_2)` is controllable.
fn g2_candidates(q: usize, r: usize) -> Vec<DMatrix<f64>> {
    let mut out = vec![DMatrix::from_element(q, r, 1.0)];
    for seed in 1..=5 {
        out.push(DMatrix::from_fn(q, r, |i, j| {
            (((i * r + j + 1) * (seed * 7 + 3)) as f64).sin() + 1.5
        }));
    }
    out
}

/// Picks `G_2` and computes `(K_x, K_z)` by LQR (identity weights) on the
/// augmented pair `([[A, 0], [G_2C, S]], [B; 0])`.
pub fn design_internal_model(plant: &Plant, exo: &Exosystem) -> Result<InternalModelController> {
    exo.check_compatible(plant)?;
    let g2 = g2_candidates(exo.q(), plant.r())
        .into_iter()
        .find(|g| pair_controllable(&exo.s, g))
        .ok_or_else(|| Error::Assumption("no G2 makes (S, G2) controllable".into()))?;
    design_internal_model_with(plant, exo, g2)
}

pub fn design_internal_model_with(
    plant: &Plant,
    exo: &Exosystem,
    g2: DMatrix<f64>,
) -> Result<InternalModelController> {
    let (n, m, q) = (plant.n(), plant.m(), exo.q());
    if g2.shape() != (q, plant.r()) {
        return Err(Error::Dimension(format!("G2 must be {q}x{}", plant.r())));
    }
    if !pair_controllable(&exo.s, &g2) {
        return Err(Error::Assumption("(S, G2) is not controllable".into()));
    }
    let mut a_aug = DMatrix::zeros(n + q, n + q);
    a_aug.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    a_aug.view_mut((n, 0), (q, n)).copy_from(&(&g2 * &plant.c));
    a_aug.view_mut((n, n), (q, q)).copy_from(&exo.s);
    let mut b_aug = DMatrix::zeros(n + q, m);
    b_aug.view_mut((0, 0), (n, m)).copy_from(&plant.b);

    let k0 = stabilizing_gain(&a_aug, &b_aug)
        .map_err(|e| e.in_stage("internal-model stabilization"))?;
    let lqr = kleinman(
        &a_aug,
        &b_aug,
        &DMatrix::identity(n + q, n + q),
        0.0,
        &k0,
        KleinmanOptions::default(),
    )
    .map_err(|e| e.in_stage("internal-model LQR"))?;
    let ctrl = InternalModelController {
        kx: lqr.k.columns(0, n).into_owned(),
        kz: lqr.k.columns(n, q).into_owned(),
        g2,
        s: exo.s.clone(),
        c: plant.c.clone(),
        f: plant.f.clone(),
        held_x: DVector::zeros(n),
        held_e: DVector::zeros(plant.r()),
        was_attacked: false,
    };
    let rep = matops::is_hurwitz(&ctrl.augmented_matrix(plant))?;
    if !rep.hurwitz {
        return Err(Error::Assumption(format!(
            "augmented internal-model loop is not Hurwitz (abscissa {:.3e})",
            rep.margin
        )));
    }
    Ok(ctrl)
}

impl Controller for InternalModelController {
    fn state_dim(&self) -> usize {
        self.s.nrows()
    }

    fn on_grid(&mut self, _t: f64, x: &DVector<f64>, v: &DVector<f64>, _z: &mut DVector<f64>, attacked: bool) {
        // The sample at the first attacked instant is the last one received.
        if !attacked || !self.was_attacked {
            self.held_x = x.clone();
            self.held_e = &self.c * x + &self.f * v;
        }
        self.was_attacked = attacked;
    }

    fn control(&self, _t: f64, x: &DVector<f64>, _v: &DVector<f64>, z: &DVector<f64>, attacked: bool) -> DVector<f64> {
        let xs = if attacked { &self.held_x } else { x };
        -(&self.kx * xs) - &self.kz * z
    }

    fn state_derivative(
        &self,
        _t: f64,
        x: &DVector<f64>,
        v: &DVector<f64>,
        z: &DVector<f64>,
        _u: &DVector<f64>,
        attacked: bool,
    ) -> DVector<f64> {
        let e = if attacked {
            self.held_e.clone()
        } else {
            &self.c * x + &self.f * v
        };
        &self.s * z + &self.g2 * e
    }
}

pub fn simulate_internal_model(
    plant: &Plant,
    exo: &Exosystem,
    ctrl: &InternalModelController,
    schedule: &DosSchedule,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let mut c = ctrl.clone();
    c.was_attacked = false;
    simulate(plant, exo, &mut c, Some(schedule), x0, t_end, dt)
}

#[derive(Debug, Clone)]
pub struct ObserverResilientController {
    pub k: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    was_attacked: bool,
}

impl ObserverResilientController {
    pub fn new(plant: &Plant, k: DMatrix<f64>) -> Result<Self> {
        if k.shape() != (plant.m(), plant.n()) {
            return Err(Error::Dimension("observer gain must be m x n".into()));
        }
        Ok(Self {
            k,
            a: plant.a.clone(),
            b: plant.b.clone(),
            was_attacked: false,
        })
    }
}

impl Controller for ObserverResilientController {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn on_grid(&mut self, _t: f64, x: &DVector<f64>, _v: &DVector<f64>, xh: &mut DVector<f64>, attacked: bool) {
        if !attacked || !self.was_attacked {
            xh.copy_from(x);
        }
        self.was_attacked = attacked;
    }

    fn control(&self, _t: f64, x: &DVector<f64>, _v: &DVector<f64>, xh: &DVector<f64>, attacked: bool) -> DVector<f64> {
        if attacked {
            -(&self.k * xh)
        } else {
            -(&self.k * x)
        }
    }

    fn state_derivative(
        &self,
        _t: f64,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        xh: &DVector<f64>,
        u: &DVector<f64>,
        attacked: bool,
    ) -> DVector<f64> {
        if attacked {
            &self.a * xh + &self.b * u
        } else {
            DVector::zeros(xh.len())
        }
    }
}

pub fn simulate_observer_resilient(
    plant: &Plant,
    exo: &Exosystem,
    ctrl: &ObserverResilientController,
    schedule: &DosSchedule,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let mut c = ctrl.clone();
    c.was_attacked = false;
    simulate(plant, exo, &mut c, Some(schedule), x0, t_end, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub label: String,
    /// RMS of `|e|` over the final quarter of the horizon.
    pub final_rms: f64,
    pub peak_error: f64,
    /// First time after which `|e| < SETTLING_BAND` for the rest of the run.
    pub settling_time: Option<f64>,
}

pub fn run_metrics(label: &str, traj: &Trajectory) -> RunMetrics {
    let norms = traj.error_norms();
    let len = norms.len();
    let tail_start = len - len / 4;
    let tail = &norms[tail_start.min(len.saturating_sub(1))..];
    let final_rms = if tail.is_empty() {
        0.0
    } else {
        (tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64).sqrt()
    };
    let peak_error = norms.iter().copied().fold(0.0, f64::max);
    let settling_time = match norms.iter().rposition(|&e| e >= SETTLING_BAND) {
        None => traj.times.first().copied(),
        Some(k) if k + 1 < len => Some(traj.times[k + 1]),
        Some(_) => None,
    };
    RunMetrics {
        label: label.to_string(),
        final_rms,
        peak_error,
        settling_time,
    }
}

pub fn compare_runs(runs: &[(&str, &Trajectory)]) -> Result<Vec<RunMetrics>> {
    if let Some((_, first)) = runs.first() {
        for (label, tr) in runs {
            let same_grid = tr.len() == first.len()
                && (tr.dt - first.dt).abs() <= 1e-12 * first.dt
                && tr.times.first() == first.times.first();
            if !same_grid {
                return Err(Error::InvalidArgument(format!(
                    "run '{label}' is not on the same time grid as '{}'",
                    runs[0].0
                )));
            }
        }
    }
    Ok(runs.iter().map(|(l, t)| run_metrics(l, t)).collect())
}

pub fn write_metrics_csv<W: Write>(metrics: &[RunMetrics], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["label", "final_rms", "peak_error", "settling_time"])?;
    for m in metrics {
        wr.write_record([
            m.label.clone(),
            format!("{:e}", m.final_rms),
            format!("{:e}", m.peak_error),
            m.settling_time.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
