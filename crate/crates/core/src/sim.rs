//! Fixed-step RK4 simulation of plant and exosystem, with CSV export.
//!
//! Controllers see the schedule through an `attacked` flag. The integrator
//! picks one mode per step (the mode at the step midpoint), so on-grid
//! schedules switch exactly at grid points.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dos::{DosSchedule, TIME_EPS};
use crate::error::{Error, Result};
use crate::learn::ResilientPolicy;
use crate::model::{Exosystem, Plant};

/// Default integrator step (s).
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
    pub attacked: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let first = |s: &Vec<DVector<f64>>| s.first().map_or(0, |z| z.len());
        (first(&self.x), first(&self.u), first(&self.v), first(&self.e))
    }

    /// Grid index of time `t`, or an error when `t` is not a grid point.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let t0 = self.times.first().copied().unwrap_or(0.0);
        let k = ((t - t0) / self.dt).round();
        if k < 0.0 || (k as usize) >= self.len() || ((t - t0) - k * self.dt).abs() > 1e-6 * self.dt
        {
            return Err(Error::InvalidArgument(format!(
                "time {t} is not on the trajectory grid (dt = {}, span [{t0}, {}])",
                self.dt,
                self.times.last().copied().unwrap_or(t0)
            )));
        }
        Ok(k as usize)
    }

    /// `x̃ = x − X v` at every grid point.
    pub fn steady_state_error(&self, x_reg: &DMatrix<f64>) -> Vec<DVector<f64>> {
        self.x
            .iter()
            .zip(&self.v)
            .map(|(x, v)| x - x_reg * v)
            .collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.e.iter().map(|e| e.norm()).collect()
    }

    fn header(&self) -> Vec<String> {
        let (n, m, q, r) = self.dims();
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|i| format!("x{i}")));
        h.extend((1..=m).map(|i| format!("u{i}")));
        h.extend((1..=q).map(|i| format!("v{i}")));
        h.extend((1..=r).map(|i| format!("e{i}")));
        h.push("attacked".into());
        h
    }

    /// Columns: `t, x1..xn, u1..um, v1..vq, e1..er, attacked` (0/1).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        for k in 0..self.len() {
            let mut rec = vec![self.times[k].to_string()];
            for s in [&self.x[k], &self.u[k], &self.v[k], &self.e[k]] {
                rec.extend(s.iter().map(f64::to_string));
            }
            rec.push(if self.attacked[k] { "1" } else { "0" }.into());
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let count = |prefix: char| {
            headers
                .iter()
                .filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
                .count()
        };
        let (n, m, q, r) = (count('x'), count('u'), count('v'), count('e'));
        if headers.get(0) != Some("t") || headers.iter().last() != Some("attacked") {
            return Err(Error::InvalidArgument(
                "trajectory CSV must start with `t` and end with `attacked`".into(),
            ));
        }
        let mut traj = Trajectory {
            dt: 0.0,
            times: Vec::new(),
            x: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            e: Vec::new(),
            attacked: Vec::new(),
        };
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .take(1 + n + m + q + r)
                .map(|s| {
                    s.parse::<f64>().map_err(|e| {
                        Error::InvalidArgument(format!("CSV row {}: {e}", line + 2))
                    })
                })
                .collect::<Result<_>>()?;
            let slice = |a: usize, len: usize| DVector::from_column_slice(&vals[a..a + len]);
            traj.times.push(vals[0]);
            traj.x.push(slice(1, n));
            traj.u.push(slice(1 + n, m));
            traj.v.push(slice(1 + n + m, q));
            traj.e.push(slice(1 + n + m + q, r));
            traj.attacked.push(rec.get(1 + n + m + q + r) == Some("1"));
        }
        if traj.times.len() >= 2 {
            traj.dt = traj.times[1] - traj.times[0];
        }
        Ok(traj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidTerm {
    pub amplitude: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Exploration signal: a sum of sinusoids on each input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSpec {
    pub channels: Vec<Vec<SinusoidTerm>>,
}

impl ExplorationSpec {
    pub fn none(m: usize) -> Self {
        Self {
            channels: vec![Vec::new(); m],
        }
    }

    /// `0.1 sin(6πt) + 0.1 sin(12πt)` on a single input.
    pub fn benchmark() -> Self {
        Self {
            channels: vec![vec![
                SinusoidTerm {
                    amplitude: 0.1,
                    frequency_hz: 3.0,
                    phase: 0.0,
                },
                SinusoidTerm {
                    amplitude: 0.1,
                    frequency_hz: 6.0,
                    phase: 0.0,
                },
            ]],
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|terms| {
                terms
                    .iter()
                    .map(|s| {
                        s.amplitude
                            * (2.0 * std::f64::consts::PI * s.frequency_hz * t + s.phase).sin()
                    })
                    .sum::<f64>()
            }),
        )
    }
}

/// A feedback law, possibly with internal state, driven on the simulation grid.
pub trait Controller {
    /// Dimension of the controller's continuous internal state.
    fn state_dim(&self) -> usize {
        0
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(self.state_dim())
    }

    /// Called at every grid point before the control is evaluated there.
    fn on_grid(
        &mut self,
        _t: f64,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        _state: &mut DVector<f64>,
        _attacked: bool,
    ) {
    }

    fn control(
        &self,
        t: f64,
        x: &DVector<f64>,
        v: &DVector<f64>,
        state: &DVector<f64>,
        attacked: bool,
    ) -> DVector<f64>;

    fn state_derivative(
        &self,
        _t: f64,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        state: &DVector<f64>,
        _u: &DVector<f64>,
        _attacked: bool,
    ) -> DVector<f64> {
        DVector::zeros(state.len())
    }
}

/// `u = −K_base x + ξ(t)`.
pub struct ExplorationController<'a> {
    pub base_gain: Option<&'a DMatrix<f64>>,
    pub exploration: &'a ExplorationSpec,
}

impl Controller for ExplorationController<'_> {
    fn control(
        &self,
        t: f64,
        x: &DVector<f64>,
        _v: &DVector<f64>,
        _state: &DVector<f64>,
        _attacked: bool,
    ) -> DVector<f64> {
        let xi = self.exploration.eval(t);
        match self.base_gain {
            Some(k) => xi - k * x,
            None => xi,
        }
    }
}

/// The switched resilient law: `−Kx + Lv` with normal communication, `Uv`
/// under attack.
pub struct PolicyController<'a>(pub &'a ResilientPolicy);

impl Controller for PolicyController<'_> {
    fn control(
        &self,
        _t: f64,
        x: &DVector<f64>,
        v: &DVector<f64>,
        _state: &DVector<f64>,
        attacked: bool,
    ) -> DVector<f64> {
        self.0.control(x, v, attacked)
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_end > 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Integrates plant, exosystem and controller on `[0, t_end]` with step `dt`.
pub fn simulate<C: Controller>(
    plant: &Plant,
    exo: &Exosystem,
    controller: &mut C,
    schedule: Option<&DosSchedule>,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    exo.check_compatible(plant)?;
    let (n, q) = (plant.n(), plant.q());
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    let steps = step_count(t_end, dt)?;
    let nz = controller.state_dim();
    let attacked_at = |t: f64| schedule.is_some_and(|s| s.is_attacked(t));

    let split = |z: &DVector<f64>| {
        (
            z.rows(0, n).into_owned(),
            z.rows(n, q).into_owned(),
            z.rows(n + q, nz).into_owned(),
        )
    };
    let mut z = DVector::zeros(n + q + nz);
    z.rows_mut(0, n).copy_from(x0);
    z.rows_mut(n, q).copy_from(&exo.v0);
    z.rows_mut(n + q, nz).copy_from(&controller.initial_state());

    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        e: Vec::with_capacity(steps + 1),
        attacked: Vec::with_capacity(steps + 1),
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        let attacked_now = attacked_at(t);
        {
            let (x, v, mut c) = split(&z);
            controller.on_grid(t, &x, &v, &mut c, attacked_now);
            z.rows_mut(n + q, nz).copy_from(&c);
            let u = controller.control(t, &x, &v, &c, attacked_now);
            traj.times.push(t);
            traj.e.push(plant.error(&x, &v));
            traj.x.push(x);
            traj.u.push(u);
            traj.v.push(v);
            traj.attacked.push(attacked_now);
        }
        if k == steps {
            break;
        }
        let mode = attacked_at(t + 0.5 * dt);
        let ctrl: &C = controller;
        let deriv = |tt: f64, zz: &DVector<f64>| -> DVector<f64> {
            let (x, v, c) = split(zz);
            let u = ctrl.control(tt, &x, &v, &c, mode);
            let mut dz = DVector::zeros(n + q + nz);
            dz.rows_mut(0, n)
                .copy_from(&(&plant.a * &x + &plant.b * &u + &plant.d * &v));
            dz.rows_mut(n, q).copy_from(&(&exo.s * &v));
            dz.rows_mut(n + q, nz)
                .copy_from(&ctrl.state_derivative(tt, &x, &v, &c, &u, mode));
            dz
        };
        let k1 = deriv(t, &z);
        let k2 = deriv(t + 0.5 * dt, &(&z + &k1 * (0.5 * dt)));
        let k3 = deriv(t + 0.5 * dt, &(&z + &k2 * (0.5 * dt)));
        let k4 = deriv(t + dt, &(&z + &k3 * dt));
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(traj)
}

/// Data-collection run: `u = −K_base x + ξ(t)` without attacks.
pub fn integrate_open_loop(
    plant: &Plant,
    exo: &Exosystem,
    exploration: &ExplorationSpec,
    base_gain: Option<&DMatrix<f64>>,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if exploration.channels.len() != plant.m() {
        return Err(Error::Dimension(format!(
            "exploration has {} channels, plant has {} inputs",
            exploration.channels.len(),
            plant.m()
        )));
    }
    if let Some(k) = base_gain {
        if k.shape() != (plant.m(), plant.n()) {
            return Err(Error::Dimension("base gain must be m x n".into()));
        }
    }
    let mut ctrl = ExplorationController {
        base_gain,
        exploration,
    };
    simulate(plant, exo, &mut ctrl, None, x0, t_end, dt)
}

pub fn simulate_closed_loop(
    plant: &Plant,
    exo: &Exosystem,
    policy: &ResilientPolicy,
    schedule: &DosSchedule,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    policy.check_dims(plant.n(), plant.m(), plant.q())?;
    simulate(
        plant,
        exo,
        &mut PolicyController(policy),
        Some(schedule),
        x0,
        t_end,
        dt,
    )
}

/// Greedy packing of attack-free windows `[start, start + window_len]`,
/// consecutive windows separated by at least `gap`.
pub fn make_data_windows(
    schedule: Option<&DosSchedule>,
    t_start: f64,
    t_end: f64,
    window_len: f64,
    gap: f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if !(window_len > 0.0) || !(gap >= 0.0) || t_end <= t_start {
        return out;
    }
    let mut t = t_start;
    while t + window_len <= t_end + TIME_EPS {
        let end = t + window_len;
        let blocker = schedule.and_then(|s| {
            s.intervals()
                .iter()
                .find(|iv| iv.start < end - TIME_EPS && iv.end() > t + TIME_EPS)
        });
        match blocker {
            Some(iv) => t = iv.end(),
            None => {
                out.push((t, end));
                t = end + gap;
            }
        }
    }
    out
}

/// Like [`make_data_windows`] but fails when fewer than `min_windows` fit.
pub fn require_data_windows(
    schedule: Option<&DosSchedule>,
    t_start: f64,
    t_end: f64,
    window_len: f64,
    gap: f64,
    min_windows: usize,
) -> Result<Vec<(f64, f64)>> {
    let w = make_data_windows(schedule, t_start, t_end, window_len, gap);
    if w.len() < min_windows {
        return Err(Error::InsufficientWindows {
            found: w.len(),
            required: min_windows,
        });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dos::AttackInterval;
    use crate::model::AccParams;
    use nalgebra::dmatrix;

    fn scalar(a: f64) -> (Plant, Exosystem) {
        let p = Plant::new(
            dmatrix![a],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![0.0],
        )
        .unwrap();
        let e = Exosystem::new(dmatrix![0.0], DVector::zeros(1)).unwrap();
        (p, e)
    }

    #[test]
    fn equilibrium_stays_at_rest() {
        let acc = AccParams::default();
        let exo = acc.exosystem(DVector::zeros(3));
        let tr = integrate_open_loop(
            &acc.plant(),
            &exo,
            &ExplorationSpec::none(1),
            None,
            &DVector::zeros(3),
            1.0,
            1e-3,
        )
        .unwrap();
        assert!(tr.x.iter().all(|x| x.norm() == 0.0));
        assert_eq!(tr.len(), 1001);
    }

    #[test]
    fn exosystem_rotates_analytically() {
        let acc = AccParams::default();
        let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let tr = integrate_open_loop(
            &acc.plant(),
            &exo,
            &ExplorationSpec::none(1),
            None,
            &DVector::zeros(3),
            3.0,
            1e-3,
        )
        .unwrap();
        let v3 = tr.v.last().unwrap();
        assert!((v3 - DVector::from_vec(vec![-1.0, 0.0, 1.0])).norm() < 1e-8);
    }

    #[test]
    fn scalar_exponential_decay() {
        let (p, e) = scalar(-1.0);
        let tr = integrate_open_loop(
            &p,
            &e,
            &ExplorationSpec::none(1),
            None,
            &DVector::from_vec(vec![1.0]),
            1.0,
            1e-3,
        )
        .unwrap();
        assert!((tr.x.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let (p, e) = scalar(-1.0);
        let err = |dt: f64| {
            let tr = integrate_open_loop(
                &p,
                &e,
                &ExplorationSpec::none(1),
                None,
                &DVector::from_vec(vec![1.0]),
                1.0,
                dt,
            )
            .unwrap();
            (tr.x.last().unwrap()[0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn attacked_mode_is_open_loop() {
        // Under attack the deviation x̃ obeys dx̃/dt = A x̃; compare with expm.
        let acc = AccParams::default();
        let plant = acc.plant();
        let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let reg = crate::model::solve_regulator_equations(&plant, &exo).unwrap();
        let policy = ResilientPolicy::from_parts(
            DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
            reg.x.clone(),
            reg.u.clone(),
        );
        let sched = DosSchedule::new(vec![AttackInterval::new(0.0, 2.0)], 2.0).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let tr = simulate_closed_loop(&plant, &exo, &policy, &sched, &x0, 2.0, 1e-3).unwrap();
        assert!(tr.attacked.iter().take(2000).all(|&a| a));
        let xt0 = &x0 - &reg.x * &exo.v0;
        let expected = (&plant.a * 2.0).exp() * xt0;
        let got = tr.steady_state_error(&reg.x).last().unwrap().clone();
        assert!((got - expected).norm() < 1e-9);
    }

    #[test]
    fn steady_state_manifold_is_invariant() {
        let acc = AccParams::default();
        let plant = acc.plant();
        let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let reg = crate::model::solve_regulator_equations(&plant, &exo).unwrap();
        let policy = ResilientPolicy::from_parts(
            DMatrix::from_row_slice(1, 3, &[5.0, -2.0, -1.0]),
            reg.x.clone(),
            reg.u.clone(),
        );
        let sched = DosSchedule::new(
            vec![AttackInterval::new(1.0, 0.5), AttackInterval::new(3.0, 1.0)],
            5.0,
        )
        .unwrap();
        let x0 = &reg.x * &exo.v0;
        let tr = simulate_closed_loop(&plant, &exo, &policy, &sched, &x0, 5.0, 1e-3).unwrap();
        for e in &tr.e {
            assert!(e.norm() < 1e-9);
        }
    }

    #[test]
    fn error_identity_holds_pointwise() {
        let acc = AccParams::default();
        let plant = acc.plant();
        let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let tr = integrate_open_loop(
            &plant,
            &exo,
            &ExplorationSpec::benchmark(),
            None,
            &DVector::from_vec(vec![1.0, 0.5, 0.0]),
            0.5,
            1e-3,
        )
        .unwrap();
        for k in 0..tr.len() {
            assert_eq!(tr.e[k], &plant.c * &tr.x[k] + &plant.f * &tr.v[k]);
        }
    }

    #[test]
    fn window_packing() {
        assert_eq!(make_data_windows(None, 0.0, 2.0, 0.1, 0.1).len(), 10);
        let full = DosSchedule::new(vec![AttackInterval::new(0.0, 2.0)], 2.0).unwrap();
        assert!(make_data_windows(Some(&full), 0.0, 2.0, 0.1, 0.1).is_empty());

        let s = DosSchedule::new(vec![AttackInterval::new(0.5, 0.5)], 2.0).unwrap();
        let w = make_data_windows(Some(&s), 0.0, 2.0, 0.25, 0.0);
        assert_eq!(w.len(), 6);
        for (a, b) in &w {
            assert!(*b <= 0.5 + 1e-12 || *a >= 1.0 - 1e-12, "window [{a}, {b}]");
        }
        assert!(matches!(
            require_data_windows(Some(&full), 0.0, 2.0, 0.1, 0.0, 1),
            Err(Error::InsufficientWindows { found: 0, required: 1 })
        ));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let acc = AccParams::default();
        let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let tr = integrate_open_loop(
            &acc.plant(),
            &exo,
            &ExplorationSpec::benchmark(),
            None,
            &DVector::from_vec(vec![1.0, 0.5, 0.0]),
            0.1,
            1e-3,
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("t,x1,x2,x3,u1,v1,v2,v3,e1,attacked\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x, tr.x);
        assert_eq!(back.u, tr.u);
        assert_eq!(back.attacked, tr.attacked);
    }
}
