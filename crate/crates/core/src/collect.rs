//! Data matrices built from attack-free windows of a trajectory.
//!
//! For a shifted state `x_i = x − X_i v` and windows `[t_{2j}, t_{2j+1}]`,
//! each window contributes one row to
//!
//! * `δ`      — `vecv(x_i(end)) − vecv(x_i(start))`
//! * `Γ_{x,b}` — `∫ x_i ⊗ b dτ` for `b ∈ {x_i, u, v}`
//! * `Λ`      — `∫ vecv(x_i) dτ`
//!
//! These feed the two linear systems solved by the learner: the Lyapunov
//! certificate for the divergence rate and the off-policy policy-evaluation
//! step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matops::{self, kron, kron_vec, vec_of, vecv};
use crate::sim::Trajectory;

#[derive(Debug, Clone)]
pub struct RegressorSet {
    pub windows: Vec<(f64, f64)>,
    pub delta_x: DMatrix<f64>,
    pub gamma_xx: DMatrix<f64>,
    pub gamma_xu: DMatrix<f64>,
    pub gamma_xv: DMatrix<f64>,
    pub lambda_x: DMatrix<f64>,
    /// The `X_i` that defines the shifted state.
    pub shift: DMatrix<f64>,
}

impl RegressorSet {
    pub fn rows(&self) -> usize {
        self.windows.len()
    }

    pub fn n(&self) -> usize {
        self.shift.nrows()
    }

    pub fn q(&self) -> usize {
        self.shift.ncols()
    }

    pub fn m(&self) -> usize {
        if self.n() == 0 {
            0
        } else {
            self.gamma_xu.ncols() / self.n()
        }
    }

    /// Writes every block as a labeled, whitespace-separated matrix.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# regressor set: {} windows", self.rows())?;
        writeln!(w, "[windows {}x2]", self.rows())?;
        for (a, b) in &self.windows {
            writeln!(w, "{a} {b}")?;
        }
        let blocks: [(&str, &DMatrix<f64>); 6] = [
            ("shift", &self.shift),
            ("delta_x", &self.delta_x),
            ("lambda_x", &self.lambda_x),
            ("gamma_xx", &self.gamma_xx),
            ("gamma_xu", &self.gamma_xu),
            ("gamma_xv", &self.gamma_xv),
        ];
        for (name, m) in blocks {
            writeln!(w, "[{name} {}x{}]", m.nrows(), m.ncols())?;
            for row in m.row_iter() {
                let line: Vec<String> = row.iter().map(|z| format!("{z:e}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Quadrature weights (in units of `dt`) on `steps + 1` equally spaced nodes.
///
/// Composite Boole over blocks of four steps. The remaining one to five steps
/// are closed with Simpson and/or the 3/8 rule; a single step is a trapezoid.
pub fn quadrature_weights(steps: usize) -> Vec<f64> {
    const BOOLE: [f64; 5] = [14.0 / 45.0, 64.0 / 45.0, 24.0 / 45.0, 64.0 / 45.0, 14.0 / 45.0];
    const SIMPSON: [f64; 3] = [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0];
    const THREE_EIGHTHS: [f64; 4] = [3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0];
    let mut w = vec![0.0; steps + 1];
    let mut add = |at: usize, rule: &[f64]| {
        for (i, c) in rule.iter().enumerate() {
            w[at + i] += c;
        }
    };
    if steps == 1 {
        add(0, &[0.5, 0.5]);
        return w;
    }
    // Tail lengths: 1 -> 2 + 3 (borrowing one Boole block), 2, 3.
    let tail: &[usize] = match steps % 4 {
        0 => &[],
        1 => &[2, 3],
        2 => &[2],
        _ => &[3],
    };
    let mut k = 0;
    while k + 4 <= steps - tail.iter().sum::<usize>() {
        add(k, &BOOLE);
        k += 4;
    }
    for &t in tail {
        add(k, if t == 2 { &SIMPSON } else { &THREE_EIGHTHS });
        k += t;
    }
    w
}

/// `x_i = x − X_i v` at every grid point.
pub fn shifted_state(traj: &Trajectory, shift: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    let (n, _, q, _) = traj.dims();
    if shift.shape() != (n, q) {
        return Err(Error::Dimension(format!(
            "shift matrix is {}x{}, expected {n}x{q}",
            shift.nrows(),
            shift.ncols()
        )));
    }
    Ok(traj.steady_state_error(shift))
}

pub fn build_regressors(
    traj: &Trajectory,
    windows: &[(f64, f64)],
    shift: &DMatrix<f64>,
) -> Result<RegressorSet> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("at least one data window is required".into()));
    }
    let (n, m, q, _) = traj.dims();
    let xs = shifted_state(traj, shift)?;
    let nv = n * (n + 1) / 2;
    let rows = windows.len();
    let mut out = RegressorSet {
        windows: windows.to_vec(),
        delta_x: DMatrix::zeros(rows, nv),
        gamma_xx: DMatrix::zeros(rows, n * n),
        gamma_xu: DMatrix::zeros(rows, n * m),
        gamma_xv: DMatrix::zeros(rows, n * q),
        lambda_x: DMatrix::zeros(rows, nv),
        shift: shift.clone(),
    };
    for (row, &(a, b)) in windows.iter().enumerate() {
        let i0 = traj.index_of(a)?;
        let i1 = traj.index_of(b)?;
        if i1 <= i0 {
            return Err(Error::InvalidArgument(format!("empty window [{a}, {b}]")));
        }
        if traj.attacked[i0..i1].iter().any(|&f| f) {
            return Err(Error::InvalidArgument(format!(
                "window [{a}, {b}] overlaps an attack interval"
            )));
        }
        let d = vecv(&xs[i1]) - vecv(&xs[i0]);
        out.delta_x.row_mut(row).copy_from(&d.transpose());

        let weights = quadrature_weights(i1 - i0);
        let mut gxx = vec![0.0; n * n];
        let mut gxu = vec![0.0; n * m];
        let mut gxv = vec![0.0; n * q];
        let mut lam = DVector::zeros(nv);
        for (k, wk) in (i0..=i1).zip(weights) {
            let h = wk * traj.dt;
            let x = xs[k].as_slice();
            accumulate(&mut gxx, &kron_vec(x, x), h);
            accumulate(&mut gxu, &kron_vec(x, traj.u[k].as_slice()), h);
            accumulate(&mut gxv, &kron_vec(x, traj.v[k].as_slice()), h);
            lam += vecv(&xs[k]) * h;
        }
        out.gamma_xx.row_mut(row).copy_from_slice(&gxx);
        out.gamma_xu.row_mut(row).copy_from_slice(&gxu);
        out.gamma_xv.row_mut(row).copy_from_slice(&gxv);
        out.lambda_x.row_mut(row).copy_from(&lam.transpose());
    }
    Ok(out)
}

fn accumulate(acc: &mut [f64], term: &[f64], h: f64) {
    for (a, t) in acc.iter_mut().zip(term) {
        *a += h * t;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub required: usize,
    pub satisfied: bool,
    pub singular_values: Vec<f64>,
}

/// Numerical rank of `[Γ_{x,x}, Γ_{x,u}, Γ_{x,v}]` against
/// `n(n+1)/2 + (m+q)n`.
pub fn check_rank_condition(regs: &RegressorSet, n: usize, m: usize, q: usize) -> RankReport {
    let required = n * (n + 1) / 2 + (m + q) * n;
    let rows = regs.rows();
    let mut stacked =
        DMatrix::zeros(rows, regs.gamma_xx.ncols() + regs.gamma_xu.ncols() + regs.gamma_xv.ncols());
    let (c1, c2) = (regs.gamma_xx.ncols(), regs.gamma_xu.ncols());
    stacked.columns_mut(0, c1).copy_from(&regs.gamma_xx);
    stacked.columns_mut(c1, c2).copy_from(&regs.gamma_xu);
    stacked
        .columns_mut(c1 + c2, regs.gamma_xv.ncols())
        .copy_from(&regs.gamma_xv);
    let singular_values = matops::singular_values(&stacked);
    let max = singular_values.iter().copied().fold(0.0, f64::max);
    let rank = if max == 0.0 {
        0
    } else {
        singular_values
            .iter()
            .filter(|&&s| s >= matops::RANK_TOL * max)
            .count()
    };
    RankReport {
        rank,
        required,
        satisfied: rank == required,
        singular_values,
    }
}

/// Linear system for the divergence-rate certificate:
/// `Ψ = [δ − 2λ⁺Λ, −2Γ_{x,u}, −2Γ_{x,v}]`, `Φ = −ε Γ_{x,x} vec(I)`,
/// with unknowns `vecs(P⁺), vec(BᵀP⁺), vec(DᵀP⁺)`.
pub fn assemble_psi_phase1(
    regs: &RegressorSet,
    lambda_plus: f64,
    epsilon: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = regs.n();
    let (nv, nm, nq) = (regs.delta_x.ncols(), regs.gamma_xu.ncols(), regs.gamma_xv.ncols());
    let mut psi = DMatrix::zeros(regs.rows(), nv + nm + nq);
    psi.columns_mut(0, nv)
        .copy_from(&(&regs.delta_x - &regs.lambda_x * (2.0 * lambda_plus)));
    psi.columns_mut(nv, nm).copy_from(&(&regs.gamma_xu * -2.0));
    psi.columns_mut(nv + nm, nq).copy_from(&(&regs.gamma_xv * -2.0));
    let phi = &regs.gamma_xx * vec_of(&DMatrix::identity(n, n)) * -epsilon;
    (psi, phi)
}

/// Off-policy policy-evaluation system for gain `K_k`:
/// `Ψ = [δ + 2λ⁻Λ, −2Γ_{x,x}(I ⊗ K_kᵀ) − 2Γ_{x,u}, −2Γ_{x,v}]`,
/// `Φ = −Γ_{x,x} vec(Q + K_kᵀK_k)`, with unknowns
/// `vecs(P_k), vec(K_{k+1}), vec((D − 𝒮(X_i))ᵀP_k)`.
pub fn assemble_psi_phase2(
    regs: &RegressorSet,
    k: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    lambda_minus: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = regs.n();
    let m = regs.m();
    if k.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {m}x{n}",
            k.nrows(),
            k.ncols()
        )));
    }
    if q_weight.shape() != (n, n) {
        return Err(Error::Dimension(format!("Q must be {n}x{n}")));
    }
    let (nv, nm, nq) = (regs.delta_x.ncols(), regs.gamma_xu.ncols(), regs.gamma_xv.ncols());
    let mut psi = DMatrix::zeros(regs.rows(), nv + nm + nq);
    psi.columns_mut(0, nv)
        .copy_from(&(&regs.delta_x + &regs.lambda_x * (2.0 * lambda_minus)));
    let ik = kron(&DMatrix::identity(n, n), &k.transpose());
    psi.columns_mut(nv, nm)
        .copy_from(&((&regs.gamma_xx * ik) * -2.0 - &regs.gamma_xu * 2.0));
    psi.columns_mut(nv + nm, nq).copy_from(&(&regs.gamma_xv * -2.0));
    let phi = -(&regs.gamma_xx * vec_of(&(q_weight + k.transpose() * k)));
    Ok((psi, phi))
}
