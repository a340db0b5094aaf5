//! Data-driven synthesis of the resilient controller.
//!
//! Phase one climbs a geometric ladder of rates `λ⁺` until the data yield a
//! positive definite `P⁺` for the attacked (open-loop) dynamics. Phase two
//! runs off-policy policy iteration at rate `λ⁻ = 2λ⁺/(T − 1)`, then learns
//! the Sylvester map on a family of trial matrices to recover `(X, U)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collect::{self, assemble_psi_phase1, assemble_psi_phase2, build_regressors, RegressorSet};
use crate::error::{Error, Result};
use crate::matops::{self, lstsq, norm2, rows_serde, symmetrize, unvec, unvecs, RANK_TOL};
use crate::model::RegulatorSolution;
use crate::sim::Trajectory;

/// Relative floor used for every positive-definiteness decision.
pub const PD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub epsilon: f64,
    pub lambda_init: f64,
    pub growth: f64,
    pub c_tol: f64,
    pub k_max: usize,
    pub max_lambda_steps: usize,
    pub residual_tol: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            lambda_init: 0.1,
            growth: 2.0,
            c_tol: 1e-6,
            k_max: 50,
            max_lambda_steps: 60,
            residual_tol: 1e-6,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.lambda_init > 0.0) {
            return bad("lambda_init must be positive");
        }
        if !(self.growth > 1.0) {
            return bad("growth factor must exceed 1");
        }
        if !(self.c_tol > 0.0) {
            return bad("c_tol must be positive");
        }
        if self.k_max < 2 {
            return bad("k_max must allow at least two policy iterations");
        }
        if self.max_lambda_steps == 0 {
            return bad("max_lambda_steps must be positive");
        }
        if !(self.residual_tol > 0.0) {
            return bad("residual_tol must be positive");
        }
        Ok(())
    }
}

/// `X_0 = 0`, a particular solution `X_1` of `CX_1 = −F`, and a basis
/// `X_2, …` of `{X : CX = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMatrixSet {
    pub matrices: Vec<DMatrix<f64>>,
}

impl TrialMatrixSet {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn particular(&self) -> &DMatrix<f64> {
        &self.matrices[1]
    }

    pub fn kernel(&self) -> &[DMatrix<f64>] {
        &self.matrices[2..]
    }
}

pub fn make_trial_matrices(c: &DMatrix<f64>, f: &DMatrix<f64>, n: usize, q: usize) -> Result<TrialMatrixSet> {
    let r = c.nrows();
    if c.ncols() != n || f.shape() != (r, q) {
        return Err(Error::Dimension(format!(
            "C must be r x {n} and F r x {q}; got C {}x{}, F {}x{}",
            c.nrows(),
            c.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    if matops::numerical_rank(c, RANK_TOL) != r || r > n {
        return Err(Error::Assumption("C must have full row rank".into()));
    }
    let pinv = c
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let x1 = -(pinv * f);

    // Null space of C from the eigenvectors of CᵀC with the smallest
    // eigenvalues (exactly n − r of them vanish).
    let eig = (c.transpose() * c).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut matrices = vec![DMatrix::zeros(n, q), x1];
    for k in 0..q {
        for &j in order.iter().take(n - r) {
            let mut x = DMatrix::zeros(n, q);
            x.set_column(k, &eig.eigenvectors.column(j));
            matrices.push(x);
        }
    }
    Ok(TrialMatrixSet { matrices })
}

/// Outcome of the phase-one solve at a single rate.
#[derive(Debug, Clone)]
pub struct DivergenceProbe {
    pub lambda_plus: f64,
    pub rank: usize,
    pub full_rank: bool,
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
    pub rel_residual: f64,
    pub p_plus: DMatrix<f64>,
    pub bt_p: DMatrix<f64>,
    pub dt_p: DMatrix<f64>,
}

impl DivergenceProbe {
    /// Data-based certificate that `A − λ⁺I` is Hurwitz.
    pub fn certifies(&self) -> bool {
        self.full_rank && self.positive_definite
    }
}

pub fn probe_divergence_rate(regs: &RegressorSet, lambda_plus: f64, epsilon: f64) -> Result<DivergenceProbe> {
    let (n, m, q) = (regs.n(), regs.m(), regs.q());
    let nv = n * (n + 1) / 2;
    let (psi, phi) = assemble_psi_phase1(regs, lambda_plus, epsilon);
    let sol = lstsq(&psi, &phi, RANK_TOL)?;
    let p_plus = symmetrize(&unvecs(&sol.x.rows(0, nv).into_owned(), n)?);
    let bt_p = unvec(&sol.x.rows(nv, n * m).into_owned(), m, n)?;
    let dt_p = unvec(&sol.x.rows(nv + n * m, n * q).into_owned(), q, n)?;
    let (min_eigenvalue, _) = matops::sym_eig_extremes(&p_plus);
    Ok(DivergenceProbe {
        lambda_plus,
        rank: sol.rank,
        full_rank: sol.full_rank(),
        positive_definite: matops::is_positive_definite(&p_plus, PD_TOL),
        min_eigenvalue,
        rel_residual: sol.rel_residual,
        p_plus,
        bt_p,
        dt_p,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderStep {
    pub lambda_plus: f64,
    pub full_rank: bool,
    pub min_eigenvalue: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase1Result {
    pub lambda_plus: f64,
    #[serde(with = "rows_serde")]
    pub p_plus: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub bt_p_plus: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub dt_p_plus: DMatrix<f64>,
    pub attempts: usize,
    pub rel_residual: f64,
    pub ladder: Vec<LadderStep>,
}

pub fn learn_divergence_rate(
    regs: &RegressorSet,
    epsilon: f64,
    lambda_init: f64,
    growth: f64,
    max_steps: usize,
) -> Result<Phase1Result> {
    if !(lambda_init > 0.0) || !(growth > 1.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(
            "need epsilon > 0, lambda_init > 0 and growth > 1".into(),
        ));
    }
    let mut lambda = lambda_init;
    let mut ladder = Vec::new();
    for attempt in 1..=max_steps {
        lambda *= growth;
        let probe = probe_divergence_rate(regs, lambda, epsilon)?;
        let accepted = probe.certifies();
        ladder.push(LadderStep {
            lambda_plus: lambda,
            full_rank: probe.full_rank,
            min_eigenvalue: probe.min_eigenvalue,
            accepted,
        });
        if accepted {
            return Ok(Phase1Result {
                lambda_plus: lambda,
                p_plus: probe.p_plus,
                bt_p_plus: probe.bt_p,
                dt_p_plus: probe.dt_p,
                attempts: attempt,
                rel_residual: probe.rel_residual,
                ladder,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "no rate on the λ⁺ ladder produced a positive definite P⁺".into(),
        iterations: max_steps,
    })
}

/// `λ⁻ = 2λ⁺/(T − 1)`.
pub fn lambda_minus_from(lambda_plus: f64, t_crit: f64) -> Result<f64> {
    if !(t_crit > 1.0) {
        return Err(Error::InvalidArgument(format!("T must exceed 1, got {t_crit}")));
    }
    Ok(2.0 * lambda_plus / (t_crit - 1.0))
}

/// One off-policy evaluation/improvement solve.
#[derive(Debug, Clone)]
pub struct PolicyStep {
    pub p: DMatrix<f64>,
    pub k_next: DMatrix<f64>,
    /// `(D − 𝒮(X_i))ᵀ P` for the shift used to build the regressors.
    pub mt_p: DMatrix<f64>,
    pub rank: usize,
    pub rel_residual: f64,
}

pub fn policy_step(
    regs: &RegressorSet,
    k: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    lambda_minus: f64,
    residual_tol: f64,
) -> Result<PolicyStep> {
    let (n, m, q) = (regs.n(), regs.m(), regs.q());
    let nv = n * (n + 1) / 2;
    let (psi, phi) = assemble_psi_phase2(regs, k, q_weight, lambda_minus)?;
    let sol = lstsq(&psi, &phi, RANK_TOL)?;
    if !sol.full_rank() {
        return Err(Error::RankDeficient {
            rank: sol.rank,
            required: sol.x.len(),
        });
    }
    if sol.rel_residual > residual_tol {
        return Err(Error::Residual {
            residual: sol.rel_residual,
            threshold: residual_tol,
        });
    }
    let p = symmetrize(&unvecs(&sol.x.rows(0, nv).into_owned(), n)?);
    if !matops::is_positive_definite(&p, PD_TOL) {
        let (min, _) = matops::sym_eig_extremes(&p);
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(PolicyStep {
        p,
        k_next: unvec(&sol.x.rows(nv, m * n).into_owned(), m, n)?,
        mt_p: unvec(&sol.x.rows(nv + m * n, q * n).into_owned(), q, n)?,
        rank: sol.rank,
        rel_residual: sol.rel_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PiTraceEntry {
    pub iteration: usize,
    /// `‖P_k − P_{k−1}‖`, absent at the first iteration.
    pub p_change: Option<f64>,
    pub rel_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PiResult {
    /// `P_{k*}`, the value matrix of `K_{k*}`.
    pub p: DMatrix<f64>,
    /// `K_{k*}`.
    pub k: DMatrix<f64>,
    /// `K_{k*+1} = BᵀP_{k*}`.
    pub k_next: DMatrix<f64>,
    /// `M_0 = D` as identified from the unshifted data.
    pub m0: DMatrix<f64>,
    pub k_star: usize,
    pub trace: Vec<PiTraceEntry>,
    pub iterates: Vec<DMatrix<f64>>,
}

/// Off-policy policy iteration. Stops at the first `k > 0` with
/// `‖P_k − P_{k−1}‖ < c_tol`.
pub fn run_policy_iteration(
    regs: &RegressorSet,
    k0: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    lambda_minus: f64,
    c_tol: f64,
    k_max: usize,
    residual_tol: f64,
) -> Result<PiResult> {
    matops::check_symmetric(q_weight)?;
    let mut k = k0.clone();
    let mut iterates: Vec<DMatrix<f64>> = Vec::new();
    let mut trace = Vec::new();
    for it in 0..k_max {
        let step = policy_step(regs, &k, q_weight, lambda_minus, residual_tol)
            .map_err(|e| e.in_stage(&format!("policy iteration {it}")))?;
        let change = iterates.last().map(|prev| norm2(&(&step.p - prev)));
        trace.push(PiTraceEntry {
            iteration: it,
            p_change: change,
            rel_residual: step.rel_residual,
        });
        iterates.push(step.p.clone());
        if matches!(change, Some(d) if d < c_tol) {
            let m0 = step_to_m(&step)?;
            return Ok(PiResult {
                p: step.p,
                k,
                k_next: step.k_next,
                m0,
                k_star: it,
                trace,
                iterates,
            });
        }
        k = step.k_next;
    }
    Err(Error::NoConvergence {
        what: "off-policy policy iteration".into(),
        iterations: k_max,
    })
}

fn step_to_m(step: &PolicyStep) -> Result<DMatrix<f64>> {
    let p_inv = step
        .p
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    Ok(p_inv * step.mt_p.transpose())
}

/// `M_i = D − 𝒮(X_i)` for one trial matrix.
#[derive(Debug, Clone)]
pub struct SylvesterMap {
    pub m: DMatrix<f64>,
    pub k_next: DMatrix<f64>,
    pub rank: usize,
    pub rel_residual: f64,
}

pub fn learn_sylvester_maps(
    traj: &Trajectory,
    windows: &[(f64, f64)],
    trial: &TrialMatrixSet,
    p_kstar: &DMatrix<f64>,
    k_kstar: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    lambda_minus: f64,
    residual_tol: f64,
) -> Result<Vec<SylvesterMap>> {
    let p_inv = p_kstar
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    trial
        .matrices
        .iter()
        .enumerate()
        .map(|(i, x_i)| {
            let stage = format!("Sylvester map for trial matrix {i}");
            let regs = build_regressors(traj, windows, x_i).map_err(|e| e.in_stage(&stage))?;
            let step = policy_step(&regs, k_kstar, q_weight, lambda_minus, residual_tol)
                .map_err(|e| e.in_stage(&stage))?;
            Ok(SylvesterMap {
                m: &p_inv * step.mt_p.transpose(),
                k_next: step.k_next,
                rank: step.rank,
                rel_residual: step.rel_residual,
            })
        })
        .collect()
}

/// Solves `Σ_{i≥2} α_i (M_0 − M_i) − B̂U = M_1` with `B̂ = P⁻¹Kᵀ`, then
/// `X = X_1 + Σ α_i X_i`. `gain` must be the `BᵀP` paired with `p`.
pub fn recover_regulator_solution(
    m_list: &[DMatrix<f64>],
    trial: &TrialMatrixSet,
    p: &DMatrix<f64>,
    gain: &DMatrix<f64>,
) -> Result<RegulatorSolution> {
    if m_list.len() != trial.len() || trial.len() < 2 {
        return Err(Error::Dimension(format!(
            "{} Sylvester maps for {} trial matrices",
            m_list.len(),
            trial.len()
        )));
    }
    let (n, q) = m_list[0].shape();
    let m = gain.nrows();
    let b_hat = p
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?
        * gain.transpose();
    let h = trial.kernel().len();
    let mut design = DMatrix::zeros(n * q, h + m * q);
    for (j, m_i) in m_list[2..].iter().enumerate() {
        design.set_column(j, &matops::vec_of(&(&m_list[0] - m_i)));
    }
    let ib = matops::kron(&DMatrix::identity(q, q), &b_hat);
    design.columns_mut(h, m * q).copy_from(&(-ib));
    let rhs = matops::vec_of(&m_list[1]);
    let sol = lstsq(&design, &rhs, RANK_TOL)?;
    if !sol.full_rank() {
        return Err(Error::RankDeficient {
            rank: sol.rank,
            required: sol.x.len(),
        });
    }
    let mut x = trial.particular().clone();
    for (alpha, x_i) in sol.x.iter().zip(trial.kernel()) {
        x += x_i * *alpha;
    }
    let u = unvec(&sol.x.rows(h, m * q).into_owned(), m, q)?;
    Ok(RegulatorSolution { x, u })
}

/// The switched law `u = −Kx + Lv` (normal) / `u = Uv` (attacked).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilientPolicy {
    #[serde(with = "rows_serde")]
    pub k: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub l: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub u: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub x: DMatrix<f64>,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    #[serde(with = "rows_serde")]
    pub p_k: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub p_plus: DMatrix<f64>,
}

impl ResilientPolicy {
    /// A policy with only the control gains; Lyapunov data left empty.
    pub fn from_parts(k: DMatrix<f64>, x: DMatrix<f64>, u: DMatrix<f64>) -> Self {
        let n = k.ncols();
        assemble_policy(k, x, u, 0.0, 0.0, DMatrix::zeros(n, n), DMatrix::zeros(n, n))
    }

    pub fn control(&self, x: &DVector<f64>, v: &DVector<f64>, attacked: bool) -> DVector<f64> {
        if attacked {
            &self.u * v
        } else {
            &self.l * v - &self.k * x
        }
    }

    pub fn check_dims(&self, n: usize, m: usize, q: usize) -> Result<()> {
        let ok = self.k.shape() == (m, n)
            && self.l.shape() == (m, q)
            && self.u.shape() == (m, q)
            && self.x.shape() == (n, q);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "policy gains K {:?}, L {:?}, U {:?}, X {:?} do not fit n = {n}, m = {m}, q = {q}",
                self.k.shape(),
                self.l.shape(),
                self.u.shape(),
                self.x.shape()
            )))
        }
    }
}

pub fn assemble_policy(
    k: DMatrix<f64>,
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    lambda_minus: f64,
    lambda_plus: f64,
    p_k: DMatrix<f64>,
    p_plus: DMatrix<f64>,
) -> ResilientPolicy {
    let l = &k * &x + &u;
    ResilientPolicy {
        k,
        l,
        u,
        x,
        lambda_minus,
        lambda_plus,
        p_k,
        p_plus,
    }
}

/// Everything produced by a full learning run.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub policy: ResilientPolicy,
    pub phase1: Phase1Result,
    pub pi: PiResult,
    pub trial: TrialMatrixSet,
    pub sylvester: Vec<SylvesterMap>,
    pub rank: collect::RankReport,
}

/// Runs both phases on one attack-free data set. `initial_gain` receives
/// `λ⁻` and returns an admissible `K_0`.
#[allow(clippy::too_many_arguments)]
pub fn learn_resilient_policy<F>(
    traj: &Trajectory,
    windows: &[(f64, f64)],
    c: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    t_crit: f64,
    cfg: &LearnerConfig,
    initial_gain: F,
) -> Result<LearnOutcome>
where
    F: FnOnce(f64) -> Result<DMatrix<f64>>,
{
    cfg.validate()?;
    let (n, m, q, _) = traj.dims();
    let trial = make_trial_matrices(c, f, n, q)?;
    let regs0 = build_regressors(traj, windows, &trial.matrices[0])?;
    let rank = collect::check_rank_condition(&regs0, n, m, q);
    if !rank.satisfied {
        return Err(Error::RankDeficient {
            rank: rank.rank,
            required: rank.required,
        }
        .in_stage("rank condition on collected data"));
    }
    let phase1 = learn_divergence_rate(
        &regs0,
        cfg.epsilon,
        cfg.lambda_init,
        cfg.growth,
        cfg.max_lambda_steps,
    )
    .map_err(|e| e.in_stage("divergence rate"))?;
    let lambda_minus = lambda_minus_from(phase1.lambda_plus, t_crit)?;
    let k0 = initial_gain(lambda_minus).map_err(|e| e.in_stage("initial gain"))?;
    let pi = run_policy_iteration(
        &regs0,
        &k0,
        q_weight,
        lambda_minus,
        cfg.c_tol,
        cfg.k_max,
        cfg.residual_tol,
    )?;
    let sylvester = learn_sylvester_maps(
        traj,
        windows,
        &trial,
        &pi.p,
        &pi.k,
        q_weight,
        lambda_minus,
        cfg.residual_tol,
    )?;
    let m_list: Vec<DMatrix<f64>> = sylvester.iter().map(|s| s.m.clone()).collect();
    let reg = recover_regulator_solution(&m_list, &trial, &pi.p, &pi.k_next)
        .map_err(|e| e.in_stage("regulator recovery"))?;
    let policy = assemble_policy(
        pi.k.clone(),
        reg.x,
        reg.u,
        lambda_minus,
        phase1.lambda_plus,
        pi.p.clone(),
        phase1.p_plus.clone(),
    );
    Ok(LearnOutcome {
        policy,
        phase1,
        pi,
        trial,
        sylvester,
        rank,
    })
}
