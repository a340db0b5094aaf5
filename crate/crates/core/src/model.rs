//! Plant and exosystem descriptions together with the model-based solvers
//! (regulator equations, Lyapunov, Kleinman/ARE) that serve as ground truth
//! for the data-driven learner.
//!
//! The plant is
//!
//! ```text
//! ẋ = A x + B u + D v,    e = C x + F v,    v̇ = S v
//! ```
//!
//! and the optimal regulation problem uses the discounted cost
//! `∫ e^{2λ⁻t} (x̃ᵀ Q x̃ + ũᵀ ũ) dt`, i.e. an identity input weight.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{
    self, check_square, check_symmetric, is_hurwitz, is_positive_definite, kron, norm2,
    numerical_rank, vec_of, RANK_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl Plant {
    /// Builds a plant, checking that all block dimensions agree.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        f: DMatrix<f64>,
    ) -> Result<Self> {
        check_square(&a, "A")?;
        let n = a.nrows();
        let mut problems = Vec::new();
        if b.nrows() != n {
            problems.push(format!("B has {} rows, expected n = {n}", b.nrows()));
        }
        if c.ncols() != n {
            problems.push(format!("C has {} columns, expected n = {n}", c.ncols()));
        }
        if d.nrows() != n {
            problems.push(format!("D has {} rows, expected n = {n}", d.nrows()));
        }
        if f.nrows() != c.nrows() {
            problems.push(format!(
                "F has {} rows, expected r = {} (rows of C)",
                f.nrows(),
                c.nrows()
            ));
        }
        if f.ncols() != d.ncols() {
            problems.push(format!(
                "F has {} columns but D has {}; both must equal q",
                f.ncols(),
                d.ncols()
            ));
        }
        if !problems.is_empty() {
            return Err(Error::Dimension(problems.join("; ")));
        }
        Ok(Self { a, b, c, d, f })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.d.ncols()
    }

    pub fn r(&self) -> usize {
        self.c.nrows()
    }

    pub fn error(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.f * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    pub s: DMatrix<f64>,
    pub v0: DVector<f64>,
}

impl Exosystem {
    pub fn new(s: DMatrix<f64>, v0: DVector<f64>) -> Result<Self> {
        check_square(&s, "S")?;
        if v0.len() != s.nrows() {
            return Err(Error::Dimension(format!(
                "v0 has length {}, expected q = {}",
                v0.len(),
                s.nrows()
            )));
        }
        Ok(Self { s, v0 })
    }

    pub fn q(&self) -> usize {
        self.s.nrows()
    }

    pub fn check_compatible(&self, plant: &Plant) -> Result<()> {
        if self.q() != plant.q() {
            return Err(Error::Dimension(format!(
                "exosystem dimension q = {} does not match D/F columns {}",
                self.q(),
                plant.q()
            )));
        }
        Ok(())
    }
}

/// Parameters of the adaptive-cruise-control benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParams {
    /// Time headway τ_h (s).
    pub tau_h: f64,
    /// Engine time constant T_L (s).
    pub t_l: f64,
    /// Engine gain K_L.
    pub k_l: f64,
    /// Exosystem rotation rate ω (rad/s).
    pub omega: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            tau_h: 1.5,
            t_l: 0.45,
            k_l: 1.0,
            omega: std::f64::consts::PI / 3.0,
        }
    }
}

impl AccParams {
    /// State: clearance error, velocity error, acceleration. Input: desired
    /// acceleration. The preceding vehicle's acceleration is `[1 0 1] v`.
    pub fn plant(&self) -> Plant {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0, 1.0, -self.tau_h, //
                0.0, 0.0, -1.0, //
                0.0, 0.0, -1.0 / self.t_l,
            ],
        );
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, -self.k_l / self.t_l]);
        let c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let d = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0, 0.0, 0.0, //
                1.0, 0.0, 1.0, //
                0.0, 0.0, 0.0,
            ],
        );
        let f = DMatrix::zeros(1, 3);
        Plant { a, b, c, d, f }
    }

    pub fn exosystem_matrix(&self) -> DMatrix<f64> {
        let w = self.omega;
        DMatrix::from_row_slice(3, 3, &[0.0, -w, 0.0, w, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn exosystem(&self, v0: DVector<f64>) -> Exosystem {
        Exosystem {
            s: self.exosystem_matrix(),
            v0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllabilityReport {
    pub controllable: bool,
    pub rank: usize,
}

/// Rank of `[B, AB, …, Aⁿ⁻¹B]`.
pub fn check_controllability(plant: &Plant) -> ControllabilityReport {
    let n = plant.n();
    let m = plant.m();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = plant.b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = &plant.a * block;
    }
    let rank = numerical_rank(&ctrb, RANK_TOL);
    ControllabilityReport {
        controllable: rank == n,
        rank,
    }
}

/// True iff `rank [[A − λI, B], [C, 0]] = n + r` at every eigenvalue of `S`.
pub fn check_transmission_rank(plant: &Plant, exo: &Exosystem) -> Result<bool> {
    exo.check_compatible(plant)?;
    let (n, m, r) = (plant.n(), plant.m(), plant.r());
    for lambda in matops::eigenvalues(&exo.s)? {
        let mut pencil: DMatrix<Complex<f64>> = DMatrix::zeros(n + r, n + m);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(plant.a[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..m {
                pencil[(i, n + j)] = Complex::new(plant.b[(i, j)], 0.0);
            }
        }
        for i in 0..r {
            for j in 0..n {
                pencil[(n + i, j)] = Complex::new(plant.c[(i, j)], 0.0);
            }
        }
        let sv = pencil.svd(false, false).singular_values;
        let max = sv.iter().copied().fold(0.0, f64::max);
        let rank = if max == 0.0 {
            0
        } else {
            sv.iter().filter(|&&s| s >= RANK_TOL * max).count()
        };
        if rank != n + r {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl RegulatorSolution {
    /// `(‖XS − AX − BU − D‖, ‖CX + F‖)` in the induced 2-norm.
    pub fn residuals(&self, plant: &Plant, s: &DMatrix<f64>) -> (f64, f64) {
        regulator_residuals(plant, s, &self.x, &self.u)
    }
}

pub fn regulator_residuals(
    plant: &Plant,
    s: &DMatrix<f64>,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> (f64, f64) {
    let dyn_res = x * s - &plant.a * x - &plant.b * u - &plant.d;
    let out_res = &plant.c * x + &plant.f;
    (norm2(&dyn_res), norm2(&out_res))
}

/// Tolerance on both regulator-equation residuals.
pub const REGULATOR_TOL: f64 = 1e-9;

/// Solves `XS = AX + BU + D`, `0 = CX + F` as one stacked linear system in
/// `(vec X, vec U)`.
pub fn solve_regulator_equations(plant: &Plant, exo: &Exosystem) -> Result<RegulatorSolution> {
    exo.check_compatible(plant)?;
    let (n, m, q, r) = (plant.n(), plant.m(), plant.q(), plant.r());
    let iq = DMatrix::identity(q, q);
    let in_ = DMatrix::identity(n, n);
    let unknowns = n * q + m * q;
    let mut lhs = DMatrix::zeros(n * q + r * q, unknowns);
    // vec(XS − AX) = (Sᵀ ⊗ Iₙ − I_q ⊗ A) vec X ; vec(BU) = (I_q ⊗ B) vec U
    lhs.view_mut((0, 0), (n * q, n * q))
        .copy_from(&(kron(&exo.s.transpose(), &in_) - kron(&iq, &plant.a)));
    lhs.view_mut((0, n * q), (n * q, m * q))
        .copy_from(&(-kron(&iq, &plant.b)));
    lhs.view_mut((n * q, 0), (r * q, n * q))
        .copy_from(&kron(&iq, &plant.c));
    let mut rhs = DVector::zeros(n * q + r * q);
    rhs.rows_mut(0, n * q).copy_from(&vec_of(&plant.d));
    rhs.rows_mut(n * q, r * q).copy_from(&(-vec_of(&plant.f)));

    let sol = matops::lstsq(&lhs, &rhs, 1e-12)?;
    if !sol.full_rank() {
        return Err(Error::Assumption(format!(
            "regulator equations are singular (rank {} < {unknowns}); \
             the transmission-zero condition on σ(S) fails",
            sol.rank
        )));
    }
    let x = matops::unvec(&sol.x.rows(0, n * q).into_owned(), n, q)?;
    let u = matops::unvec(&sol.x.rows(n * q, m * q).into_owned(), m, q)?;
    let out = RegulatorSolution { x, u };
    let (r1, r2) = out.residuals(plant, &exo.s);
    let scale = 1.0 + norm2(&plant.d) + norm2(&plant.f);
    if r1 > REGULATOR_TOL * scale || r2 > REGULATOR_TOL * scale {
        return Err(Error::Assumption(format!(
            "regulator equations have no exact solution (residuals {r1:.3e}, {r2:.3e})"
        )));
    }
    Ok(out)
}

/// Solves `MᵀP + PM = −RHS` without checking stability of `M`.
///
/// The Lyapunov operator must be nonsingular (no pair of eigenvalues of `M`
/// summing to zero).
pub fn lyapunov_operator_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m, "Lyapunov M")?;
    let n = m.nrows();
    if rhs.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lyapunov right-hand side is {}x{}, expected {n}x{n}",
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    let id = DMatrix::identity(n, n);
    let mt = m.transpose();
    let op = kron(&id, &mt) + kron(&mt, &id);
    let b = -vec_of(rhs);
    let sol = op
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Assumption("Lyapunov operator is singular".into()))?;
    let p = matops::unvec(&sol, n, n)?;
    Ok(matops::symmetrize(&p))
}

/// Solves `MᵀP + PM = −RHS` for Hurwitz `M`.
pub fn solve_lyapunov(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m, "Lyapunov M")?;
    check_symmetric(rhs)?;
    if !is_hurwitz(m)?.hurwitz {
        let z = matops::rightmost_eigenvalue(m)?;
        return Err(Error::NotHurwitz { re: z.re, im: z.im });
    }
    lyapunov_operator_solve(m, rhs)
}

#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub lambda_minus: f64,
    pub iterations: usize,
    pub are_residual: f64,
    /// Policy-evaluation iterates `P_0, P_1, …`.
    pub iterates: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct KleinmanOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KleinmanOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// `‖ÂᵀP + PÂ + Q − PBBᵀP‖` with `Â = A + λ⁻I`.
pub fn are_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    lambda_minus: f64,
    p: &DMatrix<f64>,
) -> f64 {
    let n = a.nrows();
    let ah = a + DMatrix::identity(n, n) * lambda_minus;
    let r = ah.transpose() * p + p * &ah + q - p * b * b.transpose() * p;
    norm2(&r)
}

/// Model-based policy iteration for the discounted LQR problem.
///
/// Alternates the Lyapunov solve `A_kᵀP_k + P_kA_k + Q + K_kᵀK_k + 2λ⁻P_k = 0`
/// (with `A_k = A − BK_k`) and the update `K_{k+1} = BᵀP_k` until successive
/// iterates differ by less than `tol` (relative to `max(1, ‖P‖)`).
pub fn solve_are_kleinman(
    plant: &Plant,
    q: &DMatrix<f64>,
    lambda_minus: f64,
    k0: &DMatrix<f64>,
    opts: KleinmanOptions,
) -> Result<LqrSolution> {
    kleinman(&plant.a, &plant.b, q, lambda_minus, k0, opts)
}

pub fn kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    lambda_minus: f64,
    k0: &DMatrix<f64>,
    opts: KleinmanOptions,
) -> Result<LqrSolution> {
    let n = a.nrows();
    let m = b.ncols();
    check_square(q, "Q")?;
    check_symmetric(q)?;
    if q.nrows() != n {
        return Err(Error::Dimension(format!("Q must be {n}x{n}")));
    }
    if k0.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "K0 is {}x{}, expected {m}x{n}",
            k0.nrows(),
            k0.ncols()
        )));
    }
    if !(lambda_minus >= 0.0 && lambda_minus.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda_minus must be a nonnegative finite number, got {lambda_minus}"
        )));
    }
    if !is_positive_definite(q, 0.0) {
        let (min, _) = matops::sym_eig_extremes(q);
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let shifted = a + DMatrix::identity(n, n) * lambda_minus;
    let mut k = k0.clone();
    let mut iterates: Vec<DMatrix<f64>> = Vec::new();
    for it in 0..opts.max_iter {
        let closed = &shifted - b * &k;
        let report = is_hurwitz(&closed)?;
        if !report.hurwitz {
            return Err(Error::Assumption(format!(
                "gain at iteration {it} is not admissible: A + λ⁻I − BK has spectral abscissa {:.6e}",
                report.margin
            )));
        }
        let p = lyapunov_operator_solve(&closed, &(q + k.transpose() * &k))?;
        let next_k = b.transpose() * &p;
        let converged = iterates
            .last()
            .map(|prev| norm2(&(&p - prev)) < opts.tol * norm2(&p).max(1.0))
            .unwrap_or(false);
        iterates.push(p);
        if converged {
            let p = iterates.last().cloned().expect("nonempty");
            let are_residual = are_residual(a, b, q, lambda_minus, &p);
            return Ok(LqrSolution {
                k: b.transpose() * &p,
                p,
                lambda_minus,
                iterations: it + 1,
                are_residual,
                iterates,
            });
        }
        k = next_k;
    }
    Err(Error::NoConvergence {
        what: "Kleinman iteration".into(),
        iterations: opts.max_iter,
    })
}

/// A gain `K` with `A − BK` Hurwitz, from Bass's Lyapunov construction.
pub fn stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    // (−A − βI) W + W (−A − βI)ᵀ = −2BBᵀ, then K = Bᵀ W⁻¹.
    let a_beta = -(a + DMatrix::identity(n, n) * beta);
    let w = lyapunov_operator_solve(&a_beta.transpose(), &(b * b.transpose() * 2.0))?;
    let w_inv = w.clone().try_inverse().ok_or_else(|| {
        Error::Assumption("(A, B) is not controllable: Bass Gramian is singular".into())
    })?;
    if !is_positive_definite(&w, 1e-14) {
        return Err(Error::Assumption(
            "(A, B) is not controllable: Bass Gramian is not positive definite".into(),
        ));
    }
    Ok(b.transpose() * w_inv)
}

/// An admissible initial gain for the discounted problem, obtained from the
/// model-based optimum for the inflated weight `inflation · Q`.
pub fn admissible_gain(
    plant: &Plant,
    q: &DMatrix<f64>,
    lambda_minus: f64,
    inflation: f64,
) -> Result<DMatrix<f64>> {
    let n = plant.n();
    let shifted = &plant.a + DMatrix::identity(n, n) * lambda_minus;
    let k_bass = stabilizing_gain(&shifted, &plant.b)?;
    let sol = kleinman(
        &plant.a,
        &plant.b,
        &(q * inflation),
        lambda_minus,
        &k_bass,
        KleinmanOptions::default(),
    )?;
    Ok(sol.k)
}
