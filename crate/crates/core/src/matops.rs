//! Vectorization helpers and small dense kernels shared by every other module.
//!
//! Orderings follow the usual conventions of the data-driven LQR literature:
//! `vec` stacks columns, while `vecv`/`vecs` scan the upper triangle row by
//! row so that `vecs(P) · vecv(x) = xᵀ P x` for every symmetric `P`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative bound on `‖P − Pᵀ‖` accepted as "symmetric".
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A matrix counts as Hurwitz when its spectral abscissa is below `-HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-9;

/// Default relative singular-value threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Quadratic monomials of `v`: `[v₁², v₁v₂, …, v₁vₙ, v₂², …, vₙ²]`.
pub fn vecv(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out[k] = v[i] * v[j];
            k += 1;
        }
    }
    out
}

/// Symmetric-matrix coordinates `[p₁₁, 2p₁₂, …, 2p₁ₘ, p₂₂, 2p₂₃, …, pₘₘ]`.
pub fn vecs(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_square(p, "vecs")?;
    check_symmetric(p)?;
    let m = p.nrows();
    let mut out = DVector::zeros(m * (m + 1) / 2);
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            out[k] = if i == j { p[(i, i)] } else { 2.0 * p[(i, j)] };
            k += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`vecs`].
pub fn unvecs(w: &DVector<f64>, m: usize) -> Result<DMatrix<f64>> {
    if w.len() != m * (m + 1) / 2 {
        return Err(Error::Dimension(format!(
            "unvecs: length {} does not match m(m+1)/2 = {} for m = {m}",
            w.len(),
            m * (m + 1) / 2
        )));
    }
    let mut p = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            if i == j {
                p[(i, i)] = w[k];
            } else {
                let half = 0.5 * w[k];
                p[(i, j)] = half;
                p[(j, i)] = half;
            }
            k += 1;
        }
    }
    Ok(p)
}

/// Column-stacking vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "unvec: length {} cannot be reshaped to {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    let mut out = DMatrix::zeros(p * r, q * s);
    for i in 0..p {
        for j in 0..q {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * r, j * s), (r, s)).copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Kronecker product of two column vectors, `a ⊗ b`.
pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        for &bj in b {
            out.push(ai * bj);
        }
    }
    out
}

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

pub fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_symmetric(p: &DMatrix<f64>) -> Result<()> {
    let asymmetry = (p - p.transpose()).norm();
    let tolerance = SYMMETRY_TOL * p.norm();
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    Ok(())
}

/// Eigenvalues of a real square matrix, computed from its real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    check_square(m, "eigenvalues")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NoConvergence {
            what: "real Schur decomposition".into(),
            iterations: 10_000,
        })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    /// Spectral abscissa, i.e. the maximum real part of the spectrum.
    pub margin: f64,
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<HurwitzReport> {
    let margin = spectral_abscissa(m)?;
    Ok(HurwitzReport {
        hurwitz: margin < -HURWITZ_TOL,
        margin,
    })
}

/// Eigenvalue of `m` with the largest real part (used in error reports).
pub fn rightmost_eigenvalue(m: &DMatrix<f64>) -> Result<Complex<f64>> {
    eigenvalues(m)?
        .into_iter()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .ok_or_else(|| Error::Dimension("empty matrix has no spectrum".into()))
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eig_extremes(p: &DMatrix<f64>) -> (f64, f64) {
    let eig = symmetrize(p).symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Positive definiteness with a relative floor: `λ_min > rel_tol · λ_max`.
pub fn is_positive_definite(p: &DMatrix<f64>, rel_tol: f64) -> bool {
    if p.nrows() == 0 {
        return false;
    }
    let (min, max) = sym_eig_extremes(p);
    max > 0.0 && min > rel_tol * max
}

/// Induced 2-norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values at or above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= rel_tol * max).count()
}

/// Scales each column to unit Euclidean norm; returns the scaled matrix and
/// the applied factors (zero columns keep factor 1).
pub fn column_scaled(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut scaled = a.clone();
    let mut factors = DVector::from_element(a.ncols(), 1.0);
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
            factors[j] = 1.0 / norm;
        }
    }
    (scaled, factors)
}

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    /// Numerical rank of the column-scaled design matrix.
    pub rank: usize,
    /// `‖A x − b‖ / ‖b‖` (absolute residual when `b = 0`).
    pub rel_residual: f64,
}

impl LstsqSolution {
    pub fn full_rank(&self) -> bool {
        self.rank == self.x.len()
    }
}

/// Least squares `min ‖A x − b‖` with column equilibration and an SVD solve.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<LstsqSolution> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "lstsq: {} rows in A but {} entries in b",
            a.nrows(),
            b.len()
        )));
    }
    let (scaled, factors) = column_scaled(a);
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = if smax == 0.0 {
        0
    } else {
        svd.singular_values
            .iter()
            .filter(|&&s| s >= rank_tol * smax)
            .count()
    };
    let y = svd
        .solve(b, rank_tol * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(format!("lstsq: {e}")))?;
    let x = y.component_mul(&factors);
    let resid = (a * &x - b).norm();
    let bnorm = b.norm();
    let rel_residual = if bnorm > 0.0 { resid / bnorm } else { resid };
    Ok(LstsqSolution {
        x,
        rank,
        rel_residual,
    })
}

/// Converts a row-major nested vector into a matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter storing a matrix as a list of rows.
pub mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(D::Error::custom)
    }
}
