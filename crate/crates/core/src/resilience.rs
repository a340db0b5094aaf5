//! Dwell-time bound and decay envelope for the switched closed loop.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dos::DosParams;
use crate::error::{Error, Result};
use crate::matops::{self, sym_eig_extremes};
use crate::sim::Trajectory;

/// Absolute slack, relative to `|x̃(0)|`, allowed by [`verify_envelope`].
pub const ENVELOPE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResilienceCertificate {
    pub tau_d_bound: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub t_crit: f64,
    pub eta: f64,
    pub kappa: f64,
}

impl ResilienceCertificate {
    /// `c4 e^{−(c3/2) t}`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.c4 * (-0.5 * self.c3 * t).exp()
    }

    /// Whether a schedule with average dwell time `tau_d` is covered.
    pub fn covers(&self, tau_d: f64) -> bool {
        tau_d >= self.tau_d_bound
    }
}

fn pd_extremes(p: &DMatrix<f64>, name: &str) -> Result<(f64, f64)> {
    matops::check_square(p, name)?;
    matops::check_symmetric(p)?;
    let (min, max) = sym_eig_extremes(p);
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok((min, max))
}

/// `ln(λ_M(P_k)λ_M(P⁺) / (λ_m(P_k)λ_m(P⁺))) · T / (2(T − 1)λ⁻)`.
pub fn dwell_time_bound(p_k: &DMatrix<f64>, p_plus: &DMatrix<f64>, t_crit: f64, lambda_minus: f64) -> Result<f64> {
    if !(t_crit > 1.0) || !(lambda_minus > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need T > 1 and λ⁻ > 0, got T = {t_crit}, λ⁻ = {lambda_minus}"
        )));
    }
    let (km, kmax) = pd_extremes(p_k, "P_k")?;
    let (pm, pmax) = pd_extremes(p_plus, "P⁺")?;
    let ratio = (kmax * pmax) / (km * pm);
    Ok(ratio.ln() * t_crit / (2.0 * (t_crit - 1.0) * lambda_minus))
}

pub fn proof_constants(
    p_k: &DMatrix<f64>,
    p_plus: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    params: &DosParams,
    lambda_plus: f64,
    lambda_minus: f64,
) -> Result<ResilienceCertificate> {
    let (km, kmax) = pd_extremes(p_k, "P_k")?;
    let (pm, pmax) = pd_extremes(p_plus, "P⁺")?;
    let (qm, _) = pd_extremes(q_weight, "Q")?;
    let t = params.t_crit;
    let tau_d_bound = dwell_time_bound(p_k, p_plus, t, lambda_minus)?;
    let mu1 = (kmax * km / (pmax * pm)).sqrt();
    let mu2 = (kmax * pmax / (km * pm)).sqrt();
    let c1 = qm / kmax;
    let c2 = 2.0 * params.kappa * (lambda_plus + lambda_minus + c1) + params.eta * mu2.ln();
    let c3 = c1 * (t - 1.0) / t;
    let c4 = (c2.exp() * kmax.max(mu1 * pmax) / km.min(mu1 * pm)).sqrt();
    Ok(ResilienceCertificate {
        tau_d_bound,
        mu1,
        mu2,
        c1,
        c2,
        c3,
        c4,
        lambda_plus,
        lambda_minus,
        t_crit: t,
        eta: params.eta,
        kappa: params.kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub satisfied: bool,
    /// Largest `(|x̃(t)| − bound(t)) / |x̃(0)|`; negative when the bound holds
    /// with room to spare.
    pub max_violation: f64,
    pub violations: usize,
}

/// Checks `|x̃(t)| ≤ c4 e^{−(c3/2)t} |x̃(0)| + slack` at every grid point,
/// with `x̃ = x − Xv` and slack `ENVELOPE_SLACK · |x̃(0)|`.
pub fn verify_envelope(traj: &Trajectory, cert: &ResilienceCertificate, x_reg: &DMatrix<f64>) -> EnvelopeReport {
    let xs = traj.steady_state_error(x_reg);
    let x0 = xs.first().map_or(0.0, |z| z.norm());
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    let slack = ENVELOPE_SLACK * x0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    for (t, z) in traj.times.iter().zip(&xs) {
        let excess = z.norm() - cert.envelope(t - t0) * x0;
        if excess > slack {
            violations += 1;
        }
        let scaled = if x0 > 0.0 { excess / x0 } else { excess };
        max_violation = max_violation.max(scaled);
    }
    if xs.is_empty() {
        max_violation = 0.0;
    }
    EnvelopeReport {
        satisfied: violations == 0,
        max_violation,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DVector};
    use proptest::prelude::*;

    fn params(eta: f64, kappa: f64) -> DosParams {
        DosParams {
            eta,
            tau_d: 1.0,
            kappa,
            t_crit: 2.0,
        }
    }

    #[test]
    fn identity_inputs_give_zero_bound() {
        let i = DMatrix::identity(3, 3);
        assert_eq!(dwell_time_bound(&i, &i, 2.0, 1.0).unwrap(), 0.0);
        let c = proof_constants(&i, &i, &i, &params(0.0, 0.0), 0.5, 1.0).unwrap();
        assert_eq!((c.mu1, c.mu2, c.c1, c.c2, c.c4), (1.0, 1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn diagonal_example() {
        let pk = dmatrix![2.0, 0.0; 0.0, 1.0];
        let pp = dmatrix![4.0, 0.0; 0.0, 1.0];
        let tau = dwell_time_bound(&pk, &pp, 2.0, 1.0).unwrap();
        assert!((tau - 8f64.ln()).abs() < 1e-12);
        let c = proof_constants(&pk, &pp, &DMatrix::identity(2, 2), &params(1.0, 0.5), 0.5, 1.0).unwrap();
        assert!((c.c1 - 0.5).abs() < 1e-15);
        assert!((c.c3 - 0.25).abs() < 1e-15);
        assert!((c.mu2 - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let i = DMatrix::identity(2, 2);
        let bad = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(
            dwell_time_bound(&bad, &i, 2.0, 1.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(dwell_time_bound(&i, &i, 1.0, 1.0).is_err());
        assert!(dwell_time_bound(&i, &i, 2.0, 0.0).is_err());
    }

    fn traj_from(values: &[f64], dt: f64) -> Trajectory {
        let n = values.len();
        Trajectory {
            dt,
            times: (0..n).map(|k| k as f64 * dt).collect(),
            x: values.iter().map(|&z| DVector::from_vec(vec![z])).collect(),
            u: vec![DVector::zeros(1); n],
            v: vec![DVector::zeros(1); n],
            e: vec![DVector::zeros(1); n],
            attacked: vec![false; n],
        }
    }

    #[test]
    fn envelope_checks() {
        let i = DMatrix::identity(1, 1);
        let cert = proof_constants(&i, &i, &i, &params(1.0, 0.5), 0.5, 1.0).unwrap();
        let zero = traj_from(&[0.0; 10], 0.1);
        assert!(verify_envelope(&zero, &cert, &DMatrix::zeros(1, 1)).satisfied);

        let decaying: Vec<f64> = (0..100).map(|k| (-(k as f64) * 0.1).exp()).collect();
        assert!(verify_envelope(&traj_from(&decaying, 0.1), &cert, &DMatrix::zeros(1, 1)).satisfied);

        let growing: Vec<f64> = (0..100).map(|k| (k as f64 * 0.1).exp()).collect();
        let rep = verify_envelope(&traj_from(&growing, 0.1), &cert, &DMatrix::zeros(1, 1));
        assert!(!rep.satisfied && rep.max_violation > 1.0);
    }

    fn spd(diag: &[f64], angle: f64) -> DMatrix<f64> {
        let (s, c) = angle.sin_cos();
        let r = dmatrix![c, -s; s, c];
        &r * DMatrix::from_diagonal(&DVector::from_column_slice(diag)) * r.transpose()
    }

    proptest! {
        #[test]
        fn bound_is_scale_invariant(a in 0.1f64..10.0, b in 0.1f64..10.0, c in 0.1f64..10.0,
                                    d in 0.1f64..10.0, th in 0.0f64..3.0, s in 0.01f64..100.0) {
            let pk = spd(&[a, b], th);
            let pp = spd(&[c, d], 0.7 * th);
            let base = dwell_time_bound(&pk, &pp, 2.0, 1.0).unwrap();
            let scaled = dwell_time_bound(&(&pk * s), &pp, 2.0, 1.0).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.abs().max(1.0));
            prop_assert!(base >= -1e-12);
            let p = params(1.0, 0.5);
            let c1 = proof_constants(&pk, &pp, &DMatrix::identity(2, 2), &p, 0.5, 1.0).unwrap();
            let c2 = proof_constants(&pk, &(&pp * s), &DMatrix::identity(2, 2), &p, 0.5, 1.0).unwrap();
            prop_assert!((c1.mu2 - c2.mu2).abs() <= 1e-9 * c1.mu2);
            prop_assert!(c1.mu2 >= 1.0 - 1e-12 && c1.c1 > 0.0 && c1.c3 > 0.0);
        }

        #[test]
        fn bound_nonincreasing_in_lambda_minus(a in 0.1f64..10.0, c in 0.1f64..10.0,
                                               l1 in 0.01f64..5.0, dl in 0.0f64..5.0) {
            let pk = spd(&[a, 1.0], 0.3);
            let pp = spd(&[c, 2.0], 1.1);
            let t1 = dwell_time_bound(&pk, &pp, 3.0, l1).unwrap();
            let t2 = dwell_time_bound(&pk, &pp, 3.0, l1 + dl).unwrap();
            prop_assert!(t2 <= t1 + 1e-12);
        }
    }
}
