//! Constants of the switched-system stability certificate for two given
//! Lyapunov matrices.

use nalgebra::{dmatrix, DMatrix};
use resilient_adp::dos::DosParams;
use resilient_adp::resilience::{dwell_time_bound, proof_constants};

fn main() -> resilient_adp::Result<()> {
    let p_k = dmatrix![2.0, 0.0; 0.0, 1.0];
    let p_plus = dmatrix![4.0, 0.0; 0.0, 1.0];
    println!("τ_D^k = {:.6} (ln 8 = {:.6})", dwell_time_bound(&p_k, &p_plus, 2.0, 1.0)?, 8f64.ln());
    let cert = proof_constants(&p_k, &p_plus, &DMatrix::identity(2, 2), &DosParams::benchmark(), 0.5, 1.0)?;
    println!("{}", serde_json::to_string_pretty(&cert)?);
    for t in [0.0, 10.0, 50.0, 100.0] {
        println!("envelope at t = {t:5.1}: {:.4}", cert.envelope(t));
    }
    Ok(())
}
