//! Discounted LQR by Kleinman iteration, started from a Bass stabilizing gain.

use nalgebra::{dmatrix, DMatrix};
use resilient_adp::model::{are_residual, kleinman, stabilizing_gain, KleinmanOptions};

fn main() -> resilient_adp::Result<()> {
    // An unstable oscillator with a single input.
    let a = dmatrix![0.0, 1.0; 2.0, -0.5];
    let b = dmatrix![0.0; 1.0];
    let q = DMatrix::identity(2, 2);
    let lambda = 0.5;

    let k0 = stabilizing_gain(&(&a + DMatrix::identity(2, 2) * lambda), &b)?;
    let sol = kleinman(&a, &b, &q, lambda, &k0, KleinmanOptions::default())?;
    for (k, p) in sol.iterates.iter().enumerate() {
        println!("P_{k} trace {:.8}", p.trace());
    }
    println!("K = {:.6}", sol.k);
    println!("ARE residual {:.2e}", are_residual(&a, &b, &q, lambda, &sol.p));
    Ok(())
}
