//! Off-policy policy iteration on exploratory data, side by side with the
//! model-based iteration started from the same gain.

use nalgebra::{DMatrix, DVector};
use resilient_adp::collect::build_regressors;
use resilient_adp::learn::run_policy_iteration;
use resilient_adp::model::{admissible_gain, kleinman, AccParams, KleinmanOptions};
use resilient_adp::sim::{integrate_open_loop, make_data_windows, ExplorationSpec};

fn main() -> resilient_adp::Result<()> {
    let acc = AccParams::default();
    let plant = acc.plant();
    let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let data = integrate_open_loop(
        &plant,
        &exo,
        &ExplorationSpec::benchmark(),
        None,
        &DVector::from_vec(vec![1.0, 0.5, 0.0]),
        2.0,
        1e-3,
    )?;
    let windows = make_data_windows(None, 0.0, 2.0, 0.05, 0.0);
    let regs = build_regressors(&data, &windows, &DMatrix::zeros(3, 3))?;

    let q = DMatrix::identity(3, 3) * 10.0;
    let lambda = 1.0;
    let k0 = admissible_gain(&plant, &q, lambda, 5.0)?;
    let learned = run_policy_iteration(&regs, &k0, &q, lambda, 1e-6, 50, 1e-6)?;
    let exact = kleinman(&plant.a, &plant.b, &q, lambda, &k0, KleinmanOptions { tol: 1e-12, max_iter: 50 })?;
    for (k, (pl, pe)) in learned.iterates.iter().zip(&exact.iterates).enumerate() {
        println!("k = {k}: ‖P_k(data) − P_k(model)‖ = {:.2e}", (pl - pe).norm());
    }
    println!("k* = {}, K = {:.6}", learned.k_star, learned.k);
    Ok(())
}
