//! Compares the learned switched controller with an internal-model
//! controller and a model-based predictor under the same attacks.

use nalgebra::{DMatrix, DVector};
use resilient_adp::baselines::{
    compare_runs, design_internal_model, simulate_internal_model, simulate_observer_resilient,
    ObserverResilientController,
};
use resilient_adp::dos::{generate_schedule, DosParams, GeneratorOptions};
use resilient_adp::learn::assemble_policy;
use resilient_adp::model::{admissible_gain, solve_are_kleinman, solve_regulator_equations, AccParams, KleinmanOptions};
use resilient_adp::sim::simulate_closed_loop;

fn main() -> resilient_adp::Result<()> {
    let acc = AccParams::default();
    let plant = acc.plant();
    let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let x0 = DVector::from_vec(vec![1.0, 0.5, 0.0]);
    let q = DMatrix::identity(3, 3) * 10.0;

    // Model-based version of the learned policy.
    let k0 = admissible_gain(&plant, &q, 1.0, 2.0)?;
    let lqr = solve_are_kleinman(&plant, &q, 1.0, &k0, KleinmanOptions::default())?;
    let reg = solve_regulator_equations(&plant, &exo)?;
    let n = plant.n();
    let policy = assemble_policy(lqr.k.clone(), reg.x, reg.u, 1.0, 0.5, lqr.p.clone(), DMatrix::identity(n, n));

    let schedule = generate_schedule(3, &DosParams::benchmark(), 60.0, &GeneratorOptions::default())?;
    let a = simulate_closed_loop(&plant, &exo, &policy, &schedule, &x0, 60.0, 1e-3)?;
    let obs = ObserverResilientController::new(&plant, lqr.k)?;
    let b = simulate_observer_resilient(&plant, &exo, &obs, &schedule, &x0, 60.0, 1e-3)?;
    let im = design_internal_model(&plant, &exo)?;
    let c = simulate_internal_model(&plant, &exo, &im, &schedule, &x0, 60.0, 1e-3)?;

    for m in compare_runs(&[("switched", &a), ("observer-resilient", &b), ("internal-model", &c)])? {
        println!("{:<20} final RMS {:.3e}  peak {:.3}", m.label, m.final_rms, m.peak_error);
    }
    Ok(())
}
