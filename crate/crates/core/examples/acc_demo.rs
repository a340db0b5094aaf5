//! Learns the resilient controller for the cruise-control benchmark from
//! two seconds of exploratory data and runs it against a random attack
//! schedule.

use nalgebra::{DMatrix, DVector};
use resilient_adp::dos::{generate_schedule, DosParams, GeneratorOptions};
use resilient_adp::learn::{learn_resilient_policy, LearnerConfig};
use resilient_adp::model::{admissible_gain, AccParams};
use resilient_adp::resilience::{proof_constants, verify_envelope};
use resilient_adp::sim::{integrate_open_loop, make_data_windows, simulate_closed_loop, ExplorationSpec};

fn main() -> resilient_adp::Result<()> {
    let acc = AccParams::default();
    let plant = acc.plant();
    let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let x0 = DVector::from_vec(vec![1.0, 0.5, 0.0]);

    let data = integrate_open_loop(&plant, &exo, &ExplorationSpec::benchmark(), None, &x0, 2.0, 1e-3)?;
    let windows = make_data_windows(None, 0.0, 2.0, 0.05, 0.0);
    let q = DMatrix::identity(3, 3) * 10.0;
    let cfg = LearnerConfig {
        lambda_init: 0.25,
        ..LearnerConfig::default()
    };
    let dos = DosParams::benchmark();
    let out = learn_resilient_policy(&data, &windows, &plant.c, &plant.f, &q, dos.t_crit, &cfg, |lm| {
        admissible_gain(&plant, &q, lm, 2.0)
    })?;
    let policy = &out.policy;
    println!("λ⁺ = {}, λ⁻ = {}, k* = {}", policy.lambda_plus, policy.lambda_minus, out.pi.k_star);
    println!("K = {:.4}", policy.k);
    println!("L = {:.4}", policy.l);

    let cert = proof_constants(&policy.p_k, &policy.p_plus, &q, &dos, policy.lambda_plus, policy.lambda_minus)?;
    println!("certified dwell time τ_D^k = {:.3} s", cert.tau_d_bound);

    let schedule = generate_schedule(1, &dos, 60.0, &GeneratorOptions::default())?;
    let start = data.x.last().unwrap().clone();
    let exo_now = resilient_adp::model::Exosystem::new(exo.s.clone(), data.v.last().unwrap().clone())?;
    let run = simulate_closed_loop(&plant, &exo_now, policy, &schedule, &start, 60.0, 1e-3)?;
    let late = run
        .times
        .iter()
        .zip(run.error_norms())
        .filter(|(t, _)| **t > 40.0)
        .map(|(_, e)| e)
        .fold(0.0, f64::max);
    println!(
        "{} attacks, max |e| after 40 s = {late:.2e}, envelope holds: {}",
        schedule.intervals().len(),
        verify_envelope(&run, &cert, &policy.x).satisfied
    );
    Ok(())
}
