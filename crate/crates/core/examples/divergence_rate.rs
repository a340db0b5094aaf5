//! Finds a rate λ⁺ that bounds the open-loop divergence of an unstable
//! plant using only trajectory data.

use nalgebra::{dmatrix, DMatrix, DVector};
use resilient_adp::collect::build_regressors;
use resilient_adp::learn::learn_divergence_rate;
use resilient_adp::matops::spectral_abscissa;
use resilient_adp::model::{Exosystem, Plant};
use resilient_adp::sim::{integrate_open_loop, make_data_windows, ExplorationSpec, SinusoidTerm};

fn main() -> resilient_adp::Result<()> {
    let plant = Plant::new(
        dmatrix![0.3, 1.0; -1.0, 0.3],
        dmatrix![0.0; 1.0],
        dmatrix![1.0, 0.0],
        dmatrix![0.0; 0.5],
        dmatrix![0.0],
    )?;
    let exo = Exosystem::new(dmatrix![0.0], DVector::from_vec(vec![1.0]))?;
    let exploration = ExplorationSpec {
        channels: vec![[0.7, 1.9, 3.1]
            .iter()
            .map(|&f| SinusoidTerm {
                amplitude: 0.5,
                frequency_hz: f,
                phase: 0.0,
            })
            .collect()],
    };
    let data = integrate_open_loop(&plant, &exo, &exploration, None, &DVector::from_vec(vec![0.1, 0.0]), 2.0, 1e-3)?;
    let windows = make_data_windows(None, 0.0, 2.0, 0.1, 0.0);
    let regs = build_regressors(&data, &windows, &DMatrix::zeros(2, 1))?;
    let res = learn_divergence_rate(&regs, 0.01, 0.01, 2.0, 40)?;
    for step in &res.ladder {
        println!(
            "λ⁺ = {:7.3}: full rank {}, min eig(P⁺) = {:+.3e}",
            step.lambda_plus, step.full_rank, step.min_eigenvalue
        );
    }
    println!("accepted λ⁺ = {} (true spectral abscissa {})", res.lambda_plus, spectral_abscissa(&plant.a)?);
    Ok(())
}
