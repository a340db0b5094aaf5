//! Checks the data rank condition with and without exploration input.

use nalgebra::{DMatrix, DVector};
use resilient_adp::collect::{build_regressors, check_rank_condition};
use resilient_adp::model::AccParams;
use resilient_adp::sim::{integrate_open_loop, make_data_windows, ExplorationSpec};

fn main() -> resilient_adp::Result<()> {
    let acc = AccParams::default();
    let plant = acc.plant();
    let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let windows = make_data_windows(None, 0.0, 2.0, 0.05, 0.0);
    for (name, spec) in [("with exploration", ExplorationSpec::benchmark()), ("without", ExplorationSpec::none(1))] {
        let data = integrate_open_loop(&plant, &exo, &spec, None, &DVector::from_vec(vec![1.0, 0.5, 0.0]), 2.0, 1e-3)?;
        let regs = build_regressors(&data, &windows, &DMatrix::zeros(3, 3))?;
        let rep = check_rank_condition(&regs, 3, 1, 3);
        let s_req = rep.singular_values[rep.required - 1];
        println!("{name:>16}: rank {} / {} (singular value #{} = {s_req:.2e})", rep.rank, rep.required, rep.required);
    }
    Ok(())
}
