//! Solves XS = AX + BU + D, 0 = CX + F for the cruise-control plant.

use nalgebra::DVector;
use resilient_adp::model::{check_transmission_rank, solve_regulator_equations, AccParams};

fn main() -> resilient_adp::Result<()> {
    let acc = AccParams::default();
    let plant = acc.plant();
    let exo = acc.exosystem(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    println!("transmission rank condition: {}", check_transmission_rank(&plant, &exo)?);
    let sol = solve_regulator_equations(&plant, &exo)?;
    let (r1, r2) = sol.residuals(&plant, &exo.s);
    println!("X = {:.4}", sol.x);
    println!("U = {:.4}", sol.u);
    println!("residuals {r1:.1e}, {r2:.1e}");
    Ok(())
}
