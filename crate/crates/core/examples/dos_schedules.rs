//! Generates attack schedules under frequency and duration budgets and
//! reports how much of each budget they use.

use resilient_adp::dos::{check_duration, check_frequency, generate_schedule, DosParams, GeneratorOptions};

fn main() -> resilient_adp::Result<()> {
    let params = DosParams::benchmark();
    for seed in 0..5 {
        let s = generate_schedule(seed, &params, 30.0, &GeneratorOptions::default())?;
        println!(
            "seed {seed}: {:2} attacks, {:4.1}% attacked, frequency defect {:.3}, duration defect {:.3}, admissible {}",
            s.intervals().len(),
            100.0 * s.dos_measure(0.0, 30.0)? / 30.0,
            s.frequency_defect(params.tau_d),
            s.duration_defect(params.t_crit),
            check_frequency(&s, &params) && check_duration(&s, &params)
        );
    }
    let s = generate_schedule(0, &params, 10.0, &GeneratorOptions::default())?;
    println!("{}", serde_json::to_string(&s)?);
    Ok(())
}
