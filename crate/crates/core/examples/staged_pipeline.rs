//! Runs the file-based pipeline stage by stage into a temporary directory.

use resilient_adp::scenario::{load_and_validate, run_pipeline, Stage, StageOutput, ACC_CONFIG};

fn main() -> resilient_adp::Result<()> {
    let cfg = load_and_validate(ACC_CONFIG)?;
    let out = std::env::temp_dir().join("resilient_adp_staged");
    for stage in [Stage::Collect, Stage::Learn, Stage::Certify, Stage::Simulate, Stage::Compare] {
        match run_pipeline(&cfg, stage, &out, false)? {
            StageOutput::Compare(metrics) => {
                for m in metrics {
                    println!("{:<20} {:.3e}", m.label, m.final_rms);
                }
            }
            other => println!("{stage}: done ({})", short(&other)),
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn short(out: &StageOutput) -> String {
    match out {
        StageOutput::Collect(r) => format!("rank {}", r.rank.rank),
        StageOutput::Learn(r) => format!("k* = {}", r.k_star),
        StageOutput::Certify(c) => format!("τ_D^k = {:.3}", c.tau_d_bound),
        StageOutput::Simulate(s) => format!("{} attacks", s.schedule.intervals().len()),
        _ => String::new(),
    }
}
