use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resilient_adp::dos::generate_schedule;
use resilient_adp::scenario::{self, load_and_validate, run_pipeline, ScenarioConfig, Stage, StageOutput};
use resilient_adp::Result;

/// Learn and evaluate a DoS-resilient output-regulation controller.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Scenario file (TOML). Defaults to the bundled cruise-control scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to the scenario's `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    no_plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check the scenario.
    Validate,
    /// Print a generated attack schedule as JSON.
    GenDos,
    Collect,
    Learn,
    Certify,
    Simulate,
    Compare,
    /// Run one named stage (collect, learn, certify, simulate, compare, all).
    Run {
        #[arg(long)]
        stage: Stage,
    },
    /// The full pipeline on the bundled cruise-control scenario.
    DemoAcc,
}

fn load(cli: &Cli, force_bundled: bool) -> Result<ScenarioConfig> {
    let mut cfg = match (&cli.config, force_bundled) {
        (Some(path), false) => scenario::load_config_file(path)?,
        _ => load_and_validate(scenario::ACC_CONFIG)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn report(out: &StageOutput) {
    match out {
        StageOutput::Collect(r) => println!(
            "collected {} windows; rank {} of {} required",
            r.windows, r.rank.rank, r.rank.required
        ),
        StageOutput::Learn(r) => {
            println!(
                "λ⁺ = {} after {} attempt(s), λ⁻ = {}, policy iteration stopped at k* = {}",
                r.lambda_plus, r.lambda_attempts, r.lambda_minus, r.k_star
            );
            println!("K = {:?}", r.policy.k.as_slice());
            println!("L = {:?}", r.policy.l.as_slice());
        }
        StageOutput::Certify(c) => println!(
            "dwell-time bound τ_D^k = {:.4} s (c3 = {:.4e}, c4 = {:.4})",
            c.tau_d_bound, c.c3, c.c4
        ),
        StageOutput::Simulate(s) => println!(
            "{} attack interval(s), attacked fraction {:.3}",
            s.schedule.intervals().len(),
            s.attack_fraction
        ),
        StageOutput::Compare(ms) => {
            for m in ms {
                println!(
                    "{:<20} final RMS {:.3e}  peak {:.3e}  settling {}",
                    m.label,
                    m.final_rms,
                    m.peak_error,
                    m.settling_time.map_or("never".into(), |t| format!("{t:.3} s"))
                );
            }
        }
        StageOutput::All(s) => {
            report(&StageOutput::Compare(s.metrics.clone()));
            println!(
                "gap to model-based optimum: K {:.2e}, P {:.2e}; dwell-time bound {:.3} s; max |e| after {} s: {:.2e}",
                s.oracle.k_rel_error,
                s.oracle.p_rel_error,
                s.certificate.tau_d_bound,
                s.closed_loop.check_after,
                s.closed_loop.max_error_after
            );
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let demo = matches!(cli.command, Command::DemoAcc);
    let cfg = load(cli, demo)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let plots = cfg.plots && !cli.no_plots;
    let stage = match &cli.command {
        Command::Validate => {
            println!(
                "ok: n = {}, m = {}, q = {}, r = {}; DoS η = {}, τ_D = {}, κ = {}, T = {}",
                cfg.plant.n(),
                cfg.plant.m(),
                cfg.plant.q(),
                cfg.plant.r(),
                cfg.dos.eta,
                cfg.dos.tau_d,
                cfg.dos.kappa,
                cfg.dos.t_crit
            );
            return Ok(());
        }
        Command::GenDos => {
            let s = generate_schedule(cfg.seed, &cfg.dos, cfg.horizon, &cfg.generator)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            return Ok(());
        }
        Command::Collect => Stage::Collect,
        Command::Learn => Stage::Learn,
        Command::Certify => Stage::Certify,
        Command::Simulate => Stage::Simulate,
        Command::Compare => Stage::Compare,
        Command::Run { stage } => *stage,
        Command::DemoAcc => Stage::All,
    };
    let output = run_pipeline(&cfg, stage, &out, plots)?;
    report(&output);
    println!("outputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
