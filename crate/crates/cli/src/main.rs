use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rhs_radar::bench::{self, validate, ExperimentSpec, RunOutcome};
use rhs_radar::draoa::DraoaConfig;
use rhs_radar::Error;

/// Distributed MIMO radar with reconfigurable holographic surfaces.
#[derive(Parser)]
#[command(name = "rhs-radar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML spec file.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Hardware cost sweep against phased arrays.
    Fig2a(Preset),
    /// Sweep over the number of transmit panels.
    Fig2b(Preset),
    /// Sweep over the number of receive panels at a fixed element total.
    Fig2c(Preset),
    /// Compare the optimizer with an exhaustive grid on a tiny scene.
    Oracle {
        /// Amplitude grid step.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the invariant suite on random tiny instances.
    Validate {
        /// Instances for the signal-chain consistency check.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Instances for the optimizer checks.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Preset {
    /// Print the preset spec as TOML and exit.
    #[arg(long)]
    print_spec: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace results written by a different spec.
    #[arg(long)]
    overwrite: bool,
}

impl Overrides {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if let Some(w) = self.workers {
            spec.workers = w;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(o) = &self.out {
            spec.output.dir = o.clone();
        }
        if self.overwrite {
            spec.output.overwrite = true;
        }
    }
}

fn print_summary(outcome: &RunOutcome) {
    println!(
        "{:<12} {:>8} {:<12} {:>5} {:>6} {:>10} {:>8} {:>10}",
        "series", "value", "scheme", "ok", "failed", "mean_db", "std_db", "bound_db"
    );
    for r in &outcome.summary {
        println!(
            "{:<12} {:>8} {:<12} {:>5} {:>6} {:>10.3} {:>8.3} {:>10}",
            r.series,
            r.value,
            r.scheme,
            r.trials_ok,
            r.trials_failed,
            r.mean_db,
            r.std_db,
            r.mean_bound_db.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    println!(
        "{} trials run, {} reused, {} failed rows; results in {}",
        outcome.executed,
        outcome.skipped,
        outcome.failed(),
        outcome.dir.display()
    );
}

fn run_spec(mut spec: ExperimentSpec, overrides: &Overrides) -> Result<ExitCode, Error> {
    overrides.apply(&mut spec);
    spec.validate()?;
    let outcome = bench::run_experiment(&spec)?;
    print_summary(&outcome);
    Ok(if outcome.failed() > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_preset(name: &str, args: &Preset) -> Result<ExitCode, Error> {
    let spec = bench::preset(name).expect("known preset");
    if args.print_spec {
        print!("{}", spec.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    run_spec(spec, &args.overrides)
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { spec, overrides } => run_spec(bench::load_spec(&spec)?, &overrides),
        Command::Fig2a(a) => run_preset("fig2a", &a),
        Command::Fig2b(a) => run_preset("fig2b", &a),
        Command::Fig2c(a) => run_preset("fig2c", &a),
        Command::Oracle { step, seed } => {
            let scene = bench::oracle_scene()?;
            let cfg = DraoaConfig {
                rng_seed: seed,
                ..Default::default()
            };
            let r = bench::compare_with_grid(&scene, step, &cfg)?;
            println!(
                "grid     {:.6e}  ({} transmit points, {} feasible; {} receive points; {:.2} s)",
                r.grid.objective, r.grid.tx_points, r.grid.tx_feasible, r.grid.rx_points, r.grid_seconds
            );
            println!(
                "draoa    {:.6e}  (relaxed {:.6e}; {:.2} s)",
                r.draoa.worst_case_sinr, r.draoa.relaxed_bound, r.draoa_seconds
            );
            println!("ratio    {:.4}", r.ratio);
            println!("grid psi_t {:?} psi_r {:?}", r.grid.beamformers.psi_t.as_slice(), r.grid.beamformers.psi_r.as_slice());
            println!(
                "draoa psi_t {:?} psi_r {:?}",
                r.draoa.beamformers.psi_t.as_slice(),
                r.draoa.beamformers.psi_r.as_slice()
            );
            Ok(if r.ratio >= 0.9 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Validate { instances, runs, seed } => {
            let checks = validate::run_suite(instances, runs, seed)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e @ Error::Spec(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
