//! Command line front end: `run`, `sweep` and `verify`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemotaxis_core::config::ScenarioConfig;
use chemotaxis_core::scenario::{
    resolve_output_dir, run_scenario, run_sweep, verify_command, write_verify_report,
    ScenarioError, SweepAxis, EXIT_CONFIG, EXIT_OTHER,
};

#[derive(Parser)]
#[command(name = "chemotaxis", version, about = "Two-species chemotaxis simulator with sub-logistic damping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Run a one- or two-parameter sweep over numeric config keys.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`, e.g. `model.p=0,0.5,0.9`.
        #[arg(long)]
        axis1: String,
        #[arg(long)]
        axis2: Option<String>,
    },
    /// Check the pointwise inequalities used by the energy estimate.
    Verify {
        #[arg(long)]
        p: f64,
        /// Comma-separated list of deltas.
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
        #[arg(long)]
        umax: f64,
        /// Initial log-grid size of each scan.
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        /// Output directory for `inequalities.json`.
        #[arg(long, default_value = "verify")]
        out: PathBuf,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn fail(e: &ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    code(e.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { code(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { config } => {
            let cfg = match ScenarioConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e.into()),
            };
            let dir = resolve_output_dir(&cfg.output.directory);
            match run_scenario(&cfg, &dir) {
                Ok(outcome) => {
                    println!(
                        "{}: t = {} after {} steps, peak ||u||inf = {:e}; output in {}",
                        outcome.summary.reason,
                        outcome.summary.final_t,
                        outcome.summary.steps,
                        outcome.summary.peak_linf_u,
                        dir.display()
                    );
                    code(outcome.exit_code())
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep { config, axis1, axis2 } => {
            let parsed = ScenarioConfig::from_path(&config).and_then(|cfg| {
                let a1 = SweepAxis::parse(&axis1)?;
                let a2 = axis2.as_deref().map(SweepAxis::parse).transpose()?;
                Ok((cfg, a1, a2))
            });
            let (cfg, a1, a2) = match parsed {
                Ok(p) => p,
                Err(e) => return fail(&e.into()),
            };
            let root = resolve_output_dir(&cfg.output.directory);
            match run_sweep(&cfg, &a1, a2.as_ref(), &root) {
                Ok(rows) => {
                    for r in &rows {
                        println!("cell ({}, {}): {}", r.i, r.j, r.reason);
                    }
                    println!("sweep table: {}", root.join("sweep.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify { p, delta, umax, samples, out } => {
            let report = match verify_command(p, &delta, umax, samples) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(EXIT_CONFIG);
                }
            };
            for r in &report.rows {
                println!(
                    "delta = {}: C = {:e} at u = {:e} ({})",
                    r.delta,
                    r.c_delta,
                    r.argmax_u,
                    if r.pass { "pass" } else { "FAIL" }
                );
            }
            println!(
                "phi(u) <= u: {}",
                if report.phi_bound.holds { "pass" } else { "FAIL" }
            );
            match write_verify_report(&report, &resolve_output_dir(&out)) {
                Ok(path) => println!("report: {}", path.display()),
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(EXIT_OTHER);
                }
            }
            if report.all_pass {
                ExitCode::SUCCESS
            } else {
                code(EXIT_OTHER)
            }
        }
    }
}
