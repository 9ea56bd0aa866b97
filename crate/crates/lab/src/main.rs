use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entropy_lab::commands::{convergence, execute_in, flocking};
use entropy_lab::config::{load_config, parse_config, RunConfig};
use entropy_lab::error::{exit, LabResult};
use entropy_lab::selftest::{selftest, Fault};

#[derive(Parser)]
#[command(name = "entropy-lab", version, about = "Run, refine and verify periodic alignment-fluid experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding `output.path`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refinement study over successive grid doublings.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites.
    Selftest {
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_name = "FAULT")]
        inject_fault: Option<Fault>,
    },
    /// Long isothermal run checked for energy decay and flocking.
    Flocking {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the fully resolved configuration, optionally for a scenario.
    Defaults {
        #[arg(long)]
        scenario: Option<String>,
    },
}

fn resolve(config: &PathBuf, out: Option<PathBuf>) -> LabResult<(RunConfig, PathBuf)> {
    let mut cfg = load_config(config)?;
    if out.is_some() {
        cfg.output.path = out;
    }
    let dir = cfg.output_dir();
    Ok((cfg, dir))
}

fn dispatch(cmd: Command) -> LabResult<i32> {
    match cmd {
        Command::Run { config, out } => {
            let (cfg, dir) = resolve(&config, out)?;
            let outcome = execute_in(&cfg, &dir)?;
            let s = &outcome.summary;
            println!(
                "{}: t = {}, {} steps, {} records -> {}",
                s.status,
                s.t_reached,
                s.steps,
                s.records,
                dir.display()
            );
            if let Some(d) = &s.detail {
                println!("  {d}");
            }
            Ok(outcome.exit_code())
        }
        Command::Convergence { config, levels, out } => {
            let (cfg, dir) = resolve(&config, out)?;
            let report = convergence(&cfg, levels, &dir)?;
            print!("{}", report.render());
            Ok(if report.success { exit::COMPLETED } else { exit::CRITERIA_UNMET })
        }
        Command::Selftest { filter, inject_fault } => {
            let results = selftest(filter.as_deref(), inject_fault)?;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:<14} {:>7.2}s  {}", r.name, r.seconds, r.detail);
            }
            let all = results.iter().all(|r| r.passed);
            Ok(if all { exit::COMPLETED } else { exit::CRITERIA_UNMET })
        }
        Command::Flocking { config, out } => {
            let (cfg, dir) = resolve(&config, out)?;
            let report = flocking(&cfg, &dir)?;
            println!(
                "{}: metric ratio {:.3e}, energy nonincreasing {}, sup E t/ln t = {:.4e}",
                report.status, report.metric_ratio, report.decay.nonincreasing, report.decay.sup_statistic
            );
            Ok(report.exit_code())
        }
        Command::Defaults { scenario } => {
            let doc = match scenario {
                Some(name) => serde_json::json!({ "scenario": name }).to_string(),
                None => "{}".to_string(),
            };
            let cfg = parse_config(&doc)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(exit::COMPLETED)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = dispatch(cli.command).unwrap_or_else(|e| {
        eprintln!("entropy-lab: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
