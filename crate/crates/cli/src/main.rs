use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsiss::{builtins, load, run_scenario, scenario_json, Kind};

#[derive(Parser)]
#[command(name = "nsiss", version, about = "Certify and simulate state-dependent switched systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file, or builtin:NAME
    scenario: String,
    /// Output directory for report.json and trajectory.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled ISS certificate check
    Check(RunArgs),
    /// Filippov simulation with optional trajectory check
    Simulate(RunArgs),
    /// Small-gain or cascade composition
    Compose(RunArgs),
    /// LMI verification and closed-loop gain algebra
    Lmi(RunArgs),
    /// The two-mode flower example
    Flower(RunArgs),
    /// Observer-based closed loop: LMIs, gains, simulations
    ClosedLoop(RunArgs),
    /// Print a builtin scenario as JSON
    Export {
        name: String,
        /// Write to this file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List builtin scenarios
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Check(a) => (Kind::Check, a),
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Compose(a) => (Kind::Compose, a),
        Command::Lmi(a) => (Kind::Lmi, a),
        Command::Flower(a) => (Kind::Flower, a),
        Command::ClosedLoop(a) => (Kind::ClosedLoop, a),
        Command::Export { name, out } => {
            let s = match load(&format!("{}{name}", nsiss::BUILTIN_PREFIX)) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let text = scenario_json(&s);
            match out {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, text) {
                        eprintln!("error: {}: {e}", p.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{text}"),
            }
            return ExitCode::SUCCESS;
        }
        Command::List => {
            for n in builtins::NAMES {
                println!("{n}");
            }
            return ExitCode::SUCCESS;
        }
    };
    ExitCode::from(run_scenario(&args.scenario, Some(kind), &args.out, args.seed) as u8)
}
