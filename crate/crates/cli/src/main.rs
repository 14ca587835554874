use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixflow::commands::{
    cmd_eval, cmd_presets, cmd_simulate, cmd_sweep, cmd_train, EvalArgs, ScenarioArgs, SimulateArgs,
    SweepArgs, TrainArgs,
};
use mixflow::scenario::ConfigLabel;

#[derive(Parser)]
#[command(name = "mixflow", version, about = "Mixed-control traffic simulation and RV policy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioOpts {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Robot-vehicle share of spawned vehicles, in [0, 1].
    #[arg(long = "rv-rate")]
    rv_rate: Option<f64>,
    /// Control split such as 2U+2S.
    #[arg(long)]
    config: Option<ConfigLabel>,
}

impl From<ScenarioOpts> for ScenarioArgs {
    fn from(o: ScenarioOpts) -> Self {
        ScenarioArgs { path: o.scenario, rv_rate: o.rv_rate, config: o.config }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the shared RV policy; writes checkpoint.bin and train_log.csv.
    Train {
        #[command(flatten)]
        scenario: ScenarioOpts,
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
        /// Checkpoint path (default <out>/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Suppress per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint greedily; writes per_intersection.csv and network.csv.
    Eval {
        #[command(flatten)]
        scenario: ScenarioOpts,
        /// Required when the scenario has unsignalized intersections.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        runs: u32,
        /// First episode seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/eval")]
        out: PathBuf,
    },
    /// Evaluate configurations x RV rates into one table with a baseline column.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Control splits, comma separated or repeated.
        #[arg(long, value_delimiter = ',', required = true)]
        config: Vec<ConfigLabel>,
        /// RV rates, comma separated or repeated (default: the scenario's).
        #[arg(long = "rv-rate", value_delimiter = ',')]
        rv_rate: Vec<f64>,
        /// Directory of per-member checkpoints named <xU+yS>_rv<rate>.bin.
        #[arg(long, default_value = "out/checkpoints")]
        checkpoint: PathBuf,
        /// Train members whose checkpoint is missing.
        #[arg(long)]
        train: bool,
        /// Training iterations for members trained here.
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long, default_value_t = 100)]
        runs: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
    /// Run one episode; writes events.csv and decisions.csv.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioOpts,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/simulate")]
        out: PathBuf,
    },
    /// Write the built-in scenarios as JSON.
    Presets {
        #[arg(long, default_value = "scenarios")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> mixflow::Result<()> {
    match cli.command {
        Command::Train { scenario, iterations, seed, out, checkpoint, quiet } => {
            let args = TrainArgs { scenario: scenario.into(), iterations, seed, out, checkpoint };
            let outcome = cmd_train(&args, &mut |row| {
                if !quiet {
                    eprintln!(
                        "iter {:>5}  return {:>10.3}  loss {:>8.4}  eps {:.3}  buffer {}",
                        row.iteration, row.episode_return, row.mean_loss, row.epsilon, row.buffer_size
                    );
                }
            })?;
            println!("{} gradient steps, buffer {}", outcome.grad_steps, outcome.buffer_size);
        }
        Command::Eval { scenario, checkpoint, runs, seed, out } => {
            let args = EvalArgs { scenario: scenario.into(), checkpoint, runs, seed, out };
            let col = cmd_eval(&args)?;
            println!(
                "{}: W {:.2} s, Q {:.0} over {} runs",
                col.label, col.report.network_wait, col.report.network_throughput, col.report.runs
            );
        }
        Command::Sweep { scenario, config, rv_rate, checkpoint, train, iterations, runs, seed, out } => {
            let args = SweepArgs {
                scenario,
                configs: config,
                rv_rates: rv_rate,
                checkpoints: checkpoint,
                train,
                iterations,
                runs,
                seed,
                out,
            };
            for col in cmd_sweep(&args)? {
                println!("{}: W {:.2} s, Q {:.0}", col.label, col.report.network_wait, col.report.network_throughput);
            }
        }
        Command::Simulate { scenario, checkpoint, seed, out } => {
            let args = SimulateArgs { scenario: scenario.into(), checkpoint, seed, out };
            let r = cmd_simulate(&args)?;
            println!(
                "spawned {} arrived {} conflicts {} return {:.3} hash {:016x}",
                r.spawned, r.arrived, r.conflicts, r.episode_return, r.snapshot_hash
            );
        }
        Command::Presets { out } => {
            for p in cmd_presets(&out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
