use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flockcert::experiment::{
    cmd_flocking, cmd_gen_schedule, cmd_simulate, cmd_verify, ExperimentError, GenScheduleParams,
    GeneratorKind, Overrides, ReportStatus,
};

#[derive(Parser)]
#[command(name = "flockcert", version, about = "Consensus and flocking under intermittent communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `outputs.dir` or `out/` next to the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step override.
    #[arg(long)]
    step: Option<f64>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { step: self.step, seed: self.seed, out: self.out.clone() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pe,
    IscStar,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate and write trajectory.csv and metrics.csv.
    Simulate(RunArgs),
    /// Check the guaranteed rate bounds against a simulation.
    Verify(RunArgs),
    /// Evaluate the flocking criterion and check it against a simulation.
    Flocking(RunArgs),
    /// Generate a validated communication schedule.
    GenSchedule {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        window: f64,
        #[arg(long)]
        service: f64,
        #[arg(long)]
        duty_phase: Option<f64>,
        #[arg(long, default_value_t = 0)]
        hub: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn status_code(status: ReportStatus) -> u8 {
    match status {
        ReportStatus::Pass | ReportStatus::Inconclusive => 0,
        ReportStatus::Fail | ReportStatus::InvalidPremise => 1,
    }
}

fn run(cli: Cli) -> Result<u8, ExperimentError> {
    match cli.command {
        Command::Simulate(args) => {
            let summary = cmd_simulate(&args.config, &args.overrides())?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(0)
        }
        Command::Verify(args) => {
            let report = cmd_verify(&args.config, &args.overrides())?;
            println!("{}", report.to_json());
            Ok(status_code(report.status))
        }
        Command::Flocking(args) => {
            let report = cmd_flocking(&args.config, &args.overrides())?;
            println!("{}", report.to_json());
            Ok(status_code(report.status))
        }
        Command::GenSchedule { kind, n, window, service, duty_phase, hub, seed, out } => {
            let params = GenScheduleParams {
                kind: match kind {
                    Kind::Pe => GeneratorKind::Pe,
                    Kind::IscStar => GeneratorKind::IscStar,
                },
                n_agents: n,
                window,
                service,
                duty_phase,
                hub,
                seed,
            };
            cmd_gen_schedule(&params, &out)?;
            println!("{}", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
