use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpcforest::commands::{self, BenchSpec, Corruption};
use mpcforest::config::SEED_ENV;
use mpcforest::{io, Algorithm, CliError, GraphKind, PartialConfig, RunConfig};

#[derive(Parser)]
#[command(name = "mpcforest", version, about = "Matching, MIS and tree 4-coloring on a simulated MPC cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random graph as an edge list.
    Gen {
        #[arg(value_enum)]
        kind: GraphKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        alpha: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm and write solution, ledger, trace and audit.
    Run(RunArgs),
    /// Run the pipelined and unpipelined drivers and compare solutions.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Damage the pipelined solution before comparing.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Rounds and peak memory over a range of sizes.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: u32,
        /// Measure plain Luby on the whole graph instead.
        #[arg(long)]
        baseline: bool,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with any RunConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    alg: Option<Algorithm>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator used when no input is given.
    #[arg(long, value_enum)]
    kind: Option<GraphKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<u32>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lag_t: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record snapshots and audit finished executions, store radii and memory.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    retries: Option<u32>,
    /// Override the degree at which the phase schedule stops.
    #[arg(long)]
    threshold: Option<u64>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => PartialConfig::load(path)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            algorithm: self.alg,
            input: self.input,
            kind: self.kind,
            n: self.n,
            alpha: self.alpha,
            delta: self.delta,
            seed: self.seed,
            lag_t: self.lag_t,
            out: self.out,
            audit: self.audit.then_some(true),
            retries: self.retries,
            low_degree_threshold: self.threshold,
            ..PartialConfig::default()
        };
        let env = std::env::var(SEED_ENV).ok();
        flags.over(file).resolve(env.as_deref())
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("reports serialize")
}

fn env_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(text) => {
            text.trim().parse().map_err(|_| CliError::Invalid(format!("{SEED_ENV}={text:?} is not a 64-bit seed")))
        }
        Err(_) => Ok(0),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { kind, n, alpha, seed, out } => {
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?,
            };
            let s = commands::cmd_gen(kind, n, alpha, seed, &out)?;
            println!("n={} m={} max_degree={}", s.n, s.m, s.max_degree);
        }
        Command::Run(args) => {
            let summary = commands::cmd_run(&args.resolve()?)?;
            println!("{}", json(&summary));
        }
        Command::Compare { run, corrupt } => {
            let cfg = run.resolve()?;
            let g = commands::load_graph(&cfg)?;
            let hook = if corrupt { Corruption::DropOne } else { Corruption::None };
            let report = commands::compare(&cfg, &g, hook)?;
            println!("{}", json(&report));
            if !report.identical {
                return Err(CliError::Mismatch(format!(
                    "pipelined {} vs unpipelined {}",
                    report.pipelined_size, report.unpipelined_size
                )));
            }
        }
        Command::Bench { run, sizes, repetitions, baseline, csv } => {
            let cfg = run.resolve()?;
            let rows = commands::cmd_bench(&cfg, &BenchSpec { sizes, repetitions, baseline })?;
            let text = commands::bench_csv(&rows);
            match csv {
                Some(path) => io::write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
