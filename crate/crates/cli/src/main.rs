use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcgan_cli::{
    cmd_evaluate, cmd_generate, cmd_study, cmd_synth, cmd_train, CliError, EvaluateArgs, EvaluateOptions, GlobalOpts,
    StudyArgs, TrainArgs,
};

#[derive(Parser, Debug)]
#[command(name = "fcgan", version, about = "Synthesize fuel-cell test-bench tables with a WGAN-GP")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML (or .json) run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or output directory for `evaluate` and `study`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reject values outside the schema's physical ranges instead of warning.
    #[arg(long, global = true)]
    strict_ranges: bool,
    /// Acquisition factors trained concurrently by `study`.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a bench corpus with known ground truth.
    Synth {
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Train the generator and critic on a CSV table.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Total epochs; a resumed run stops once the bundle reaches this count.
        #[arg(long)]
        epochs: Option<u64>,
        /// Continue from a saved bundle.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample rows from a trained bundle.
    Generate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
    },
    /// Score a generated table against a real one.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        /// Enables the critic-score histograms and the proximity study.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        proximity_rows: usize,
    },
    /// Train on subsamples of the data and score each against the full table.
    Study {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Comma-separated, e.g. `1,1/2,1/4`.
        #[arg(long, value_delimiter = ',', value_parser = parse_factor)]
        factors: Option<Vec<f64>>,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        inferences: Option<usize>,
        #[arg(long)]
        gen_rows: Option<usize>,
    },
}

fn parse_factor(s: &str) -> Result<f64, String> {
    let bad = || format!("`{s}` is not a number or fraction");
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            Ok(n / d)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = GlobalOpts { seed: cli.seed, config: cli.config, strict_ranges: cli.strict_ranges, threads: cli.threads };
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| default.into());
    match cli.command {
        Command::Synth { rows } => cmd_synth(&g, rows, &out("bench.csv")).map(drop),
        Command::Train { data, schema, epochs, resume } => {
            cmd_train(&g, &TrainArgs { data, schema, epochs, resume }, &out("model.fcgan")).map(drop)
        }
        Command::Generate { bundle, rows } => cmd_generate(&g, &bundle, rows, &out("generated.csv")).map(drop),
        Command::Evaluate { real, generated, bundle, schema, proximity_rows } => {
            let options = EvaluateOptions { proximity_rows, ..EvaluateOptions::default() };
            let args = EvaluateArgs { real, generated, bundle, schema, options };
            cmd_evaluate(&g, &args, &out("evaluation")).map(drop)
        }
        Command::Study { data, schema, factors, epochs, inferences, gen_rows } => {
            let args = StudyArgs { data, schema, factors, epochs, inferences, gen_rows };
            cmd_study(&g, &args, &out("study")).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
