//! `wavesev`: synthesise, extract, train, evaluate and benchmark.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
//! error. Failures print one line on stderr: `wavesev: error[<kind>]: <message>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wavesev::eval::SplitMode;
use wavesev::pipeline::{self, Overrides, PipelineConfig};
use wavesev::{Error, ErrorKind, Execution};

#[derive(Debug, Parser)]
#[command(name = "wavesev", version, about = "Severity classification of physiological waveforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (1 runs every stage sequentially).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum)]
    split_mode: Option<SplitArg>,

    /// Window duration in seconds.
    #[arg(long, global = true)]
    window_s: Option<f64>,

    /// Comma-separated feature groups: time,gradient,lowfreq,wholefreq.
    #[arg(long, global = true)]
    groups: Option<String>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Sample,
    Patient,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus and its manifest.
    Synth,
    /// Preprocess, segment and extract features from a manifest's records.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train a one-vs-rest SVM on a feature table.
    Train {
        #[arg(long)]
        features: PathBuf,
    },
    /// Repeated stratified holdout evaluation of a feature table.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
    },
    /// Time every feature and fit the scaling slopes.
    Benchmark {
        /// Comma-separated sweep lengths; `none` skips the sweep.
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, Error> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad --sizes entry '{v}'")))
        })
        .collect()
}

fn execution(threads: Option<usize>) -> Result<Execution, Error> {
    match threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without the `parallel` feature; running sequentially");
            Ok(Execution::Sequential)
        }
        None => Ok(Execution::default()),
    }
}

fn config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        split_mode: common.split_mode.map(|m| match m {
            SplitArg::Sample => SplitMode::Sample,
            SplitArg::Patient => SplitMode::Patient,
        }),
        window_s: common.window_s,
        groups: common.groups.as_deref().map(pipeline::parse_groups).transpose()?,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, Error> {
    let common = &cli.common;
    let cfg = config(common)?;
    let out = || {
        common
            .out
            .clone()
            .ok_or_else(|| Error::Config("--out is required for this command".into()))
    };
    let exec = execution(common.threads)?;
    let output = match &cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg, &out()?, exec)?,
        Command::Extract { manifest } => pipeline::cmd_extract(manifest, &cfg, &out()?, exec)?,
        Command::Train { features } => pipeline::cmd_train(features, &cfg, &out()?, exec)?,
        Command::Evaluate { features } => pipeline::cmd_evaluate(features, &cfg, &out()?, exec)?,
        Command::Benchmark { sizes } => {
            let sizes = sizes.as_deref().map(parse_sizes).transpose()?;
            pipeline::cmd_benchmark(&cfg, sizes, common.out.as_deref())?.1
        }
        Command::Config => return cfg.to_toml(),
    };
    let mut msg = output.message;
    for f in &output.files {
        msg.push_str(&format!("\nwrote {}", f.display()));
    }
    Ok(msg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind: ErrorKind = e.kind();
            let line = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("wavesev: error[{}]: {line}", kind.as_str());
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
