use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcluster_cli::{parse_range, rerun, run_pipeline, InputSource, PipelineConfig, PipelineError, Stage};
use qcluster_core::agent::{RemoteConfig, TextBackend};
use qcluster_core::ingest::{synth_transactions, SynthProfile};

#[derive(Parser, Debug)]
#[command(name = "qcluster", version, about = "Quantum-assisted clustering sweep over transaction data")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic transaction table as delimited text.
    Synth {
        #[arg(long, default_value = "3-blobs")]
        profile: String,
        #[arg(long, default_value_t = 90)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run again from the configuration recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Delimited transaction table with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Synthetic profile: default, 3-blobs, single-token.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 90)]
    synthetic_n: usize,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long, default_value = "2..6")]
    k_range: String,
    #[arg(long, default_value = "1")]
    depth_range: String,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Comma-separated prototype counts.
    #[arg(long, default_value = "3")]
    prototypes: String,
    #[arg(long, default_value_t = 20)]
    qf_runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    model: String,
    /// Environment variable holding the remote bearer token.
    #[arg(long)]
    credential_env: Option<String>,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value = "qcluster-out")]
    out: PathBuf,
    /// Analyse every epoch rather than the best one per strategy, depth and k.
    #[arg(long)]
    all_epochs: bool,
}

fn delimiter_byte(c: char) -> Result<u8, PipelineError> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| PipelineError::new(Stage::Config, format!("delimiter {c:?} is not ASCII")))
}

fn build_config(a: RunArgs) -> Result<PipelineConfig, PipelineError> {
    let cfg_err = |m: String| PipelineError::new(Stage::Config, m);
    let input = match (a.input, a.synthetic) {
        (Some(path), None) => InputSource::Csv {
            path,
            delimiter: delimiter_byte(a.delimiter)?,
        },
        (None, Some(name)) => InputSource::Synthetic {
            profile: name.parse::<SynthProfile>().map_err(|e| cfg_err(e.to_string()))?,
            n: a.synthetic_n,
        },
        _ => return Err(cfg_err("pass exactly one of --input PATH or --synthetic PROFILE".into())),
    };
    let backend = match (a.backend, a.endpoint) {
        (BackendKind::Mock, _) => TextBackend::Mock,
        (BackendKind::Remote, Some(endpoint)) => TextBackend::Remote(RemoteConfig {
            model: a.model,
            credential_env: a.credential_env,
            retries: a.retries,
            ..RemoteConfig::new(endpoint)
        }),
        (BackendKind::Remote, None) => return Err(cfg_err("--backend remote needs --endpoint URL".into())),
    };
    let range = |flag: &str, s: &str| parse_range(s).map_err(|m| cfg_err(format!("--{flag}: {m}")));
    Ok(PipelineConfig {
        input,
        k_range: range("k-range", &a.k_range)?,
        depth_range: range("depth-range", &a.depth_range)?,
        prototype_range: range("prototypes", &a.prototypes)?,
        num_epochs: a.epochs,
        qf_runs: a.qf_runs,
        seed: a.seed,
        backend,
        all_epochs: a.all_epochs,
        out_dir: a.out,
        ..PipelineConfig::default()
    })
}

fn synth(profile: &str, n: usize, seed: u64, delimiter: char, out: Option<PathBuf>) -> Result<(), PipelineError> {
    let profile: SynthProfile = profile.parse().map_err(|e| PipelineError::new(Stage::Config, e))?;
    let table = synth_transactions(seed, n, &profile).map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let mut buf = Vec::new();
    table
        .write_csv(&mut buf, delimiter_byte(delimiter)?)
        .map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let written = match out {
        Some(path) => std::fs::write(&path, &buf).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(&buf).map_err(|e| e.to_string()),
    };
    written.map_err(|m| PipelineError::new(Stage::Report, m))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Some(Command::Synth {
            profile,
            n,
            seed,
            delimiter,
            out,
        }) => synth(&profile, n, seed, delimiter, out),
        Some(Command::Rerun { manifest, out }) => {
            rerun(&manifest, &out)?;
            println!("{}", out.join("metrics.txt").display());
            Ok(())
        }
        None => {
            let config = build_config(cli.run)?;
            run_pipeline(&config)?;
            let metrics = std::fs::read_to_string(config.out_dir.join("metrics.txt")).unwrap_or_default();
            print!("{metrics}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
