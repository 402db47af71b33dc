use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use owaic::engine::WaicState;
use owaic::partition::PartitionSpec;
use owaic::study::{self, ReportFormat, StudyConfig};

/// Streaming WAIC for MCMC: simulation studies, h-vector stream ingestion,
/// checkpoint/resume, and the built-in model registry.
#[derive(Parser)]
#[command(name = "owaic", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulation studies over replicate datasets
    Study {
        #[command(subcommand)]
        cmd: StudyCmd,
    },
    /// WAIC over h-vector streams produced by external samplers
    Waic {
        #[command(subcommand)]
        cmd: WaicCmd,
    },
    /// The built-in model registry
    Model {
        #[command(subcommand)]
        cmd: ModelCmd,
    },
}

#[derive(Subcommand)]
enum StudyCmd {
    /// Run the study described by a JSON config file and write reports
    Run {
        /// Study config file (see the configs/ directory for examples)
        #[arg(long)]
        config: PathBuf,
        /// Use the paper-scale replicate counts and chain lengths
        #[arg(long)]
        full_scale: bool,
        /// Output directory; defaults to $OWAIC_OUT_DIR
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum WaicCmd {
    /// Compute WAIC from a stream file
    Ingest {
        /// h-vector stream (header `waic-stream v1 M=<int> mode=<...>`)
        #[arg(long)]
        stream: PathBuf,
        /// Partition file: one group of node identifiers per line
        #[arg(long)]
        meta: PathBuf,
        /// Also write the final engine state as a checkpoint
        #[arg(long)]
        save_checkpoint: Option<PathBuf>,
    },
    /// Resume a checkpointed engine against a stream holding the full run
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        /// Write the advanced state back out as a checkpoint
        #[arg(long)]
        save_checkpoint: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// List the registered models
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

enum Failure {
    Usage(String),
    Core(owaic::Error),
}

impl From<owaic::Error> for Failure {
    fn from(e: owaic::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(owaic::Error::Io(e))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Study { cmd: StudyCmd::Run { config, full_scale, out } } => {
            let out = out
                .or_else(|| std::env::var_os("OWAIC_OUT_DIR").map(PathBuf::from))
                .ok_or_else(|| {
                    Failure::Usage("no output directory: pass --out or set OWAIC_OUT_DIR".into())
                })?;
            let text = std::fs::read_to_string(&config)?;
            let cfg = StudyConfig::from_json(&text)?;
            let dataset_dir = cfg.dump_datasets.then(|| out.join("datasets"));
            let report = study::run_study_to(&cfg, full_scale, dataset_dir.as_deref())?;
            for format in [ReportFormat::Csv, ReportFormat::StructuredText, ReportFormat::Pretty] {
                study::emit_report(&report, format, &out)?;
            }
            print!("{}", study::render_pretty(&report));
            println!("reports written to {}", out.display());
            Ok(())
        }
        Cmd::Waic { cmd: WaicCmd::Ingest { stream, meta, save_checkpoint } } => {
            let partition = PartitionSpec::parse_standalone(&std::fs::read_to_string(&meta)?)?;
            let reader = BufReader::new(File::open(&stream)?);
            let (state, result) = study::ingest_stream(reader, &partition)?;
            if let Some(path) = save_checkpoint {
                write_checkpoint(&path, &state)?;
            }
            print!("{result}");
            Ok(())
        }
        Cmd::Waic { cmd: WaicCmd::Resume { checkpoint, stream, save_checkpoint } } => {
            let mut bytes = Vec::new();
            File::open(&checkpoint)?.read_to_end(&mut bytes)?;
            let state = WaicState::load(&bytes)?;
            let reader = BufReader::new(File::open(&stream)?);
            let (state, result) = study::resume_stream(state, reader)?;
            if let Some(path) = save_checkpoint {
                write_checkpoint(&path, &state)?;
            }
            print!("{result}");
            Ok(())
        }
        Cmd::Model { cmd: ModelCmd::List } => {
            println!("{:<6} {:<22} {:<8} description", "name", "family", "latents");
            for model in owaic::models::registry() {
                println!(
                    "{:<6} {:<22} {:<8} {}",
                    model.name(),
                    model.family().to_string(),
                    if model.has_latents() { "yes" } else { "no" },
                    model.title()
                );
            }
            Ok(())
        }
    }
}

fn write_checkpoint(path: &PathBuf, state: &WaicState) -> Result<(), Failure> {
    let mut f = File::create(path)?;
    f.write_all(&state.save())?;
    Ok(())
}
