use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use delib_core::metrics::{parse_markers, DEFAULT_CONCESSION_MARKERS};
use delib_core::pipeline::{self, BackendKind, CaseStatus, RunConfig};

#[derive(Parser)]
#[command(name = "delib", version, about = "Adversarial multi-agent claim verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Http,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Verify every claim in the configured claims file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a results file against the gold labels of a claims file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        claims: PathBuf,
    },
    /// Summarise one or more results files; several are also merged by majority.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Concession phrases, one per line.
        #[arg(long)]
        markers: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, backend, seed, out } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(b) = backend {
                cfg.backend = match b {
                    Backend::Http => BackendKind::Http,
                    Backend::Scripted => BackendKind::Scripted,
                };
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = std::env::current_dir()?.join(o);
            }
            let manifest = pipeline::run(&cfg)?;
            for c in &manifest.claims {
                match c.status {
                    CaseStatus::Ok if c.resumed => println!("{}\tok (resumed)", c.claim_id),
                    CaseStatus::Ok => println!("{}\tok\t{} tokens", c.claim_id, c.tokens_total),
                    CaseStatus::Failed => println!("{}\tfailed\t{}", c.claim_id, c.error.as_deref().unwrap_or("")),
                }
            }
            println!(
                "{}/{} claims ok, {} tokens, output in {}",
                manifest.ok_count(),
                manifest.claims.len(),
                manifest.tokens_total,
                cfg.output_path().display()
            );
            Ok(if manifest.ok_count() == manifest.claims.len() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Eval { results, claims } => {
            let report = pipeline::eval(&results, &claims)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { results, format, markers } => {
            let markers = match markers {
                Some(p) => {
                    parse_markers(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                }
                None => parse_markers(DEFAULT_CONCESSION_MARKERS),
            };
            let report = pipeline::report(&results, &markers)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Text => print!("{}", report.render_text()),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
