use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ferronema_core::{Error, ExperimentKind, RunConfig};

const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    MicroMin,
    HomogMin,
    Converge,
    MagnetScaling,
    CellScaling,
    VerifyLemmas,
    CoeffAssemble,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::MicroMin => ExperimentKind::MicroMin,
            Kind::HomogMin => ExperimentKind::HomogMin,
            Kind::Converge => ExperimentKind::Converge,
            Kind::MagnetScaling => ExperimentKind::MagnetScaling,
            Kind::CellScaling => ExperimentKind::CellScaling,
            Kind::VerifyLemmas => ExperimentKind::VerifyLemmas,
            Kind::CoeffAssemble => ExperimentKind::CoeffAssemble,
        }
    }
}

/// Ferronematic homogenization experiments.
#[derive(Debug, Parser)]
#[command(name = "ferronema", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum, required_unless_present = "schema")]
    kind: Option<Kind>,
    /// JSON run configuration.
    #[arg(long, required_unless_present = "schema")]
    config: Option<PathBuf>,
    /// Output directory (overrides the config; default `out/<kind>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
    /// Print the configuration schema and exit.
    #[arg(long)]
    schema: bool,
}

fn error_record(e: &Error) -> serde_json::Value {
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    let (Some(kind), Some(config)) = (cli.kind, cli.config) else {
        unreachable!("clap enforces both")
    };
    let kind = ExperimentKind::from(kind);
    let mut out = None;
    let result = RunConfig::read(&config).and_then(|mut cfg| {
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let dir = cli
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
        out = Some(dir.clone());
        ferronema_core::experiments::run(&cfg, kind, &dir)
    });
    match result {
        Ok(summary) => {
            if !cli.quiet {
                for c in &summary.checks {
                    println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                if let Some(dir) = &out {
                    println!("artifacts in {}", dir.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = error_record(&e);
            eprintln!("{record}");
            if let Some(dir) = &out {
                if dir.is_dir() {
                    let _ = std::fs::write(dir.join("error.json"), format!("{record}\n"));
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
