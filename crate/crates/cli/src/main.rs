//! `eotx`: scenario runner for the electro-optic transducer model.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 numerical failure, 4 fit did not converge.

mod opts;
mod output;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use eo_transducer::config::{apply_override, load_system, parse_document, ConfigError};

use crate::output::{Meta, Writer};
use crate::runs::Ctx;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(String),
    NotConverged(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::NotConverged(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Simulate,
    Spectrum,
    Noise,
    Landscape,
    Fit,
    Calibrate,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Spectrum => "spectrum",
            Kind::Noise => "noise",
            Kind::Landscape => "landscape",
            Kind::Fit => "fit",
            Kind::Calibrate => "calibrate",
        }
    }

    fn needs_system(self) -> bool {
        !matches!(self, Kind::Calibrate)
    }
}

/// Simulate, analyse and fit cavity electro-optic transducers.
#[derive(Debug, Parser)]
#[command(name = "eotx", version)]
struct Cli {
    /// Run kind. Defaults to `run.kind` from the config.
    #[arg(value_enum)]
    kind: Option<Kind>,
    /// Scenario file (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set system.microwave.n_bath=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output path prefix; files are written as `<prefix>_<name>.<ext>`.
    #[arg(long, default_value = "eotx")]
    out: String,
    /// Worker threads for grid evaluations.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(ConfigError::Syntax(format!("cannot read {}: {e}", p.display()))))?,
        None => String::new(),
    };
    let mut doc = parse_document(&text).map_err(CliError::Config)?;
    for s in &cli.set {
        apply_override(&mut doc, s).map_err(CliError::Config)?;
    }

    let kind = match cli.kind {
        Some(k) => k,
        None => {
            let run = opts::Opts::root(&doc, "run")?;
            let name = run.require_string("kind")?;
            Kind::from_str(name, true).map_err(|_| run.invalid("kind", format!("unknown run kind `{name}`")))?
        }
    };
    let system = if kind.needs_system() {
        Some(load_system(&doc).map_err(CliError::Config)?)
    } else {
        None
    };

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config(ConfigError::Invalid {
                field: "--threads".into(),
                reason: "must be >= 1".into(),
            }));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let meta = Meta {
        kind: kind.name(),
        generated: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config: cli.config.as_ref().map(|p| p.display().to_string()),
        overrides: cli.set.clone(),
        system,
        options: opts::Opts::root(&doc, kind.name())?.to_json(),
    };
    let ctx = Ctx {
        doc: &doc,
        system,
        base_dir: cli
            .config
            .as_ref()
            .and_then(|p| p.parent())
            .map(|p| p.to_path_buf())
            .unwrap_or_default(),
    };
    let mut w = Writer::new(&cli.out, &meta);
    let result = match kind {
        Kind::Simulate => runs::simulate(&ctx, &mut w),
        Kind::Spectrum => runs::spectrum(&ctx, &mut w),
        Kind::Noise => runs::noise(&ctx, &mut w),
        Kind::Landscape => runs::run_landscape(&ctx, &mut w),
        Kind::Fit => runs::fit(&ctx, &mut w),
        Kind::Calibrate => runs::run_calibrate(&ctx, &mut w),
    };
    for p in &w.written {
        println!("{}", p.display());
    }
    result.map(|_| w.written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eotx: {e}");
            ExitCode::from(e.code())
        }
    }
}
