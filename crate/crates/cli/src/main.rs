//! `earoxi` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or configuration.

mod cohort;
mod schema;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use earoxi_core::ingest::{self, PpgRecording, Site, SubjectMeta};
use earoxi_core::synth::{self, CohortSpec};
use earoxi_core::{Error, PipelineConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "earoxi", version, about = "Dual-site PPG pulse-oximetry analysis")]
struct Cli {
    /// Overrides the seed of a synthetic cohort spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the CSV and JSON schemas and exit.
    #[arg(long)]
    schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyse one subject's ear and finger recordings.
    Analyze {
        #[arg(long)]
        ear: PathBuf,
        #[arg(long)]
        finger: PathBuf,
        /// Subject metadata JSON; defaults to `<id>_meta.json` next to the ear file if present.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, env = "EAROXI_CONFIG")]
        config: Option<PathBuf>,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyse every subject in a directory and write the cohort report.
    Cohort {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "EAROXI_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON list of subjects to use instead of file-name discovery.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Generate a synthetic cohort with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure carrying its exit code and a diagnostic line.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: 1,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn from_core(context: &Path, err: Error) -> Self {
        Self {
            code: if err.is_io() { 1 } else { 2 },
            message: format!("{}: {err}", context.display()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = if cli.schema {
        schema::print();
        Ok(())
    } else {
        match cli.command {
            Some(cmd) => run(cmd, cli.seed),
            None => Err(Failure::invalid("no command given; see --help")),
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command, seed: Option<u64>) -> CliResult<()> {
    match cmd {
        Command::Analyze {
            ear,
            finger,
            meta,
            config,
            out,
        } => analyze(&ear, &finger, meta.as_deref(), config.as_deref(), &out),
        Command::Cohort {
            input,
            config,
            out,
            manifest,
        } => {
            let cfg = load_config(config.as_deref())?;
            cohort::run(&input, manifest.as_deref(), &cfg, &out)
        }
        Command::Synth { spec, out } => synthesize(&spec, &out, seed),
    }
}

pub fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| Failure::from_core(p, e)),
        None => Ok(PipelineConfig::default()),
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

pub fn load_meta(path: &Path) -> CliResult<SubjectMeta> {
    let meta: SubjectMeta = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    meta.validate()
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    Ok(meta)
}

pub fn load_recording(path: &Path, site: Site, meta: SubjectMeta, cfg: &PipelineConfig) -> CliResult<PpgRecording> {
    let text = read_text(path)?;
    let rec = ingest::parse_recording(&text, &cfg.columns, site, meta)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let rec = match cfg.declared_fs {
        Some(fs) => rec
            .with_declared_fs(fs)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?,
        None => rec,
    };
    let report = ingest::validate_recording(&rec, cfg.adc_max);
    if !report.is_usable() {
        let reasons: Vec<String> = report.fatal().map(|v| format!("{v:?}")).collect();
        return Err(Failure::invalid(format!("{}: unusable recording: {}", path.display(), reasons.join("; "))));
    }
    Ok(rec)
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialise");
    bytes.push(b'\n');
    bytes
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    synth::write_atomic(path, bytes).map_err(|e| Failure::from_core(path, e.into()))
}

/// Subject id from a `<id>_ear.csv` style file name.
fn id_from_path(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_suffix("_ear").unwrap_or(&stem).to_string()
}

fn analyze(ear: &Path, finger: &Path, meta: Option<&Path>, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let id = id_from_path(ear);
    let sibling = ear.with_file_name(format!("{id}_meta.json"));
    let meta = match meta {
        Some(p) => load_meta(p)?,
        None if sibling.is_file() => load_meta(&sibling)?,
        None => SubjectMeta::anonymous(id),
    };
    let ear_rec = load_recording(ear, Site::EarCanal, meta.clone(), &cfg)?;
    let finger_rec = load_recording(finger, Site::Finger, meta, &cfg)?;
    let report = earoxi_core::report::analyze_subject(&ear_rec, &finger_rec, &cfg).map_err(|e| Failure::from_core(ear, e))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_file(out, &to_json(&report))
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    spec_sha256: String,
    spec: &'a CohortSpec,
    subjects: Vec<synth::EmittedSubject>,
}

fn synthesize(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut spec: CohortSpec = serde_json::from_str(&read_text(spec_path)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let subjects = spec.expand().map_err(|e| Failure::from_core(spec_path, e.into()))?;
    let emitted = synth::emit_cohort(&subjects, out).map_err(|e| Failure::from_core(out, e.into()))?;
    let manifest = SynthManifest {
        generator: "earoxi synth",
        version: env!("CARGO_PKG_VERSION"),
        seed: spec.seed,
        spec_sha256: spec.hash(),
        spec: &spec,
        subjects: emitted,
    };
    write_file(&out.join("manifest.json"), &to_json(&manifest))?;
    eprintln!("wrote {} subjects to {}", manifest.subjects.len(), out.display());
    Ok(())
}
