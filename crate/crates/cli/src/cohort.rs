use std::path::{Path, PathBuf};

use earoxi_core::ingest::{Site, SubjectMeta};
use earoxi_core::report::{analyze_subject, build_cohort_report, SubjectReport};
use earoxi_core::PipelineConfig;
use rayon::prelude::*;
use serde::Deserialize;

use crate::{load_meta, load_recording, to_json, write_file, CliResult, Failure};

pub const REPORT_FILE: &str = "cohort_report.json";

/// One subject's input files. Paths are relative to the input directory.
#[derive(Debug, Clone, Deserialize)]
struct Entry {
    id: String,
    ear_csv: PathBuf,
    finger_csv: PathBuf,
    #[serde(default)]
    meta_json: Option<PathBuf>,
}

/// Manifest layout; the `manifest.json` written by `synth` satisfies it.
#[derive(Debug, Deserialize)]
struct Manifest {
    subjects: Vec<Entry>,
}

fn discover(dir: &Path) -> CliResult<Vec<Entry>> {
    let listing = std::fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut entries = Vec::new();
    for item in listing {
        let item = item.map_err(|e| Failure::io(dir, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        let Some(id) = name.strip_suffix("_ear.csv") else { continue };
        let finger = format!("{id}_finger.csv");
        if !dir.join(&finger).is_file() {
            eprintln!("warning: {name} has no matching {finger}; skipped");
            continue;
        }
        let meta = format!("{id}_meta.json");
        entries.push(Entry {
            id: id.to_string(),
            ear_csv: name.clone().into(),
            finger_csv: finger.into(),
            meta_json: dir.join(&meta).is_file().then(|| meta.into()),
        });
    }
    Ok(entries)
}

fn analyze_entry(dir: &Path, e: &Entry, cfg: &PipelineConfig) -> Result<SubjectReport, String> {
    let meta = match &e.meta_json {
        Some(p) => load_meta(&dir.join(p)).map_err(|f| f.message)?,
        None => SubjectMeta::anonymous(e.id.clone()),
    };
    let ear = load_recording(&dir.join(&e.ear_csv), Site::EarCanal, meta.clone(), cfg).map_err(|f| f.message)?;
    let finger = load_recording(&dir.join(&e.finger_csv), Site::Finger, meta, cfg).map_err(|f| f.message)?;
    analyze_subject(&ear, &finger, cfg).map_err(|err| err.to_string())
}

pub fn run(input: &Path, manifest: Option<&Path>, cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let mut entries = match manifest {
        Some(p) => {
            let m: Manifest = serde_json::from_str(&crate::read_text(p)?)
                .map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?;
            m.subjects
        }
        None => discover(input)?,
    };
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    if entries.is_empty() {
        return Err(Failure::invalid(format!("{}: no subjects found", input.display())));
    }

    let mut warnings = Vec::new();
    for e in entries.iter().filter(|e| e.meta_json.is_none()) {
        warnings.push(format!("{}: no metadata file; sex and age unknown", e.id));
    }
    let results: Vec<(String, Result<SubjectReport, String>)> = entries
        .par_iter()
        .map(|e| (e.id.clone(), analyze_entry(input, e, cfg)))
        .collect();
    let mut reports = Vec::new();
    for (id, r) in results {
        match r {
            Ok(r) => reports.push(r),
            Err(msg) => warnings.push(format!("subject {id} skipped: {msg}")),
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if reports.is_empty() {
        return Err(Failure::invalid(format!("{}: no usable subjects", input.display())));
    }

    let report = build_cohort_report(&reports, warnings, cfg);
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    write_file(&out.join(REPORT_FILE), &to_json(&report))?;
    for (name, csv) in report.plot_files() {
        write_file(&out.join(name), csv.as_bytes())?;
    }
    eprintln!("analysed {} of {} subjects; report in {}", reports.len(), entries.len(), out.display());
    Ok(())
}
