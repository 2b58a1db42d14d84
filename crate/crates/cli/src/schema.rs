use std::io::Write;

use earoxi_core::ingest::{Sex, SubjectMeta};
use earoxi_core::report::build_cohort_report;
use earoxi_core::synth::CohortSpec;
use earoxi_core::PipelineConfig;
use serde_json::json;

/// Input and output formats as one JSON document on stdout.
pub fn print() {
    let cfg = PipelineConfig::default();
    let empty = build_cohort_report(&[], Vec::new(), &cfg);
    let plots: serde_json::Map<String, serde_json::Value> = empty
        .plot_files()
        .into_iter()
        .map(|(name, csv)| {
            let header: Vec<&str> = csv.lines().next().unwrap_or_default().split(',').collect();
            (name.to_string(), json!(header))
        })
        .collect();
    let doc = json!({
        "recording_csv": {
            "description": "one row per sample; header names configurable via config.columns",
            "columns": [
                {"name": cfg.columns.t, "type": "float", "unit": "s", "required": true, "note": "strictly increasing"},
                {"name": cfg.columns.red, "type": "float", "unit": "counts", "required": true},
                {"name": cfg.columns.ir, "type": "float", "unit": "counts", "required": true},
                {"name": cfg.columns.green, "type": "float", "unit": "counts", "required": false},
                {"name": cfg.columns.button, "type": "0|1|true|false", "required": true},
            ],
        },
        "subject_meta_json": SubjectMeta { id: "S01".into(), sex: Sex::F, age: Some(24.0) },
        "cohort_layout": ["<id>_ear.csv", "<id>_finger.csv", "<id>_meta.json"],
        "config_json": cfg,
        "synth_spec_json": CohortSpec::default(),
        "outputs": {
            "analyze": "SubjectReport JSON",
            "cohort": "cohort_report.json plus plot tables",
            "plot_csv": plots,
            "synth": "per-subject CSV pairs, meta and truth JSON, manifest.json",
        },
    });
    let text = serde_json::to_string_pretty(&doc).expect("schema serialises");
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}
