//! Report and manifest writing. Reports carry no timestamps, so a fixed
//! config reproduces them byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sle_lqg_core::{LabError, Result};

use crate::config::Config;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub label: String,
    pub passed: bool,
    /// Non-gating assertions are reported but do not fail the run.
    pub gating: bool,
    pub value: f64,
    pub target: f64,
    pub detail: String,
}

impl Assertion {
    pub fn gate(label: &str, passed: bool, value: f64, target: f64, detail: String) -> Self {
        Assertion {
            label: label.into(),
            passed,
            gating: true,
            value,
            target,
            detail,
        }
    }

    pub fn advisory(label: &str, passed: bool, value: f64, target: f64, detail: String) -> Self {
        Assertion {
            label: label.into(),
            passed,
            gating: false,
            value,
            target,
            detail,
        }
    }
}

/// One experiment's products: assertions plus named CSV bodies and JSON
/// records to be written under the output directory.
#[derive(Debug, Default)]
pub struct Outcome {
    pub assertions: Vec<Assertion>,
    pub csv_files: Vec<(String, String)>,
    pub json_records: Vec<(String, serde_json::Value)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed || !a.gating)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    tool: ToolInfo,
    experiment: &'a str,
    config: &'a BTreeMap<String, String>,
    passed: bool,
    assertions: &'a [Assertion],
}

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    config_hash: String,
    config: &'a BTreeMap<String, String>,
}

fn config_hash(cfg: &Config) -> String {
    // FNV-1a over the canonical text; stable across platforms.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in cfg.canonical_text().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

pub fn write_outputs(
    out_dir: &Path,
    experiment: &str,
    cfg: &Config,
    outcome: &Outcome,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let report = Report {
        tool: ToolInfo {
            name: "sle-lqg",
            version: env!("CARGO_PKG_VERSION"),
        },
        experiment,
        config: cfg.entries(),
        passed: outcome.passed(),
        assertions: &outcome.assertions,
    };
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| LabError::Config(format!("report serialization: {e}")))?;
    std::fs::write(out_dir.join("report.json"), report_json + "\n")?;

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(cfg),
        config: cfg.entries(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| LabError::Config(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), manifest_json + "\n")?;

    for (name, body) in &outcome.csv_files {
        std::fs::write(out_dir.join(name), body)?;
    }
    for (name, value) in &outcome.json_records {
        let body = serde_json::to_string_pretty(value)
            .map_err(|e| LabError::Config(format!("record serialization: {e}")))?;
        std::fs::write(out_dir.join(name), body + "\n")?;
    }

    // Aggregate assertion summary.
    let mut summary = String::from("experiment,assertion,passed,gating,value,target\n");
    for a in &outcome.assertions {
        summary.push_str(&format!(
            "{experiment},{},{},{},{},{}\n",
            a.label, a.passed, a.gating, a.value, a.target
        ));
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;
    Ok(())
}
