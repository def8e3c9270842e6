//! Manifest verification: re-runs the experiment embedded in a manifest
//! into a scratch directory and reports, per artifact, how far the fresh
//! outputs deviate from the recorded ones. Fixed seeds and the fixed
//! summation order in the core make zero deviation the expected outcome,
//! independent of the worker thread count.

use std::path::{Path, PathBuf};

use crate::config::{parse_sections, resolve, ExperimentKind, RawSection};
use crate::error::{LabError, Result};
use crate::run::{run_to_dir, MANIFEST_FILE, MANIFEST_FORMAT};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDeviation {
    pub column: String,
    pub max_abs: f64,
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArtifactDiff {
    /// Per-column deviations between the recorded and re-run tables.
    Csv { columns: Vec<ColumnDeviation> },
    /// Byte comparison for text artifacts.
    Text { identical: bool },
    /// Tables whose shape or non-numeric cells disagree.
    Structure { message: String },
    /// Recorded artifact file is gone.
    Missing,
}

impl ArtifactDiff {
    pub fn is_zero(&self) -> bool {
        match self {
            ArtifactDiff::Csv { columns } => {
                columns.iter().all(|c| c.max_abs == 0.0 && c.max_rel == 0.0)
            }
            ArtifactDiff::Text { identical } => *identical,
            ArtifactDiff::Structure { .. } | ArtifactDiff::Missing => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArtifactReport {
    pub name: String,
    pub diff: ArtifactDiff,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub kind: ExperimentKind,
    pub recorded_version: String,
    pub current_version: String,
    pub recorded_format: u32,
    pub artifacts: Vec<ArtifactReport>,
}

impl VerifyReport {
    pub fn version_mismatch(&self) -> bool {
        self.recorded_version != self.current_version || self.recorded_format != MANIFEST_FORMAT
    }

    pub fn zero_deviation(&self) -> bool {
        self.artifacts.iter().all(|a| a.diff.is_zero())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("verify: re-ran '{}' experiment\n", self.kind));
        if self.version_mismatch() {
            out.push_str(&format!(
                "warning: manifest from version {} (format {}), current version {} (format {})\n",
                self.recorded_version, self.recorded_format, self.current_version, MANIFEST_FORMAT
            ));
        }
        for artifact in &self.artifacts {
            match &artifact.diff {
                ArtifactDiff::Csv { columns } => {
                    for c in columns {
                        out.push_str(&format!(
                            "artifact {} column {}: max abs {}, max rel {}\n",
                            artifact.name,
                            c.column,
                            fmt_dev(c.max_abs),
                            fmt_dev(c.max_rel)
                        ));
                    }
                }
                ArtifactDiff::Text { identical } => {
                    out.push_str(&format!(
                        "artifact {}: {}\n",
                        artifact.name,
                        if *identical { "identical" } else { "DIFFERS" }
                    ));
                }
                ArtifactDiff::Structure { message } => {
                    out.push_str(&format!(
                        "artifact {}: SHAPE MISMATCH ({message})\n",
                        artifact.name
                    ));
                }
                ArtifactDiff::Missing => {
                    out.push_str(&format!("artifact {}: MISSING\n", artifact.name));
                }
            }
        }
        out.push_str(if self.zero_deviation() {
            "verify: PASS (zero deviation)\n"
        } else {
            "verify: FAIL (deviations found)\n"
        });
        out
    }
}

fn fmt_dev(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.3e}")
    }
}

/// Re-runs the manifest's experiment and compares every listed artifact.
pub fn verify(manifest_path: &Path) -> Result<VerifyReport> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| {
        LabError::Config(format!("cannot read manifest {}: {e}", manifest_path.display()))
    })?;
    let sections = parse_sections(&text)?;
    let mut manifest_sec = None;
    let mut artifacts_sec = None;
    let mut config_secs: Vec<RawSection> = Vec::new();
    for sec in sections {
        match sec.name.as_str() {
            "manifest" => manifest_sec = Some(sec),
            "artifacts" => artifacts_sec = Some(sec),
            _ => config_secs.push(sec),
        }
    }
    let manifest_sec = manifest_sec
        .ok_or_else(|| LabError::Config("manifest is missing its [manifest] section".into()))?;
    let artifacts_sec = artifacts_sec
        .ok_or_else(|| LabError::Config("manifest is missing its [artifacts] section".into()))?;
    let recorded_format: u32 = entry(&manifest_sec, "format")
        .ok_or_else(|| LabError::Config("[manifest] is missing 'format'".into()))?
        .parse()
        .map_err(|_| LabError::Config("[manifest] 'format' is not an integer".into()))?;
    let recorded_version = entry(&manifest_sec, "version")
        .ok_or_else(|| LabError::Config("[manifest] is missing 'version'".into()))?
        .to_string();
    let names: Vec<String> = entry(&artifacts_sec, "files")
        .ok_or_else(|| LabError::Config("[artifacts] is missing 'files'".into()))?
        .split(',')
        .map(|n| n.trim().to_string())
        .filter(|n| !n.is_empty())
        .collect();

    let base = match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let resolved = resolve(config_secs, &base, None)?;
    let scratch = tempfile::tempdir()
        .map_err(|e| LabError::Io(format!("cannot create scratch directory: {e}")))?;
    run_to_dir(&resolved.config, scratch.path())?;

    let mut artifacts = Vec::new();
    for name in names {
        if name == MANIFEST_FILE {
            continue;
        }
        let diff = compare_artifact(&base.join(&name), &scratch.path().join(&name));
        artifacts.push(ArtifactReport { name, diff });
    }
    Ok(VerifyReport {
        kind: resolved.config.kind,
        recorded_version,
        current_version: env!("CARGO_PKG_VERSION").to_string(),
        recorded_format,
        artifacts,
    })
}

fn entry<'a>(sec: &'a RawSection, key: &str) -> Option<&'a str> {
    sec.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
}

fn compare_artifact(recorded: &Path, rerun: &Path) -> ArtifactDiff {
    let Ok(old) = std::fs::read_to_string(recorded) else {
        return ArtifactDiff::Missing;
    };
    let Ok(new) = std::fs::read_to_string(rerun) else {
        return ArtifactDiff::Missing;
    };
    if recorded.extension().is_some_and(|e| e == "csv") {
        compare_csv(&old, &new)
    } else {
        ArtifactDiff::Text { identical: old == new }
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(text: &str) -> std::result::Result<Table, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| format!("bad header: {e}"))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format!("bad record: {e}"))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(Table { headers, rows })
}

fn compare_csv(old: &str, new: &str) -> ArtifactDiff {
    let (old, new) = match (parse_csv(old), parse_csv(new)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return ArtifactDiff::Structure { message: e },
    };
    if old.headers != new.headers {
        return ArtifactDiff::Structure { message: "column headers differ".into() };
    }
    if old.rows.len() != new.rows.len() {
        return ArtifactDiff::Structure {
            message: format!("{} rows recorded, {} re-run", old.rows.len(), new.rows.len()),
        };
    }
    let mut columns = Vec::with_capacity(old.headers.len());
    for (idx, column) in old.headers.iter().enumerate() {
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for (a, b) in old.rows.iter().zip(&new.rows) {
            let (Some(a), Some(b)) = (a.get(idx), b.get(idx)) else {
                return ArtifactDiff::Structure {
                    message: format!("short row in column {column}"),
                };
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    let abs = (x - y).abs();
                    let scale = x.abs().max(y.abs());
                    max_abs = max_abs.max(abs);
                    if scale > 0.0 {
                        max_rel = max_rel.max(abs / scale);
                    }
                }
                _ => {
                    if a != b {
                        return ArtifactDiff::Structure {
                            message: format!("non-numeric cells differ in column {column}"),
                        };
                    }
                }
            }
        }
        columns.push(ColumnDeviation { column: column.clone(), max_abs, max_rel });
    }
    ArtifactDiff::Csv { columns }
}
