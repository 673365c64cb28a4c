//! Artifact formats.
//!
//! CSV: comment lines starting with `#` (tool, config hash, seed), then one
//! header line, then rows. Floats use `{:.16e}` (17 significant digits).
//! JSON artifacts are objects whose first keys are `config_hash` and `seed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// An artifact held in memory until the run writes it into its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(experiment: &str, hash: &str, seed: u64, columns: &[&str]) -> Self {
        let mut text = String::new();
        writeln!(text, "# pathlab {VERSION} {experiment}").unwrap();
        writeln!(text, "# config_hash: {hash}").unwrap();
        writeln!(text, "# seed: {seed}").unwrap();
        writeln!(text, "{}", columns.join(",")).unwrap();
        Self {
            text,
            columns: columns.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn floats(&mut self, xs: &[f64]) {
        let cells: Vec<String> = xs.iter().map(|&x| float(x)).collect();
        self.row(&cells);
    }

    pub fn finish(self, name: &str) -> Artifact {
        Artifact {
            name: name.to_string(),
            bytes: self.text.into_bytes(),
        }
    }
}

pub fn json_artifact(name: &str, hash: &str, seed: u64, body: &impl Serialize) -> Result<Artifact> {
    let mut doc = serde_json::Map::new();
    doc.insert("config_hash".into(), json!(hash));
    doc.insert("seed".into(), json!(seed));
    doc.insert("data".into(), serde_json::to_value(body)?);
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(doc))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub comparison: &'static str,
}

impl Check {
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value < threshold,
            value,
            threshold,
            comparison: "<",
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            comparison: ">=",
        }
    }

    pub fn equals(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value == threshold,
            value,
            threshold,
            comparison: "==",
        }
    }

    pub fn within(name: &str, value: f64, target: f64, rel: f64) -> Self {
        Self {
            name: name.into(),
            passed: (value / target - 1.0).abs() <= rel,
            value,
            threshold: rel,
            comparison: "rel<=",
        }
    }
}

/// Everything an experiment produces; written by [`write_run`].
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub config: Value,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub passed: bool,
    pub error: Option<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// Joins `name` under `dir`, refusing anything that could escape it.
pub fn inside(dir: &Path, name: &str) -> Result<PathBuf> {
    let rel = Path::new(name);
    if rel.is_absolute()
        || rel
            .components()
            .any(|c| !matches!(c, std::path::Component::Normal(_)))
    {
        bail!("artifact name '{name}' leaves the output directory");
    }
    Ok(dir.join(rel))
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut names = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = inside(dir, &a.name)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
        names.push(a.name.clone());
    }
    Ok(names)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join(MANIFEST), bytes)?;
    Ok(())
}
