//! Batch front end for `pathlab-core`: configuration, experiment runners,
//! artifact writing and the acceptance suite.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde_json::Value;

use config::{Experiment, RunConfig};
use experiments::Stamp;
use output::{write_artifacts, write_manifest, Manifest, Outcome, VERSION};

/// Runs one experiment without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let hash = cfg.hash();
    let s = Stamp {
        experiment: cfg.experiment.name(),
        hash: &hash,
        seed: cfg.seed,
    };
    match &cfg.experiment {
        Experiment::Propagate(c) => experiments::propagate(c, &s),
        Experiment::Evolve(c) => experiments::evolve(c, &s),
        Experiment::Diffuse(c) => experiments::diffuse(c, &s),
        Experiment::Huygens(c) => experiments::huygens(c, &s),
        Experiment::PairPaths(c) => experiments::pairpaths(c, &s),
        Experiment::Positivity(c) => experiments::positivity(c, &s),
        Experiment::Born(c) => experiments::born(c, &s),
        Experiment::Reflect1d(c) => experiments::reflect1d(c, &s),
        Experiment::Verify(c) => verify::run(c, &s),
    }
}

/// Runs `cfg`, writes its artifacts into `out` and always writes the
/// manifest, even when the run fails.
pub fn run(cfg: &RunConfig, out: &Path) -> Manifest {
    let start = Instant::now();
    let result = execute(cfg).and_then(|o| {
        let names = write_artifacts(out, &o.artifacts)?;
        Ok((o, names))
    });
    let mut m = Manifest {
        tool: "pathlab",
        version: VERSION,
        experiment: cfg.experiment.name().to_string(),
        config: serde_json::to_value(cfg).unwrap_or(Value::Null),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        artifacts: Vec::new(),
        wall_clock_seconds: 0.0,
        checks: Vec::new(),
        metrics: Default::default(),
        warnings: Vec::new(),
        passed: false,
        error: None,
    };
    match result {
        Ok((o, names)) => {
            m.passed = o.passed();
            m.artifacts = names;
            m.checks = o.checks;
            m.metrics = o.metrics;
            m.warnings = o.warnings;
        }
        Err(e) => m.error = Some(format!("{e:#}")),
    }
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = write_manifest(out, &m) {
        m.passed = false;
        m.error.get_or_insert_with(|| format!("writing manifest: {e:#}"));
    }
    m
}

/// Manifest for a run whose configuration never loaded.
pub fn failed_manifest(experiment: &str, seed: Option<u64>, error: &anyhow::Error, out: &Path) -> Manifest {
    let m = Manifest {
        tool: "pathlab",
        version: VERSION,
        experiment: experiment.to_string(),
        config: Value::Null,
        config_hash: String::new(),
        seed: seed.unwrap_or(0),
        threads: rayon::current_num_threads(),
        artifacts: Vec::new(),
        wall_clock_seconds: 0.0,
        checks: Vec::new(),
        metrics: Default::default(),
        warnings: Vec::new(),
        passed: false,
        error: Some(format!("{error:#}")),
    };
    let _ = write_manifest(out, &m);
    m
}
