//! Run configuration: one parameter block per experiment, read from TOML or
//! JSON. Every field has a desk-scale default, so an empty file is valid.

use std::path::Path;

use anyhow::{bail, Context, Result};
use pathlab_core::pairpath::ScanConfig;
use pathlab_core::{Grid, Params, Potential};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn symmetric(half: f64, points: usize) -> Self {
        Self {
            x_min: -half,
            x_max: half,
            points,
        }
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, self.points).context("grid")
    }
}

fn one() -> f64 {
    1.0
}

fn params(mass: f64, hbar: f64) -> Result<Params> {
    Params::new(mass, hbar).context("physical parameters")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateConfig {
    pub potential: Potential,
    pub x0: f64,
    pub t: f64,
    pub n: usize,
    pub grid: GridConfig,
    pub mass: f64,
    pub hbar: f64,
    /// Bound on the L2 relative error against the closed form, when one exists.
    pub tolerance: f64,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            potential: Potential::Free,
            x0: 0.0,
            t: 1.0,
            n: 64,
            grid: GridConfig::symmetric(20.0, 1024),
            mass: one(),
            hbar: one(),
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub x0: f64,
    pub sigma: f64,
    pub k0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub potential: Potential,
    pub grid: GridConfig,
    pub packet: PacketConfig,
    pub t: f64,
    pub n: usize,
    pub oracle_dt: f64,
    pub mass: f64,
    pub hbar: f64,
    pub tolerance: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            potential: Potential::Harmonic { omega: 1.0 },
            grid: GridConfig::symmetric(20.0, 1024),
            packet: PacketConfig {
                x0: -1.0,
                sigma: 1.0,
                k0: 1.0,
            },
            t: 1.0,
            n: 4096,
            oracle_dt: 1e-4,
            mass: one(),
            hbar: one(),
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkMode {
    /// `+-lambda` steps, compared with the binomial law.
    Lattice,
    /// Gaussian steps, compared with the diffusion Green's function.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffuseConfig {
    pub mode: WalkMode,
    pub n_steps: usize,
    pub walkers: u64,
    pub step_length: f64,
    pub step_time: f64,
    pub ks_tolerance: f64,
    /// Histogram bins for the Gaussian mode.
    pub bins: usize,
}

impl Default for DiffuseConfig {
    fn default() -> Self {
        Self {
            mode: WalkMode::Lattice,
            n_steps: 100,
            walkers: 1_000_000,
            step_length: 1.0,
            step_time: 1.0,
            ks_tolerance: 0.005,
            bins: 81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HuygensConfig {
    pub wavelength: f64,
    pub separation: f64,
    pub width: f64,
    pub points_per_slit: usize,
    pub source_distance: f64,
    pub screen_distance: f64,
    pub half_width: f64,
    pub screen_points: usize,
    pub fringes_each_side: usize,
    pub spacing_tolerance: f64,
    pub contrast_tolerance: f64,
}

impl Default for HuygensConfig {
    fn default() -> Self {
        Self {
            wavelength: 0.5,
            separation: 10.0,
            width: 0.0,
            points_per_slit: 1,
            source_distance: 50.0,
            screen_distance: 1000.0,
            half_width: 150.0,
            screen_points: 601,
            fringes_each_side: 3,
            spacing_tolerance: 0.02,
            contrast_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub potential: Potential,
    pub x0: f64,
    pub x: f64,
    pub t: f64,
    pub n: usize,
    /// Grid of the composed kernel (the target `x` must be a node).
    pub kernel_grid: GridConfig,
    /// Interior-node grid, centred on the straight path's midpoint.
    pub z_half_width: f64,
    pub z_points: usize,
    pub w_cutoff: f64,
    pub w_points: usize,
    pub mass: f64,
    pub hbar: f64,
    pub tolerance: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            potential: Potential::Free,
            x0: 0.0,
            x: 1.0,
            t: 1.0,
            n: 2,
            kernel_grid: GridConfig::symmetric(8.0, 257),
            z_half_width: 8.0,
            z_points: 64,
            w_cutoff: 1.0,
            w_points: 256,
            mass: one(),
            hbar: one(),
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositivityConfig {
    pub potential: Potential,
    pub x0: f64,
    pub x: f64,
    pub t: f64,
    pub n: usize,
    pub w_cutoff: f64,
    pub w_points: usize,
    pub n_paths: usize,
    pub scales: [f64; 3],
    pub mass: f64,
    pub hbar: f64,
}

impl Default for PositivityConfig {
    fn default() -> Self {
        Self {
            potential: Potential::Quartic { lambda4: 1.0 },
            x0: 0.0,
            x: 1.0,
            t: 1.0,
            n: 3,
            w_cutoff: 5.0,
            w_points: 200,
            n_paths: 1000,
            scales: [0.1, 0.3, 1.0],
            mass: one(),
            hbar: one(),
        }
    }
}

impl PositivityConfig {
    pub fn scan(&self) -> ScanConfig<f64> {
        ScanConfig {
            x0: self.x0,
            x: self.x,
            total_time: self.t,
            n_slices: self.n,
            w_cutoff: self.w_cutoff,
            w_points: self.w_points,
            n_paths: self.n_paths,
            scales: self.scales,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BornConfig {
    pub potential: Potential,
    pub k_min: f64,
    pub k_max: f64,
    pub samples: usize,
    /// 1 or 3: the dimension of the Fourier transform.
    pub dimension: usize,
    pub tolerance: f64,
}

impl Default for BornConfig {
    fn default() -> Self {
        Self {
            potential: Potential::Yukawa { g: 1.0, mu: 1.0 },
            k_min: 0.05,
            k_max: 4.8,
            samples: 20,
            dimension: 3,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectConfig {
    pub potential: Potential,
    pub k0: f64,
    pub g: f64,
    pub packet_width: f64,
    pub half_width: f64,
    pub points: usize,
    pub dt: f64,
    pub mass: f64,
    pub hbar: f64,
    /// Also run at `g / 2` and check the `R / 4` scaling.
    pub check_scaling: bool,
    pub ratio_tolerance: f64,
}

impl Default for ReflectConfig {
    fn default() -> Self {
        Self {
            potential: Potential::GaussianWell { v0: 0.01, sigma: 0.5 },
            k0: 2.0,
            g: 1.0,
            packet_width: 20.0,
            half_width: 400.0,
            points: 8192,
            dt: 0.01,
            mass: one(),
            hbar: one(),
            check_scaling: true,
            ratio_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Multiplies every numeric acceptance threshold.
    pub tolerance_scale: f64,
    /// Criterion numbers to run; empty means all.
    pub criteria: Vec<u32>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tolerance_scale: 1.0,
            criteria: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "lowercase")]
pub enum Experiment {
    Propagate(PropagateConfig),
    Evolve(EvolveConfig),
    Diffuse(DiffuseConfig),
    Huygens(HuygensConfig),
    PairPaths(PairConfig),
    Positivity(PositivityConfig),
    Born(BornConfig),
    Reflect1d(ReflectConfig),
    Verify(VerifyConfig),
}

impl Experiment {
    pub const NAMES: [&'static str; 9] = [
        "propagate",
        "evolve",
        "diffuse",
        "huygens",
        "pairpaths",
        "positivity",
        "born",
        "reflect1d",
        "verify",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Propagate(_) => "propagate",
            Self::Evolve(_) => "evolve",
            Self::Diffuse(_) => "diffuse",
            Self::Huygens(_) => "huygens",
            Self::PairPaths(_) => "pairpaths",
            Self::Positivity(_) => "positivity",
            Self::Born(_) => "born",
            Self::Reflect1d(_) => "reflect1d",
            Self::Verify(_) => "verify",
        }
    }

    /// Parameter block for `name` from a JSON object (missing keys default).
    pub fn from_block(name: &str, block: Value) -> Result<Self> {
        fn parse<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
            serde_json::from_value(v).context("invalid parameter block")
        }
        Ok(match name {
            "propagate" => Self::Propagate(parse(block)?),
            "evolve" => Self::Evolve(parse(block)?),
            "diffuse" => Self::Diffuse(parse(block)?),
            "huygens" => Self::Huygens(parse(block)?),
            "pairpaths" => Self::PairPaths(parse(block)?),
            "positivity" => Self::Positivity(parse(block)?),
            "born" => Self::Born(parse(block)?),
            "reflect1d" => Self::Reflect1d(parse(block)?),
            "verify" => Self::Verify(parse(block)?),
            other => bail!("unknown experiment '{other}'"),
        })
    }

    /// Checks every parameter against the owning module before any work.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Propagate(c) => {
                c.potential.validate()?;
                c.grid.build()?;
                params(c.mass, c.hbar)?;
                pathlab_core::Slicing::new(c.t, c.n)?;
                positive("tolerance", c.tolerance)?;
            }
            Self::Evolve(c) => {
                c.potential.validate()?;
                c.grid.build()?;
                params(c.mass, c.hbar)?;
                pathlab_core::Slicing::new(c.t, c.n)?;
                positive("packet.sigma", c.packet.sigma)?;
                positive("oracle_dt", c.oracle_dt)?;
                positive("tolerance", c.tolerance)?;
            }
            Self::Diffuse(c) => {
                pathlab_core::Walk::new(c.step_length, c.step_time, c.n_steps)?;
                if c.walkers == 0 {
                    bail!("walkers must be positive");
                }
                if c.bins < 2 {
                    bail!("bins must be at least 2");
                }
                positive("ks_tolerance", c.ks_tolerance)?;
            }
            Self::Huygens(c) => {
                positive("wavelength", c.wavelength)?;
                c.slit().validate()?;
                positive("half_width", c.half_width)?;
                if c.screen_points < 2 || c.fringes_each_side < 1 {
                    bail!("need at least two screen points and one fringe per side");
                }
            }
            Self::PairPaths(c) => {
                c.potential.validate()?;
                params(c.mass, c.hbar)?;
                pathlab_core::Slicing::new(c.t, c.n)?;
                if c.n < 2 {
                    bail!("pair paths need n >= 2");
                }
                c.kernel_grid.build()?;
                positive("z_half_width", c.z_half_width)?;
                pathlab_core::Window::symmetric(c.w_cutoff, c.w_points)?;
                if c.z_points < 8 {
                    bail!("z_points must be at least 8");
                }
            }
            Self::Positivity(c) => {
                c.potential.validate()?;
                params(c.mass, c.hbar)?;
                c.scan().validate()?;
            }
            Self::Born(c) => {
                c.potential.validate()?;
                if !(c.k_min >= 0.0 && c.k_max > c.k_min) || c.samples < 1 {
                    bail!("need 0 <= k_min < k_max and samples >= 1");
                }
                if c.dimension != 1 && c.dimension != 3 {
                    bail!("dimension must be 1 or 3");
                }
                positive("tolerance", c.tolerance)?;
            }
            Self::Reflect1d(c) => {
                c.potential.validate()?;
                params(c.mass, c.hbar)?;
                positive("k0", c.k0)?;
                positive("dt", c.dt)?;
                Grid::symmetric(c.half_width, c.points)?;
            }
            Self::Verify(c) => positive("tolerance_scale", c.tolerance_scale)?,
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{name} must be positive and finite (got {v})");
    }
    Ok(())
}

impl HuygensConfig {
    pub fn slit(&self) -> pathlab_core::Slits {
        pathlab_core::Slits {
            k: std::f64::consts::TAU / self.wavelength,
            separation: self.separation,
            width: self.width,
            points_per_slit: self.points_per_slit,
            source_distance: self.source_distance,
            screen_distance: self.screen_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl RunConfig {
    /// Reads `path` (TOML unless the extension is `.json`) for experiment
    /// `name`. A top-level `experiment` key, if present, must match.
    pub fn load(name: &str, path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut value = match path {
            None => Value::Object(Default::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                if p.extension().and_then(|e| e.to_str()) == Some("json") {
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                } else {
                    let t: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                    serde_json::to_value(t)?
                }
            }
        };
        let obj = value
            .as_object_mut()
            .context("configuration must be a table at the top level")?;
        if let Some(tag) = obj.remove("experiment") {
            if tag.as_str() != Some(name) {
                bail!("configuration is for experiment {tag}, not '{name}'");
            }
        }
        let file_seed = match obj.remove("seed") {
            Some(v) => Some(v.as_u64().context("seed must be a non-negative integer")?),
            None => None,
        };
        let experiment = Experiment::from_block(name, value)?;
        let cfg = Self {
            seed: seed.or(file_seed).unwrap_or(0),
            experiment,
        };
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn for_experiment(experiment: Experiment, seed: u64) -> Self {
        Self { seed, experiment }
    }

    /// Canonical JSON echo of the configuration: sorted keys, no whitespace.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("configuration serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::load("propagate", None, Some(3)).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.experiment, Experiment::Propagate(PropagateConfig::default()));
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("a.toml");
        std::fs::write(
            &t,
            "experiment = \"propagate\"\nseed = 5\nn = 32\n[potential]\ntype = \"Harmonic\"\nparams = { omega = 1.0 }\n",
        )
        .unwrap();
        let j = dir.path().join("a.json");
        std::fs::write(
            &j,
            r#"{"seed": 5, "n": 32, "potential": {"type": "Harmonic", "params": {"omega": 1.0}}}"#,
        )
        .unwrap();
        let a = RunConfig::load("propagate", Some(&t), None).unwrap();
        let b = RunConfig::load("propagate", Some(&j), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "n = 0\n").unwrap();
        assert!(RunConfig::load("propagate", Some(&p), None).is_err());
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(RunConfig::load("propagate", Some(&p), None).is_err());
        std::fs::write(&p, "experiment = \"born\"\n").unwrap();
        assert!(RunConfig::load("propagate", Some(&p), None).is_err());
        std::fs::write(&p, "[potential]\ntype = \"GaussianWell\"\nparams = { v0 = 1.0, sigma = -1.0 }\n").unwrap();
        assert!(RunConfig::load("evolve", Some(&p), None).is_err());
    }
}
