//! One function per experiment. Each returns its artifacts in memory along
//! with the built-in checks; nothing here touches the filesystem.

use anyhow::{bail, Context, Result};
use pathlab_core::born::{born_probability, weak_potential_reflection_1d, ReflectionSetup};
use pathlab_core::diffusion::{gaussian_green, gaussian_green_cdf, gaussian_step_path_mc, mc_walk_sample, walk_probability_exact};
use pathlab_core::huygens::analyze_fringes;
use pathlab_core::pairpath::{
    direct_pair_quadrature, path_quasiprobability_on, positivity_scan, transition_probability_via_pairs,
};
use pathlab_core::potentials::WaveVector;
use pathlab_core::propagator::{analytic_kernel_field, compose_propagator, evolve_wavefunction};
use pathlab_core::schrodinger::{gaussian_packet, split_step_evolve_padded};
use pathlab_core::{rng_stream, Grid, Options, Params, Path, Slicing, Solver, Walk, Window};
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::output::{float, json_artifact, Check, Csv, Outcome};

/// Provenance stamped on every artifact.
pub struct Stamp<'a> {
    pub experiment: &'a str,
    pub hash: &'a str,
    pub seed: u64,
}

impl Stamp<'_> {
    fn csv(&self, columns: &[&str]) -> Csv {
        Csv::new(self.experiment, self.hash, self.seed, columns)
    }
}

pub fn propagate(c: &PropagateConfig, s: &Stamp) -> Result<Outcome> {
    let grid = c.grid.build()?;
    let p = Params::new(c.mass, c.hbar)?;
    let kernel = compose_propagator(&c.potential, c.x0, Slicing::new(c.t, c.n)?, &grid, &p)
        .context("composing the propagator")?;
    let exact = if c.potential.is_at_most_quadratic() {
        Some(analytic_kernel_field(&c.potential, c.x0, &grid, c.t, &p)?)
    } else {
        None
    };
    let mut out = Outcome::default();
    let mut columns = vec!["x", "re", "im", "abs2"];
    if exact.is_some() {
        columns.extend(["analytic_re", "analytic_im"]);
    }
    let mut csv = s.csv(&columns);
    for (i, a) in kernel.field.values().iter().enumerate() {
        let mut row = vec![grid.x(i), a.re, a.im, a.norm_sqr()];
        if let Some(e) = &exact {
            let b = e.values()[i];
            row.extend([b.re, b.im]);
        }
        csv.floats(&row);
    }
    out.artifacts.push(csv.finish("kernel.csv"));
    out.metric("edge_ratio", kernel.diagnostics.edge_ratio);
    match &exact {
        Some(e) => {
            let l2 = kernel.field.relative_l2_error(e)?;
            let max_err = kernel
                .field
                .values()
                .iter()
                .zip(e.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            out.metric("l2_relative_error", l2);
            out.metric("max_abs_error", max_err);
            out.metric("max_abs_error_relative", max_err / e.max_abs());
            out.checks.push(Check::below("l2_relative_error", l2, c.tolerance));
        }
        None => out
            .warnings
            .push(format!("no closed-form kernel for {}; nothing to compare", c.potential.name())),
    }
    Ok(out)
}

pub fn evolve(c: &EvolveConfig, s: &Stamp) -> Result<Outcome> {
    let grid = c.grid.build()?;
    let p = Params::new(c.mass, c.hbar)?;
    let psi0 = gaussian_packet(grid, c.packet.x0, c.packet.sigma, c.packet.k0)?;
    let psi = evolve_wavefunction(&psi0, &c.potential, Slicing::new(c.t, c.n)?, &p, &Options::default())
        .context("propagator evolution")?;
    let steps = (c.t / c.oracle_dt).round() as usize;
    if steps == 0 || ((steps as f64) * c.oracle_dt - c.t).abs() > 1e-9 * c.t {
        bail!("oracle_dt must divide t");
    }
    let solver = Solver {
        grid,
        dt: c.oracle_dt,
        n_steps: steps,
        spec: c.potential,
        params: p,
    };
    let oracle = split_step_evolve_padded(&psi0, &solver, 2).context("split-step oracle")?;
    let d = psi.l2_distance(&oracle)?;
    let mut out = Outcome::default();
    let mut csv = s.csv(&["x", "re", "im", "oracle_re", "oracle_im"]);
    for (i, (a, b)) in psi.values().iter().zip(oracle.values()).enumerate() {
        csv.floats(&[grid.x(i), a.re, a.im, b.re, b.im]);
    }
    out.artifacts.push(csv.finish("wavefunction.csv"));
    out.metric("l2_distance", d);
    out.metric("norm", psi.norm_sqr());
    out.checks.push(Check::below("l2_distance", d, c.tolerance));
    Ok(out)
}

pub fn diffuse(c: &DiffuseConfig, s: &Stamp) -> Result<Outcome> {
    let rng = rng_stream(s.seed);
    let mut out = Outcome::default();
    let n = c.n_steps;
    let (ks, name) = match c.mode {
        WalkMode::Lattice => {
            let spec = Walk::new(c.step_length, c.step_time, n)?;
            let h = mc_walk_sample(&spec, c.walkers, &rng)?;
            let mut csv = s.csv(&["l", "x", "count", "empirical", "exact"]);
            for l in (-(n as i64)..=n as i64).step_by(2) {
                csv.row(&[
                    l.to_string(),
                    float(l as f64 * c.step_length),
                    h.counts.get(&l).copied().unwrap_or(0).to_string(),
                    float(h.probability(l)),
                    float(walk_probability_exact(n as u64, l)),
                ]);
            }
            out.artifacts.push(csv.finish("histogram.csv"));
            (h.ks_distance(n as i64, |l| walk_probability_exact(n as u64, l)), "ks_lattice")
        }
        WalkMode::Gaussian => {
            let d = c.step_length * c.step_length / (2.0 * c.step_time);
            let t = n as f64 * c.step_time;
            let sample = gaussian_step_path_mc(n, c.step_time, d, c.walkers, &rng)?;
            let reach = 5.0 * (2.0 * d * t).sqrt();
            let mut csv = s.csv(&["x", "count", "density", "green"]);
            for (x, k, rho) in sample.histogram(-reach, reach, c.bins) {
                csv.row(&[float(x), k.to_string(), float(rho), float(gaussian_green(x, t, d)?)]);
            }
            out.artifacts.push(csv.finish("histogram.csv"));
            out.metric("mean", sample.mean());
            out.metric("variance", sample.variance());
            out.metric("variance_expected", 2.0 * d * t);
            let ks = sample.ks_distance(|x| gaussian_green_cdf(x, t, d).unwrap_or(f64::NAN));
            (ks, "ks_continuum")
        }
    };
    out.metric(name, ks);
    out.checks.push(Check::below(name, ks, c.ks_tolerance));
    Ok(out)
}

pub fn huygens(c: &HuygensConfig, s: &Stamp) -> Result<Outcome> {
    let slit = c.slit();
    let pattern = slit.pattern(c.half_width, c.screen_points)?;
    let mut out = Outcome::default();
    let mut csv = s.csv(&["x", "intensity"]);
    for (x, i) in pattern.x.iter().zip(&pattern.intensity) {
        csv.floats(&[*x, *i]);
    }
    out.artifacts.push(csv.finish("pattern.csv"));
    out.warnings.extend(pattern.warning.clone());
    let f = analyze_fringes(&slit, c.fringes_each_side)?;
    out.artifacts.push(json_artifact("fringes.json", s.hash, s.seed, &f)?);
    out.metric("mean_spacing", f.mean_spacing);
    out.metric("predicted_spacing", f.predicted_spacing);
    out.metric("worst_contrast", f.worst_contrast);
    out.checks
        .push(Check::within("fringe_spacing", f.mean_spacing, f.predicted_spacing, c.spacing_tolerance));
    out.checks
        .push(Check::below("minimum_contrast", f.worst_contrast, c.contrast_tolerance));
    Ok(out)
}

pub fn pairpaths(c: &PairConfig, s: &Stamp) -> Result<Outcome> {
    let p = Params::new(c.mass, c.hbar)?;
    let slicing = Slicing::new(c.t, c.n)?;
    let kgrid = c.kernel_grid.build()?;
    let anchor = transition_probability_via_pairs(&c.potential, c.x0, c.x, slicing, &kgrid, &p)
        .context("kernel anchor")?;
    let mid = 0.5 * (c.x0 + c.x);
    let zgrid = Grid::new(mid - c.z_half_width, mid + c.z_half_width, c.z_points)?;
    let window = Window::symmetric(c.w_cutoff, c.w_points)?;
    let direct = direct_pair_quadrature(&c.potential, c.x0, c.x, slicing, &p, &zgrid, &window)
        .context("pair-path quadrature")?;

    // profile: first interior node swept over the z grid, the rest straight
    let straight = Path::straight([c.x0, 0.0, 0.0], [c.x, 0.0, 0.0], c.n, slicing.eps(), p, 1)?;
    let rows: Vec<(f64, f64)> = zgrid
        .nodes()
        .par_iter()
        .map(|&z| -> Result<(f64, f64)> {
            let mut inner = straight.interior().to_vec();
            inner[0][0] = z;
            let path = straight.with_interior(&inner)?;
            Ok((z, path_quasiprobability_on(&path, &c.potential, &window)?))
        })
        .collect::<Result<_>>()?;
    let mut out = Outcome::default();
    let mut csv = s.csv(&["z1", "quasiprobability"]);
    for (z, q) in rows {
        csv.floats(&[z, q]);
    }
    out.artifacts.push(csv.finish("profile.csv"));
    out.metric("kernel_abs2", anchor);
    out.metric("pair_quadrature", direct);
    out.checks.push(Check::within("pair_identity", direct, anchor, c.tolerance));
    Ok(out)
}

pub fn positivity(c: &PositivityConfig, s: &Stamp) -> Result<Outcome> {
    let p = Params::new(c.mass, c.hbar)?;
    let report = positivity_scan(&c.potential, &c.scan(), &p, &rng_stream(s.seed)).context("positivity scan")?;
    let mut out = Outcome::default();
    let mut csv = s.csv(&["path", "quasiprobability", "relative", "stderr"]);
    for (i, v) in report.values.iter().enumerate() {
        let e = report.errors.as_ref().map_or(0.0, |e| e[i]);
        csv.row(&[i.to_string(), float(*v), float(v / report.reference), float(e)]);
    }
    out.artifacts.push(csv.finish("values.csv"));
    out.artifacts.push(json_artifact("report.json", s.hash, s.seed, &report)?);
    out.metric("fraction_negative", report.fraction_negative);
    out.metric("fraction_below_floor", report.fraction_below_floor);
    out.metric("artifact_floor", report.artifact_floor);
    out.metric("min_relative", report.min_relative);
    out.metric("aliased_paths", report.aliased_paths as f64);
    out.checks.push(Check::equals(
        "finite_values",
        report.values.iter().all(|v| v.is_finite()) as u8 as f64,
        1.0,
    ));
    if report.aliased_paths > 0 {
        out.warnings.push(format!(
            "{} paths have |s| beyond the w-rule's aliasing limit",
            report.aliased_paths
        ));
    }
    if c.potential.is_at_most_quadratic() && report.method == "tensor" {
        out.checks
            .push(Check::equals("fraction_below_floor", report.fraction_below_floor, 0.0));
    }
    Ok(out)
}

pub fn born(c: &BornConfig, s: &Stamp) -> Result<Outcome> {
    let ks: Vec<f64> = (0..c.samples)
        .map(|i| {
            if c.samples == 1 {
                c.k_min
            } else {
                c.k_min + (c.k_max - c.k_min) * i as f64 / (c.samples - 1) as f64
            }
        })
        .collect();
    let rows: Vec<_> = ks
        .par_iter()
        .map(|&k| {
            let v = if c.dimension == 3 {
                WaveVector::ThreeD([k, 0.0, 0.0])
            } else {
                WaveVector::OneD(k)
            };
            born_probability(&c.potential, v)
        })
        .collect::<pathlab_core::Result<_>>()
        .context("Born sweep")?;
    let mut out = Outcome::default();
    let mut csv = s.csv(&["dk", "p_analytic", "p_quadrature", "rel_diff"]);
    let mut worst: f64 = 0.0;
    for e in &rows {
        csv.floats(&[e.analytic.delta_k, e.analytic.probability, e.quadrature.probability, e.relative_difference]);
        worst = worst.max(e.relative_difference);
        if let Some(note) = &e.note {
            out.warnings.push(format!("dk = 0: {note}"));
        }
    }
    out.artifacts.push(csv.finish("sweep.csv"));
    out.metric("max_relative_difference", worst);
    out.metric("agreement", (worst < c.tolerance) as u8 as f64);
    out.checks.push(Check::below("analytic_vs_quadrature", worst, c.tolerance));
    Ok(out)
}

pub fn reflect1d(c: &ReflectConfig, s: &Stamp) -> Result<Outcome> {
    let p = Params::new(c.mass, c.hbar)?;
    let setup = ReflectionSetup {
        packet_width: c.packet_width,
        half_width: c.half_width,
        points: c.points,
        dt: c.dt,
    };
    let full = weak_potential_reflection_1d(&c.potential, c.k0, c.g, &p, &setup).context("reflection run")?;
    let ratio = full.r_simulated / full.r_born;
    let mut out = Outcome::default();
    out.metric("r_simulated", full.r_simulated);
    out.metric("r_born", full.r_born);
    out.metric("ratio", ratio);
    out.checks.push(Check::within("simulated_over_born", ratio, 1.0, c.ratio_tolerance));
    let mut body = json!({ "coupling": c.g, "full": full });
    if c.check_scaling {
        let half = weak_potential_reflection_1d(&c.potential, c.k0, 0.5 * c.g, &p, &setup)
            .context("half-coupling run")?;
        let q = full.r_simulated / half.r_simulated / 4.0;
        out.metric("scaling_ratio", q);
        out.checks.push(Check::within("quadratic_scaling", q, 1.0, c.ratio_tolerance));
        body["half"] = json!(half);
    }
    out.artifacts.push(json_artifact("reflection.json", s.hash, s.seed, &body)?);
    Ok(out)
}
