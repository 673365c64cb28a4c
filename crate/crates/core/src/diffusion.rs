//! Random-walk path counting, its continuum limit, and Monte Carlo walkers.
//!
//! Conventions: `D = lambda^2 / (2 eps)`, Green's function
//! `(4 pi D t)^{-1/2} exp(-x^2 / 4 D t)`, Gaussian step variance `2 D eps`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::rng::RngStream;
use crate::scalar::Real;

/// Walkers per parallel work unit. Fixed so the merge order never depends
/// on the thread count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec<T> {
    pub step_length: T,
    pub step_time: T,
    pub n_steps: usize,
}

impl<T: Real> WalkSpec<T> {
    pub fn new(step_length: T, step_time: T, n_steps: usize) -> Result<Self> {
        if !(step_length > T::zero() && step_time > T::zero()) {
            return Err(invalid("step length and step time must be positive"));
        }
        if n_steps < 1 {
            return Err(invalid("need at least one step"));
        }
        Ok(Self {
            step_length,
            step_time,
            n_steps,
        })
    }

    pub fn diffusion_constant(&self) -> T {
        self.step_length * self.step_length / (T::lit(2.0) * self.step_time)
    }
}

/// Endpoint counts of lattice walks, keyed by offset `l` (position `l lambda`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkHistogram {
    pub counts: BTreeMap<i64, u64>,
    pub total: u64,
}

impl WalkHistogram {
    pub fn probability(&self, l: i64) -> f64 {
        self.counts.get(&l).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Maximum CDF distance to a lattice distribution `p(l)` on `-n..=n`.
    pub fn ks_distance(&self, n: i64, p: impl Fn(i64) -> f64) -> f64 {
        let mut emp = 0.0;
        let mut model = 0.0;
        let mut d: f64 = 0.0;
        for l in -n..=n {
            emp += self.probability(l);
            model += p(l);
            d = d.max((emp - model).abs());
        }
        d
    }
}

/// Continuous endpoint samples of Gaussian-step walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSample {
    pub endpoints: Vec<f64>,
}

impl ContinuousSample {
    pub fn mean(&self) -> f64 {
        self.endpoints.iter().sum::<f64>() / self.endpoints.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.endpoints.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (self.endpoints.len() as f64 - 1.0)
    }

    /// Kolmogorov-Smirnov distance to a continuous CDF.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let mut xs = self.endpoints.clone();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
            })
            .fold(0.0, f64::max)
    }

    /// Histogram with `bins` equal bins over `[lo, hi]`: `(centre, count, density)`.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<(f64, u64, f64)> {
        let w = (hi - lo) / bins as f64;
        let mut c = vec![0u64; bins];
        for &x in &self.endpoints {
            if x >= lo && x < hi {
                c[(((x - lo) / w) as usize).min(bins - 1)] += 1;
            }
        }
        let n = self.endpoints.len() as f64;
        c.iter()
            .enumerate()
            .map(|(i, &k)| (lo + (i as f64 + 0.5) * w, k, k as f64 / (n * w)))
            .collect()
    }
}

fn parity_ok(n: u64, l: i64) -> bool {
    l.unsigned_abs() <= n && (n as i64 + l) % 2 == 0
}

/// `ln C(n, k)` via log-gamma.
fn ln_binomial(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `C(n, (n+l)/2) 2^-n`, zero for unreachable offsets.
pub fn walk_probability_exact(n: u64, l: i64) -> f64 {
    if !parity_ok(n, l) {
        return 0.0;
    }
    let k = ((n as i64 + l) / 2) as u64;
    if n <= 60 {
        return binomial(n, k) as f64 / 2f64.powi(n as i32);
    }
    (ln_binomial(n, k) - n as f64 * std::f64::consts::LN_2).exp()
}

/// Exact `C(n, k)` for `n <= 125`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Number of `+-1` step sequences of length `n` ending at `l`, by brute force.
pub fn enumerate_paths(n: u32, l: i64) -> Result<u64> {
    if n > 20 {
        return Err(PathError::EnumerationTooLarge(n as usize));
    }
    let target_rights = l + n as i64;
    if target_rights < 0 || target_rights % 2 != 0 {
        return Ok(0);
    }
    // a path is a bit pattern; its endpoint is 2 * ones - n
    Ok((0u32..1 << n)
        .filter(|bits| 2 * bits.count_ones() as i64 == target_rights)
        .count() as u64)
}

/// Lattice Gaussian `2 exp(-l^2/2n) / sqrt(2 pi n)` on the parity sublattice.
pub fn stirling_density(n: u64, l: i64) -> Result<f64> {
    if n < 10 {
        return Err(invalid("Stirling form needs n >= 10"));
    }
    if !parity_ok(n, l) {
        return Ok(0.0);
    }
    let nf = n as f64;
    let lf = l as f64;
    Ok(2.0 * (-lf * lf / (2.0 * nf)).exp() / (2.0 * std::f64::consts::PI * nf).sqrt())
}

/// Endpoint histogram of `walkers` independent `+-lambda` walks.
pub fn mc_walk_sample<T: Real>(spec: &WalkSpec<T>, walkers: u64, rng: &RngStream) -> Result<WalkHistogram> {
    if walkers < 1 {
        return Err(invalid("need at least one walker"));
    }
    let n = spec.n_steps as u64;
    let chunks = walkers.div_ceil(CHUNK as u64);
    let parts: Vec<BTreeMap<i64, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK as u64;
            let hi = (lo + CHUNK as u64).min(walkers);
            let mut local = BTreeMap::new();
            for w in lo..hi {
                let mut g = rng.substream(w);
                let mut left = n;
                let mut rights = 0u64;
                while left >= 64 {
                    rights += g.gen::<u64>().count_ones() as u64;
                    left -= 64;
                }
                if left > 0 {
                    rights += (g.gen::<u64>() & ((1u64 << left) - 1)).count_ones() as u64;
                }
                *local.entry(2 * rights as i64 - n as i64).or_insert(0) += 1;
            }
            local
        })
        .collect();
    let mut counts = BTreeMap::new();
    for part in parts {
        for (l, c) in part {
            *counts.entry(l).or_insert(0) += c;
        }
    }
    Ok(WalkHistogram {
        counts,
        total: walkers,
    })
}

/// `(4 pi D t)^{-1/2} exp(-x^2 / 4 D t)`.
pub fn gaussian_green(x: f64, t: f64, d: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("time must be positive"));
    }
    if !(d > 0.0) {
        return Err(invalid("diffusion constant must be positive"));
    }
    Ok((-x * x / (4.0 * d * t)).exp() / (4.0 * std::f64::consts::PI * d * t).sqrt())
}

/// Cumulative distribution of [`gaussian_green`].
pub fn gaussian_green_cdf(x: f64, t: f64, d: f64) -> Result<f64> {
    if !(t > 0.0 && d > 0.0) {
        return Err(invalid("time and diffusion constant must be positive"));
    }
    Ok(0.5 * libm::erfc(-x / (4.0 * d * t).sqrt()))
}

/// Endpoints of `walkers` walks of `n` Gaussian steps of variance `2 D eps`.
pub fn gaussian_step_path_mc(n: usize, eps: f64, d: f64, walkers: u64, rng: &RngStream) -> Result<ContinuousSample> {
    if walkers < 1 || n < 1 {
        return Err(invalid("need at least one walker and one step"));
    }
    if !(eps > 0.0 && d >= 0.0) {
        return Err(invalid("eps must be positive and D non-negative"));
    }
    let sd = (2.0 * d * eps).sqrt();
    let chunks = walkers.div_ceil(CHUNK as u64);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK as u64;
            let hi = (lo + CHUNK as u64).min(walkers);
            (lo..hi)
                .map(|w| {
                    let mut g = rng.substream(w);
                    let mut x = 0.0;
                    for _ in 0..n {
                        let z: f64 = StandardNormal.sample(&mut g);
                        x += sd * z;
                    }
                    x
                })
                .collect()
        })
        .collect();
    Ok(ContinuousSample {
        endpoints: parts.concat(),
    })
}

/// Max relative error of `walk_probability_exact(n, l) / 2 lambda` against
/// the Green's function over the allowed `|l| <= 3 sqrt(n)`.
pub fn continuum_limit_error(n: u64, lambda: f64, eps: f64) -> Result<f64> {
    let d = lambda * lambda / (2.0 * eps);
    let t = n as f64 * eps;
    let lmax = (3.0 * (n as f64).sqrt()).floor() as i64;
    let mut worst: f64 = 0.0;
    for l in -lmax..=lmax {
        if !parity_ok(n, l) {
            continue;
        }
        let lattice = walk_probability_exact(n, l) / (2.0 * lambda);
        let cont = gaussian_green(l as f64 * lambda, t, d)?;
        worst = worst.max((lattice / cont - 1.0).abs());
    }
    Ok(worst)
}
