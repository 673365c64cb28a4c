//! Split-step Fourier solver for the 1D time-dependent Schrodinger equation.
//!
//! Strang splitting `e^{-iV dt/2hbar} F^-1 e^{-i hbar k^2 dt/2m} F e^{-iV dt/2hbar}`
//! on a periodic grid. Each factor is unitary on the lattice, so the norm is
//! conserved to roundoff.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::lattice::{ComplexField, Grid1D, PhysicalParams, Spectral};
use crate::potentials::PotentialSpec;
use crate::scalar::{cis, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub grid: Grid1D<T>,
    pub dt: T,
    pub n_steps: usize,
    pub spec: PotentialSpec<T>,
    pub params: PhysicalParams<T>,
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        self.params.validate()?;
        self.spec.validate()
    }

    pub fn total_time(&self) -> T {
        self.dt * T::from_usize_lossy(self.n_steps)
    }
}

/// Normalized Gaussian packet `exp(-(x-x0)^2/4 sigma^2 + i k0 x)`;
/// `sigma` is the position standard deviation of `|psi|^2`.
pub fn gaussian_packet<T: Real>(grid: Grid1D<T>, x0: T, sigma: T, k0: T) -> Result<ComplexField<T>> {
    if !(sigma > T::zero()) {
        return Err(invalid("packet width must be positive"));
    }
    let f = ComplexField::from_fn(grid, |x| {
        let d = x - x0;
        cis(k0 * x) * (-(d * d) / (T::lit(4.0) * sigma * sigma)).exp()
    })?;
    normalized(&f)
}

/// `f / ||f||` in the lattice norm.
pub fn normalized<T: Real>(f: &ComplexField<T>) -> Result<ComplexField<T>> {
    let n = f.l2_norm();
    if !(n > T::zero()) {
        return Err(invalid("cannot normalize a zero field"));
    }
    f.map(|_, v| v / n)
}

/// `|<k>| + 4 sigma_k` of the field's spectrum.
pub fn dominant_wavenumber<T: Real>(psi: &ComplexField<T>) -> T {
    let grid = psi.grid();
    let spectral = Spectral::new(grid.len());
    let k = spectral.wavenumbers(grid.dx());
    let mut buf = psi.values().to_vec();
    spectral.forward(&mut buf);
    let w: Vec<T> = buf.iter().map(|v| v.norm_sqr()).collect();
    let total: T = w.iter().copied().sum();
    if total == T::zero() {
        return T::zero();
    }
    let mean = w.iter().zip(&k).map(|(&a, &b)| a * b).sum::<T>() / total;
    let var = w
        .iter()
        .zip(&k)
        .map(|(&a, &b)| a * (b - mean) * (b - mean))
        .sum::<T>()
        / total;
    mean.abs() + T::lit(4.0) * var.sqrt()
}

pub fn split_step_evolve<T: Real>(psi0: &ComplexField<T>, cfg: &SolverConfig<T>) -> Result<ComplexField<T>> {
    cfg.validate()?;
    let grid = cfg.grid;
    if !psi0.grid().same_lattice(&grid) {
        return Err(PathError::GridMismatch);
    }
    let n0 = psi0.norm_sqr();
    if (n0 - T::one()).abs() > T::lit(1e-8) {
        return Err(invalid(format!("initial state must be normalized (norm^2 = {n0:e})")));
    }
    let kdx = dominant_wavenumber(psi0) * grid.dx();
    if kdx > T::one() {
        return Err(PathError::UnderResolved(kdx.as_f64()));
    }
    let (m, hbar, dt) = (cfg.params.mass, cfg.params.hbar, cfg.dt);
    let spectral = Spectral::new(grid.len());
    let kinetic: Vec<Complex<T>> = spectral
        .wavenumbers(grid.dx())
        .iter()
        .map(|&k| cis(-hbar * dt * k * k / (T::lit(2.0) * m)))
        .collect();
    let mut half = Vec::with_capacity(grid.len());
    let mut full = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let v = cfg.spec.value_1d(grid.x(i), &cfg.params)?;
        half.push(cis(-v * dt / (T::lit(2.0) * hbar)));
        full.push(cis(-v * dt / hbar));
    }
    let mut psi = psi0.values().to_vec();
    if cfg.n_steps > 0 {
        mul(&mut psi, &half);
    }
    for step in 0..cfg.n_steps {
        spectral.forward(&mut psi);
        mul(&mut psi, &kinetic);
        spectral.inverse(&mut psi);
        // adjacent half steps merge into one full potential step
        mul(&mut psi, if step + 1 == cfg.n_steps { &half } else { &full });
    }
    ComplexField::new(grid, psi)
}

/// Evolution on the line `pad` times wider (zero-extended), restricted back
/// to `cfg.grid`. Matches the open work domain used by the composed
/// propagator instead of the bare periodic box.
pub fn split_step_evolve_padded<T: Real>(psi0: &ComplexField<T>, cfg: &SolverConfig<T>, pad: usize) -> Result<ComplexField<T>> {
    if !psi0.grid().same_lattice(&cfg.grid) {
        return Err(PathError::GridMismatch);
    }
    let (big, offset) = cfg.grid.padded(pad)?;
    let mut wide = vec![Complex::new(T::zero(), T::zero()); big.len()];
    wide[offset..offset + cfg.grid.len()].copy_from_slice(psi0.values());
    let out = split_step_evolve(&ComplexField::new(big, wide)?, &SolverConfig { grid: big, ..*cfg })?;
    ComplexField::new(cfg.grid, out.values()[offset..offset + cfg.grid.len()].to_vec())
}

fn mul<T: Real>(a: &mut [Complex<T>], b: &[Complex<T>]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x = *x * y;
    }
}

/// `<H>` with the kinetic part evaluated spectrally.
pub fn energy_expectation<T: Real>(
    psi: &ComplexField<T>,
    spec: &PotentialSpec<T>,
    params: &PhysicalParams<T>,
) -> Result<T> {
    let grid = psi.grid();
    let spectral = Spectral::new(grid.len());
    let k = spectral.wavenumbers(grid.dx());
    let mut buf = psi.values().to_vec();
    spectral.forward(&mut buf);
    let total: T = buf.iter().map(|v| v.norm_sqr()).sum();
    let kin = buf
        .iter()
        .zip(&k)
        .map(|(v, &kk)| v.norm_sqr() * kk * kk)
        .sum::<T>()
        / total
        * params.hbar
        * params.hbar
        / (T::lit(2.0) * params.mass);
    let mut pot = T::zero();
    for (i, v) in psi.values().iter().enumerate() {
        pot = pot + v.norm_sqr() * spec.value_1d(grid.x(i), params)?;
    }
    Ok(kin + pot * grid.dx() / psi.norm_sqr())
}

/// Probabilities left of and right of `[lo, hi]`.
pub fn reflection_transmission<T: Real>(psi: &ComplexField<T>, (lo, hi): (T, T)) -> Result<(T, T)> {
    if !(hi >= lo) {
        return Err(invalid("barrier extent must satisfy lo <= hi"));
    }
    let grid = psi.grid();
    let dx = grid.dx();
    let (mut r, mut t, mut inside) = (T::zero(), T::zero(), T::zero());
    for (i, v) in psi.values().iter().enumerate() {
        let x = grid.x(i);
        let p = v.norm_sqr() * dx;
        if x < lo {
            r = r + p;
        } else if x > hi {
            t = t + p;
        } else {
            inside = inside + p;
        }
    }
    if inside >= T::lit(1e-6) {
        return Err(PathError::NotCleared(inside.as_f64()));
    }
    Ok((r, t))
}
