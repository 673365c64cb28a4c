//! Time-sliced Feynman propagator.
//!
//! Each slice multiplies by the short-time kernel
//! `sqrt(m / 2 pi i hbar eps) exp{(i eps/hbar)[m/2 ((x'-x)/eps)^2 - (V(x)+V(x'))/2]}`.
//! Sampling that kernel on a lattice and summing aliases badly (its
//! wavenumber grows without bound away from the diagonal), so compositions
//! apply the free factor through its exact Fourier symbol on a zero-padded
//! work grid and the potential factors pointwise. The start point is a
//! band-limited delta whose spectrum is flat up to `k_pass` and rolls off
//! smoothly to zero at `k_stop`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::lattice::{ComplexField, Grid1D, PhysicalParams, Spectral};
use crate::potentials::PotentialSpec;
use crate::quadrature::smooth_step;
use crate::scalar::{cis, Real};

/// `t` split into `n` equal slices of `eps = t / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSlicing<T> {
    pub total_time: T,
    pub n_slices: usize,
}

impl<T: Real> TimeSlicing<T> {
    pub fn new(total_time: T, n_slices: usize) -> Result<Self> {
        if n_slices < 1 {
            return Err(invalid("need at least one time slice"));
        }
        if !(total_time > T::zero() && total_time.is_finite()) {
            return Err(invalid("total time must be positive"));
        }
        Ok(Self {
            total_time,
            n_slices,
        })
    }

    pub fn eps(&self) -> T {
        self.total_time / T::from_usize_lossy(self.n_slices)
    }
}

/// Treatment of `V` at the two fixed endpoints of a composed kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EndpointRule {
    /// Half weight at `x0` and `x`, full weight at interior nodes.
    #[default]
    HalfWeight,
    /// Drop `V(x0)` and `V(x)`; interior nodes still carry full weight.
    Omit,
}

/// Where a single slice samples the potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PotentialRule {
    /// `(V(x_prev) + V(x_next)) / 2`.
    #[default]
    Symmetric,
    /// `V((x_prev + x_next) / 2)`.
    Midpoint,
}

/// Spectral window of the band-limited start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandWindow<T> {
    pub k_pass: T,
    pub k_stop: T,
}

impl<T: Real> BandWindow<T> {
    pub fn new(k_pass: T, k_stop: T) -> Result<Self> {
        if !(k_pass > T::zero() && k_stop > k_pass && k_stop.is_finite()) {
            return Err(invalid("band window needs 0 < k_pass < k_stop"));
        }
        Ok(Self { k_pass, k_stop })
    }

    pub fn weight(&self, k: T) -> T {
        T::one() - smooth_step((k.abs() - self.k_pass) / (self.k_stop - self.k_pass))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Band<T> {
    /// Chosen from the potential, the grid and the travel time.
    #[default]
    Auto,
    Window(BandWindow<T>),
    /// No filtering; for inputs that are already band-limited.
    Unfiltered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorOptions<T> {
    pub endpoint: EndpointRule,
    pub potential_rule: PotentialRule,
    pub band: Band<T>,
    /// Work grid is `pad * n_points` long; `None` picks the smallest power
    /// of two that holds everything reachable within the band.
    pub pad: Option<usize>,
    /// Largest allowed `|A|` in the outer 1/32 of the work grid relative to
    /// the peak.
    pub edge_tolerance: T,
}

impl<T: Real> Default for PropagatorOptions<T> {
    fn default() -> Self {
        Self {
            endpoint: EndpointRule::HalfWeight,
            potential_rule: PotentialRule::Symmetric,
            band: Band::Auto,
            pad: None,
            edge_tolerance: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDiagnostics<T> {
    pub pad: usize,
    pub band: Option<BandWindow<T>>,
    pub edge_ratio: T,
}

/// `A(x0, 0 | x, t)` sampled over a grid of destinations `x`.
#[derive(Debug, Clone)]
pub struct Kernel<T: Real> {
    pub source: T,
    pub field: ComplexField<T>,
    pub slicing: TimeSlicing<T>,
    pub params: PhysicalParams<T>,
    pub spec: PotentialSpec<T>,
    pub diagnostics: KernelDiagnostics<T>,
}

/// Free, or a quadratic potential with zero coupling.
fn is_free_like<T: Real>(spec: &PotentialSpec<T>) -> bool {
    match *spec {
        PotentialSpec::Free => true,
        PotentialSpec::Harmonic { omega } => omega == T::zero(),
        PotentialSpec::Linear { force } => force == T::zero(),
        _ => false,
    }
}

/// `sqrt(m / (2 pi i hbar eps))` with `sqrt(1/i) = exp(-i pi/4)`.
fn free_prefactor<T: Real>(time: T, params: &PhysicalParams<T>) -> Complex<T> {
    let modulus = (params.mass / (T::TAU() * params.hbar * time)).sqrt();
    cis(-T::FRAC_PI_4()) * modulus
}

/// Single-slice amplitude with the symmetric potential split.
pub fn short_time_kernel<T: Real>(
    x_prev: T,
    x_next: T,
    eps: T,
    spec: &PotentialSpec<T>,
    params: &PhysicalParams<T>,
) -> Result<Complex<T>> {
    short_time_kernel_with(x_prev, x_next, eps, spec, params, PotentialRule::Symmetric)
}

pub fn short_time_kernel_with<T: Real>(
    x_prev: T,
    x_next: T,
    eps: T,
    spec: &PotentialSpec<T>,
    params: &PhysicalParams<T>,
    rule: PotentialRule,
) -> Result<Complex<T>> {
    if !(eps > T::zero() && eps.is_finite()) {
        return Err(invalid("eps must be positive"));
    }
    params.validate()?;
    spec.validate()?;
    let v = match rule {
        PotentialRule::Symmetric => {
            (spec.value_1d(x_prev, params)? + spec.value_1d(x_next, params)?) * T::lit(0.5)
        }
        PotentialRule::Midpoint => spec.value_1d((x_prev + x_next) * T::lit(0.5), params)?,
    };
    let u = x_next - x_prev;
    let kinetic = params.mass * u * u / (T::lit(2.0) * params.hbar * eps);
    let potential = eps * v / params.hbar;
    Ok(free_prefactor(eps, params) * cis(kinetic - potential))
}

/// Closed-form propagators for the quadratic potentials.
pub fn analytic_kernel<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    x: T,
    t: T,
    params: &PhysicalParams<T>,
) -> Result<Complex<T>> {
    if !(t > T::zero() && t.is_finite()) {
        return Err(invalid("time must be positive"));
    }
    params.validate()?;
    spec.validate()?;
    let (m, hbar) = (params.mass, params.hbar);
    let two = T::lit(2.0);
    match *spec {
        _ if is_free_like(spec) => {
            let d = x - x0;
            Ok(free_prefactor(t, params) * cis(m * d * d / (two * hbar * t)))
        }
        PotentialSpec::Linear { force: f } => {
            // V = -f x
            let d = x - x0;
            let s = m * d * d / (two * t) + f * t * (x + x0) / two
                - f * f * t * t * t / (T::lit(24.0) * m);
            Ok(free_prefactor(t, params) * cis(s / hbar))
        }
        PotentialSpec::Harmonic { omega } => {
            let wt = omega * t;
            let s = wt.sin();
            if s.abs() < T::lit(1e-9) {
                return Err(PathError::Caustic(wt.as_f64()));
            }
            let modulus = (m * omega / (T::TAU() * hbar * s.abs())).sqrt();
            // each caustic crossed adds -pi/2
            let crossings = (wt / T::PI()).floor();
            let maslov = -T::FRAC_PI_4() - T::FRAC_PI_2() * crossings;
            let phase = m * omega * ((x * x + x0 * x0) * wt.cos() - two * x * x0) / (two * hbar * s);
            Ok(cis(maslov + phase) * modulus)
        }
        _ => Err(PathError::Unsupported(format!(
            "no closed-form kernel for {}",
            spec.name()
        ))),
    }
}

/// [`analytic_kernel`] over every node of `grid`.
pub fn analytic_kernel_field<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    grid: &Grid1D<T>,
    t: T,
    params: &PhysicalParams<T>,
) -> Result<ComplexField<T>> {
    let values = (0..grid.len())
        .map(|i| analytic_kernel(spec, x0, grid.x(i), t, params))
        .collect::<Result<Vec<_>>>()?;
    ComplexField::new(*grid, values)
}

fn max_abs_on_grid<T: Real>(
    spec: &PotentialSpec<T>,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..grid.len() {
        if let Ok(v) = spec.value_1d(grid.x(i), params) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Momentum the kernel must carry to reach every node of `grid` from `x0`.
fn momentum_needed<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    t: T,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> T {
    let m = params.mass;
    let far = (grid.x_min() - x0).abs().max((grid.x_max() - x0).abs());
    let free_like = m * far / t;
    match *spec {
        PotentialSpec::Free => free_like,
        PotentialSpec::Linear { force } => free_like + force.abs() * t * T::lit(0.5),
        PotentialSpec::Harmonic { omega } => {
            let s = (omega * t).sin().abs();
            if omega == T::zero() || s < T::lit(1e-9) {
                free_like
            } else {
                let xmax = grid.x_min().abs().max(grid.x_max().abs());
                (m * omega * (xmax + x0.abs()) / s).max(free_like)
            }
        }
        _ => {
            let (lo, _) = max_abs_on_grid(spec, grid, params);
            let v0 = spec.value_1d(x0, params).unwrap_or(lo);
            let drop = (v0 - lo).max(T::zero());
            free_like + (T::lit(2.0) * m * drop).sqrt()
        }
    }
}

/// Band used for kernels when none is given.
pub fn auto_band<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    t: T,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> Result<BandWindow<T>> {
    let nyq = grid.nyquist();
    let p = momentum_needed(spec, x0, t, grid, params);
    let k_pass = T::lit(1.25) * p / params.hbar;
    if k_pass > T::lit(0.6) * nyq {
        return Err(PathError::UnderResolved((k_pass * grid.dx()).as_f64()));
    }
    let k_pass = k_pass.max(T::lit(0.05) * nyq);
    let k_stop = (T::lit(0.95) * nyq).min(T::lit(2.4) * k_pass);
    BandWindow::new(k_pass, k_stop)
}

/// Largest distance from the work-grid centre reachable within time `t` by
/// spectral content below `k_max`.
fn reach<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    k_max: T,
    t: T,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> T {
    let (m, hbar) = (params.mass, params.hbar);
    let c = grid.center();
    let p = hbar * k_max;
    let free = (x0 - c).abs() + p * t / m;
    match *spec {
        PotentialSpec::Free => free,
        PotentialSpec::Linear { force } => free + force.abs() * t * t / (T::lit(2.0) * m),
        PotentialSpec::Harmonic { omega } if omega > T::zero() => {
            let amp = (x0 * x0 + (p / (m * omega)).powi(2)).sqrt();
            free.min(amp + c.abs())
        }
        PotentialSpec::Quartic { lambda4 } if lambda4 > T::zero() => {
            let e = p * p / (T::lit(2.0) * m) + lambda4 * x0.powi(4);
            let turning = (e / lambda4).powf(T::lit(0.25));
            let vmax = (T::lit(2.0) * e / m).sqrt();
            ((x0 - c).abs() + vmax * t).min(turning + c.abs())
        }
        _ => {
            let (lo, _) = max_abs_on_grid(spec, grid, params);
            let v0 = spec.value_1d(x0, params).unwrap_or(lo);
            let e = p * p / (T::lit(2.0) * m) + v0 - lo.min(v0);
            (x0 - c).abs() + (T::lit(2.0) * e / m).sqrt() * t
        }
    }
}

/// Smallest power-of-two padding (at least 2, at most 64) whose work grid
/// keeps `reach` inside 90% of its half-width.
pub fn auto_pad<T: Real>(grid: &Grid1D<T>, reach: T) -> usize {
    let half = (grid.x_max() - grid.x_min()) * T::lit(0.5);
    let mut pad = 2usize;
    while pad < 64 && T::lit(0.9) * half * T::from_usize_lossy(pad) < reach {
        pad *= 2;
    }
    pad
}

/// Slice operators on a padded work grid.
struct SliceEngine<T: Real> {
    grid: Grid1D<T>,
    work: Grid1D<T>,
    offset: usize,
    spectral: Spectral<T>,
    k: Vec<T>,
    kinetic: Vec<Complex<T>>,
    v_full: Vec<Complex<T>>,
    v_half: Vec<Complex<T>>,
    free: bool,
    slicing: TimeSlicing<T>,
    endpoint: EndpointRule,
    params: PhysicalParams<T>,
}

impl<T: Real> SliceEngine<T> {
    fn new(
        spec: &PotentialSpec<T>,
        slicing: TimeSlicing<T>,
        grid: &Grid1D<T>,
        params: &PhysicalParams<T>,
        endpoint: EndpointRule,
        pad: usize,
    ) -> Result<Self> {
        let (work, offset) = grid.padded(pad)?;
        let spectral = Spectral::new(work.len());
        let k = spectral.wavenumbers(work.dx());
        let eps = slicing.eps();
        let (m, hbar) = (params.mass, params.hbar);
        let free = is_free_like(spec);
        let kinetic_time = if free { slicing.total_time } else { eps };
        let kinetic = k
            .iter()
            .map(|&kk| cis(-hbar * kinetic_time * kk * kk / (T::lit(2.0) * m)))
            .collect();
        let (v_full, v_half) = if free {
            (Vec::new(), Vec::new())
        } else {
            let mut full = Vec::with_capacity(work.len());
            let mut half = Vec::with_capacity(work.len());
            for i in 0..work.len() {
                let v = spec.value_1d(work.x(i), params)?;
                half.push(cis(-eps * v / (T::lit(2.0) * hbar)));
                full.push(cis(-eps * v / hbar));
            }
            (full, half)
        };
        Ok(Self {
            grid: *grid,
            work,
            offset,
            spectral,
            k,
            kinetic,
            v_full,
            v_half,
            free,
            slicing,
            endpoint,
            params: *params,
        })
    }

    fn zeros(&self) -> Vec<Complex<T>> {
        vec![Complex::new(T::zero(), T::zero()); self.work.len()]
    }

    /// Band-limited delta at `x0` on the work grid, unit integral.
    fn delta(&self, x0: T, band: &BandWindow<T>) -> Vec<Complex<T>> {
        let shift = x0 - self.work.x_min();
        let inv_dx = self.work.dx().recip();
        let mut buf: Vec<Complex<T>> = self
            .k
            .iter()
            .map(|&kk| cis(-kk * shift) * (band.weight(kk) * inv_dx))
            .collect();
        self.spectral.inverse(&mut buf);
        buf
    }

    fn filter(&self, buf: &mut [Complex<T>], band: &BandWindow<T>) {
        self.spectral.forward(buf);
        for (v, &kk) in buf.iter_mut().zip(&self.k) {
            *v = *v * band.weight(kk);
        }
        self.spectral.inverse(buf);
    }

    /// All slices after the opening half-step at the source.
    fn run(&self, buf: &mut [Complex<T>]) {
        let n = if self.free { 1 } else { self.slicing.n_slices };
        for j in 0..n {
            self.spectral.forward(buf);
            for (v, &p) in buf.iter_mut().zip(&self.kinetic) {
                *v = *v * p;
            }
            self.spectral.inverse(buf);
            if self.free {
                break;
            }
            let last = j + 1 == n;
            if !last {
                for (v, &h) in buf.iter_mut().zip(&self.v_full) {
                    *v = *v * h;
                }
            } else if self.endpoint == EndpointRule::HalfWeight {
                for (v, &h) in buf.iter_mut().zip(&self.v_half) {
                    *v = *v * h;
                }
            }
        }
    }

    fn edge_ratio(&self, buf: &[Complex<T>]) -> T {
        let m = buf.len();
        let w = (m / 32).max(1);
        let peak = buf.iter().map(|v| v.norm()).fold(T::zero(), T::max);
        if peak == T::zero() {
            return T::zero();
        }
        let edge = buf[..w]
            .iter()
            .chain(&buf[m - w..])
            .map(|v| v.norm())
            .fold(T::zero(), T::max);
        edge / peak
    }

    fn extract(&self, buf: &[Complex<T>]) -> Result<ComplexField<T>> {
        ComplexField::new(
            self.grid,
            buf[self.offset..self.offset + self.grid.len()].to_vec(),
        )
    }

    fn opening_phase(&self, v0: T) -> Complex<T> {
        if self.free || self.endpoint == EndpointRule::Omit {
            Complex::new(T::one(), T::zero())
        } else {
            cis(-self.slicing.eps() * v0 / (T::lit(2.0) * self.params.hbar))
        }
    }
}

fn guard<T: Real>(ratio: T, tol: T) -> Result<()> {
    if !(ratio <= tol) {
        return Err(PathError::GridTooSmall {
            ratio: ratio.as_f64(),
        });
    }
    Ok(())
}

fn resolve_band<T: Real>(
    band: &Band<T>,
    spec: &PotentialSpec<T>,
    x0: T,
    t: T,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> Result<Option<BandWindow<T>>> {
    match band {
        Band::Auto => auto_band(spec, x0, t, grid, params).map(Some),
        Band::Window(w) => Ok(Some(*w)),
        Band::Unfiltered => Ok(None),
    }
}

/// `A(x0, 0 | x, t)` for every node `x` of `grid`, by `n`-fold composition
/// of short-time kernels.
pub fn compose_propagator<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    slicing: TimeSlicing<T>,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> Result<Kernel<T>> {
    compose_propagator_with(spec, x0, slicing, grid, params, &PropagatorOptions::default())
}

pub fn compose_propagator_with<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    slicing: TimeSlicing<T>,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
    options: &PropagatorOptions<T>,
) -> Result<Kernel<T>> {
    params.validate()?;
    spec.validate()?;
    if slicing.n_slices == 1 {
        // a single slice is the short-time kernel itself; nothing is summed
        let eps = slicing.eps();
        let values = (0..grid.len())
            .map(|i| short_time_kernel_with(x0, grid.x(i), eps, spec, params, options.potential_rule))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Kernel {
            source: x0,
            field: ComplexField::new(*grid, values)?,
            slicing,
            params: *params,
            spec: *spec,
            diagnostics: KernelDiagnostics {
                pad: 1,
                band: None,
                edge_ratio: T::zero(),
            },
        });
    }
    if options.potential_rule == PotentialRule::Midpoint {
        return Err(PathError::Unsupported(
            "midpoint potential rule does not factor into position and momentum steps".into(),
        ));
    }
    let t = slicing.total_time;
    let band = match resolve_band(&options.band, spec, x0, t, grid, params)? {
        Some(b) => b,
        None => {
            return Err(invalid("a kernel needs a band window (start point is a delta)"));
        }
    };
    let pad = options
        .pad
        .unwrap_or_else(|| auto_pad(grid, reach(spec, x0, band.k_stop, t, grid, params)));
    let engine = SliceEngine::new(spec, slicing, grid, params, options.endpoint, pad)?;
    let mut buf = engine.delta(x0, &band);
    let open = engine.opening_phase(spec.value_1d(x0, params)?);
    for v in buf.iter_mut() {
        *v = *v * open;
    }
    engine.run(&mut buf);
    let edge_ratio = engine.edge_ratio(&buf);
    guard(edge_ratio, options.edge_tolerance)?;
    Ok(Kernel {
        source: x0,
        field: engine.extract(&buf)?,
        slicing,
        params: *params,
        spec: *spec,
        diagnostics: KernelDiagnostics {
            pad,
            band: Some(band),
            edge_ratio,
        },
    })
}

/// Dense kernel: row `i` is `A(x_i, 0 | . , t)`.
pub fn kernel_matrix<T: Real>(
    spec: &PotentialSpec<T>,
    slicing: TimeSlicing<T>,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
    options: &PropagatorOptions<T>,
) -> Result<Vec<ComplexField<T>>> {
    (0..grid.len())
        .map(|i| compose_propagator_with(spec, grid.x(i), slicing, grid, params, options).map(|k| k.field))
        .collect()
}

/// `psi(x) = sum_i dx psi0(x_i) A(x_i, 0 | x, t)` from explicit rows.
pub fn apply_kernel_matrix<T: Real>(
    rows: &[ComplexField<T>],
    psi0: &ComplexField<T>,
) -> Result<ComplexField<T>> {
    let grid = *psi0.grid();
    if rows.len() != grid.len() {
        return Err(PathError::GridMismatch);
    }
    let dx = grid.dx();
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    for (row, &a) in rows.iter().zip(psi0.values()) {
        if row.len() != grid.len() {
            return Err(PathError::GridMismatch);
        }
        let w = a * dx;
        for (o, &r) in out.iter_mut().zip(row.values()) {
            *o = *o + w * r;
        }
    }
    ComplexField::new(grid, out)
}

/// Linear map `psi0 -> integral dx0 psi0(x0) A(x0, 0 | x, t)` without
/// normalization checks. Equal (by linearity) to summing kernel rows.
pub fn propagate_field<T: Real>(
    psi0: &ComplexField<T>,
    spec: &PotentialSpec<T>,
    slicing: TimeSlicing<T>,
    params: &PhysicalParams<T>,
    options: &PropagatorOptions<T>,
) -> Result<(ComplexField<T>, KernelDiagnostics<T>)> {
    params.validate()?;
    spec.validate()?;
    if options.potential_rule == PotentialRule::Midpoint && slicing.n_slices > 1 {
        return Err(PathError::Unsupported(
            "midpoint potential rule does not factor into position and momentum steps".into(),
        ));
    }
    let grid = *psi0.grid();
    let band = match options.band {
        // wavefunction content is bounded by the grid, not by a travel distance
        Band::Auto => Some(BandWindow::new(
            T::lit(0.6) * grid.nyquist(),
            T::lit(0.95) * grid.nyquist(),
        )?),
        Band::Window(b) => Some(b),
        Band::Unfiltered => None,
    };
    let pad = options.pad.unwrap_or(2);
    let engine = SliceEngine::new(spec, slicing, &grid, params, options.endpoint, pad)?;
    let mut buf = engine.zeros();
    let eps = slicing.eps();
    for (i, &a) in psi0.values().iter().enumerate() {
        let open = if engine.free || options.endpoint == EndpointRule::Omit {
            Complex::new(T::one(), T::zero())
        } else {
            cis(-eps * spec.value_1d(grid.x(i), params)? / (T::lit(2.0) * params.hbar))
        };
        buf[engine.offset + i] = a * open;
    }
    if let Some(b) = &band {
        engine.filter(&mut buf, b);
    }
    engine.run(&mut buf);
    let edge_ratio = engine.edge_ratio(&buf);
    guard(edge_ratio, options.edge_tolerance)?;
    Ok((
        engine.extract(&buf)?,
        KernelDiagnostics {
            pad,
            band,
            edge_ratio,
        },
    ))
}

/// `psi(x, t)` from a normalized `psi(x, 0)`.
///
/// For a translation-invariant kernel (no potential) the slices collapse to
/// one convolution with the full-time free kernel, applied in Fourier space.
pub fn evolve_wavefunction<T: Real>(
    psi0: &ComplexField<T>,
    spec: &PotentialSpec<T>,
    slicing: TimeSlicing<T>,
    params: &PhysicalParams<T>,
    options: &PropagatorOptions<T>,
) -> Result<ComplexField<T>> {
    let n0 = psi0.norm_sqr();
    if (n0 - T::one()).abs() > T::lit(1e-8) {
        return Err(invalid(format!(
            "initial state must be normalized (norm^2 = {n0:e})"
        )));
    }
    let (psi, _) = propagate_field(psi0, spec, slicing, params, options)?;
    let n1 = psi.norm_sqr();
    if (n1 - n0).abs() > T::lit(1e-2) {
        return Err(PathError::UnitarityLost(n1.as_f64()));
    }
    Ok(psi)
}

/// `L2` relative error of composed kernels against the closed form for each
/// slice count, plus the fitted order `-d log err / d log n` between the
/// first and last entries.
pub fn convergence_study<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    t: T,
    slices: &[usize],
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
    options: &PropagatorOptions<T>,
) -> Result<(Vec<(usize, T)>, T)> {
    let exact = analytic_kernel_field(spec, x0, grid, t, params)?;
    let mut rows = Vec::with_capacity(slices.len());
    for &n in slices {
        let k = compose_propagator_with(spec, x0, TimeSlicing::new(t, n)?, grid, params, options)?;
        rows.push((n, k.field.relative_l2_error(&exact)?));
    }
    let order = match (rows.first(), rows.last()) {
        (Some(&(n1, e1)), Some(&(n2, e2))) if n2 != n1 && e1 > T::zero() && e2 > T::zero() => {
            -(e2 / e1).ln() / (T::from_usize_lossy(n2) / T::from_usize_lossy(n1)).ln()
        }
        _ => T::nan(),
    };
    Ok((rows, order))
}

/// Two legs `x0 -> x1` (`n1` slices over `t1`) and `x1 -> x` (`n2` over
/// `t2`) integrated over the intermediate point, against one leg over
/// `t1 + t2`. Returns the `L2` relative difference on `grid`.
///
/// Requires `t1 / n1 == t2 / n2` so both sides use the same slice length.
/// The intermediate integral runs over the whole padded work line.
pub fn chapman_kolmogorov_error<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    (t1, n1): (T, usize),
    (t2, n2): (T, usize),
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> Result<T> {
    let e1 = t1 / T::from_usize_lossy(n1);
    let e2 = t2 / T::from_usize_lossy(n2);
    if (e1 - e2).abs() > T::lit(1e-12) * e1 {
        return Err(invalid("both legs must use the same slice length"));
    }
    let total = TimeSlicing::new(t1 + t2, n1 + n2)?;
    let direct = compose_propagator(spec, x0, total, grid, params)?;
    let band = direct.diagnostics.band.expect("composed kernel has a band");
    let pad = direct.diagnostics.pad;
    // intermediate line: the full work grid of the direct kernel
    let (line, offset) = grid.padded(pad)?;
    let leg1 = compose_propagator_with(
        spec,
        x0,
        TimeSlicing::new(t1, n1)?,
        &line,
        params,
        &PropagatorOptions {
            band: Band::Window(band),
            pad: Some(2),
            ..Default::default()
        },
    )?;
    let (joined, _) = propagate_field(
        &leg1.field,
        spec,
        TimeSlicing::new(t2, n2)?,
        params,
        &PropagatorOptions {
            band: Band::Unfiltered,
            pad: Some(2),
            ..Default::default()
        },
    )?;
    let restricted = ComplexField::new(
        *grid,
        joined.values()[offset..offset + grid.len()].to_vec(),
    )?;
    restricted.relative_l2_error(&direct.field)
}

/// `|| i hbar dA/dt - (-hbar^2/2m d2A/dx2 + V A) || / ||A||` on the interior
/// nodes of `grid`, with fourth-order central differences in `x` and `t`.
///
/// `kernel_at` produces the kernel at the five times `t + j dt`,
/// `j = -2..=2`.
pub fn schrodinger_residual<T: Real, F>(
    spec: &PotentialSpec<T>,
    grid: &Grid1D<T>,
    t: T,
    dt: T,
    params: &PhysicalParams<T>,
    mut kernel_at: F,
) -> Result<T>
where
    F: FnMut(T) -> Result<ComplexField<T>>,
{
    if !(dt > T::zero() && t - T::lit(2.0) * dt > T::zero()) {
        return Err(invalid("need 0 < 2 dt < t"));
    }
    let fields = (-2i32..=2)
        .map(|j| kernel_at(t + T::lit(j as f64) * dt))
        .collect::<Result<Vec<_>>>()?;
    for f in &fields {
        if !f.grid().same_lattice(grid) {
            return Err(PathError::GridMismatch);
        }
    }
    let (m, hbar) = (params.mass, params.hbar);
    let dx = grid.dx();
    let c = |v: f64| T::lit(v);
    let a = fields[2].values();
    let i_unit = Complex::new(T::zero(), T::one());
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 2..grid.len() - 2 {
        let dt_a = (fields[0].values()[i] - fields[1].values()[i] * c(8.0)
            + fields[3].values()[i] * c(8.0)
            - fields[4].values()[i])
            / (c(12.0) * dt);
        let d2 = (-a[i - 2] + a[i - 1] * c(16.0) - a[i] * c(30.0) + a[i + 1] * c(16.0) - a[i + 2])
            / (c(12.0) * dx * dx);
        let v = spec.value_1d(grid.x(i), params)?;
        let r = i_unit * dt_a * hbar - (-d2 * (hbar * hbar / (c(2.0) * m)) + a[i] * v);
        num = num + r.norm_sqr();
        den = den + a[i].norm_sqr();
    }
    // the operator scale: hbar times a typical frequency
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type S = PotentialSpec<f64>;

    fn p() -> PhysicalParams<f64> {
        PhysicalParams::default()
    }

    fn wide() -> Grid1D<f64> {
        Grid1D::new(-20.0, 20.0, 1024).unwrap()
    }

    #[test]
    fn short_time_examples() {
        let k = short_time_kernel(0.3, 0.3, 0.1, &S::Free, &p()).unwrap();
        assert!((k.norm() - (1.0 / (2.0 * PI * 0.1)).sqrt()).abs() < 1e-14);
        assert!((k.arg() + PI / 4.0).abs() < 1e-14);

        let eps = 0.1;
        let u = (2.0 * eps * PI).sqrt();
        let k1 = short_time_kernel(0.0, u, eps, &S::Free, &p()).unwrap();
        let ratio = k1 / k;
        assert!((ratio - Complex::new(-1.0, 0.0)).norm() < 1e-12);

        let h = short_time_kernel(0.0, 0.0, 0.1, &S::Harmonic { omega: 1.0 }, &p()).unwrap();
        assert_eq!(h, short_time_kernel(0.0, 0.0, 0.1, &S::Free, &p()).unwrap());
        assert!(short_time_kernel(0.0, 0.0, 0.0, &S::Free, &p()).is_err());
    }

    #[test]
    fn midpoint_rule_samples_the_middle() {
        let s = S::Harmonic { omega: 1.0 };
        let a = short_time_kernel_with(0.0, 2.0, 0.1, &s, &p(), PotentialRule::Midpoint).unwrap();
        let b = short_time_kernel_with(0.0, 2.0, 0.1, &s, &p(), PotentialRule::Symmetric).unwrap();
        // V(1) = 0.5 versus (V(0)+V(2))/2 = 1
        let ratio = a / b;
        assert!((ratio - cis(0.1 * 0.5)).norm() < 1e-13);
    }

    #[test]
    fn analytic_examples() {
        let t = 1e-3;
        let a = analytic_kernel(&S::Free, 0.0, 0.7, t, &p()).unwrap();
        assert!((a.norm() - (1.0 / (2.0 * PI * t)).sqrt()).abs() < 1e-10);

        let h = S::Harmonic { omega: 1.0 };
        for x in [-3.0, 0.0, 0.5, 4.0] {
            let v = analytic_kernel(&h, 0.0, x, PI / 2.0, &p()).unwrap();
            assert!((v.norm() - (1.0 / (2.0 * PI)).sqrt()).abs() < 1e-12);
        }
        assert!(matches!(analytic_kernel(&h, 0.0, 1.0, PI, &p()), Err(PathError::Caustic(_))));

        let f = analytic_kernel(&S::Linear { force: 0.0 }, 0.2, 1.1, 0.8, &p()).unwrap();
        let g = analytic_kernel(&S::Free, 0.2, 1.1, 0.8, &p()).unwrap();
        assert!((f - g).norm() < 1e-15);
        // small force is continuous
        let f = analytic_kernel(&S::Linear { force: 1e-9 }, 0.2, 1.1, 0.8, &p()).unwrap();
        assert!((f - g).norm() < 1e-8);
        assert!(analytic_kernel(&S::Quartic { lambda4: 1.0 }, 0.0, 1.0, 1.0, &p()).is_err());
    }

    #[test]
    fn harmonic_small_time_matches_free() {
        let h = S::Harmonic { omega: 1.0 };
        let a = analytic_kernel(&h, 0.1, 0.2, 1e-4, &p()).unwrap();
        let b = analytic_kernel(&S::Free, 0.1, 0.2, 1e-4, &p()).unwrap();
        assert!((a - b).norm() / b.norm() < 1e-5);
    }

    #[test]
    fn analytic_kernels_solve_schrodinger() {
        let g = Grid1D::new(-5.0, 5.0, 1024).unwrap();
        for spec in [S::Free, S::Harmonic { omega: 1.0 }, S::Linear { force: 0.5 }] {
            let r = schrodinger_residual(&spec, &g, 1.0, 1e-3, &p(), |t| {
                analytic_kernel_field(&spec, 0.3, &g, t, &p())
            })
            .unwrap();
            assert!(r < 1e-4, "{spec:?} {r}");
        }
    }

    #[test]
    fn single_slice_is_short_time_kernel() {
        let g = Grid1D::new(-3.0, 3.0, 64).unwrap();
        for spec in [S::Free, S::Quartic { lambda4: 1.0 }, S::Yukawa { g: 1.0, mu: 1.0 }] {
            let k = compose_propagator(&spec, 0.25, TimeSlicing::new(0.5, 1).unwrap(), &g, &p()).unwrap();
            for i in 0..g.len() {
                let v = short_time_kernel(0.25, g.x(i), 0.5, &spec, &p()).unwrap();
                assert_eq!(k.field.values()[i], v);
            }
        }
    }

    #[test]
    fn free_composition_is_accurate_for_all_n() {
        let g = wide();
        let (rows, _) = convergence_study(
            &S::Free,
            0.0,
            1.0,
            &[16, 32, 64, 128],
            &g,
            &p(),
            &PropagatorOptions::default(),
        )
        .unwrap();
        for &(n, e) in &rows {
            assert!(e < 1e-3, "n={n} err={e}");
        }
    }

    #[test]
    fn harmonic_converges_at_second_order() {
        let g = wide();
        let h = S::Harmonic { omega: 1.0 };
        let (rows, order) = convergence_study(&h, 0.0, 1.0, &[16, 32, 64, 128], &g, &p(), &PropagatorOptions::default())
            .unwrap();
        assert!(rows[3].1 < 1e-2, "{rows:?}");
        for w in rows.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn omitted_endpoints_converge_at_first_order() {
        let g = Grid1D::new(-6.0, 6.0, 512).unwrap();
        let h = S::Harmonic { omega: 1.0 };
        let opts = PropagatorOptions {
            endpoint: EndpointRule::Omit,
            ..Default::default()
        };
        let (rows, order) = convergence_study(&h, 0.5, 1.0, &[16, 32, 64, 128], &g, &p(), &opts).unwrap();
        assert!(order > 0.8 && order < 1.3, "{rows:?} {order}");
        // |A| is unchanged by the endpoint convention
        let a = compose_propagator_with(&h, 0.5, TimeSlicing::new(1.0, 32).unwrap(), &g, &p(), &opts).unwrap();
        let b = compose_propagator(&h, 0.5, TimeSlicing::new(1.0, 32).unwrap(), &g, &p()).unwrap();
        for (x, y) in a.field.values().iter().zip(b.field.values()) {
            assert!((x.norm() - y.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_and_offset_source_match_closed_form() {
        let g = Grid1D::new(-10.0, 10.0, 1024).unwrap();
        let l = S::Linear { force: 0.8 };
        let exact = analytic_kernel_field(&l, 1.5, &g, 1.0, &p()).unwrap();
        let k = compose_propagator(&l, 1.5, TimeSlicing::new(1.0, 16).unwrap(), &g, &p()).unwrap();
        // linear potentials commute to leading order: error is roundoff-level
        assert!(k.field.relative_l2_error(&exact).unwrap() < 1e-3);
    }

    #[test]
    fn guard_rejects_small_work_grid() {
        let g = Grid1D::new(-5.0, 5.0, 256).unwrap();
        let opts = PropagatorOptions {
            pad: Some(1),
            band: Band::Window(BandWindow::new(40.0, 75.0).unwrap()),
            ..Default::default()
        };
        let r = compose_propagator_with(&S::Free, 0.0, TimeSlicing::new(1.0, 8).unwrap(), &g, &p(), &opts);
        assert!(matches!(r, Err(PathError::GridTooSmall { .. })), "{r:?}");
    }

    #[test]
    fn chapman_kolmogorov_free_and_harmonic() {
        let g = wide();
        for spec in [S::Free, S::Harmonic { omega: 1.0 }] {
            let e = chapman_kolmogorov_error(&spec, 0.0, (0.5, 64), (0.5, 64), &g, &p()).unwrap();
            assert!(e < 1e-3, "{spec:?} {e}");
        }
    }

    #[test]
    fn kernel_rows_match_matrix_free_evolution() {
        let g = Grid1D::new(-4.0, 4.0, 64).unwrap();
        let spec = S::GaussianWell { v0: -1.0, sigma: 0.7 };
        let opts = PropagatorOptions {
            band: Band::Window(BandWindow::new(10.0, 20.0).unwrap()),
            pad: Some(8),
            edge_tolerance: 1.0,
            ..Default::default()
        };
        let sl = TimeSlicing::new(0.4, 8).unwrap();
        let rows = kernel_matrix(&spec, sl, &g, &p(), &opts).unwrap();
        let psi0 = ComplexField::from_fn(g, |x| Complex::new((-(x - 0.5).powi(2)).exp(), 0.3 * x)).unwrap();
        let dense = apply_kernel_matrix(&rows, &psi0).unwrap();
        let (fast, _) = propagate_field(&psi0, &spec, sl, &p(), &opts).unwrap();
        assert!(dense.l2_distance(&fast).unwrap() < 1e-10 * fast.l2_norm());

        // a discrete delta reproduces its kernel row
        let j = 20;
        let delta = ComplexField::delta(g, g.x(j));
        let (row, _) = propagate_field(&delta, &spec, sl, &p(), &opts).unwrap();
        assert!(row.l2_distance(&rows[j]).unwrap() < 1e-10 * rows[j].l2_norm());
    }

    fn gaussian(g: Grid1D<f64>, x0: f64, sigma: f64, k0: f64) -> ComplexField<f64> {
        let f = ComplexField::from_fn(g, |x| {
            let a = (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp();
            cis(k0 * x) * a
        })
        .unwrap();
        let n = f.l2_norm();
        f.map(|_, v| v / n).unwrap()
    }

    #[test]
    fn free_gaussian_spreads() {
        let g = wide();
        let psi0 = gaussian(g, 0.0, 1.0, 0.0);
        let psi = evolve_wavefunction(&psi0, &S::Free, TimeSlicing::new(1.0, 1).unwrap(), &p(), &Default::default())
            .unwrap();
        let var: f64 = (0..g.len()).map(|i| g.x(i).powi(2) * psi.values()[i].norm_sqr()).sum::<f64>() * g.dx();
        assert!((var - 1.25).abs() < 1e-3, "{var}");
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn coherent_state_returns_after_period() {
        let g = wide();
        // coherent state of omega = 1, m = hbar = 1: sigma^2 = 1/2
        let psi0 = gaussian(g, 1.0, 0.5f64.sqrt(), 0.0);
        let psi = evolve_wavefunction(
            &psi0,
            &S::Harmonic { omega: 1.0 },
            TimeSlicing::new(2.0 * PI, 512).unwrap(),
            &p(),
            &Default::default(),
        )
        .unwrap();
        let fid = psi0.inner(&psi).unwrap().norm_sqr();
        assert!(fid > 0.999, "{fid}");
    }

    #[test]
    fn evolve_rejects_unnormalized_input() {
        let g = wide();
        let psi0 = gaussian(g, 0.0, 1.0, 0.0).map(|_, v| v * 2.0).unwrap();
        assert!(evolve_wavefunction(&psi0, &S::Free, TimeSlicing::new(1.0, 4).unwrap(), &p(), &Default::default()).is_err());
    }

    #[test]
    fn composed_kernels_nearly_solve_schrodinger() {
        let g = Grid1D::new(-5.0, 5.0, 1024).unwrap();
        for spec in [S::Free, S::Harmonic { omega: 1.0 }] {
            let r = schrodinger_residual(&spec, &g, 1.0, 1e-3, &p(), |t| {
                compose_propagator(&spec, 0.0, TimeSlicing::new(t, 128)?, &g, &p()).map(|k| k.field)
            })
            .unwrap();
            assert!(r < 1e-2, "{spec:?} {r}");
        }
    }

    #[test]
    fn single_precision_free_kernel() {
        let g = Grid1D::<f32>::new(-10.0, 10.0, 512).unwrap();
        let pp = PhysicalParams::<f32>::default();
        let k = compose_propagator(&PotentialSpec::Free, 0.0, TimeSlicing::new(1.0, 8).unwrap(), &g, &pp).unwrap();
        let exact = analytic_kernel_field(&PotentialSpec::Free, 0.0, &g, 1.0, &pp).unwrap();
        assert!(k.field.relative_l2_error(&exact).unwrap() < 1e-3);
    }
}
