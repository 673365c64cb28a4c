//! Pairs of paths.
//!
//! Squaring a time-sliced amplitude gives a double sum over an `x`-path and
//! a `y`-path. With `z = (x + y)/2` and `w = x - y` (and `w_0 = w_n = 0`)
//! the kinetic phases collapse by summation by parts to
//! `-(m / hbar eps) w_j . s_j`, `s_j = z_{j-1} - 2 z_j + z_{j+1}`, and the
//! potential contributes `(eps/hbar) [V(z_j - w_j/2) - V(z_j + w_j/2)]` at
//! every interior node. Integrating out `w` on a finite window assigns each
//! mean path `z` a real quasiprobability.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::lattice::{simpson_weights, Grid1D, PhysicalParams};
use crate::potentials::PotentialSpec;
use crate::propagator::{compose_propagator, TimeSlicing};
use crate::rng::RngStream;
use crate::scalar::{add3, cis, dot3, norm3, scale3, sub3, Real, Vec3};

/// Tensor quadrature is used while `(n - 1) * dimension` stays at or below this.
pub const TENSOR_BUDGET: usize = 6;

const RESIDUE_TOL: f64 = 1e-8;

/// A mean path `z_0 .. z_n` on a uniform time lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLattice<T> {
    points: Vec<Vec3<T>>,
    eps: T,
    params: PhysicalParams<T>,
    dimension: usize,
}

impl<T: Real> PathLattice<T> {
    pub fn new(points: Vec<Vec3<T>>, eps: T, params: PhysicalParams<T>, dimension: usize) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid("a path lattice needs n >= 2 slices"));
        }
        if dimension != 1 && dimension != 3 {
            return Err(invalid("dimension must be 1 or 3"));
        }
        if !(eps > T::zero() && eps.is_finite()) {
            return Err(invalid("time step must be positive"));
        }
        params.validate()?;
        for p in &points {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(PathError::NonFiniteField);
            }
            if dimension == 1 && (p[1] != T::zero() || p[2] != T::zero()) {
                return Err(invalid("1D paths must have zero y and z components"));
            }
        }
        Ok(Self {
            points,
            eps,
            params,
            dimension,
        })
    }

    pub fn from_1d(xs: &[T], eps: T, params: PhysicalParams<T>) -> Result<Self> {
        Self::new(xs.iter().map(|&x| [x, T::zero(), T::zero()]).collect(), eps, params, 1)
    }

    /// Straight line from `a` to `b` with `n` slices of length `eps`.
    pub fn straight(a: Vec3<T>, b: Vec3<T>, n: usize, eps: T, params: PhysicalParams<T>, dimension: usize) -> Result<Self> {
        let pts = (0..=n)
            .map(|j| {
                let f = T::from_usize_lossy(j) / T::from_usize_lossy(n);
                add3(a, scale3(sub3(b, a), f))
            })
            .collect();
        Self::new(pts, eps, params, dimension)
    }

    pub fn n_slices(&self) -> usize {
        self.points.len() - 1
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn total_time(&self) -> T {
        self.eps * T::from_usize_lossy(self.n_slices())
    }

    pub fn params(&self) -> &PhysicalParams<T> {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    /// First coordinate of every node.
    pub fn xs(&self) -> Vec<T> {
        self.points.iter().map(|p| p[0]).collect()
    }

    pub fn interior(&self) -> &[Vec3<T>] {
        &self.points[1..self.points.len() - 1]
    }

    /// Integration dimension of the `w` variables.
    pub fn w_dimension(&self) -> usize {
        (self.n_slices() - 1) * self.dimension
    }

    /// `z_{j-1} - 2 z_j + z_{j+1}` for interior `j`.
    pub fn second_difference(&self, j: usize) -> Vec3<T> {
        let p = &self.points;
        let two = T::lit(2.0);
        [
            p[j - 1][0] - two * p[j][0] + p[j + 1][0],
            p[j - 1][1] - two * p[j][1] + p[j + 1][1],
            p[j - 1][2] - two * p[j][2] + p[j + 1][2],
        ]
    }

    /// Same endpoints and time step, new interior.
    pub fn with_interior(&self, interior: &[Vec3<T>]) -> Result<Self> {
        if interior.len() != self.n_slices() - 1 {
            return Err(invalid("interior length must be n - 1"));
        }
        let mut pts = Vec::with_capacity(self.points.len());
        pts.push(self.points[0]);
        pts.extend_from_slice(interior);
        pts.push(self.points[self.points.len() - 1]);
        Self::new(pts, self.eps, self.params, self.dimension)
    }
}

fn potential_at<T: Real>(spec: &PotentialSpec<T>, p: Vec3<T>, dim: usize, params: &PhysicalParams<T>) -> Result<T> {
    if dim == 1 {
        spec.value_1d(p[0], params)
    } else {
        spec.value_3d(p, params)
    }
}

/// Phase contributed by interior node `j` at difference offset `w`.
fn node_phase<T: Real>(lattice: &PathLattice<T>, spec: &PotentialSpec<T>, j: usize, w: Vec3<T>) -> Result<T> {
    let PhysicalParams { mass, hbar } = lattice.params;
    let eps = lattice.eps;
    let z = lattice.points[j];
    let half = scale3(w, T::lit(0.5));
    let dim = lattice.dimension;
    let dv = potential_at(spec, sub3(z, half), dim, &lattice.params)? - potential_at(spec, add3(z, half), dim, &lattice.params)?;
    Ok(-mass / (hbar * eps) * dot3(w, lattice.second_difference(j)) + eps / hbar * dv)
}

/// Product over interior nodes of the pair-path phase factors.
/// `w` holds `w_1 .. w_{n-1}`; the boundary offsets are zero by construction.
pub fn pair_path_integrand<T: Real>(lattice: &PathLattice<T>, w: &[Vec3<T>], spec: &PotentialSpec<T>) -> Result<Complex<T>> {
    if w.len() != lattice.n_slices() - 1 {
        return Err(invalid("need one offset per interior node"));
    }
    let mut phase = T::zero();
    for (j, &wj) in w.iter().enumerate() {
        if lattice.dimension == 1 && (wj[1] != T::zero() || wj[2] != T::zero()) {
            return Err(invalid("1D offsets must have zero y and z components"));
        }
        phase = phase + node_phase(lattice, spec, j + 1, wj)?;
    }
    Ok(cis(phase))
}

/// Midpoint rule on `[lo, hi]` per `w` component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WWindow<T> {
    pub lo: T,
    pub hi: T,
    pub points: usize,
}

impl<T: Real> WWindow<T> {
    pub fn symmetric(cutoff: T, points: usize) -> Result<Self> {
        let w = Self {
            lo: -cutoff,
            hi: cutoff,
            points,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(invalid("w window must satisfy lo < hi"));
        }
        if self.points < 2 {
            return Err(invalid("w window needs at least two points"));
        }
        Ok(())
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.points)
    }

    pub fn nodes(&self) -> Vec<T> {
        let h = self.step();
        (0..self.points)
            .map(|i| self.lo + h * (T::from_usize_lossy(i) + T::lit(0.5)))
            .collect()
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// `(m / 2 pi hbar eps)^(n d)`: the squared short-time prefactors.
pub fn pair_prefactor<T: Real>(lattice: &PathLattice<T>) -> T {
    let PhysicalParams { mass, hbar } = lattice.params;
    let base = mass / (T::TAU() * hbar * lattice.eps);
    base.powi((lattice.n_slices() * lattice.dimension) as i32)
}

/// Quasiprobability of a path with `s_j = 0` and no potential: the height of
/// the regularized delta on this window.
pub fn window_peak<T: Real>(lattice: &PathLattice<T>, window: &WWindow<T>) -> T {
    pair_prefactor(lattice) * window.width().powi(lattice.w_dimension() as i32)
}

/// `w`-integral over one interior node.
fn node_integral<T: Real>(lattice: &PathLattice<T>, spec: &PotentialSpec<T>, j: usize, window: &WWindow<T>) -> Result<Complex<T>> {
    let nodes = window.nodes();
    let h = window.step();
    let mut acc = Complex::new(T::zero(), T::zero());
    if lattice.dimension == 1 {
        for &a in &nodes {
            acc = acc + cis(node_phase(lattice, spec, j, [a, T::zero(), T::zero()])?);
        }
        return Ok(acc * h);
    }
    for &a in &nodes {
        for &b in &nodes {
            for &c in &nodes {
                acc = acc + cis(node_phase(lattice, spec, j, [a, b, c])?);
            }
        }
    }
    Ok(acc * (h * h * h))
}

/// Quasiprobability of `lattice` with a symmetric window `[-cutoff, cutoff]`.
pub fn path_quasiprobability<T: Real>(
    lattice: &PathLattice<T>,
    spec: &PotentialSpec<T>,
    w_cutoff: T,
    w_points: usize,
) -> Result<T> {
    path_quasiprobability_on(lattice, spec, &WWindow::symmetric(w_cutoff, w_points)?)
}

/// Quasiprobability on an explicit window. The integrand factorizes over
/// interior nodes, so the tensor rule is a product of per-node sums.
pub fn path_quasiprobability_on<T: Real>(lattice: &PathLattice<T>, spec: &PotentialSpec<T>, window: &WWindow<T>) -> Result<T> {
    tensor_with_residue(lattice, spec, window).map(|(q, _)| q)
}

/// Tensor-rule value and the largest per-node imaginary residue relative to
/// the window volume.
fn tensor_with_residue<T: Real>(lattice: &PathLattice<T>, spec: &PotentialSpec<T>, window: &WWindow<T>) -> Result<(T, T)> {
    window.validate()?;
    let dims = lattice.w_dimension();
    if dims > TENSOR_BUDGET {
        return Err(PathError::DimensionBudget(dims));
    }
    let volume = window.width().powi(lattice.dimension as i32);
    let mut product = T::one();
    let mut worst = T::zero();
    for j in 1..lattice.n_slices() {
        let v = node_integral(lattice, spec, j, window)?;
        let residue = v.im.abs() / volume;
        if residue > T::lit(RESIDUE_TOL) {
            return Err(PathError::AsymmetricWindow(residue.as_f64()));
        }
        worst = worst.max(residue);
        product = product * v.re;
    }
    Ok((pair_prefactor(lattice) * product, worst))
}

/// Literal nested sum over every `w` tuple of the tensor grid; an oracle for
/// the factorized evaluation.
pub fn path_quasiprobability_nested<T: Real>(lattice: &PathLattice<T>, spec: &PotentialSpec<T>, window: &WWindow<T>) -> Result<T> {
    window.validate()?;
    let dims = lattice.w_dimension();
    if dims > TENSOR_BUDGET {
        return Err(PathError::DimensionBudget(dims));
    }
    let total = (window.points as u128).pow(dims as u32);
    if total > 50_000_000 {
        return Err(PathError::EnumerationTooLarge(total.min(usize::MAX as u128) as usize));
    }
    let nodes = window.nodes();
    let d = lattice.dimension;
    let mut idx = vec![0usize; dims];
    let mut w = vec![[T::zero(); 3]; lattice.n_slices() - 1];
    let mut acc = Complex::new(T::zero(), T::zero());
    for _ in 0..total {
        for (a, &i) in idx.iter().enumerate() {
            w[a / d][a % d] = nodes[i];
        }
        acc = acc + pair_path_integrand(lattice, &w, spec)?;
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < window.points {
                break;
            }
            *slot = 0;
        }
    }
    let scale = window.step().powi(dims as i32);
    let value = acc * scale;
    let residue = value.im.abs() / window.width().powi(dims as i32);
    if residue > T::lit(RESIDUE_TOL) {
        return Err(PathError::AsymmetricWindow(residue.as_f64()));
    }
    Ok(pair_prefactor(lattice) * value.re)
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Randomized quasi-Monte Carlo estimate over the joint `w` window:
/// Halton points with `replicas` independent random shifts. Returns the mean
/// and its standard error across replicas.
pub fn path_quasiprobability_qmc<T: Real>(
    lattice: &PathLattice<T>,
    spec: &PotentialSpec<T>,
    window: &WWindow<T>,
    samples: usize,
    replicas: usize,
    rng: &RngStream,
) -> Result<(T, T)> {
    window.validate()?;
    if samples == 0 || replicas < 2 {
        return Err(invalid("qmc needs samples >= 1 and replicas >= 2"));
    }
    let dims = lattice.w_dimension();
    let d = lattice.dimension;
    let bases = primes(dims);
    let width = window.width();
    let volume = width.powi(dims as i32);
    let estimates: Vec<T> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<T> {
            let mut g = rng.substream(r as u64);
            let shift: Vec<f64> = (0..dims).map(|_| g.gen::<f64>()).collect();
            let mut w = vec![[T::zero(); 3]; lattice.n_slices() - 1];
            let mut acc = T::zero();
            for k in 1..=samples {
                for a in 0..dims {
                    let u = (radical_inverse(k as u64, bases[a]) + shift[a]).fract();
                    w[a / d][a % d] = window.lo + width * T::lit(u);
                }
                acc = acc + pair_path_integrand(lattice, &w, spec)?.re;
            }
            Ok(pair_prefactor(lattice) * volume * acc / T::from_usize_lossy(samples))
        })
        .collect::<Result<_>>()?;
    let nr = T::from_usize_lossy(replicas);
    let mean = estimates.iter().copied().sum::<T>() / nr;
    let var = estimates.iter().map(|&e| (e - mean) * (e - mean)).sum::<T>() / (nr - T::one());
    Ok((mean, (var / nr).sqrt()))
}

/// `max_j |m s_j / eps^2 + grad V(z_j)|`.
pub fn discrete_eom_residual<T: Real>(lattice: &PathLattice<T>, spec: &PotentialSpec<T>) -> Result<T> {
    let m = lattice.params.mass;
    let e2 = lattice.eps * lattice.eps;
    let mut worst = T::zero();
    for j in 1..lattice.n_slices() {
        let s = lattice.second_difference(j);
        let g = if lattice.dimension == 1 {
            [spec.gradient_1d(lattice.points[j][0], &lattice.params)?, T::zero(), T::zero()]
        } else {
            spec.gradient_3d(lattice.points[j], &lattice.params)?
        };
        worst = worst.max(norm3(add3(scale3(s, m / e2), g)));
    }
    Ok(worst)
}

/// Solution of the discrete equation of motion
/// `m (z_{j-1} - 2 z_j + z_{j+1}) / eps^2 = -V'(z_j)` with `z_0 = x0`,
/// `z_n = x`, found by shooting on the initial velocity.
pub fn classical_path_discrete<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    x: T,
    t: T,
    n: usize,
    params: &PhysicalParams<T>,
) -> Result<PathLattice<T>> {
    params.validate()?;
    spec.validate()?;
    let slicing = TimeSlicing::new(t, n)?;
    if n < 2 {
        return Err(invalid("classical path needs n >= 2"));
    }
    let eps = slicing.eps();
    let k = eps * eps / params.mass;
    let shoot = |v: T| -> Result<(Vec<T>, T)> {
        let mut z = Vec::with_capacity(n + 1);
        z.push(x0);
        z.push(x0 + v * eps);
        for j in 1..n {
            let next = T::lit(2.0) * z[j] - z[j - 1] - k * spec.gradient_1d(z[j], params)?;
            z.push(next);
        }
        let miss = z[n] - x;
        Ok((z, miss))
    };
    let miss = |v: T| -> Result<T> {
        let (_, m) = shoot(v)?;
        Ok(if m.is_finite() { m } else { T::nan() })
    };

    let v0 = (x - x0) / t;
    let scale = v0.abs().max((x0.abs() + x.abs() + T::one()) / t);
    let f0 = miss(v0)?;
    let mut bracket = None;
    if f0 == T::zero() {
        bracket = Some((v0, v0));
    } else if f0.is_finite() {
        let mut delta = scale * T::lit(1e-3);
        for _ in 0..34 {
            for b in [v0 - delta, v0 + delta] {
                let fb = miss(b)?;
                if fb.is_finite() && fb * f0 <= T::zero() {
                    bracket = Some(if b < v0 { (b, v0) } else { (v0, b) });
                    break;
                }
            }
            if bracket.is_some() {
                break;
            }
            delta = delta * T::lit(2.0);
        }
    }
    let (mut a, mut b) = bracket.ok_or(PathError::NoClassicalPath)?;
    let mut fa = miss(a)?;
    for _ in 0..200 {
        if b - a <= T::epsilon() * (a.abs() + b.abs()) * T::lit(4.0) {
            break;
        }
        let mid = (a + b) * T::lit(0.5);
        let fm = miss(mid)?;
        if fm == T::zero() {
            a = mid;
            b = mid;
            break;
        }
        if fm * fa < T::zero() {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    // secant polish from the final bracket
    let (mut p, mut q) = (a, b);
    let (mut fp, mut fq) = (miss(p)?, miss(q)?);
    let mut best = if fp.abs() <= fq.abs() { p } else { q };
    for _ in 0..8 {
        if fq == fp {
            break;
        }
        let r = q - fq * (q - p) / (fq - fp);
        let fr = miss(r)?;
        if !fr.is_finite() {
            break;
        }
        if fr.abs() < miss(best)?.abs() {
            best = r;
        }
        p = q;
        fp = fq;
        q = r;
        fq = fr;
    }
    let (mut z, _) = shoot(best)?;
    z[n] = x;
    let lattice = PathLattice::from_1d(&z, eps, *params)?;
    let residual = discrete_eom_residual(&lattice, spec)?;
    if !(residual < T::lit(1e-10)) {
        return Err(PathError::NoClassicalPath);
    }
    Ok(lattice)
}

/// `|A(x0, 0 | x, t)|^2` from the composed propagator on `grid`; `x` must
/// be a grid node.
pub fn transition_probability_via_pairs<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    x: T,
    slicing: TimeSlicing<T>,
    grid: &Grid1D<T>,
    params: &PhysicalParams<T>,
) -> Result<T> {
    let idx = grid
        .node_index(x)
        .ok_or_else(|| invalid("target point must be a grid node"))?;
    let kernel = compose_propagator(spec, x0, slicing, grid, params)?;
    Ok(kernel.field.values()[idx].norm_sqr())
}

/// `sum over z paths of Q(z) dz`: every interior node ranges over `z_grid`
/// (Simpson weights), each path evaluated by the tensor `w` rule.
pub fn direct_pair_quadrature<T: Real>(
    spec: &PotentialSpec<T>,
    x0: T,
    x: T,
    slicing: TimeSlicing<T>,
    params: &PhysicalParams<T>,
    z_grid: &Grid1D<T>,
    window: &WWindow<T>,
) -> Result<T> {
    let n = slicing.n_slices;
    if n < 2 {
        return Err(invalid("pair quadrature needs n >= 2"));
    }
    let interior = n - 1;
    let len = z_grid.len();
    let total = (len as u128).pow(interior as u32);
    if total > 10_000_000 {
        return Err(PathError::EnumerationTooLarge(total.min(usize::MAX as u128) as usize));
    }
    let weights = simpson_weights(len, z_grid.dx());
    let template = PathLattice::straight([x0, T::zero(), T::zero()], [x, T::zero(), T::zero()], n, slicing.eps(), *params, 1)?;
    let parts: Vec<T> = (0..total as usize)
        .into_par_iter()
        .map(|flat| -> Result<T> {
            let mut rem = flat;
            let mut inner = Vec::with_capacity(interior);
            let mut weight = T::one();
            for _ in 0..interior {
                let i = rem % len;
                rem /= len;
                inner.push([z_grid.x(i), T::zero(), T::zero()]);
                weight = weight * weights[i];
            }
            let path = template.with_interior(&inner)?;
            Ok(weight * path_quasiprobability_on(&path, spec, window)?)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(T::zero(), |a, b| a + b))
}

/// Lowest value of the normalized one-node window integral
/// `(1/N) sum_i cos(u w_i)` for `u` in `[0, pi/h]`, i.e. before the midpoint
/// rule's own aliasing lobe. Returned as a positive number.
pub fn dirichlet_sidelobe_floor<T: Real>(window: &WWindow<T>) -> T {
    let nodes = window.nodes();
    let u_max = T::PI() / window.step();
    let scans = 64 * window.points;
    let inv = T::one() / T::from_usize_lossy(window.points);
    let d = |u: T| nodes.iter().map(|&w| (u * w).cos()).sum::<T>() * inv;
    let mut lowest = T::zero();
    let mut at = T::zero();
    for i in 0..=scans {
        let u = u_max * T::from_usize_lossy(i) / T::from_usize_lossy(scans);
        let v = d(u);
        if v < lowest {
            lowest = v;
            at = u;
        }
    }
    // refine the discrete minimum
    let h = u_max / T::from_usize_lossy(scans);
    let (mut a, mut b) = ((at - h).max(T::zero()), (at + h).min(u_max));
    for _ in 0..80 {
        let c = a + (b - a) / T::lit(3.0);
        let e = b - (b - a) / T::lit(3.0);
        if d(c) < d(e) {
            b = e;
        } else {
            a = c;
        }
    }
    -(lowest.min(d((a + b) * T::lit(0.5))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig<T> {
    pub x0: T,
    pub x: T,
    pub total_time: T,
    pub n_slices: usize,
    pub w_cutoff: T,
    pub w_points: usize,
    pub n_paths: usize,
    /// Perturbation amplitudes in units of `sqrt(hbar t / m)`.
    pub scales: [T; 3],
}

impl<T: Real> ScanConfig<T> {
    pub fn validate(&self) -> Result<()> {
        TimeSlicing::new(self.total_time, self.n_slices)?;
        if self.n_slices < 2 {
            return Err(invalid("scan needs n >= 2"));
        }
        WWindow::symmetric(self.w_cutoff, self.w_points)?;
        if self.n_paths == 0 {
            return Err(invalid("scan needs at least one path"));
        }
        if self.scales.iter().any(|&s| !(s >= T::zero())) {
            return Err(invalid("perturbation scales must be non-negative"));
        }
        Ok(())
    }
}

/// Gaussian perturbations of `center`'s interior; path `i` uses amplitude
/// `scales[i % 3] * sqrt(hbar t / m)` and random substream `i`.
pub fn sample_paths<T: Real>(center: &PathLattice<T>, n_paths: usize, scales: [T; 3], rng: &RngStream) -> Result<Vec<PathLattice<T>>> {
    let p = center.params();
    let unit = (p.hbar * center.total_time() / p.mass).sqrt();
    let d = center.dimension();
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut g = rng.substream(i as u64);
            let amp = scales[i % 3] * unit;
            let inner: Vec<Vec3<T>> = center
                .interior()
                .iter()
                .map(|z| {
                    let mut q = *z;
                    for c in q.iter_mut().take(d) {
                        let r: f64 = g.sample(StandardNormal);
                        *c = *c + amp * T::lit(r);
                    }
                    q
                })
                .collect();
            center.with_interior(&inner)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiProbReport {
    pub potential: String,
    pub method: String,
    pub values: Vec<f64>,
    /// Standard errors when the randomized QMC rule was used.
    pub errors: Option<Vec<f64>>,
    /// Window peak used to normalize the values.
    pub reference: f64,
    pub min_value: f64,
    pub min_relative: f64,
    pub fraction_negative: f64,
    /// Quasiprobability of the classical path over `reference`.
    pub normalization_check: f64,
    pub artifact_floor: f64,
    pub fraction_below_floor: f64,
    /// Paths whose node arguments reach the midpoint rule's aliasing lobe.
    pub aliased_paths: usize,
    /// Largest per-node imaginary residue over the window volume (tensor rule).
    pub max_imag_residue: f64,
}

/// Quasiprobabilities of perturbed classical paths and their sign statistics.
pub fn positivity_scan<T: Real>(spec: &PotentialSpec<T>, cfg: &ScanConfig<T>, params: &PhysicalParams<T>, rng: &RngStream) -> Result<QuasiProbReport> {
    cfg.validate()?;
    let center = classical_path_discrete(spec, cfg.x0, cfg.x, cfg.total_time, cfg.n_slices, params)?;
    let window = WWindow::symmetric(cfg.w_cutoff, cfg.w_points)?;
    let paths = sample_paths(&center, cfg.n_paths, cfg.scales, rng)?;
    let reference = window_peak(&center, &window);
    let tensor = center.w_dimension() <= TENSOR_BUDGET;
    // (value, standard error, imaginary residue)
    let eval = |i: usize, path: &PathLattice<T>| -> Result<(T, T, T)> {
        if tensor {
            let (q, r) = tensor_with_residue(path, spec, &window)?;
            Ok((q, T::zero(), r))
        } else {
            let (q, e) = path_quasiprobability_qmc(path, spec, &window, 4096, 8, &rng.child(i as u64 + 1))?;
            Ok((q, e, T::zero()))
        }
    };
    let results: Vec<(T, T, T)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| eval(i, p))
        .collect::<Result<_>>()?;
    let (q_center, _, _) = eval(usize::MAX - 1, &center)?;
    let floor = dirichlet_sidelobe_floor(&window);

    let kappa = params.mass / (params.hbar * center.eps());
    let alias = T::PI() / window.step();
    let aliased_paths = paths
        .iter()
        .filter(|p| {
            (1..p.n_slices()).any(|j| {
                let s = p.second_difference(j);
                s.iter().any(|&c| (kappa * c).abs() >= alias)
            })
        })
        .count();

    let values: Vec<f64> = results.iter().map(|r| r.0.as_f64()).collect();
    let refv = reference.as_f64();
    let n = values.len() as f64;
    let min_value = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let slack = 1.0 + 1e-9;
    Ok(QuasiProbReport {
        potential: spec.name().to_string(),
        method: if tensor { "tensor" } else { "qmc" }.to_string(),
        errors: (!tensor).then(|| results.iter().map(|r| r.1.as_f64()).collect()),
        reference: refv,
        min_value,
        min_relative: min_value / refv,
        fraction_negative: values.iter().filter(|&&v| v < 0.0).count() as f64 / n,
        normalization_check: q_center.as_f64() / refv,
        artifact_floor: floor.as_f64(),
        fraction_below_floor: values.iter().filter(|&&v| v / refv < -floor.as_f64() * slack).count() as f64 / n,
        aliased_paths,
        max_imag_residue: results.iter().map(|r| r.2.as_f64()).fold(0.0, f64::max),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub hbar: f64,
    pub spread: f64,
    pub stderr: f64,
}

/// RMS distance from the classical path of the `|Q|`-weighted mass over a
/// fixed sample of perturbed paths (amplitude `amplitude`, independent of
/// `hbar`), for each `hbar` in `hbars`.
pub fn hbar_concentration<T: Real>(
    spec: &PotentialSpec<T>,
    hbars: &[T],
    cfg: &ScanConfig<T>,
    mass: T,
    amplitude: T,
    rng: &RngStream,
) -> Result<Vec<ConcentrationRow>> {
    cfg.validate()?;
    if hbars.is_empty() || hbars.iter().any(|&h| !(h > T::zero())) {
        return Err(invalid("hbar values must be positive"));
    }
    if hbars.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("hbar values must be descending"));
    }
    let window = WWindow::symmetric(cfg.w_cutoff, cfg.w_points)?;
    let base = PhysicalParams::new(mass, hbars[0])?;
    let center = classical_path_discrete(spec, cfg.x0, cfg.x, cfg.total_time, cfg.n_slices, &base)?;
    // amplitude given directly: scale so that unit * scale = amplitude
    let unit = (base.hbar * center.total_time() / base.mass).sqrt();
    let s = amplitude / unit;
    let paths = sample_paths(&center, cfg.n_paths, [s, s, s], rng)?;
    let dist: Vec<f64> = paths
        .iter()
        .map(|p| {
            let k = p.interior().len() as f64;
            let sq: f64 = p
                .interior()
                .iter()
                .zip(center.interior())
                .map(|(a, b)| norm3(sub3(*a, *b)).as_f64().powi(2))
                .sum();
            sq / k
        })
        .collect();
    let batches = 8usize;
    let mut rows = Vec::with_capacity(hbars.len());
    for &h in hbars {
        let params = PhysicalParams::new(mass, h)?;
        let q: Vec<f64> = paths
            .par_iter()
            .map(|p| {
                let lp = PathLattice::new(p.points().to_vec(), p.eps(), params, p.dimension())?;
                Ok(path_quasiprobability_on(&lp, spec, &window)?.as_f64().abs())
            })
            .collect::<Result<_>>()?;
        let spread = |range: std::ops::Range<usize>| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in range {
                num += q[i] * dist[i];
                den += q[i];
            }
            (num / den).sqrt()
        };
        let all = spread(0..q.len());
        let per = q.len() / batches;
        let stderr = if per > 0 {
            let bs: Vec<f64> = (0..batches).map(|b| spread(b * per..(b + 1) * per)).collect();
            let mean = bs.iter().sum::<f64>() / batches as f64;
            let var = bs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
            (var / batches as f64).sqrt()
        } else {
            f64::NAN
        };
        rows.push(ConcentrationRow {
            hbar: h.as_f64(),
            spread: all,
            stderr,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type S = PotentialSpec<f64>;

    fn unit() -> PhysicalParams<f64> {
        PhysicalParams::default()
    }

    fn free_n2(z1: f64) -> PathLattice<f64> {
        PathLattice::from_1d(&[0.0, z1, 1.0], 0.5, unit()).unwrap()
    }

    #[test]
    fn lattice_validation() {
        assert!(PathLattice::from_1d(&[0.0, 1.0], 0.5, unit()).is_err());
        assert!(PathLattice::new(vec![[0.0; 3]; 3], 0.5, unit(), 2).is_err());
        assert!(PathLattice::new(vec![[0.0, 1.0, 0.0]; 3], 0.5, unit(), 1).is_err());
        let p = free_n2(0.25);
        assert_eq!(p.second_difference(1), [0.5, 0.0, 0.0]);
    }

    #[test]
    fn integrand_identities() {
        let spec = S::Quartic { lambda4: 0.7 };
        let p = PathLattice::from_1d(&[0.0, 0.3, -0.2, 1.0], 0.25, unit()).unwrap();
        let zero = vec![[0.0; 3]; 2];
        assert_eq!(pair_path_integrand(&p, &zero, &spec).unwrap(), Complex::new(1.0, 0.0));
        let w = vec![[0.4, 0.0, 0.0], [-1.1, 0.0, 0.0]];
        let wm: Vec<_> = w.iter().map(|v| [-v[0], 0.0, 0.0]).collect();
        let a = pair_path_integrand(&p, &w, &spec).unwrap();
        let b = pair_path_integrand(&p, &wm, &spec).unwrap();
        assert_eq!(a, b.conj());
        // free single node: exp(-i (m/hbar eps) w s)
        let q = free_n2(0.1);
        let s = q.second_difference(1)[0];
        let v = pair_path_integrand(&q, &[[0.3, 0.0, 0.0]], &S::Free).unwrap();
        assert!((v - Complex::new(0.0, -0.3 * s / 0.5).exp()).norm() < 1e-15);
    }

    #[test]
    fn factorized_matches_nested_tensor() {
        let spec = S::GaussianWell { v0: -1.5, sigma: 0.7 };
        let p = PathLattice::from_1d(&[0.0, 0.4, 0.5, 1.0], 1.0 / 3.0, unit()).unwrap();
        let win = WWindow::symmetric(2.0, 24).unwrap();
        let a = path_quasiprobability_on(&p, &spec, &win).unwrap();
        let b = path_quasiprobability_nested(&p, &spec, &win).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(window_peak(&p, &win) * 1e-3), "{a} {b}");

        let p3 = PathLattice::new(vec![[0.0; 3], [0.2, -0.1, 0.3], [1.0, 0.5, 0.0]], 0.5, unit(), 3).unwrap();
        let w3 = WWindow::symmetric(1.5, 8).unwrap();
        let a = path_quasiprobability_on(&p3, &spec, &w3).unwrap();
        let b = path_quasiprobability_nested(&p3, &spec, &w3).unwrap();
        assert!((a - b).abs() <= 1e-12 * window_peak(&p3, &w3), "{a} {b}");
    }

    #[test]
    fn budget_and_window_errors() {
        let p = PathLattice::from_1d(&[0.0; 9], 0.1, unit()).unwrap();
        assert_eq!(path_quasiprobability(&p, &S::Free, 1.0, 8), Err(PathError::DimensionBudget(7)));
        let q = free_n2(0.1);
        let skew = WWindow { lo: -1.0, hi: 1.7, points: 64 };
        assert!(matches!(
            path_quasiprobability_on(&q, &S::Free, &skew),
            Err(PathError::AsymmetricWindow(_))
        ));
    }

    #[test]
    fn free_peak_and_first_zero() {
        let (w, m) = (3.0, 400);
        let peak = path_quasiprobability(&free_n2(0.5), &S::Free, w, m).unwrap();
        // (m/2 pi hbar eps)^2 * 2W
        let expect = (1.0 / (2.0 * PI * 0.5)).powi(2) * 2.0 * w;
        assert!((peak / expect - 1.0).abs() < 1e-12);
        for z in [0.3, 0.45, 0.52, 0.8] {
            assert!(path_quasiprobability(&free_n2(z), &S::Free, w, m).unwrap() < peak);
        }
        // zero of sin(kappa W s)/(kappa W s) at s = pi hbar eps / (m W)
        let s_zero = PI * 0.5 / w;
        let q = |s: f64| path_quasiprobability(&free_n2(0.5 - s / 2.0), &S::Free, w, m).unwrap();
        let (mut lo, mut hi) = (0.5 * s_zero, 1.3 * s_zero);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if q(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        assert!((0.5 * (lo + hi) / s_zero - 1.0).abs() < 0.02);
    }

    #[test]
    fn qmc_agrees_with_tensor() {
        let spec = S::GaussianWell { v0: -1.0, sigma: 1.0 };
        let p = PathLattice::from_1d(&[0.0, 0.3, 0.6, 1.0], 1.0 / 3.0, unit()).unwrap();
        let win = WWindow::symmetric(1.0, 64).unwrap();
        let exact = path_quasiprobability_on(&p, &spec, &win).unwrap();
        let (mean, err) = path_quasiprobability_qmc(&p, &spec, &win, 8192, 8, &RngStream::new(3)).unwrap();
        assert!((mean - exact).abs() < 5.0 * err + 1e-3 * window_peak(&p, &win), "{mean} {exact} {err}");
    }

    #[test]
    fn classical_paths() {
        let p = unit();
        let free = classical_path_discrete(&S::Free, -1.0, 2.0, 1.0, 6, &p).unwrap();
        for (j, z) in free.xs().iter().enumerate() {
            assert!((z - (-1.0 + 3.0 * j as f64 / 6.0)).abs() < 1e-14);
        }
        let f = 2.0;
        let n = 10;
        let lin = classical_path_discrete(&S::Linear { force: f }, 0.0, 0.0, 1.0, n, &p).unwrap();
        let eps = 0.1;
        for (j, z) in lin.xs().iter().enumerate() {
            let tj = j as f64 * eps;
            assert!((z - (-(f / 2.0) * tj * (1.0 - tj))).abs() < eps * eps * f);
        }
        let h = classical_path_discrete(&S::Harmonic { omega: 1.0 }, 0.0, 1.0, 1.0, 64, &p).unwrap();
        assert!(discrete_eom_residual(&h, &S::Harmonic { omega: 1.0 }).unwrap() < 1e-10);
        for (j, z) in h.xs().iter().enumerate() {
            let tj = j as f64 / 64.0;
            assert!((z - tj.sin() / 1f64.sin()).abs() < 1e-3);
        }
        let q = classical_path_discrete(&S::Quartic { lambda4: 0.5 }, -1.0, 1.0, 1.0, 20, &p).unwrap();
        assert!(discrete_eom_residual(&q, &S::Quartic { lambda4: 0.5 }).unwrap() < 1e-10);
    }

    #[test]
    fn discrete_caustic_has_no_path() {
        let n = 4;
        let eps = 0.25;
        // n theta = pi with cos theta = 1 - eps^2 w^2 / 2
        let omega = 2.0 / eps * (PI / (2.0 * n as f64)).sin();
        let r = classical_path_discrete(&S::Harmonic { omega }, 0.0, 1.0, 1.0, n, &unit());
        assert_eq!(r, Err(PathError::NoClassicalPath));
    }

    #[test]
    fn pair_quadrature_reproduces_kernel_modulus() {
        let p = unit();
        let grid = Grid1D::new(-8.0, 8.0, 257).unwrap();
        let slicing = TimeSlicing::new(1.0, 2).unwrap();
        let anchor = transition_probability_via_pairs(&S::Free, 0.0, 1.0, slicing, &grid, &p).unwrap();
        assert!((anchor / (1.0 / (2.0 * PI)) - 1.0).abs() < 1e-6, "{anchor}");
        let zg = Grid1D::new(-7.5, 8.5, 64).unwrap();
        let win = WWindow::symmetric(1.0, 256).unwrap();
        let direct = direct_pair_quadrature(&S::Free, 0.0, 1.0, slicing, &p, &zg, &win).unwrap();
        assert!((direct / anchor - 1.0).abs() < 0.05, "{direct} {anchor}");
    }

    #[test]
    fn harmonic_modulus_at_quarter_period() {
        let p = unit();
        let grid = Grid1D::new(-10.0, 10.0, 1024).unwrap();
        let x = grid.x(600);
        let v = transition_probability_via_pairs(&S::Harmonic { omega: 1.0 }, 0.0, x, TimeSlicing::new(PI / 2.0, 64).unwrap(), &grid, &p).unwrap();
        assert!((v * 2.0 * PI - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn quasiprobability_integrates_to_kernel_modulus() {
        let p = unit();
        let spec = S::Harmonic { omega: 1.0 };
        let grid = Grid1D::new(-10.0, 10.0, 1024).unwrap();
        let x = grid.x(560);
        let slicing = TimeSlicing::new(1.0, 2).unwrap();
        let anchor = transition_probability_via_pairs(&spec, 0.0, x, slicing, &grid, &p).unwrap();
        let zg = Grid1D::new(-7.0, 8.0, 241).unwrap();
        let win = WWindow::symmetric(2.0, 256).unwrap();
        let direct = direct_pair_quadrature(&spec, 0.0, x, slicing, &p, &zg, &win).unwrap();
        assert!((direct / anchor - 1.0).abs() < 0.02, "{direct} {anchor}");
    }

    #[test]
    fn scan_floor_and_report() {
        let cfg = ScanConfig {
            x0: 0.0,
            x: 1.0,
            total_time: 1.0,
            n_slices: 3,
            w_cutoff: 5.0,
            w_points: 200,
            n_paths: 300,
            scales: [0.1, 0.3, 1.0],
        };
        let p = unit();
        let rng = RngStream::new(11);
        let floor: f64 = dirichlet_sidelobe_floor(&WWindow::symmetric(5.0, 200).unwrap());
        assert!((floor - 0.2172).abs() < 2e-3, "{floor}");
        for spec in [S::Free, S::Harmonic { omega: 1.0 }] {
            let r = positivity_scan(&spec, &cfg, &p, &rng).unwrap();
            assert_eq!(r.aliased_paths, 0);
            assert_eq!(r.fraction_below_floor, 0.0);
            assert!((r.normalization_check - 1.0).abs() < 1e-9);
            assert!(r.max_imag_residue < 1e-8);
        }
        let r = positivity_scan(&S::Quartic { lambda4: 1.0 }, &cfg, &p, &rng).unwrap();
        assert_eq!(r.values.len(), 300);
        assert!(r.min_value.is_finite() && (0.0..=1.0).contains(&r.fraction_negative));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("fraction_negative"));
    }

    #[test]
    fn qmc_scan_beyond_budget() {
        let cfg = ScanConfig {
            x0: 0.0,
            x: 1.0,
            total_time: 1.0,
            n_slices: 8,
            w_cutoff: 1.0,
            w_points: 64,
            n_paths: 6,
            scales: [0.1, 0.3, 1.0],
        };
        let r = positivity_scan(&S::Quartic { lambda4: 1.0 }, &cfg, &unit(), &RngStream::new(2)).unwrap();
        assert_eq!(r.method, "qmc");
        assert_eq!(r.errors.as_ref().unwrap().len(), 6);
    }

    #[test]
    fn concentration_sharpens_as_hbar_drops() {
        let cfg = ScanConfig {
            x0: -0.5,
            x: 1.0,
            total_time: 1.0,
            n_slices: 2,
            w_cutoff: 2.0,
            w_points: 512,
            n_paths: 2000,
            scales: [1.0; 3],
        };
        let spec = S::GaussianWell { v0: -2.0, sigma: 0.8 };
        let hs = [1.0, 0.5, 0.25, 0.125];
        let rows = hbar_concentration(&spec, &hs, &cfg, 1.0, 0.5, &RngStream::new(5)).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].spread <= w[0].spread + 2.0 * (w[0].stderr + w[1].stderr), "{rows:?}");
        }
        let one = hbar_concentration(&spec, &[0.5], &cfg, 1.0, 0.5, &RngStream::new(5)).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn dimensional_restoration() {
        // natural units: length sqrt(hbar eps / m), time eps, energy hbar / eps
        let (m, hbar, eps) = (2.5f64, 0.3, 0.4);
        let ell = (hbar * eps / m).sqrt();
        let spec = S::GaussianWell { v0: 1.7, sigma: 0.9 };
        let zs = [0.0, 0.35, 0.1, 0.8];
        let phys = PathLattice::from_1d(&zs, eps, PhysicalParams::new(m, hbar).unwrap()).unwrap();
        let nat_z: Vec<f64> = zs.iter().map(|z| z / ell).collect();
        let nat = PathLattice::from_1d(&nat_z, 1.0, unit()).unwrap();
        let nat_spec = S::GaussianWell { v0: 1.7 * eps / hbar, sigma: 0.9 / ell };
        let (w, pts) = (1.3, 96);
        let q = path_quasiprobability(&phys, &spec, w, pts).unwrap();
        let qn = path_quasiprobability(&nat, &nat_spec, w / ell, pts).unwrap();
        // Q carries length^-(n+1)
        let restored = qn * ell.powi(-4);
        assert!((q / restored - 1.0).abs() < 1e-10, "{q} {restored}");
    }
}
