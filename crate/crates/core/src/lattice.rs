//! Uniform grids, complex fields on them, quadrature and FFT convolution.
//!
//! Every other module samples its fields on a [`Grid1D`]. Quadrature is
//! composite Simpson (with a 3/8 closing panel when the interval count is
//! odd); convolution is a linear, zero-padded FFT convolution scaled by the
//! grid spacing so that it approximates the continuous integral.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::scalar::Real;

/// Uniform 1D lattice `x_i = x_min + i dx`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D<T> {
    x_min: T,
    x_max: T,
    n_points: usize,
    dx: T,
}

impl<T: Real> Grid1D<T> {
    pub fn new(x_min: T, x_max: T, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(invalid("grid requires finite x_max > x_min"));
        }
        if n_points < 8 {
            return Err(invalid("grid requires at least 8 points"));
        }
        let dx = (x_max - x_min) / T::from_usize_lossy(n_points - 1);
        if dx <= T::zero() {
            return Err(invalid("grid spacing underflowed"));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
            dx,
        })
    }

    /// Grid symmetric about the origin.
    pub fn symmetric(half_width: T, n_points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_points)
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn center(&self) -> T {
        (self.x_min + self.x_max) * T::lit(0.5)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x_min + T::from_usize_lossy(i) * self.dx
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Index of the node at `x`, if `x` sits on the lattice (to 1e-9 dx).
    pub fn node_index(&self, x: T) -> Option<usize> {
        let f = (x - self.x_min) / self.dx;
        let r = f.round();
        if (f - r).abs() > T::lit(1e-9) || r < T::zero() {
            return None;
        }
        let i = r.to_usize()?;
        (i < self.n_points).then_some(i)
    }

    /// Nearest node index (clamped to the grid).
    pub fn nearest_index(&self, x: T) -> usize {
        let f = ((x - self.x_min) / self.dx).round();
        if f <= T::zero() {
            0
        } else {
            f.to_usize().unwrap_or(0).min(self.n_points - 1)
        }
    }

    /// Nyquist wavenumber `pi / dx`.
    pub fn nyquist(&self) -> T {
        T::PI() / self.dx
    }

    /// Same lattice extended symmetrically to `factor * n_points` nodes
    /// (rounded so the original nodes stay nodes).
    pub fn padded(&self, factor: usize) -> Result<(Self, usize)> {
        if factor < 1 {
            return Err(invalid("padding factor must be >= 1"));
        }
        let total = self.n_points * factor;
        let offset = (total - self.n_points) / 2;
        let x_min = self.x_min - T::from_usize_lossy(offset) * self.dx;
        let x_max = x_min + T::from_usize_lossy(total - 1) * self.dx;
        let mut g = Self::new(x_min, x_max, total)?;
        // keep the spacing bit-identical to the parent lattice
        g.dx = self.dx;
        Ok((g, offset))
    }

    pub(crate) fn same_lattice(&self, other: &Self) -> bool {
        self.n_points == other.n_points && self.x_min == other.x_min && self.dx == other.dx
    }
}

/// Physical constants of the particle. Natural units by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams<T> {
    pub mass: T,
    pub hbar: T,
}

impl<T: Real> Default for PhysicalParams<T> {
    fn default() -> Self {
        Self {
            mass: T::one(),
            hbar: T::one(),
        }
    }
}

impl<T: Real> PhysicalParams<T> {
    pub fn new(mass: T, hbar: T) -> Result<Self> {
        let p = Self { mass, hbar };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > T::zero() && self.mass.is_finite()) {
            return Err(invalid("mass must be positive"));
        }
        if !(self.hbar > T::zero() && self.hbar.is_finite()) {
            return Err(invalid("hbar must be positive"));
        }
        Ok(())
    }
}

/// Complex samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    grid: Grid1D<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> ComplexField<T> {
    pub fn new(grid: Grid1D<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "field has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(PathError::NonFiniteField);
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D<T>) -> Self {
        Self {
            grid,
            values: vec![Complex::new(T::zero(), T::zero()); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid1D<T>, mut f: impl FnMut(T) -> Complex<T>) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self::new(grid, values)
    }

    pub fn from_real_fn(grid: Grid1D<T>, mut f: impl FnMut(T) -> T) -> Result<Self> {
        Self::from_fn(grid, |x| Complex::new(f(x), T::zero()))
    }

    /// Discrete delta: `1/dx` at the node nearest `x0`.
    pub fn delta(grid: Grid1D<T>, x0: T) -> Self {
        let mut f = Self::zeros(grid);
        f.values[grid.nearest_index(x0)] = Complex::new(grid.dx().recip(), T::zero());
        f
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, mut f: impl FnMut(T, Complex<T>) -> Complex<T>) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.x(i), v))
            .collect();
        Self::new(self.grid, values)
    }

    /// `alpha * self + beta * other` on a shared grid.
    pub fn combine(&self, alpha: Complex<T>, other: &Self, beta: Complex<T>) -> Result<Self> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(PathError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| alpha * a + beta * b)
            .collect();
        Self::new(self.grid, values)
    }

    /// `dx * sum |f|^2`. The plain lattice sum is the natural norm for
    /// band-limited fields (it is what FFT evolution conserves).
    pub fn norm_sqr(&self) -> T {
        self.grid.dx() * self.values.iter().map(|v| v.norm_sqr()).sum::<T>()
    }

    pub fn l2_norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// `dx * sum conj(self) * other`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(PathError::GridMismatch);
        }
        let s: Complex<T> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v);
        Ok(s * self.grid.dx())
    }

    /// L2 distance `||self - other||`.
    pub fn l2_distance(&self, other: &Self) -> Result<T> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(PathError::GridMismatch);
        }
        let s: T = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.dx()).sqrt())
    }

    /// `||self - reference|| / ||reference||`.
    pub fn relative_l2_error(&self, reference: &Self) -> Result<T> {
        Ok(self.l2_distance(reference)? / reference.l2_norm())
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Integral of the field over the grid extent.
    pub fn integrate(&self) -> Result<Complex<T>> {
        integrate(self)
    }
}

/// Composite quadrature weights for `n` equally spaced samples.
///
/// Simpson for an even interval count; otherwise Simpson up to the last
/// three intervals, closed with Simpson's 3/8 panel.
pub fn simpson_weights<T: Real>(n: usize, dx: T) -> Vec<T> {
    let mut w = vec![T::zero(); n];
    if n < 2 {
        return w;
    }
    let intervals = n - 1;
    let third = dx / T::lit(3.0);
    let simpson_end = if intervals.is_multiple_of(2) {
        intervals
    } else if intervals >= 3 {
        intervals - 3
    } else {
        // single interval: trapezoid
        w[0] = dx * T::lit(0.5);
        w[1] = dx * T::lit(0.5);
        return w;
    };
    let mut i = 0;
    while i + 2 <= simpson_end {
        w[i] = w[i] + third;
        w[i + 1] = w[i + 1] + third * T::lit(4.0);
        w[i + 2] = w[i + 2] + third;
        i += 2;
    }
    if simpson_end < intervals {
        let e = dx * T::lit(3.0 / 8.0);
        let s = simpson_end;
        w[s] = w[s] + e;
        w[s + 1] = w[s + 1] + e * T::lit(3.0);
        w[s + 2] = w[s + 2] + e * T::lit(3.0);
        w[s + 3] = w[s + 3] + e;
    }
    w
}

/// Composite Simpson estimate of `integral f dx` over the grid extent.
pub fn integrate<T: Real>(f: &ComplexField<T>) -> Result<Complex<T>> {
    if f
        .values
        .iter()
        .any(|v| !(v.re.is_finite() && v.im.is_finite()))
    {
        return Err(PathError::NonFiniteField);
    }
    let w = simpson_weights(f.len(), f.grid.dx());
    Ok(f
        .values
        .iter()
        .zip(&w)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (&v, &wi)| {
            acc + v * wi
        }))
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<T: Real>(grid: &Grid1D<T>, samples: &[T]) -> T {
    let w = simpson_weights(samples.len(), grid.dx());
    samples.iter().zip(&w).map(|(&a, &b)| a * b).sum()
}

/// Linear (non-circular) convolution `(a * b)(x) = integral a(y) b(x - y) dy`
/// sampled back onto the shared grid.
///
/// `b(x - y)` is read at lattice offsets, so the grid must contain the origin
/// as a node. Both inputs are zero-padded to twice their length before the
/// FFT; anything `b` would need outside the grid is treated as zero.
pub fn convolve<T: Real>(a: &ComplexField<T>, b: &ComplexField<T>) -> Result<ComplexField<T>> {
    if !a.grid.same_lattice(&b.grid) {
        return Err(PathError::GridMismatch);
    }
    let grid = a.grid;
    let origin = grid.node_index(T::zero()).ok_or_else(|| {
        invalid("convolution needs a grid with a node at the origin (odd point count on a symmetric grid)")
    })?;
    let n = grid.len();
    let m = 2 * n;
    let spectral = Spectral::new(m);
    let mut fa = vec![Complex::new(T::zero(), T::zero()); m];
    let mut fb = fa.clone();
    fa[..n].copy_from_slice(&a.values);
    fb[..n].copy_from_slice(&b.values);
    spectral.forward(&mut fa);
    spectral.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = *x * y;
    }
    spectral.inverse(&mut fa);
    // full[k] = sum_j a_j b_{k-j} sits at x_min + x_min + k dx; x_i needs k = i + origin
    let dx = grid.dx();
    let values = (0..n).map(|i| fa[i + origin] * dx).collect();
    ComplexField::new(grid, values)
}

/// Cached forward/inverse FFT pair; `inverse` includes the `1/n` factor.
#[derive(Clone)]
pub struct Spectral<T: Real> {
    len: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> Spectral<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.fwd.process(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.inv.process(buf);
        let s = T::from_usize_lossy(self.len).recip();
        for v in buf.iter_mut() {
            *v = *v * s;
        }
    }

    /// Angular wavenumbers in FFT order for spacing `dx`.
    pub fn wavenumbers(&self, dx: T) -> Vec<T> {
        let n = self.len;
        let scale = T::TAU() / (T::from_usize_lossy(n) * dx);
        (0..n)
            .map(|j| {
                let signed = if j <= (n - 1) / 2 {
                    T::from_usize_lossy(j)
                } else {
                    -T::from_usize_lossy(n - j)
                };
                signed * scale
            })
            .collect()
    }
}

impl<T: Real> std::fmt::Debug for Spectral<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("len", &self.len).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gauss(x: f64, var: f64) -> f64 {
        (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid1D::<f64>::new(1.0, 0.0, 16).is_err());
        assert!(Grid1D::<f64>::new(0.0, 1.0, 7).is_err());
        let g = Grid1D::<f64>::new(0.0, 1.0, 11).unwrap();
        assert!((g.dx() - 0.1).abs() < 1e-15);
        assert_eq!(g.node_index(0.3), Some(3));
        assert_eq!(g.node_index(0.35), None);
    }

    #[test]
    fn integrate_constant_is_exact() {
        let g = Grid1D::<f64>::new(0.0, 1.0, 101).unwrap();
        let f = ComplexField::from_real_fn(g, |_| 1.0).unwrap();
        let v = integrate(&f).unwrap();
        assert!((v.re - 1.0).abs() < 1e-14);
        // odd interval count goes through the 3/8 panel and stays exact
        let g = Grid1D::<f64>::new(0.0, 1.0, 100).unwrap();
        let f = ComplexField::from_real_fn(g, |_| 1.0).unwrap();
        assert!((integrate(&f).unwrap().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_sine_and_gaussian() {
        let g = Grid1D::<f64>::new(0.0, std::f64::consts::PI, 201).unwrap();
        let f = ComplexField::from_real_fn(g, f64::sin).unwrap();
        assert!((integrate(&f).unwrap().re - 2.0).abs() < 1e-8);

        let g = Grid1D::<f64>::new(-8.0, 8.0, 401).unwrap();
        let f = ComplexField::from_real_fn(g, |x| (-x * x).exp()).unwrap();
        let v = integrate(&f).unwrap().re;
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let g = Grid1D::<f64>::new(0.0, 1.0, 9).unwrap();
        let mut f = ComplexField::zeros(g);
        f.values[3] = Complex::new(f64::NAN, 0.0);
        assert_eq!(integrate(&f), Err(PathError::NonFiniteField));
        assert!(ComplexField::new(g, f.values.clone()).is_err());
    }

    #[test]
    fn convolve_delta_shifts() {
        let g = Grid1D::<f64>::symmetric(10.0, 201).unwrap();
        let b = ComplexField::from_fn(g, |x| {
            Complex::new((-(x - 1.0).powi(2)).exp(), 0.3 * x.sin() * (-x * x / 8.0).exp())
        })
        .unwrap();
        let shift = 2.0;
        let a = ComplexField::delta(g, shift);
        let c = convolve(&a, &b).unwrap();
        let p = g.node_index(shift).unwrap();
        let o = g.node_index(0.0).unwrap();
        for i in 0..g.len() {
            let j = i as isize - p as isize + o as isize;
            let expect = if (0..g.len() as isize).contains(&j) {
                b.values[j as usize]
            } else {
                Complex::new(0.0, 0.0)
            };
            assert!((c.values[i] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn convolve_gaussians_and_boxes() {
        let g = Grid1D::<f64>::symmetric(20.0, 2001).unwrap();
        let a = ComplexField::from_real_fn(g, |x| gauss(x, 1.0)).unwrap();
        let c = convolve(&a, &a).unwrap();
        let err = (0..g.len())
            .map(|i| (c.values[i].re - gauss(g.x(i), 2.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");

        let g = Grid1D::<f64>::symmetric(4.0, 801).unwrap();
        let boxf = ComplexField::from_real_fn(g, |x| if x.abs() <= 0.5 { 1.0 } else { 0.0 }).unwrap();
        let c = convolve(&boxf, &boxf).unwrap();
        let err = (0..g.len())
            .map(|i| (c.values[i].re - (1.0 - g.x(i).abs()).max(0.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 2.0 * g.dx(), "{err}");
    }

    #[test]
    fn convolve_requires_origin_node_and_shared_grid() {
        let g = Grid1D::<f64>::symmetric(1.0, 16).unwrap();
        let f = ComplexField::zeros(g);
        assert!(convolve(&f, &f).is_err());
        let h = Grid1D::<f64>::symmetric(1.0, 17).unwrap();
        assert_eq!(
            convolve(&ComplexField::zeros(h), &f),
            Err(PathError::GridMismatch)
        );
    }

    #[test]
    fn spectral_roundtrip_and_wavenumbers() {
        let s = Spectral::<f64>::new(8);
        let k = s.wavenumbers(0.5);
        assert!((k[1] - std::f64::consts::TAU / 4.0).abs() < 1e-15);
        assert!(k[5] < 0.0);
        let mut buf: Vec<Complex<f64>> = (0..8).map(|i| Complex::new(i as f64, 1.0)).collect();
        let orig = buf.clone();
        s.forward(&mut buf);
        s.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid1D::<f32>::new(0.0, std::f32::consts::PI, 201).unwrap();
        let f = ComplexField::from_real_fn(g, f32::sin).unwrap();
        assert!((integrate(&f).unwrap().re - 2.0).abs() < 1e-4);
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
    }

    proptest! {
        #[test]
        fn integrate_is_linear(
            f in field_strategy(33), g in field_strategy(33),
            a in -3.0..3.0f64, b in -3.0..3.0f64,
        ) {
            let grid = Grid1D::new(-1.0, 2.0, 33).unwrap();
            let ff = ComplexField::new(grid, f.iter().map(|&(r, i)| Complex::new(r, i)).collect()).unwrap();
            let gg = ComplexField::new(grid, g.iter().map(|&(r, i)| Complex::new(r, i)).collect()).unwrap();
            let lhs = integrate(&ff.combine(Complex::new(a, 0.0), &gg, Complex::new(b, 0.0)).unwrap()).unwrap();
            let rhs = integrate(&ff).unwrap() * a + integrate(&gg).unwrap() * b;
            let scale = 1.0 + lhs.norm().max(rhs.norm());
            prop_assert!((lhs - rhs).norm() <= 1e-12 * scale);
        }

        #[test]
        fn convolve_commutes_and_associates(
            f in field_strategy(11), g in field_strategy(11), h in field_strategy(11),
        ) {
            // supports confined to the middle third of the grid
            let grid = Grid1D::symmetric(16.0, 33).unwrap();
            let embed = |v: &Vec<(f64, f64)>| {
                let mut vals = vec![Complex::new(0.0, 0.0); 33];
                for (k, &(r, i)) in v.iter().enumerate() {
                    vals[11 + k] = Complex::new(r, i);
                }
                ComplexField::new(grid, vals).unwrap()
            };
            let (a, b, c) = (embed(&f), embed(&g), embed(&h));
            let ab = convolve(&a, &b).unwrap();
            let ba = convolve(&b, &a).unwrap();
            let scale = 1e-300 + ab.max_abs();
            prop_assert!(ab.l2_distance(&ba).unwrap() <= 1e-10 * scale * 33.0);
            // associativity needs the triple product's support on the grid:
            // shift via centred supports of width 11 each -> width 31 < 33
            let l = convolve(&ab, &c).unwrap();
            let r = convolve(&a, &convolve(&b, &c).unwrap()).unwrap();
            let scale = 1e-300 + l.max_abs().max(r.max_abs());
            prop_assert!(l.l2_distance(&r).unwrap() <= 1e-10 * scale * 33.0);
        }
    }
}
