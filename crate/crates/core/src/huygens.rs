//! Monochromatic scalar wave sums over three-point paths
//! `source -> aperture point -> detector`.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::quadrature::{flat_top, GaussPanels};
use crate::scalar::{cis, norm3, sub3, Real, Vec3};

/// `exp(i k r) / (2 pi i r)` with `r = |r_b - r_a|`.
pub fn huygens_kernel<T: Real>(r_a: Vec3<T>, r_b: Vec3<T>, k: T) -> Result<Complex<T>> {
    let r = norm3(sub3(r_b, r_a));
    if r == T::zero() {
        return Err(PathError::SingularKernel);
    }
    // 1/(2 pi i r) = -i/(2 pi r)
    Ok(cis(k * r - T::FRAC_PI_2()) / (T::TAU() * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSetup<T> {
    pub k: T,
    pub source: Vec3<T>,
    /// Aperture sample points with their area weights.
    pub aperture: Vec<(Vec3<T>, T)>,
    pub detectors: Vec<Vec3<T>>,
}

impl<T: Real> WaveSetup<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > T::zero() && self.k.is_finite()) {
            return Err(invalid("wavenumber must be positive"));
        }
        for &(a, w) in &self.aperture {
            if !(w >= T::zero()) {
                return Err(invalid("aperture weights must be non-negative"));
            }
            if norm3(sub3(a, self.source)) == T::zero() {
                return Err(PathError::SingularKernel);
            }
            for &d in &self.detectors {
                if norm3(sub3(a, d)) == T::zero() {
                    return Err(PathError::SingularKernel);
                }
            }
        }
        Ok(())
    }

    /// Amplitude at every detector point.
    pub fn amplitudes(&self) -> Result<Vec<Complex<T>>> {
        self.validate()?;
        self.detectors
            .par_iter()
            .map(|&r| aperture_amplitude(self, r))
            .collect()
    }
}

/// `sum_a f(source | a) f(a | r) dA_a`.
pub fn aperture_amplitude<T: Real>(setup: &WaveSetup<T>, r: Vec3<T>) -> Result<Complex<T>> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for &(a, w) in &setup.aperture {
        acc = acc + huygens_kernel(setup.source, a, setup.k)? * huygens_kernel(a, r, setup.k)? * w;
    }
    Ok(acc)
}

/// Two slits in the plane `z = 0`, centred at `x = +-d/2`, each of width
/// `width` along `x`, sampled by `points_per_slit` midpoints. The source
/// sits on the axis at `z = -source_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleSlit<T> {
    pub k: T,
    pub separation: T,
    pub width: T,
    pub points_per_slit: usize,
    pub source_distance: T,
    pub screen_distance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern<T> {
    pub x: Vec<T>,
    pub intensity: Vec<T>,
    pub far_field: bool,
    pub warning: Option<String>,
}

impl<T: Real> DoubleSlit<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !(pos(self.k) && pos(self.separation) && pos(self.source_distance) && pos(self.screen_distance)) {
            return Err(invalid("double slit needs positive k, separation and distances"));
        }
        if !(self.width >= T::zero() && self.width < self.separation) {
            return Err(invalid("slit width must be in [0, separation)"));
        }
        if self.points_per_slit < 1 {
            return Err(invalid("need at least one point per slit"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> T {
        T::TAU() / self.k
    }

    /// `L > 10 d^2 k / 2 pi`.
    pub fn is_far_field(&self) -> bool {
        self.screen_distance > T::lit(10.0) * self.separation * self.separation / self.wavelength()
    }

    /// `2 pi L / (k d)`.
    pub fn predicted_spacing(&self) -> T {
        T::TAU() * self.screen_distance / (self.k * self.separation)
    }

    fn slit_points(&self, centre: T) -> Vec<(Vec3<T>, T)> {
        let n = self.points_per_slit;
        if self.width == T::zero() || n == 1 {
            return vec![([centre, T::zero(), T::zero()], T::one())];
        }
        let h = self.width / T::from_usize_lossy(n);
        (0..n)
            .map(|i| {
                let x = centre - self.width * T::lit(0.5) + h * (T::from_usize_lossy(i) + T::lit(0.5));
                ([x, T::zero(), T::zero()], h)
            })
            .collect()
    }

    /// Setup holding one slit (`Some(0)` left, `Some(1)` right) or both.
    pub fn setup(&self, only: Option<usize>, detectors: Vec<Vec3<T>>) -> Result<WaveSetup<T>> {
        self.validate()?;
        let half = self.separation * T::lit(0.5);
        let mut aperture = Vec::new();
        if only != Some(1) {
            aperture.extend(self.slit_points(-half));
        }
        if only != Some(0) {
            aperture.extend(self.slit_points(half));
        }
        Ok(WaveSetup {
            k: self.k,
            source: [T::zero(), T::zero(), -self.source_distance],
            aperture,
            detectors,
        })
    }

    pub fn screen_point(&self, x: T) -> Vec3<T> {
        [x, T::zero(), self.screen_distance]
    }

    pub fn intensity_at(&self, setup: &WaveSetup<T>, x: T) -> Result<T> {
        Ok(aperture_amplitude(setup, self.screen_point(x))?.norm_sqr())
    }

    /// Intensity over `n` screen points spanning `[-half_width, half_width]`.
    pub fn pattern(&self, half_width: T, n: usize) -> Result<Pattern<T>> {
        if n < 2 {
            return Err(invalid("pattern needs at least two screen points"));
        }
        let xs: Vec<T> = (0..n)
            .map(|i| -half_width + T::lit(2.0) * half_width * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1))
            .collect();
        let setup = self.setup(None, xs.iter().map(|&x| self.screen_point(x)).collect())?;
        let intensity = setup.amplitudes()?.iter().map(|a| a.norm_sqr()).collect();
        let far_field = self.is_far_field();
        let warning = (!far_field).then(|| {
            format!(
                "near field: L = {} <= 10 d^2 k / 2pi = {}",
                self.screen_distance,
                T::lit(10.0) * self.separation * self.separation / self.wavelength()
            )
        });
        Ok(Pattern {
            x: xs,
            intensity,
            far_field,
            warning,
        })
    }
}

/// Golden-section search for an extremum of `f` in `[a, b]`.
fn golden<T: Real>(mut a: T, mut b: T, maximize: bool, f: &dyn Fn(T) -> Result<T>) -> Result<(T, T)> {
    let g = T::lit(0.618_033_988_749_894_9);
    let sign = if maximize { -T::one() } else { T::one() };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = sign * f(c)?;
    let mut fd = sign * f(d)?;
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sign * f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sign * f(d)?;
        }
    }
    let x = (a + b) * T::lit(0.5);
    Ok((x, f(x)?))
}

/// Refined fringe extrema of a double slit around the axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeAnalysis<T> {
    pub maxima: Vec<(T, T)>,
    pub minima: Vec<(T, T)>,
    pub mean_spacing: T,
    pub predicted_spacing: T,
    /// Largest `I_min / max(adjacent I_max)`.
    pub worst_contrast: T,
}

pub fn analyze_fringes<T: Real>(slit: &DoubleSlit<T>, fringes_each_side: usize) -> Result<FringeAnalysis<T>> {
    let spacing = slit.predicted_spacing();
    let half_width = spacing * T::from_usize_lossy(fringes_each_side) + spacing * T::lit(0.75);
    let samples = 40 * (2 * fringes_each_side + 2) + 1;
    let pat = slit.pattern(half_width, samples)?;
    let setup = slit.setup(None, Vec::new())?;
    let f = |x: T| slit.intensity_at(&setup, x);
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let h = pat.x[1] - pat.x[0];
    for i in 1..samples - 1 {
        let (l, c, r) = (pat.intensity[i - 1], pat.intensity[i], pat.intensity[i + 1]);
        if c >= l && c > r {
            maxima.push(golden(pat.x[i] - h, pat.x[i] + h, true, &f)?);
        } else if c <= l && c < r {
            minima.push(golden(pat.x[i] - h, pat.x[i] + h, false, &f)?);
        }
    }
    if maxima.len() < 2 {
        return Err(PathError::DegenerateGeometry("fewer than two fringe maxima".into()));
    }
    let mean_spacing = (maxima[maxima.len() - 1].0 - maxima[0].0) / T::from_usize_lossy(maxima.len() - 1);
    let mut worst_contrast = T::zero();
    for &(xm, im) in &minima {
        let left = maxima.iter().filter(|m| m.0 < xm).map(|m| m.1).last();
        let right = maxima.iter().find(|m| m.0 > xm).map(|m| m.1);
        if let (Some(l), Some(r)) = (left, right) {
            worst_contrast = worst_contrast.max(im / l.max(r));
        }
    }
    Ok(FringeAnalysis {
        maxima,
        minima,
        mean_spacing,
        predicted_spacing: spacing,
        worst_contrast,
    })
}

/// `integral over the plane z = z_plane of f(a | p) f(p | r) dA`, with a
/// smooth taper between `0.6 radius` and `radius` around the point where
/// the segment `a -> r` pierces the plane.
pub fn plane_relay_amplitude<T: Real>(
    a: Vec3<T>,
    r: Vec3<T>,
    k: T,
    z_plane: T,
    radius: T,
    radial_panels: usize,
    angular_points: usize,
) -> Result<Complex<T>> {
    if !((a[2] - z_plane) * (r[2] - z_plane) < T::zero()) {
        return Err(PathError::DegenerateGeometry(
            "relay plane must separate the two points".into(),
        ));
    }
    let s = (z_plane - a[2]) / (r[2] - a[2]);
    let cx = a[0] + s * (r[0] - a[0]);
    let cy = a[1] + s * (r[1] - a[1]);
    let q = GaussPanels::<T>::new(12)?;
    let nodes = q.points(T::zero(), radius, radial_panels);
    let dphi = T::TAU() / T::from_usize_lossy(angular_points);
    let inner = radius * T::lit(0.6);
    let rings: Vec<Complex<T>> = nodes
        .par_iter()
        .map(|&(rho, w)| {
            let taper = flat_top(rho, inner, radius);
            let mut ring = Complex::new(T::zero(), T::zero());
            for j in 0..angular_points {
                let (sn, cs) = (dphi * T::from_usize_lossy(j)).sin_cos();
                let p = [cx + rho * cs, cy + rho * sn, z_plane];
                let v = huygens_kernel(a, p, k).unwrap_or_default() * huygens_kernel(p, r, k).unwrap_or_default();
                ring = ring + v;
            }
            ring * (w * rho * dphi * taper)
        })
        .collect();
    Ok(rings.into_iter().fold(Complex::new(T::zero(), T::zero()), |x, y| x + y))
}
