//! Closed catalog of analytic potentials.
//!
//! One-dimensional forms use `x`; three-dimensional forms are radial in
//! `|r|` except [`PotentialSpec::Linear`], which acts along the first axis.
//! `V = -f x`, so the force is `+f`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::lattice::PhysicalParams;
use crate::quadrature::GaussPanels;
use crate::scalar::{dot3, norm3, scale3, Real, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params")]
pub enum PotentialSpec<T> {
    Free,
    Linear { force: T },
    Harmonic { omega: T },
    Quartic { lambda4: T },
    GaussianWell { v0: T, sigma: T },
    Yukawa { g: T, mu: T },
    SquareBarrier { v0: T, a: T },
}

/// Wave vector argument of [`PotentialSpec::fourier`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaveVector<T> {
    OneD(T),
    ThreeD(Vec3<T>),
}

impl<T: Real> WaveVector<T> {
    pub fn magnitude(&self) -> T {
        match *self {
            WaveVector::OneD(k) => k.abs(),
            WaveVector::ThreeD(k) => norm3(k),
        }
    }
}

impl<T: Real> PotentialSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Free => "Free",
            Self::Linear { .. } => "Linear",
            Self::Harmonic { .. } => "Harmonic",
            Self::Quartic { .. } => "Quartic",
            Self::GaussianWell { .. } => "GaussianWell",
            Self::Yukawa { .. } => "Yukawa",
            Self::SquareBarrier { .. } => "SquareBarrier",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: T, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be finite")))
            }
        };
        let positive = |v: T, what: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be positive")))
            }
        };
        match *self {
            Self::Free => Ok(()),
            Self::Linear { force } => finite(force, "force"),
            Self::Harmonic { omega } => {
                if omega >= T::zero() && omega.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("omega must be >= 0"))
                }
            }
            Self::Quartic { lambda4 } => finite(lambda4, "lambda4"),
            Self::GaussianWell { v0, sigma } => {
                finite(v0, "v0")?;
                positive(sigma, "sigma")
            }
            Self::Yukawa { g, mu } => {
                finite(g, "g")?;
                positive(mu, "mu")
            }
            Self::SquareBarrier { v0, a } => {
                finite(v0, "v0")?;
                positive(a, "a")
            }
        }
    }

    /// True exactly for potentials at most quadratic in the coordinates.
    pub fn is_at_most_quadratic(&self) -> bool {
        matches!(
            self,
            Self::Free | Self::Linear { .. } | Self::Harmonic { .. }
        )
    }

    /// True when `V` is absolutely integrable in 3D (and, except Yukawa, in 1D).
    pub fn is_integrable(&self) -> bool {
        matches!(
            self,
            Self::GaussianWell { .. } | Self::Yukawa { .. } | Self::SquareBarrier { .. }
        )
    }

    /// Same potential with its coupling multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        match *self {
            Self::Free => Self::Free,
            Self::Linear { force } => Self::Linear { force: force * s },
            // coupling is m w^2 / 2
            Self::Harmonic { omega } => Self::Harmonic {
                omega: omega * s.abs().sqrt(),
            },
            Self::Quartic { lambda4 } => Self::Quartic {
                lambda4: lambda4 * s,
            },
            Self::GaussianWell { v0, sigma } => Self::GaussianWell { v0: v0 * s, sigma },
            Self::Yukawa { g, mu } => Self::Yukawa { g: g * s, mu },
            Self::SquareBarrier { v0, a } => Self::SquareBarrier { v0: v0 * s, a },
        }
    }

    /// `V(x)` in one dimension.
    pub fn value_1d(&self, x: T, params: &PhysicalParams<T>) -> Result<T> {
        let half = T::lit(0.5);
        Ok(match *self {
            Self::Free => T::zero(),
            Self::Linear { force } => -force * x,
            Self::Harmonic { omega } => half * params.mass * omega * omega * x * x,
            Self::Quartic { lambda4 } => lambda4 * (x * x) * (x * x),
            Self::GaussianWell { v0, sigma } => v0 * (-(x * x) / (T::lit(2.0) * sigma * sigma)).exp(),
            Self::Yukawa { g, mu } => {
                let r = x.abs();
                if r == T::zero() {
                    return Err(PathError::SingularPoint(0.0));
                }
                g * (-mu * r).exp() / r
            }
            Self::SquareBarrier { v0, a } => {
                if x.abs() <= a {
                    v0
                } else {
                    T::zero()
                }
            }
        })
    }

    /// `dV/dx` in one dimension. The square barrier's gradient is zero away
    /// from its two edges (where it is a delta and is not represented).
    pub fn gradient_1d(&self, x: T, params: &PhysicalParams<T>) -> Result<T> {
        Ok(match *self {
            Self::Free => T::zero(),
            Self::Linear { force } => -force,
            Self::Harmonic { omega } => params.mass * omega * omega * x,
            Self::Quartic { lambda4 } => T::lit(4.0) * lambda4 * x * x * x,
            Self::GaussianWell { v0, sigma } => {
                let s2 = sigma * sigma;
                -v0 * x / s2 * (-(x * x) / (T::lit(2.0) * s2)).exp()
            }
            Self::Yukawa { g, mu } => {
                let r = x.abs();
                if r == T::zero() {
                    return Err(PathError::SingularPoint(0.0));
                }
                let dvdr = -g * (-mu * r).exp() * (mu * r + T::one()) / (r * r);
                dvdr * x.signum()
            }
            Self::SquareBarrier { .. } => T::zero(),
        })
    }

    /// `V(r)` in three dimensions.
    pub fn value_3d(&self, r: Vec3<T>, params: &PhysicalParams<T>) -> Result<T> {
        match *self {
            Self::Linear { force } => Ok(-force * r[0]),
            _ => self.value_1d(norm3(r), params),
        }
    }

    /// `grad V(r)` in three dimensions.
    pub fn gradient_3d(&self, r: Vec3<T>, params: &PhysicalParams<T>) -> Result<Vec3<T>> {
        match *self {
            Self::Linear { force } => Ok([-force, T::zero(), T::zero()]),
            Self::Free | Self::SquareBarrier { .. } => Ok([T::zero(); 3]),
            _ => {
                let rr = norm3(r);
                if rr == T::zero() {
                    if let Self::Yukawa { .. } = self {
                        return Err(PathError::SingularPoint(0.0));
                    }
                    return Ok([T::zero(); 3]);
                }
                let dvdr = self.gradient_1d(rr, params)?;
                Ok(scale3(r, dvdr / rr))
            }
        }
    }

    fn require_integrable(&self, three_d: bool) -> Result<()> {
        match self {
            Self::Free => Err(PathError::NonIntegrable("Free")),
            Self::Linear { .. } => Err(PathError::NonIntegrable("Linear")),
            Self::Harmonic { .. } => Err(PathError::NonIntegrable("Harmonic")),
            Self::Quartic { .. } => Err(PathError::NonIntegrable("Quartic")),
            Self::Yukawa { .. } if !three_d => {
                Err(PathError::NonIntegrable("Yukawa in 1D (1/|x| at the origin)"))
            }
            _ => Ok(()),
        }
    }

    /// Analytic `V~(k) = integral V(x) exp(i k.x) dx`.
    pub fn fourier(&self, k: WaveVector<T>) -> Result<Complex<T>> {
        self.validate()?;
        let three_d = matches!(k, WaveVector::ThreeD(_));
        self.require_integrable(three_d)?;
        let km = k.magnitude();
        let two_pi = T::TAU();
        let re = match (*self, three_d) {
            (Self::GaussianWell { v0, sigma }, false) => {
                v0 * sigma * two_pi.sqrt() * (-(sigma * sigma * km * km) * T::lit(0.5)).exp()
            }
            (Self::GaussianWell { v0, sigma }, true) => {
                v0 * two_pi.powf(T::lit(1.5))
                    * sigma.powi(3)
                    * (-(sigma * sigma * km * km) * T::lit(0.5)).exp()
            }
            (Self::SquareBarrier { v0, a }, false) => {
                let ka = km * a;
                if ka.abs() < T::lit(1e-4) {
                    T::lit(2.0) * v0 * a * (T::one() - ka * ka / T::lit(6.0))
                } else {
                    T::lit(2.0) * v0 * ka.sin() / km
                }
            }
            (Self::SquareBarrier { v0, a }, true) => {
                let ka = km * a;
                let four_pi = T::lit(4.0) * T::PI();
                if ka.abs() < T::lit(1e-3) {
                    // series of (sin u - u cos u)/u^3 = 1/3 - u^2/30 + ...
                    let u2 = ka * ka;
                    four_pi * v0 * a.powi(3) * (T::one() / T::lit(3.0) - u2 / T::lit(30.0) + u2 * u2 / T::lit(840.0))
                } else {
                    four_pi * v0 * (ka.sin() - ka * ka.cos()) / km.powi(3)
                }
            }
            (Self::Yukawa { g, mu }, true) => T::lit(4.0) * T::PI() * g / (mu * mu + km * km),
            _ => unreachable!("filtered by require_integrable"),
        };
        Ok(Complex::new(re, T::zero()))
    }

    /// Radial extent beyond which `|V|` is negligible for quadrature.
    fn quadrature_extent(&self) -> T {
        match *self {
            Self::GaussianWell { sigma, .. } => sigma * T::lit(13.0),
            Self::SquareBarrier { a, .. } => a,
            Self::Yukawa { mu, .. } => T::lit(42.0) / mu,
            _ => T::zero(),
        }
    }

    /// `V~(k)` by composite Gauss-Legendre quadrature, independent of the
    /// closed forms. 1D integrates `V(x) e^{ikx}` over the support; 3D uses
    /// the radial reduction `integral 4 pi r^2 V(r) sinc(k r) dr`.
    pub fn fourier_quadrature(&self, k: WaveVector<T>) -> Result<Complex<T>> {
        self.validate()?;
        let three_d = matches!(k, WaveVector::ThreeD(_));
        self.require_integrable(three_d)?;
        let params = PhysicalParams::default();
        let ext = self.quadrature_extent();
        let km = k.magnitude();
        let q = GaussPanels::<T>::new(16)?;
        // about 4 panels per oscillation, never fewer than 64
        let osc = (km * ext / T::PI()).ceil().to_usize().unwrap_or(0);
        match k {
            WaveVector::OneD(kk) => {
                let panels = (64 + 8 * osc).max(64);
                let f = |x: T| -> Complex<T> {
                    let v = self.value_1d(x, &params).unwrap_or(T::zero());
                    let (s, c) = (kk * x).sin_cos();
                    Complex::new(v * c, v * s)
                };
                Ok(q.integrate(-ext, ext, panels, f))
            }
            WaveVector::ThreeD(_) => {
                let panels = (128 + 4 * osc).max(128);
                let four_pi = T::lit(4.0) * T::PI();
                let f = |r: T| -> T {
                    let v = self.value_1d(r, &params).unwrap_or(T::zero());
                    let kr = km * r;
                    let sinc = if kr.abs() < T::lit(1e-6) {
                        T::one() - kr * kr / T::lit(6.0)
                    } else {
                        kr.sin() / kr
                    };
                    four_pi * r * r * v * sinc
                };
                // Yukawa: r V(r) is bounded, so the node-free GL rule handles the origin
                let re = if let Self::Yukawa { mu, .. } = *self {
                    // split at a few decay lengths to resolve the exponential head
                    let r1 = T::lit(2.0) / mu;
                    q.integrate(T::zero(), r1, 64, f) + q.integrate(r1, ext, panels, f)
                } else {
                    q.integrate(T::zero(), ext, panels, f)
                };
                Ok(Complex::new(re, T::zero()))
            }
        }
    }
}

/// Free helpers mirroring the method API.
pub fn potential_value<T: Real>(spec: &PotentialSpec<T>, x: T, params: &PhysicalParams<T>) -> Result<T> {
    spec.value_1d(x, params)
}

pub fn potential_gradient<T: Real>(
    spec: &PotentialSpec<T>,
    x: T,
    params: &PhysicalParams<T>,
) -> Result<T> {
    spec.gradient_1d(x, params)
}

pub fn potential_fourier<T: Real>(spec: &PotentialSpec<T>, k: WaveVector<T>) -> Result<Complex<T>> {
    spec.fourier(k)
}

pub fn is_at_most_quadratic<T: Real>(spec: &PotentialSpec<T>) -> bool {
    spec.is_at_most_quadratic()
}

/// `|r|^2` helper for 3D callers.
pub fn radius_sq<T: Real>(r: Vec3<T>) -> T {
    dot3(r, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type S = PotentialSpec<f64>;

    fn p() -> PhysicalParams<f64> {
        PhysicalParams::default()
    }

    fn catalog() -> Vec<S> {
        vec![
            S::Free,
            S::Linear { force: 0.7 },
            S::Harmonic { omega: 1.3 },
            S::Quartic { lambda4: 2.0 },
            S::GaussianWell { v0: -1.0, sigma: 0.8 },
            S::Yukawa { g: 1.5, mu: 0.9 },
            S::SquareBarrier { v0: 0.4, a: 1.2 },
        ]
    }

    #[test]
    fn values() {
        assert_eq!(S::Harmonic { omega: 1.0 }.value_1d(2.0, &p()).unwrap(), 2.0);
        assert_eq!(S::Free.value_1d(3.7, &p()).unwrap(), 0.0);
        assert_eq!(S::GaussianWell { v0: -1.0, sigma: 1.0 }.value_1d(0.0, &p()).unwrap(), -1.0);
        assert_eq!(
            S::Yukawa { g: 1.0, mu: 1.0 }.value_1d(0.0, &p()),
            Err(PathError::SingularPoint(0.0))
        );
        assert_eq!(S::Harmonic { omega: 0.0 }.value_1d(5.0, &p()).unwrap(), 0.0);
        let heavy = PhysicalParams::new(2.0, 1.0).unwrap();
        assert_eq!(S::Harmonic { omega: 1.0 }.value_1d(2.0, &heavy).unwrap(), 4.0);
    }

    #[test]
    fn gradients() {
        assert_eq!(S::Harmonic { omega: 1.0 }.gradient_1d(3.0, &p()).unwrap(), 3.0);
        assert_eq!(S::Free.gradient_1d(1.0, &p()).unwrap(), 0.0);
        let q = S::Quartic { lambda4: 2.0 };
        assert_eq!(q.gradient_1d(1.0, &p()).unwrap(), 8.0);
        let h = 1e-5;
        let fd = (q.value_1d(1.0 + h, &p()).unwrap() - q.value_1d(1.0 - h, &p()).unwrap()) / (2.0 * h);
        assert!((fd - 8.0).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        assert!(S::GaussianWell { v0: 1.0, sigma: 0.0 }.validate().is_err());
        assert!(S::Yukawa { g: 1.0, mu: -1.0 }.validate().is_err());
        assert!(S::SquareBarrier { v0: 1.0, a: 0.0 }.validate().is_err());
        assert!(S::Harmonic { omega: -0.1 }.validate().is_err());
        assert!(S::Linear { force: f64::NAN }.validate().is_err());
        for s in catalog() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn classifier() {
        let quad: Vec<bool> = catalog().iter().map(|s| s.is_at_most_quadratic()).collect();
        assert_eq!(quad, vec![true, true, true, false, false, false, false]);
    }

    #[test]
    fn fourier_examples() {
        let (g, mu) = (1.3, 0.8);
        let y = S::Yukawa { g, mu };
        let v = y.fourier(WaveVector::ThreeD([mu, 0.0, 0.0])).unwrap();
        assert!((v.re - 2.0 * std::f64::consts::PI * g / (mu * mu)).abs() < 1e-12);
        let q = y.fourier_quadrature(WaveVector::ThreeD([0.0, mu, 0.0])).unwrap();
        assert!((q.re / v.re - 1.0).abs() < 1e-8);

        let gw = S::GaussianWell { v0: 0.7, sigma: 1.4 };
        let v = gw.fourier(WaveVector::OneD(0.0)).unwrap();
        assert!((v.re - 0.7 * 1.4 * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);

        let sb = S::SquareBarrier { v0: 0.5, a: 2.0 };
        let k = 0.9;
        let v = sb.fourier(WaveVector::OneD(k)).unwrap();
        assert!((v.re - 2.0 * 0.5 * (k * 2.0f64).sin() / k).abs() < 1e-14);
        let v0 = sb.fourier(WaveVector::OneD(1e-9)).unwrap();
        assert!((v0.re - 2.0 * 0.5 * 2.0).abs() < 1e-12);

        for s in [S::Free, S::Linear { force: 1.0 }, S::Harmonic { omega: 1.0 }, S::Quartic { lambda4: 1.0 }] {
            assert!(matches!(s.fourier(WaveVector::OneD(1.0)), Err(PathError::NonIntegrable(_))));
        }
        assert!(y.fourier(WaveVector::OneD(1.0)).is_err());
    }

    #[test]
    fn fourier_quadrature_matches_closed_forms() {
        let specs = [
            S::GaussianWell { v0: -0.6, sigma: 0.7 },
            S::SquareBarrier { v0: 1.1, a: 0.9 },
            S::Yukawa { g: 0.8, mu: 1.2 },
        ];
        for s in specs {
            for i in 0..20 {
                let km = 0.05 + 0.25 * i as f64;
                let mut ks = vec![WaveVector::ThreeD([0.6 * km, 0.0, 0.8 * km])];
                if !matches!(s, S::Yukawa { .. }) {
                    ks.push(WaveVector::OneD(km));
                    ks.push(WaveVector::OneD(-km));
                }
                for k in ks {
                    let a = s.fourier(k).unwrap();
                    let q = s.fourier_quadrature(k).unwrap();
                    let scale = a.norm().max(1e-300);
                    assert!((a - q).norm() / scale < 1e-6, "{s:?} {k:?} {a} {q}");
                    assert!(q.im.abs() < 1e-10 * (1.0 + q.norm()), "{s:?} {q}");
                }
            }
        }
    }

    #[test]
    fn serde_records() {
        let s: S = serde_json::from_str(r#"{"type":"Harmonic","params":{"omega":1.0}}"#).unwrap();
        assert_eq!(s, S::Harmonic { omega: 1.0 });
        let f: S = serde_json::from_str(r#"{"type":"Free"}"#).unwrap();
        assert_eq!(f, S::Free);
        let back = serde_json::to_string(&S::Yukawa { g: 1.0, mu: 2.0 }).unwrap();
        assert_eq!(back, r#"{"type":"Yukawa","params":{"g":1.0,"mu":2.0}}"#);
    }

    fn check_gradient(s: &S, x: f64) -> std::result::Result<(), TestCaseError> {
        let h = 1e-5;
        let g = s.gradient_1d(x, &p()).unwrap();
        let fd = (s.value_1d(x + h, &p()).unwrap() - s.value_1d(x - h, &p()).unwrap()) / (2.0 * h);
        prop_assert!((g - fd).abs() < 1e-6 * (1.0 + g.abs()), "{:?} x={} {} {}", s, x, g, fd);
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn gradient_matches_finite_difference(x in -3.0..3.0f64) {
            for s in catalog() {
                if let S::SquareBarrier { a, .. } = s {
                    if (x.abs() - a).abs() < 1e-4 { continue; }
                }
                if matches!(s, S::Yukawa { .. }) && x.abs() < 0.05 { continue; }
                check_gradient(&s, x)?;
            }
        }

        #[test]
        fn gradient_3d_matches_finite_difference(
            x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64,
        ) {
            let r = [x, y, z];
            prop_assume!(norm3(r) > 0.05);
            for s in catalog() {
                if let S::SquareBarrier { a, .. } = s {
                    prop_assume!((norm3(r) - a).abs() > 1e-4);
                }
                let g = s.gradient_3d(r, &p()).unwrap();
                for ax in 0..3 {
                    let h = 1e-5;
                    let mut rp = r;
                    let mut rm = r;
                    rp[ax] += h;
                    rm[ax] -= h;
                    let fd = (s.value_3d(rp, &p()).unwrap() - s.value_3d(rm, &p()).unwrap()) / (2.0 * h);
                    prop_assert!((g[ax] - fd).abs() < 1e-6 * (1.0 + norm3(g)));
                }
            }
        }
    }
}
