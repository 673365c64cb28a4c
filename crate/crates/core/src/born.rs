//! One-interaction scattering: kinematics from geometry, the second-order
//! expansion of the pair-path potential phase, and the `|V~(dk)|^2` law.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PathError, Result};
use crate::lattice::{Grid1D, PhysicalParams};
use crate::potentials::{PotentialSpec, WaveVector};
use crate::quadrature::flat_top;
use crate::scalar::{norm3, scale3, sub3, Real, Vec3};
use crate::schrodinger::{gaussian_packet, reflection_transmission, split_step_evolve, SolverConfig};

pub const FORWARD_NOTE: &str = "excluded by collimation";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringKinematics<T> {
    pub r0: Vec3<T>,
    pub rk: Vec3<T>,
    pub r: Vec3<T>,
    pub tk: T,
    pub t: T,
    pub v_in: Vec3<T>,
    pub v_out: Vec3<T>,
    pub delta_v: Vec3<T>,
    pub delta_k: Vec3<T>,
    /// `|v_out| - |v_in|`; reported, not enforced.
    pub speed_mismatch: T,
}

/// Straight flights `r0 -> rk` during `tk` and `rk -> r` during `t - tk`.
pub fn kinematics_from_geometry<T: Real>(
    r0: Vec3<T>,
    rk: Vec3<T>,
    r: Vec3<T>,
    tk: T,
    t: T,
    params: &PhysicalParams<T>,
) -> Result<ScatteringKinematics<T>> {
    params.validate()?;
    if !(tk > T::zero() && tk < t && t.is_finite()) {
        return Err(PathError::DegenerateGeometry("need 0 < t_k < t".into()));
    }
    if norm3(sub3(rk, r0)) == T::zero() || norm3(sub3(r, rk)) == T::zero() {
        return Err(PathError::DegenerateGeometry(
            "scattering point coincides with source or detector".into(),
        ));
    }
    let v_in = scale3(sub3(rk, r0), T::one() / tk);
    let v_out = scale3(sub3(r, rk), T::one() / (t - tk));
    let delta_v = sub3(v_out, v_in);
    Ok(ScatteringKinematics {
        r0,
        rk,
        r,
        tk,
        t,
        v_in,
        v_out,
        delta_v,
        delta_k: scale3(delta_v, params.mass / params.hbar),
        speed_mismatch: norm3(v_out) - norm3(v_in),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BornMethod {
    AnalyticFt,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornResult<T> {
    pub delta_k: T,
    pub probability: T,
    pub method: BornMethod,
}

/// Both evaluations of the relative Born probability at one `dk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BornEvaluation<T> {
    pub analytic: BornResult<T>,
    pub quadrature: BornResult<T>,
    pub relative_difference: T,
    pub note: Option<String>,
}

fn checked_probability<T: Real>(amplitude: Complex<T>) -> Result<T> {
    let p = amplitude.norm_sqr();
    if !(p >= T::zero() && p.is_finite()) {
        return Err(PathError::NonFiniteField);
    }
    Ok(p)
}

/// `|V~(dk)|^2` by closed form and by quadrature.
pub fn born_probability<T: Real>(spec: &PotentialSpec<T>, delta_k: WaveVector<T>) -> Result<BornEvaluation<T>> {
    let km = delta_k.magnitude();
    let a = checked_probability(spec.fourier(delta_k)?)?;
    let q = checked_probability(spec.fourier_quadrature(delta_k)?)?;
    let scale = a.abs().max(q.abs());
    let rel = if scale > T::zero() { (a - q).abs() / scale } else { T::zero() };
    Ok(BornEvaluation {
        analytic: BornResult {
            delta_k: km,
            probability: a,
            method: BornMethod::AnalyticFt,
        },
        quadrature: BornResult {
            delta_k: km,
            probability: q,
            method: BornMethod::Quadrature,
        },
        relative_difference: rel,
        note: (km == T::zero()).then(|| FORWARD_NOTE.to_string()),
    })
}

/// Displacement window for the audit: flat on `|u| <= inner`, smooth
/// roll-off to zero at `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditWindow<T> {
    pub inner: T,
    pub outer: T,
    /// Lattice points per potential support length.
    pub resolution: usize,
}

impl<T: Real> AuditWindow<T> {
    /// Flat over the potential's support, rolling off over one more support.
    pub fn for_potential(spec: &PotentialSpec<T>) -> Result<Self> {
        let s = support(spec)?;
        Ok(Self {
            inner: s,
            outer: s * T::lit(2.0),
            resolution: 400,
        })
    }

    pub fn widened(&self, factor: T) -> Self {
        Self {
            outer: self.inner + (self.outer - self.inner) * factor,
            ..*self
        }
    }
}

fn support<T: Real>(spec: &PotentialSpec<T>) -> Result<T> {
    match *spec {
        PotentialSpec::GaussianWell { sigma, .. } => Ok(sigma * T::lit(8.0)),
        PotentialSpec::SquareBarrier { a, .. } => Ok(a),
        PotentialSpec::Yukawa { .. } => Err(PathError::NonIntegrable("Yukawa in 1D (1/|x| at the origin)")),
        _ => Err(PathError::NonIntegrable("potential without compact effective support")),
    }
}

/// Terms of the second-order expansion of
/// `exp(i eps/hbar [V(r-u) - V(r+u)])`, each integrated against the kinetic
/// factor `exp(-2 i u dk)` over `(r, u)`. Values are the coefficients of
/// `(eps/hbar)` (linear) and `(eps/hbar)^2` (squared, cross).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornAudit<T> {
    pub delta_k: T,
    pub linear_minus: Complex<T>,
    pub linear_plus: Complex<T>,
    /// `|linear_minus - linear_plus|`.
    pub linear_diff: T,
    /// Magnitude of the two `[V]^2` terms.
    pub squared_at_nonzero: T,
    pub cross_term: T,
    /// `1/2 |V~(dk)|^2` from the closed form.
    pub half_born: T,
    /// `eps max|V| / hbar`, the expansion parameter.
    pub expansion_parameter: T,
}

/// Audit on a uniform `(r, u)` lattice sharing one step, so that
/// `V(r_i -+ u_j)` are lattice samples of `V`.
pub fn born_term_audit<T: Real>(
    spec: &PotentialSpec<T>,
    delta_v: T,
    eps: T,
    params: &PhysicalParams<T>,
    window: &AuditWindow<T>,
) -> Result<BornAudit<T>> {
    params.validate()?;
    spec.validate()?;
    let dk = params.mass * delta_v / params.hbar;
    if !(dk != T::zero() && dk.is_finite()) {
        return Err(invalid("audit needs a nonzero momentum transfer"));
    }
    if !(window.inner > T::zero() && window.outer > window.inner && window.resolution >= 8) {
        return Err(invalid("audit window needs 0 < inner < outer and resolution >= 8"));
    }
    let sup = support(spec)?;
    let mut h = sup / T::from_usize_lossy(window.resolution);
    // at least 16 samples per period of exp(2 i u dk)
    h = h.min(T::PI() / (T::lit(16.0) * dk.abs()));
    let nu = (window.outer / h).ceil().to_usize().unwrap_or(0);
    let nr = ((sup + window.outer) / h).ceil().to_usize().unwrap_or(0) + 1;
    let span = nr + nu;
    if span > 4_000_000 {
        return Err(PathError::EnumerationTooLarge(span));
    }
    // V at lattice index m, m in [-span, span]
    let table: Vec<T> = (0..=2 * span)
        .map(|i| {
            let x = h * (T::from_usize_lossy(i) - T::from_usize_lossy(span));
            spec.value_1d(x, params)
        })
        .collect::<Result<_>>()?;
    let v = |m: isize| table[(m + span as isize) as usize];
    let (nr, nu) = (nr as isize, nu as isize);

    // per displacement u_j: sums over r of each term
    let rows: Vec<[Complex<T>; 4]> = (-nu..=nu)
        .into_par_iter()
        .map(|j| {
            let u = h * T::lit(j as f64);
            let taper = flat_top(u, window.inner, window.outer);
            let kin = Complex::new((T::lit(2.0) * u * dk).cos(), -(T::lit(2.0) * u * dk).sin()) * taper;
            let (mut lm, mut lp, mut sq, mut cr) = (T::zero(), T::zero(), T::zero(), T::zero());
            for i in -nr..=nr {
                let a = v(i - j);
                let b = v(i + j);
                lm = lm + a;
                lp = lp + b;
                sq = sq + a * a + b * b;
                cr = cr + a * b;
            }
            [kin * lm, kin * lp, kin * sq, kin * cr]
        })
        .collect();
    let mut acc = [Complex::new(T::zero(), T::zero()); 4];
    for r in rows {
        for k in 0..4 {
            acc[k] = acc[k] + r[k];
        }
    }
    let area = h * h;
    let [lm, lp, sq, cr] = acc.map(|c| c * area);
    let vmax = table.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let half_born = spec.fourier(WaveVector::OneD(dk))?.norm_sqr() * T::lit(0.5);
    Ok(BornAudit {
        delta_k: dk,
        linear_minus: lm,
        linear_plus: lp,
        linear_diff: (lm - lp).norm(),
        squared_at_nonzero: sq.norm() * T::lit(0.5),
        cross_term: cr.re,
        half_born,
        expansion_parameter: eps * vmax / params.hbar,
    })
}

/// Wave-packet set-up for the 1D reflection check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSetup<T> {
    pub packet_width: T,
    pub half_width: T,
    pub points: usize,
    pub dt: T,
}

impl<T: Real> Default for ReflectionSetup<T> {
    fn default() -> Self {
        Self {
            packet_width: T::lit(20.0),
            half_width: T::lit(400.0),
            points: 8192,
            dt: T::lit(0.01),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionResult<T> {
    pub r_simulated: T,
    pub r_born: T,
    pub transmitted: T,
    pub steps: usize,
}

/// `R_born = (m / hbar^2 k0)^2 |V~(2 k0)|^2` against a split-step packet
/// scattered off `g * spec`.
pub fn weak_potential_reflection_1d<T: Real>(
    spec: &PotentialSpec<T>,
    k0: T,
    g: T,
    params: &PhysicalParams<T>,
    setup: &ReflectionSetup<T>,
) -> Result<ReflectionResult<T>> {
    params.validate()?;
    if !(k0 > T::zero()) {
        return Err(invalid("k0 must be positive"));
    }
    let sx = setup.packet_width;
    if !(sx > T::zero() && T::lit(0.5) / sx < T::lit(0.1) * k0) {
        return Err(invalid("packet momentum width must be well below k0"));
    }
    let v = spec.scaled(g);
    let sup = support(&v)?;
    let (m, hbar) = (params.mass, params.hbar);
    let amp = m / (hbar * hbar * k0);
    let r_born = amp * amp * v.fourier(WaveVector::OneD(T::lit(2.0) * k0))?.norm_sqr();
    if !(r_born < T::lit(0.05)) {
        return Err(PathError::OutsideBornRegime(r_born.as_f64()));
    }
    let grid = Grid1D::symmetric(setup.half_width, setup.points)?;
    let x0 = -(T::lit(6.0) * sx + sup + T::lit(10.0));
    let speed = hbar * k0 / m;
    let travel = T::lit(2.0) * x0.abs();
    let steps = (travel / speed / setup.dt).ceil().to_usize().unwrap_or(0);
    let end = x0 + speed * setup.dt * T::from_usize_lossy(steps);
    let reach = end.abs().max(x0.abs()) + T::lit(6.0) * sx;
    if reach > setup.half_width {
        return Err(invalid("domain too small for the packet's flight"));
    }
    let psi0 = gaussian_packet(grid, x0, sx, k0)?;
    let cfg = SolverConfig {
        grid,
        dt: setup.dt,
        n_steps: steps,
        spec: v,
        params: *params,
    };
    let psi = split_step_evolve(&psi0, &cfg)?;
    let (r, t) = reflection_transmission(&psi, (-sup, sup))?;
    Ok(ReflectionResult {
        r_simulated: r,
        r_born,
        transmitted: t,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type S = PotentialSpec<f64>;

    #[test]
    fn kinematics_examples() {
        let p = PhysicalParams::default();
        let k = kinematics_from_geometry([-1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0], 1.0, 2.0, &p).unwrap();
        assert_eq!(k.v_in, [1.0, 0.0, 0.0]);
        assert_eq!(k.v_out, [0.0, 1.0, 0.0]);
        assert!((norm3(k.delta_k) - 2f64.sqrt()).abs() < 1e-15);
        let k2 = kinematics_from_geometry([-1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0], 2.0, 4.0, &p).unwrap();
        assert!((norm3(k2.delta_k) - norm3(k.delta_k) / 2.0).abs() < 1e-15);
        let fwd = kinematics_from_geometry([-1.0, 0.0, 0.0], [0.0; 3], [3.0, 0.0, 0.0], 0.5, 2.0, &p).unwrap();
        assert!(norm3(fwd.delta_v) < 1e-15);
        assert!(kinematics_from_geometry([0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], 0.5, 1.0, &p).is_err());
        assert!(kinematics_from_geometry([-1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0], 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn born_examples() {
        let y = born_probability(&S::Yukawa { g: 1.0, mu: 1.0 }, WaveVector::ThreeD([1.0, 0.0, 0.0])).unwrap();
        assert!((y.analytic.probability - 4.0 * PI * PI).abs() < 1e-12);
        assert!(y.relative_difference < 1e-6);
        let g = S::GaussianWell { v0: -0.3, sigma: 0.7 };
        let p1 = born_probability(&g, WaveVector::ThreeD([0.0, 1.0, 0.0])).unwrap();
        let p2 = born_probability(&g, WaveVector::ThreeD([0.0, 0.0, -2.0])).unwrap();
        let ratio = p2.analytic.probability / p1.analytic.probability;
        assert!((ratio / (-3.0 * 0.49f64).exp() - 1.0).abs() < 1e-6);
        let a = born_probability(&g, WaveVector::OneD(1.3)).unwrap();
        let b = born_probability(&g, WaveVector::OneD(-1.3)).unwrap();
        assert_eq!(a.analytic.probability, b.analytic.probability);
        let z = born_probability(&g, WaveVector::OneD(0.0)).unwrap();
        assert_eq!(z.note.as_deref(), Some(FORWARD_NOTE));
        assert!(born_probability(&S::Yukawa { g: 1.0, mu: 1.0 }, WaveVector::OneD(1.0)).is_err());
        assert!(born_probability(&S::Harmonic { omega: 1.0 }, WaveVector::OneD(1.0)).is_err());
    }

    #[test]
    fn analytic_and_quadrature_agree() {
        for spec in [
            S::Yukawa { g: 0.8, mu: 1.3 },
            S::GaussianWell { v0: 2.0, sigma: 0.6 },
            S::SquareBarrier { v0: 1.0, a: 1.1 },
        ] {
            for i in 0..20 {
                let k = 0.05 + 0.25 * i as f64;
                let e = born_probability(&spec, WaveVector::ThreeD([k, 0.0, 0.0])).unwrap();
                assert!(e.relative_difference < 1e-6, "{spec:?} {k} {}", e.relative_difference);
            }
        }
    }

    #[test]
    fn audit_cancellation_and_cross_term() {
        let p = PhysicalParams::default();
        for spec in [S::GaussianWell { v0: 0.5, sigma: 1.0 }, S::SquareBarrier { v0: 0.5, a: 1.0 }] {
            let w = AuditWindow::for_potential(&spec).unwrap();
            for dv in [0.3, 0.7, 1.0, 1.4, 2.0] {
                let a = born_term_audit(&spec, dv, 0.1, &p, &w).unwrap();
                assert!(a.linear_diff < 1e-10 * a.cross_term, "{spec:?} {dv} {a:?}");
                assert!((a.cross_term / a.half_born - 1.0).abs() < 0.01, "{spec:?} {dv} {a:?}");
            }
        }
    }

    #[test]
    fn squared_terms_decay_with_window() {
        let p = PhysicalParams::default();
        let spec = S::GaussianWell { v0: 0.5, sigma: 1.0 };
        let w = AuditWindow::for_potential(&spec).unwrap();
        let a = born_term_audit(&spec, 0.5, 0.1, &p, &w).unwrap();
        let b = born_term_audit(&spec, 0.5, 0.1, &p, &w.widened(2.0)).unwrap();
        assert!(b.squared_at_nonzero * 4.0 <= a.squared_at_nonzero, "{} {}", a.squared_at_nonzero, b.squared_at_nonzero);
        assert!((b.cross_term / a.cross_term - 1.0).abs() < 1e-9);
    }

    #[test]
    fn born_regime_guard_and_sign() {
        let p = PhysicalParams::default();
        let s = ReflectionSetup::default();
        let strong = S::GaussianWell { v0: 5.0, sigma: 0.5 };
        assert!(matches!(
            weak_potential_reflection_1d(&strong, 0.5, 1.0, &p, &s),
            Err(PathError::OutsideBornRegime(_))
        ));
        let v = S::GaussianWell { v0: 0.01, sigma: 0.5 };
        let k0 = 2.0;
        let amp = 1.0 / k0;
        let rb = |spec: &S| amp * amp * spec.fourier(WaveVector::OneD(2.0 * k0)).unwrap().norm_sqr();
        assert_eq!(rb(&v), rb(&v.scaled(-1.0)));
        assert!((rb(&v.scaled(0.5)) * 4.0 / rb(&v) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weak_reflection_matches_born() {
        let p = PhysicalParams::default();
        let spec = S::GaussianWell { v0: 0.01, sigma: 0.5 };
        let s = ReflectionSetup::default();
        let full = weak_potential_reflection_1d(&spec, 2.0, 1.0, &p, &s).unwrap();
        let ratio = full.r_simulated / full.r_born;
        assert!((0.9..=1.1).contains(&ratio), "{full:?}");
        let half = weak_potential_reflection_1d(&spec, 2.0, 0.5, &p, &s).unwrap();
        let q = full.r_simulated / half.r_simulated / 4.0;
        assert!((q - 1.0).abs() < 0.1, "{q}");
    }
}
