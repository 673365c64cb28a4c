//! Composite Gauss-Legendre rules and smooth cut-off windows.

use gauss_quad::GaussLegendre;

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Gauss-Legendre rule of fixed degree applied panel-wise.
#[derive(Debug, Clone)]
pub struct GaussPanels<T> {
    nodes: Vec<(T, T)>,
}

impl<T: Real> GaussPanels<T> {
    pub fn new(degree: usize) -> Result<Self> {
        let rule = GaussLegendre::new(degree).map_err(|e| invalid(e.to_string()))?;
        let nodes = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (T::lit(x), T::lit(w)))
            .collect();
        Ok(Self { nodes })
    }

    /// `integral_a^b f` with `panels` equal sub-intervals.
    pub fn integrate<R, F>(&self, a: T, b: T, panels: usize, mut f: F) -> R
    where
        R: Copy + std::ops::Add<Output = R> + std::ops::Mul<T, Output = R> + Default,
        F: FnMut(T) -> R,
    {
        let panels = panels.max(1);
        let h = (b - a) / T::from_usize_lossy(panels);
        let half = h * T::lit(0.5);
        let mut acc = R::default();
        for p in 0..panels {
            let mid = a + h * (T::from_usize_lossy(p) + T::lit(0.5));
            let mut s = R::default();
            for &(x, w) in &self.nodes {
                s = s + f(mid + half * x) * w;
            }
            acc = acc + s * half;
        }
        acc
    }

    /// Nodes and weights of the composite rule on `[a, b]`.
    pub fn points(&self, a: T, b: T, panels: usize) -> Vec<(T, T)> {
        let panels = panels.max(1);
        let h = (b - a) / T::from_usize_lossy(panels);
        let half = h * T::lit(0.5);
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + h * (T::from_usize_lossy(p) + T::lit(0.5));
            for &(x, w) in &self.nodes {
                out.push((mid + half * x, w * half));
            }
        }
        out
    }
}

fn bump_half<T: Real>(z: T) -> T {
    if z <= T::zero() {
        T::zero()
    } else {
        (-z.recip()).exp()
    }
}

/// C-infinity step: 0 for `s <= 0`, 1 for `s >= 1`.
pub fn smooth_step<T: Real>(s: T) -> T {
    if s <= T::zero() {
        return T::zero();
    }
    if s >= T::one() {
        return T::one();
    }
    let a = bump_half(s);
    let b = bump_half(T::one() - s);
    a / (a + b)
}

/// Even window: 1 for `|x| <= inner`, smooth roll-off to 0 at `|x| = outer`.
pub fn flat_top<T: Real>(x: T, inner: T, outer: T) -> T {
    let ax = x.abs();
    if ax <= inner {
        T::one()
    } else if ax >= outer {
        T::zero()
    } else {
        T::one() - smooth_step((ax - inner) / (outer - inner))
    }
}
