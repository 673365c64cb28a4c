//! Numerical laboratory for path sums: time-sliced Feynman propagators,
//! random-walk diffusion, Huygens wave sums, pair-of-paths quasiprobabilities
//! and the Born scattering law.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the bottom of this file fix the scalar to `f64`.

// `!(x > 0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod born;
pub mod diffusion;
pub mod error;
pub mod huygens;
pub mod lattice;
pub mod pairpath;
pub mod potentials;
pub mod propagator;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod schrodinger;

pub use error::{PathError, Result};
pub use lattice::{convolve, integrate, ComplexField, Grid1D, PhysicalParams, Spectral};
pub use rng::{rng_stream, RngStream};
pub use scalar::Real;

pub type Grid = Grid1D<f64>;
pub type Field = ComplexField<f64>;
pub type Params = PhysicalParams<f64>;
pub type Potential = potentials::PotentialSpec<f64>;
pub type Slicing = propagator::TimeSlicing<f64>;
pub type Kernel = propagator::Kernel<f64>;
pub type Options = propagator::PropagatorOptions<f64>;
pub type Solver = schrodinger::SolverConfig<f64>;
pub type Walk = diffusion::WalkSpec<f64>;
pub type Waves = huygens::WaveSetup<f64>;
pub type Slits = huygens::DoubleSlit<f64>;
pub type Path = pairpath::PathLattice<f64>;
pub type Window = pairpath::WWindow<f64>;
pub type Scan = pairpath::ScanConfig<f64>;
pub type Kinematics = born::ScatteringKinematics<f64>;
pub type Audit = born::BornAudit<f64>;
