use pathlab_core::propagator::{evolve_wavefunction, PropagatorOptions, TimeSlicing};
use pathlab_core::schrodinger::{gaussian_packet, split_step_evolve_padded, SolverConfig};
use pathlab_core::{Grid, Params, Potential};

fn catalog() -> Vec<Potential> {
    vec![
        Potential::Free,
        Potential::Linear { force: 0.5 },
        Potential::Harmonic { omega: 1.0 },
        Potential::Quartic { lambda4: 0.1 },
        Potential::GaussianWell { v0: -2.0, sigma: 1.0 },
        Potential::Yukawa { g: -0.5, mu: 1.0 },
        Potential::SquareBarrier { v0: 1.0, a: 0.5 },
    ]
}

#[test]
fn propagator_and_split_step_agree_for_every_potential() {
    // 1024 points on a symmetric grid: the origin is not a node
    let grid = Grid::symmetric(20.0, 1024).unwrap();
    let p = Params::default();
    let psi0 = gaussian_packet(grid, -1.0, 1.0, 1.0).unwrap();
    for spec in catalog() {
        let slicing = TimeSlicing::new(1.0, 4096).unwrap();
        let kernel = evolve_wavefunction(&psi0, &spec, slicing, &p, &PropagatorOptions::default()).unwrap();
        let cfg = SolverConfig { grid, dt: 1e-4, n_steps: 10_000, spec, params: p };
        // same open domain as the propagator's work grid
        let oracle = split_step_evolve_padded(&psi0, &cfg, 2).unwrap();
        let d = kernel.l2_distance(&oracle).unwrap();
        assert!(d < 1e-3, "{} {d}", spec.name());
    }
}

#[test]
fn evolved_norm_matches_initial() {
    let grid = Grid::symmetric(20.0, 1024).unwrap();
    let p = Params::default();
    let psi0 = gaussian_packet(grid, 1.0, 0.8, -0.5).unwrap();
    let spec = Potential::Quartic { lambda4: 0.2 };
    let out = evolve_wavefunction(&psi0, &spec, TimeSlicing::new(1.0, 256).unwrap(), &p, &PropagatorOptions::default()).unwrap();
    assert!((out.norm_sqr() - 1.0).abs() < 1e-8);
}
