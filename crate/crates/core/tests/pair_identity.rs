use pathlab_core::pairpath::{direct_pair_quadrature, transition_probability_via_pairs};
use pathlab_core::propagator::compose_propagator;
use pathlab_core::{Grid, Params, Potential, Slicing, Window};

#[test]
fn pair_probability_is_the_kernel_modulus() {
    let grid = Grid::new(-10.0, 10.0, 513).unwrap();
    let p = Params::default();
    let spec = Potential::Harmonic { omega: 0.7 };
    let slicing = Slicing::new(1.0, 16).unwrap();
    let k = compose_propagator(&spec, 0.25, slicing, &grid, &p).unwrap();
    for i in [100, 256, 400] {
        let via = transition_probability_via_pairs(&spec, 0.25, grid.x(i), slicing, &grid, &p).unwrap();
        assert_eq!(via.to_bits(), k.field.values()[i].norm_sqr().to_bits());
    }
    assert!(transition_probability_via_pairs(&spec, 0.25, 0.0101, slicing, &grid, &p).is_err());
}

#[test]
fn free_pair_quadrature_on_64_points() {
    let p = Params::default();
    let grid = Grid::new(-8.0, 8.0, 257).unwrap();
    let slicing = Slicing::new(1.0, 2).unwrap();
    for x in [0.0, 1.0, -2.0] {
        let anchor = transition_probability_via_pairs(&Potential::Free, 0.0, x, slicing, &grid, &p).unwrap();
        let mid = x / 2.0;
        let zg = Grid::new(mid - 8.0, mid + 8.0, 64).unwrap();
        let win = Window::symmetric(1.0, 256).unwrap();
        let direct = direct_pair_quadrature(&Potential::Free, 0.0, x, slicing, &p, &zg, &win).unwrap();
        assert!((direct / anchor - 1.0).abs() < 0.05, "{x} {direct} {anchor}");
    }
}
