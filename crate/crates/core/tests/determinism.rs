use pathlab_core::diffusion::{gaussian_step_path_mc, mc_walk_sample};
use pathlab_core::pairpath::positivity_scan;
use pathlab_core::{rng_stream, Params, Potential, Scan, Walk};

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn walk_histograms_do_not_depend_on_thread_count() {
    let spec = Walk::new(1.0, 1.0, 50).unwrap();
    let a = in_pool(1, || mc_walk_sample(&spec, 20_000, &rng_stream(7)).unwrap());
    let b = in_pool(4, || mc_walk_sample(&spec, 20_000, &rng_stream(7)).unwrap());
    assert_eq!(a, b);
    let c = in_pool(3, || mc_walk_sample(&spec, 20_000, &rng_stream(8)).unwrap());
    assert_ne!(a, c);
}

#[test]
fn gaussian_paths_do_not_depend_on_thread_count() {
    let a = in_pool(1, || gaussian_step_path_mc(40, 0.1, 0.5, 10_000, &rng_stream(3)).unwrap());
    let b = in_pool(5, || gaussian_step_path_mc(40, 0.1, 0.5, 10_000, &rng_stream(3)).unwrap());
    let bits = |s: &pathlab_core::diffusion::ContinuousSample| s.endpoints.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn scans_do_not_depend_on_thread_count() {
    let cfg = Scan {
        x0: 0.0,
        x: 1.0,
        total_time: 1.0,
        n_slices: 3,
        w_cutoff: 3.0,
        w_points: 64,
        n_paths: 60,
        scales: [0.1, 0.3, 1.0],
    };
    let spec = Potential::Quartic { lambda4: 1.0 };
    let run = || positivity_scan(&spec, &cfg, &Params::default(), &rng_stream(9)).unwrap();
    let a = in_pool(1, run);
    let b = in_pool(4, run);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
