use infobridge::distributions::{path_seed, stream_rng, Stream};
use infobridge::pathsim::{simulate_brownian, simulate_deterministic_bridge, simulate_information_path, GridConfig};
use infobridge::verify::{ks_two_sample, RunningStats};
use infobridge::{LengthLaw, ModelSpec, PinningLaw};
use proptest::prelude::*;
use rayon::prelude::*;

/// Bridge built from a Brownian path: `W_t - (t/r) W_r + (t/r) z`.
fn bridge_from_brownian(r: f64, z: f64, t: f64, dt: f64, seed: u64) -> f64 {
    let grid = GridConfig::new(dt, r).unwrap();
    let w = simulate_brownian(&grid, seed);
    let k = w.index_of(t);
    w.value(k) - (t / r) * w.value(grid.n_steps()) + (t / r) * z
}

#[test]
fn conditioned_marginal_matches_brownian_construction() {
    let (r, z, dt) = (1.2, 0.7, 0.01);
    let grid = GridConfig::new(dt, r).unwrap();
    let n = 4000;
    let k = grid.n_steps() / 2;
    let direct: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(11, i);
            let mut rng = stream_rng(seed, Stream::Noise);
            simulate_deterministic_bridge(r, z, &grid, seed, &mut rng).unwrap().value(k)
        })
        .collect();
    let built: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| bridge_from_brownian(r, z, 0.5 * r, dt, path_seed(12, i)))
        .collect();
    let ks = ks_two_sample(&direct, &built).unwrap();
    assert!(ks.p_value > 0.001, "D = {} p = {}", ks.statistic, ks.p_value);
}

#[test]
fn bridge_midpoint_moments() {
    let (r, z, dt) = (2.0, -1.0, 0.01);
    let grid = GridConfig::new(dt, r).unwrap();
    let k = 50;
    let mut stats = RunningStats::default();
    for i in 0..20_000 {
        let mut rng = stream_rng(path_seed(3, i), Stream::Noise);
        stats.push(simulate_deterministic_bridge(r, z, &grid, i, &mut rng).unwrap().value(k));
    }
    // mean t z / r, variance t (r - t) / r
    let (mean, var) = (0.5 * z / r, 0.5 * 1.5 / r);
    assert!((stats.mean() - mean).abs() < 4.0 * stats.stderr());
    assert!((stats.variance() / var - 1.0).abs() < 0.05, "variance {}", stats.variance());
}

#[test]
fn absorption_matches_drawn_length() {
    let model = ModelSpec::new(
        LengthLaw::exponential(2.0).unwrap(),
        PinningLaw::new(vec![-1.0, 0.5, 2.0], vec![0.2, 0.3, 0.5]).unwrap(),
    )
    .unwrap();
    let grid = GridConfig::new(0.01, 3.0).unwrap();
    for i in 0..200 {
        let p = simulate_information_path(&model, &grid, path_seed(5, i));
        match p.absorbed_index {
            Some(k) => {
                assert!(p.time(k) >= p.tau && (k == 0 || p.time(k - 1) < p.tau));
                assert!((k..=grid.n_steps()).all(|j| p.value(j) == p.z));
            }
            None => assert!(p.tau > 3.0),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bridge_hits_pin_at_its_length(r in 0.2f64..3.0, z in -3.0f64..3.0, seed in any::<u64>()) {
        let grid = GridConfig::new(0.01, 4.0).unwrap();
        let mut rng = stream_rng(seed, Stream::Noise);
        let p = simulate_deterministic_bridge(r, z, &grid, seed, &mut rng).unwrap();
        prop_assert_eq!(p.value(0), 0.0);
        let k = p.absorbed_index.unwrap();
        prop_assert_eq!(p.value(k), z);
        prop_assert_eq!(p.value(grid.n_steps()), z);
    }
}
