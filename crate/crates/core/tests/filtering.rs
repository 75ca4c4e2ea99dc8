use infobridge::inference::{innovation_path_cached, posterior, transition_law, DriftCache, Observation};
use infobridge::kernels::integrate;
use infobridge::pathsim::{map_paths, GridConfig};
use infobridge::verify::RunningStats;
use infobridge::{LengthLaw, ModelSpec, PinningLaw, QuadratureConfig};

fn gamma_two_pins() -> ModelSpec {
    ModelSpec::new(
        LengthLaw::gamma(3.0, 0.5).unwrap(),
        PinningLaw::new(vec![-1.0, 1.0], vec![0.4, 0.6]).unwrap(),
    )
    .unwrap()
}

fn uniform_two_pins() -> ModelSpec {
    ModelSpec::new(
        LengthLaw::uniform(0.5, 2.0).unwrap(),
        PinningLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
    )
    .unwrap()
}

/// Integrates `g` against the continuous part of the law from `(t, x)` to `s`,
/// splitting the range at the pins.
fn integrate_over_continuous<G: Fn(f64) -> f64>(model: &ModelSpec, t: f64, x: f64, s: f64, g: G) -> f64 {
    let cfg = QuadratureConfig::default();
    let law = transition_law(model, t, x, s, &cfg).unwrap();
    let (lo, hi) = law.support_hint();
    let mut cuts = vec![lo];
    cuts.extend(model.pinning.points.iter().copied());
    cuts.push(hi);
    let tight = QuadratureConfig {
        rel_tol: 1e-8,
        abs_tol: 1e-12,
        ..cfg
    };
    cuts.windows(2)
        .map(|w| integrate(|y| law.density(y).unwrap() * g(y), w[0], w[1], &tight).unwrap().value)
        .sum()
}

#[test]
fn chapman_kolmogorov_for_atoms_and_density() {
    let model = gamma_two_pins();
    let cfg = QuadratureConfig::default();
    let (t, x, s, u) = (0.5, 0.3, 0.9, 1.4);
    let direct = transition_law(&model, t, x, u, &cfg).unwrap();
    let first = transition_law(&model, t, x, s, &cfg).unwrap();

    for i in 0..model.n_pins() {
        let via = first.atoms[i]
            + integrate_over_continuous(&model, t, x, s, |y| transition_law(&model, s, y, u, &cfg).unwrap().atoms[i]);
        assert!(
            (via - direct.atoms[i]).abs() < 1e-5 * direct.atoms[i].max(1e-3),
            "atom {i}: {via} vs {}",
            direct.atoms[i]
        );
    }
    for y in [-0.5, 0.4, 1.7] {
        let via =
            integrate_over_continuous(&model, t, x, s, |m| transition_law(&model, s, m, u, &cfg).unwrap().density(y).unwrap());
        let want = direct.density(y).unwrap();
        assert!((via - want).abs() < 1e-5 * want, "density at {y}: {via} vs {want}");
    }
}

#[test]
fn posterior_mean_of_indicator_matches_survival() {
    let model = gamma_two_pins();
    let cfg = QuadratureConfig::default();
    let post = posterior(&model, 0.7, Observation::Running { x: -0.4 }, &cfg).unwrap();
    for u in [0.8, 1.2, 2.5] {
        let by_expectation = post.expectation(|r, _| if r > u { 1.0 } else { 0.0 }).unwrap();
        let direct = post.survival(u).unwrap();
        assert!((by_expectation - direct).abs() < 1e-6, "u = {u}: {by_expectation} vs {direct}");
    }
    let pins: f64 = post.pin_weights.iter().sum();
    assert!((pins - 1.0).abs() < 1e-10);
}

#[test]
fn innovation_is_a_stopped_brownian_motion() {
    let model = uniform_two_pins();
    let cfg = QuadratureConfig::default();
    let dt = 1e-3;
    let grid = GridConfig::new(dt, 1.5).unwrap();
    let cache = DriftCache::build(&model, 0.5 * dt, 1.5, &cfg).unwrap();
    let n = 2000;
    let (i_half, i_one, t_one) = (grid.n_steps() / 3, 2 * grid.n_steps() / 3, 1.0);
    let rows = map_paths(&model, &grid, 0x5eed, n, |p| {
        let innovation = innovation_path_cached(p, &cache).unwrap();
        (innovation[i_half], innovation[i_one], innovation[grid.n_steps()], p.tau.min(t_one))
    });

    let mut at_end = RunningStats::default();
    let mut square = RunningStats::default();
    let mut stopped = RunningStats::default();
    let mut cross = RunningStats::default();
    for &(a, b, c, clock) in &rows {
        at_end.push(c);
        square.push(b * b);
        stopped.push(clock);
        cross.push(a * (b - a));
    }
    assert!(at_end.mean().abs() < 3.5 * at_end.stderr(), "mean {} ± {}", at_end.mean(), at_end.stderr());
    // E[I_1²] = E[1 ∧ τ]
    let gap = square.mean() - stopped.mean();
    assert!(gap.abs() < 3.5 * square.stderr(), "E[I²] {} vs E[t∧τ] {}", square.mean(), stopped.mean());
    // increments over [0, 0.5] and [0.5, 1] are uncorrelated
    assert!(cross.mean().abs() < 3.5 * cross.stderr(), "cross moment {} ± {}", cross.mean(), cross.stderr());
}
