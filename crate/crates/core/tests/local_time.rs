use infobridge::distributions::path_seed;
use infobridge::localtime::{
    bridge_local_time, default_bandwidth, occupation_formula_check, occupation_local_time, tanaka_local_time,
    DEFAULT_BANDWIDTH_C,
};
use infobridge::pathsim::{simulate_brownian, GridConfig};
use infobridge::verify::{refinement_report, RunningStats};
use rayon::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn all_estimators_have_brownian_mean_at_zero() {
    let dt = 1e-3;
    let grid = GridConfig::new(dt, 1.0).unwrap();
    let eps = default_bandwidth(dt, DEFAULT_BANDWIDTH_C);
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let rows: Vec<[f64; 3]> = (0..4000u64)
        .into_par_iter()
        .map(|i| {
            let p = simulate_brownian(&grid, path_seed(21, i));
            [
                occupation_local_time(&p, 0.0, eps).unwrap().terminal(),
                tanaka_local_time(&p, 0.0).terminal(),
                bridge_local_time(&p, 0.0).terminal(),
            ]
        })
        .collect();
    for (c, name) in ["occupation", "tanaka", "bridge"].iter().enumerate() {
        let stats: RunningStats = rows.iter().map(|r| r[c]).collect();
        // the grid estimators lose O(√dt); allow for it on top of the noise
        let slack = 4.0 * stats.stderr() + 2.0 * dt.sqrt();
        assert!((stats.mean() - target).abs() < slack, "{name}: {} ± {}", stats.mean(), stats.stderr());
    }
}

#[test]
fn local_time_vanishes_away_from_the_path() {
    let dt = 1e-3;
    let grid = GridConfig::new(dt, 1.0).unwrap();
    let eps = default_bandwidth(dt, DEFAULT_BANDWIDTH_C);
    for i in 0..50 {
        let p = simulate_brownian(&grid, path_seed(22, i));
        let top = p.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let level = top + eps + 1e-9;
        assert_eq!(occupation_local_time(&p, level, eps).unwrap().terminal(), 0.0);
        assert!(tanaka_local_time(&p, level).terminal() < 1e-12);
        assert!(bridge_local_time(&p, top + 1.0).terminal() < 1e-6);
    }
}

#[test]
fn local_time_is_continuous_in_the_level() {
    let dt = 1e-4;
    let grid = GridConfig::new(dt, 1.0).unwrap();
    let mean_gap = |delta: f64| {
        let total: f64 = (0..400u64)
            .into_par_iter()
            .map(|i| {
                let p = simulate_brownian(&grid, path_seed(23, i));
                (bridge_local_time(&p, 0.2).terminal() - bridge_local_time(&p, 0.2 + delta).terminal()).abs()
            })
            .sum();
        total / 400.0
    };
    // Hölder-1/2 in the level: a 16 times smaller shift gives about a 4 times smaller gap
    let (wide, narrow) = (mean_gap(0.04), mean_gap(0.0025));
    assert!(narrow < 0.4 * wide && narrow > 0.1 * wide, "gaps {wide} and {narrow}");
}

#[test]
fn occupation_and_tanaka_agree_under_refinement() {
    let errors: Vec<Vec<f64>> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&dt| {
            let grid = GridConfig::new(dt, 1.0).unwrap();
            let eps = default_bandwidth(dt, DEFAULT_BANDWIDTH_C);
            (0..500u64)
                .into_par_iter()
                .map(|i| {
                    let p = simulate_brownian(&grid, path_seed(24, i));
                    let occ = occupation_local_time(&p, 0.3, eps).unwrap().terminal();
                    (occ - tanaka_local_time(&p, 0.3).terminal()).abs()
                })
                .collect()
        })
        .collect();
    let report = refinement_report("|occupation - tanaka|", &errors, 24).unwrap();
    assert!(report.pass, "{}", report.detail);
    assert!(median(errors[2].clone()) < median(errors[0].clone()));
}

#[test]
fn occupation_formula_for_a_square() {
    let dt = 1e-4;
    let grid = GridConfig::new(dt, 1.0).unwrap();
    let eps = default_bandwidth(dt, DEFAULT_BANDWIDTH_C);
    for i in 0..5 {
        let p = simulate_brownian(&grid, path_seed(25, i));
        let (time_side, space_side) = occupation_formula_check(&p, |x| x * x, 1.0, eps).unwrap();
        assert!((time_side - space_side).abs() < 0.05 * time_side.max(1e-3), "{time_side} vs {space_side}");
    }
}
