use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use infobridge::compensator::{compensator_frak, compensator_k, CompensatorCurve, IntensityKernel};
use infobridge::inference::{posterior, Observation};
use infobridge::localtime::{
    bridge_local_time, default_bandwidth, occupation_local_time, tanaka_local_time, EstimatorKind, LocalTimeCurve,
};
use infobridge::pathsim::{map_paths, simulate_ensemble, write_ensemble, GridConfig, SamplePath};
use infobridge::suite::{run_criterion, CriterionResult, SuiteOptions, CRITERIA};
use infobridge::verify::{EnsembleSummary, RunningStats};
use serde::Serialize;

use crate::config::RunConfig;

fn write_rows(path: &Path, header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}")?;
    for (a, b) in rows {
        writeln!(out, "{a},{b}")?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct SimulationSummary {
    pub n_paths: usize,
    pub mean_tau: f64,
    pub unabsorbed: usize,
    pub pin_frequencies: Vec<(f64, f64)>,
}

pub fn simulate(cfg: &RunConfig, csv_paths: usize) -> Result<SimulationSummary> {
    let grid = GridConfig::new(cfg.dt, cfg.horizon)?;
    let paths = simulate_ensemble(&cfg.model, &grid, cfg.seed, cfg.n_paths);
    write_ensemble(cfg.output("ensemble.bin")?, &paths, cfg.seed)?;
    if csv_paths > 0 {
        let dir = cfg.output("paths")?;
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, p) in paths.iter().take(csv_paths).enumerate() {
            p.write_csv(dir.join(format!("path_{i:05}.csv")))?;
        }
    }
    let tau: RunningStats = paths.iter().map(|p| p.tau).collect();
    let n = paths.len() as f64;
    let summary = SimulationSummary {
        n_paths: paths.len(),
        mean_tau: tau.mean(),
        unabsorbed: paths.iter().filter(|p| !p.is_absorbed()).count(),
        pin_frequencies: cfg
            .model
            .pinning
            .points
            .iter()
            .map(|&z| (z, paths.iter().filter(|p| p.z == z).count() as f64 / n))
            .collect(),
    };
    write_json(&cfg.output("summary.json")?, &summary)?;
    println!("paths: {}  mean tau: {:.5}  unabsorbed: {}", summary.n_paths, summary.mean_tau, summary.unabsorbed);
    for (z, freq) in &summary.pin_frequencies {
        println!("pin {z}: frequency {freq:.5}");
    }
    Ok(summary)
}

pub struct PosteriorRequest {
    pub t: f64,
    pub x: f64,
    pub absorbed_at: Option<f64>,
    pub u_max: Option<f64>,
    pub points: usize,
}

pub fn posterior_curves(cfg: &RunConfig, req: &PosteriorRequest) -> Result<()> {
    let observation = match req.absorbed_at {
        Some(tau) => Observation::Absorbed { tau, z: req.x },
        None => Observation::Running { x: req.x },
    };
    let state = posterior(&cfg.model, req.t, observation, &cfg.quadrature)?;
    let u_max = req.u_max.unwrap_or(if cfg.horizon > req.t { cfg.horizon } else { 2.0 * req.t });
    anyhow::ensure!(u_max > req.t, "u range must extend beyond t = {}", req.t);
    let steps = req.points.max(2) - 1;
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let u = req.t + (u_max - req.t) * k as f64 / steps as f64;
        rows.push((u, state.survival(u)?));
    }
    write_rows(&cfg.output("survival.csv")?, "u,probability", rows)?;
    let pins = cfg.model.pinning.points.iter().copied().zip(state.pin_weights.iter().copied());
    write_rows(&cfg.output("pins.csv")?, "z,probability", pins)?;
    println!("E[Z | F_t] = {:.6}", state.pin_mean());
    Ok(())
}

fn local_times(cfg: &RunConfig, path: &SamplePath) -> infobridge::Result<Vec<LocalTimeCurve>> {
    let eps = default_bandwidth(cfg.dt, cfg.bandwidth_c);
    cfg.model
        .pinning
        .points
        .iter()
        .map(|&z| {
            Ok(match cfg.local_time {
                EstimatorKind::Occupation => occupation_local_time(path, z, eps)?,
                EstimatorKind::Tanaka => tanaka_local_time(path, z),
                EstimatorKind::Bridge => bridge_local_time(path, z),
            })
        })
        .collect()
}

type CurvePair = (CompensatorCurve, Option<CompensatorCurve>);

#[derive(Debug, Serialize)]
pub struct CompensatorSummary {
    pub plain: EnsembleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted: Option<EnsembleSummary>,
}

pub fn compensators(cfg: &RunConfig, weighted: bool, csv_paths: usize, summary_points: usize) -> Result<CompensatorSummary> {
    let grid = GridConfig::new(cfg.dt, cfg.horizon)?;
    let kernel = IntensityKernel::build(&cfg.model, 0.5 * cfg.dt, cfg.horizon, &cfg.quadrature)?;
    let n_times = summary_points.max(1);
    let times: Vec<f64> = (1..=n_times).map(|k| cfg.horizon * k as f64 / n_times as f64).collect();

    let curves: Vec<CurvePair> = map_paths(&cfg.model, &grid, cfg.seed, cfg.n_paths, |p| {
        let levels = local_times(cfg, p)?;
        let k = compensator_k(&cfg.model, p, &levels, &kernel)?;
        let frak = if weighted {
            Some(compensator_frak(&cfg.model, p, &levels, &kernel, cfg.weight)?)
        } else {
            None
        };
        Ok::<_, infobridge::Error>((k, frak))
    })
    .into_iter()
    .collect::<std::result::Result<_, _>>()?;

    if csv_paths > 0 {
        let dir = cfg.output("compensators")?;
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, (k, frak)) in curves.iter().take(csv_paths).enumerate() {
            k.write_csv(dir.join(format!("k_{i:05}.csv")))?;
            if let Some(frak) = frak {
                frak.write_csv(dir.join(format!("weighted_{i:05}.csv")))?;
            }
        }
    }
    let sample = |pick: &dyn Fn(&CurvePair) -> Option<&CompensatorCurve>| {
        let rows: Option<Vec<Vec<f64>>> = curves
            .iter()
            .map(|c| pick(c).map(|curve| times.iter().map(|&t| curve.at_time(t)).collect()))
            .collect();
        rows.map(|rows| EnsembleSummary::from_rows(&times, &rows)).transpose()
    };
    let summary = CompensatorSummary {
        plain: sample(&|c| Some(&c.0))?.expect("plain curve for every path"),
        weighted: sample(&|c| c.1.as_ref())?,
    };
    write_json(&cfg.output("compensator_summary.json")?, &summary)?;
    for point in &summary.plain.points {
        println!("t = {:.4}  E[K_t] = {:.5} ± {:.5}", point.t, point.mean, point.stderr);
    }
    Ok(summary)
}

pub struct VerifyRequest {
    pub only: Option<Vec<u32>>,
    pub scale: f64,
    pub corrupt_kernel: Option<f64>,
}

/// Runs the acceptance suite and writes `reports.json`. Returns whether every
/// criterion passed.
pub fn verify(cfg: &RunConfig, req: &VerifyRequest) -> Result<bool> {
    let opts = SuiteOptions {
        master_seed: cfg.seed,
        path_scale: req.scale,
        only: req.only.clone(),
        corrupt_kernel: req.corrupt_kernel,
        quadrature: cfg.quadrature,
    };
    let ids = opts.only.clone().unwrap_or_else(|| CRITERIA.to_vec());
    let mut results: Vec<CriterionResult> = Vec::with_capacity(ids.len());
    for id in ids {
        let result = run_criterion(id, &opts)?;
        println!(
            "criterion {:>2} {} ({}, {:.1} s)",
            id,
            if result.pass { "PASS" } else { "FAIL" },
            result.title,
            result.seconds
        );
        for r in result.reports.iter().filter(|r| !r.pass) {
            println!("    failed: {} statistic {:.4e} threshold {:.4e}: {}", r.name, r.statistic, r.threshold, r.detail);
        }
        results.push(result);
    }
    write_json(&cfg.output("reports.json")?, &results)?;
    Ok(results.iter().all(|r| r.pass))
}
