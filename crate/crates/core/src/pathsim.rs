//! Exact simulation of the information process on a uniform grid.
//!
//! Given `(τ, Z) = (r, z)` the process is a Brownian bridge from 0 to `z` over
//! `[0, r]`, held at `z` afterwards. It is sampled step by step from the
//! Gaussian conditional law of the next grid value, which is exact on the grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{path_seed, stream_rng, ModelSpec, Stream};
use crate::error::{Error, Result};

/// Uniform time grid `0, dt, 2 dt, …, horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Stop storing values once the path is absorbed; later values are `z`.
    #[serde(default)]
    pub truncate_after_absorption: bool,
}

impl GridConfig {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        let cfg = GridConfig {
            dt,
            horizon,
            truncate_after_absorption: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn truncated(mut self) -> Self {
        self.truncate_after_absorption = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must exceed dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub dt: f64,
    /// Number of grid steps of the nominal horizon.
    pub n_steps: usize,
    /// Stored grid values from time 0. May stop at `absorbed_index`.
    pub values: Vec<f64>,
    pub tau: f64,
    pub z: f64,
    pub seed: u64,
    /// First grid index with `k dt >= τ`; `None` if τ lies beyond the horizon.
    pub absorbed_index: Option<usize>,
}

impl SamplePath {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Grid value at index `k <= n_steps`, including the held tail.
    pub fn value(&self, k: usize) -> f64 {
        match self.values.get(k) {
            Some(&v) => v,
            None => {
                debug_assert!(k <= self.n_steps && self.absorbed_index.is_some());
                self.z
            }
        }
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed_index.is_some()
    }

    /// Index of the last grid step to take into account: steps `j` with
    /// `t_j < τ`, capped by the horizon.
    pub fn active_steps(&self) -> usize {
        match self.absorbed_index {
            Some(k) => k,
            None => self.n_steps,
        }
    }

    /// Grid index of time `t`, rounded to the nearest node.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.n_steps)
    }

    /// All grid values up to the horizon.
    pub fn full_values(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.value(k)).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(out, "t,xi")?;
            for k in 0..=self.n_steps {
                writeln!(out, "{},{}", self.time(k), self.value(k))?;
            }
            out.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}

fn bridge_values<R: Rng + ?Sized>(r: f64, z: f64, grid: &GridConfig, rng: &mut R) -> (Vec<f64>, Option<usize>) {
    let n = grid.n_steps();
    let dt = grid.dt;
    let mut values = Vec::with_capacity(if grid.truncate_after_absorption {
        ((r / dt).ceil() as usize + 1).min(n + 1)
    } else {
        n + 1
    });
    values.push(0.0);
    let mut x = 0.0;
    let mut absorbed = None;
    for k in 0..n {
        let t = k as f64 * dt;
        let next = (k + 1) as f64 * dt;
        if next >= r {
            absorbed = Some(k + 1);
            values.push(z);
            break;
        }
        let remaining = r - t;
        let mean = x + dt * (z - x) / remaining;
        let var = dt * (remaining - dt) / remaining;
        let eps: f64 = rng.sample(StandardNormal);
        x = mean + var.sqrt() * eps;
        values.push(x);
    }
    if let Some(k) = absorbed {
        if !grid.truncate_after_absorption {
            values.resize(n + 1, z);
        }
        debug_assert!(values.len() > k);
    }
    (values, absorbed)
}

/// Brownian bridge of fixed length `r` pinned at `z`, held at `z` after `r`.
pub fn simulate_deterministic_bridge<R: Rng + ?Sized>(
    r: f64,
    z: f64,
    grid: &GridConfig,
    seed: u64,
    rng: &mut R,
) -> Result<SamplePath> {
    grid.validate()?;
    if !(grid.dt < r) {
        return Err(Error::Domain(format!("bridge length {r} must exceed the step {}", grid.dt)));
    }
    let (values, absorbed_index) = bridge_values(r, z, grid, rng);
    Ok(SamplePath {
        dt: grid.dt,
        n_steps: grid.n_steps(),
        values,
        tau: r,
        z,
        seed,
        absorbed_index,
    })
}

/// One path of the information process. τ, Z and the Gaussian increments are
/// drawn from three independent streams of `seed`.
pub fn simulate_information_path(model: &ModelSpec, grid: &GridConfig, seed: u64) -> SamplePath {
    let tau = model.tau.sample(&mut stream_rng(seed, Stream::Length));
    let z = model.pinning.sample(&mut stream_rng(seed, Stream::Pin));
    let mut noise = stream_rng(seed, Stream::Noise);
    let (values, absorbed_index) = bridge_values(tau, z, grid, &mut noise);
    SamplePath {
        dt: grid.dt,
        n_steps: grid.n_steps(),
        values,
        tau,
        z,
        seed,
        absorbed_index,
    }
}

/// Standard Brownian motion on the grid, recorded as a path that is never
/// absorbed (`τ = ∞`).
pub fn simulate_brownian(grid: &GridConfig, seed: u64) -> SamplePath {
    let mut rng = stream_rng(seed, Stream::Noise);
    let n = grid.n_steps();
    let sd = grid.dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    values.push(x);
    for _ in 0..n {
        let eps: f64 = rng.sample(StandardNormal);
        x += sd * eps;
        values.push(x);
    }
    SamplePath {
        dt: grid.dt,
        n_steps: n,
        values,
        tau: f64::INFINITY,
        z: 0.0,
        seed,
        absorbed_index: None,
    }
}

/// Applies `f` to paths `0..n_paths` of the ensemble with master seed
/// `master`, in parallel, returning results in path order. Paths are
/// generated on the fly and dropped after use.
pub fn map_paths<T, F>(model: &ModelSpec, grid: &GridConfig, master: u64, n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&SamplePath) -> T + Sync,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_information_path(model, grid, path_seed(master, i));
            f(&path)
        })
        .collect()
}

pub fn simulate_ensemble(model: &ModelSpec, grid: &GridConfig, master: u64, n_paths: usize) -> Vec<SamplePath> {
    map_paths(model, grid, master, n_paths, |p| p.clone())
}

/// Sum of squared increments over grid steps ending at or before `t`.
pub fn quadratic_variation(path: &SamplePath, t: f64) -> Result<f64> {
    quadratic_variation_of(&path.full_values_to(t)?, 0)
}

/// Sum of squared increments of a sequence of grid values, skipping the first
/// `skip` steps.
pub fn quadratic_variation_of(values: &[f64], skip: usize) -> Result<f64> {
    Ok(values.windows(2).skip(skip).map(|w| (w[1] - w[0]).powi(2)).sum())
}

impl SamplePath {
    fn full_values_to(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) || t > self.horizon() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon())));
        }
        let k = ((t / self.dt) * (1.0 + 1e-12)).floor() as usize;
        let stop = k.min(self.n_steps).min(self.values.len().saturating_sub(1));
        Ok(self.values[..=stop].to_vec())
    }
}

const MAGIC: &[u8; 8] = b"IBENS001";

/// Writes an ensemble as little-endian binary: a magic tag, then `dt`,
/// `n_steps`, `n_paths`, `seed`, then the row-major grid values of every path,
/// then one `(τ, Z)` pair per path.
pub fn write_ensemble(path: impl AsRef<Path>, paths: &[SamplePath], seed: u64) -> Result<()> {
    let path = path.as_ref();
    let first = paths
        .first()
        .ok_or_else(|| Error::Contract("cannot write an empty ensemble".into()))?;
    if paths.iter().any(|p| p.n_steps != first.n_steps || p.dt != first.dt) {
        return Err(Error::Contract("ensemble paths must share one grid".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&first.dt.to_le_bytes())?;
        out.write_all(&(first.n_steps as u64).to_le_bytes())?;
        out.write_all(&(paths.len() as u64).to_le_bytes())?;
        out.write_all(&seed.to_le_bytes())?;
        for p in paths {
            for k in 0..=p.n_steps {
                out.write_all(&p.value(k).to_le_bytes())?;
            }
        }
        for p in paths {
            out.write_all(&p.tau.to_le_bytes())?;
            out.write_all(&p.z.to_le_bytes())?;
        }
        out.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Reads an ensemble written by [`write_ensemble`]. Path seeds are rederived
/// from the stored master seed.
pub fn read_ensemble(path: impl AsRef<Path>) -> Result<(Vec<SamplePath>, u64)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let malformed = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut word = [0u8; 8];
    let mut next = |input: &mut BufReader<File>| -> Result<[u8; 8]> {
        input
            .read_exact(&mut word)
            .map_err(|_| malformed("truncated file"))?;
        Ok(word)
    };
    if &next(&mut input)? != MAGIC {
        return Err(malformed("not an ensemble file"));
    }
    let dt = f64::from_le_bytes(next(&mut input)?);
    let n_steps = u64::from_le_bytes(next(&mut input)?) as usize;
    let n_paths = u64::from_le_bytes(next(&mut input)?) as usize;
    let seed = u64::from_le_bytes(next(&mut input)?);
    if !(dt > 0.0) || n_steps == 0 || n_steps > 1 << 32 || n_paths > 1 << 32 {
        return Err(malformed("implausible header"));
    }
    let mut rows = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let mut row = Vec::with_capacity(n_steps + 1);
        for _ in 0..=n_steps {
            row.push(f64::from_le_bytes(next(&mut input)?));
        }
        rows.push(row);
    }
    let mut paths = Vec::with_capacity(n_paths);
    for (i, values) in rows.into_iter().enumerate() {
        let tau = f64::from_le_bytes(next(&mut input)?);
        let z = f64::from_le_bytes(next(&mut input)?);
        let absorbed_index = (0..=n_steps).find(|&k| k as f64 * dt >= tau);
        paths.push(SamplePath {
            dt,
            n_steps,
            values,
            tau,
            z,
            seed: path_seed(seed, i as u64),
            absorbed_index,
        });
    }
    Ok((paths, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{LengthLaw, PinningLaw};

    #[test]
    fn bridge_marginal_moments() {
        let grid = GridConfig::new(0.25, 1.5).unwrap();
        let n = 100_000;
        let mut rng = stream_rng(9, Stream::Noise);
        let mut centered = Vec::with_capacity(n);
        let mut pinned = Vec::with_capacity(n);
        for _ in 0..n {
            centered.push(simulate_deterministic_bridge(1.0, 0.0, &grid, 9, &mut rng).unwrap().values[2]);
            pinned.push(simulate_deterministic_bridge(1.0, 5.0, &grid, 9, &mut rng).unwrap().values[2]);
        }
        let var = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // Var of the sample second moment of N(0, 1/4) is 2 (1/4)² / n.
        assert!((var - 0.25).abs() < 3.0 * (2.0 * 0.0625 / n as f64).sqrt(), "{var}");
        let mean = pinned.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn bridge_rejects_coarse_step() {
        let grid = GridConfig::new(0.5, 2.0).unwrap();
        let mut rng = stream_rng(1, Stream::Noise);
        assert!(simulate_deterministic_bridge(0.5, 0.0, &grid, 1, &mut rng).is_err());
    }

    #[test]
    fn absorbed_paths_are_flat() {
        let model = ModelSpec::new(
            LengthLaw::uniform(0.5, 1.5).unwrap(),
            PinningLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let grid = GridConfig::new(0.01, 2.0).unwrap();
        for i in 0..50 {
            let p = simulate_information_path(&model, &grid, path_seed(3, i));
            let k = p.absorbed_index.unwrap();
            assert!(p.time(k) >= p.tau && p.time(k - 1) < p.tau);
            assert!(p.values[k..].iter().all(|&v| v == p.z));
            assert_eq!(p.values[0], 0.0);
            assert_eq!(p.values.len(), 201);
        }
    }

    #[test]
    fn truncated_storage_keeps_values() {
        let model = ModelSpec::new(LengthLaw::exponential(1.0).unwrap(), PinningLaw::single(0.5)).unwrap();
        let full = GridConfig::new(0.01, 20.0).unwrap();
        let short = full.truncated();
        for i in 0..20 {
            let a = simulate_information_path(&model, &full, path_seed(8, i));
            let b = simulate_information_path(&model, &short, path_seed(8, i));
            assert_eq!(a.full_values(), b.full_values());
            assert!(b.values.len() <= a.values.len());
        }
    }

    #[test]
    fn paths_are_reproducible() {
        let model = ModelSpec::new(LengthLaw::gamma(2.0, 0.5).unwrap(), PinningLaw::single(1.0)).unwrap();
        let grid = GridConfig::new(0.001, 3.0).unwrap();
        let a = simulate_information_path(&model, &grid, 77);
        let b = simulate_information_path(&model, &grid, 77);
        assert_eq!(a, b);
    }

    #[test]
    fn single_pin_at_origin_ends_at_zero() {
        let model = ModelSpec::new(LengthLaw::exponential(2.0).unwrap(), PinningLaw::single(0.0)).unwrap();
        let grid = GridConfig::new(0.01, 10.0).unwrap();
        let p = simulate_information_path(&model, &grid, 5);
        assert_eq!(p.z, 0.0);
        assert_eq!(*p.values.last().unwrap(), 0.0);
    }

    #[test]
    fn quadratic_variation_edges() {
        let model = ModelSpec::new(LengthLaw::uniform(1.0, 2.0).unwrap(), PinningLaw::single(0.0)).unwrap();
        let grid = GridConfig::new(1e-4, 3.0).unwrap();
        let p = simulate_information_path(&model, &grid, 12);
        assert_eq!(quadratic_variation(&p, 0.0).unwrap(), 0.0);
        let at_tau = quadratic_variation(&p, p.time(p.absorbed_index.unwrap())).unwrap();
        assert_eq!(quadratic_variation(&p, 3.0).unwrap(), at_tau);
        assert!((at_tau / p.tau - 1.0).abs() < 0.1);
        assert!(quadratic_variation(&p, 3.5).is_err());
    }

    #[test]
    fn unabsorbed_paths_are_flagged() {
        let model = ModelSpec::new(LengthLaw::uniform(5.0, 6.0).unwrap(), PinningLaw::single(0.0)).unwrap();
        let grid = GridConfig::new(0.01, 1.0).unwrap();
        let p = simulate_information_path(&model, &grid, 1);
        assert!(!p.is_absorbed());
        assert_eq!(p.values.len(), 101);
    }

    #[test]
    fn ensemble_file_round_trip() {
        let model = ModelSpec::new(
            LengthLaw::exponential(1.0).unwrap(),
            PinningLaw::new(vec![-1.0, 2.0], vec![0.4, 0.6]).unwrap(),
        )
        .unwrap();
        let grid = GridConfig::new(0.05, 2.0).unwrap();
        let paths = simulate_ensemble(&model, &grid, 21, 7);
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("e.bin");
        write_ensemble(&file, &paths, 21).unwrap();
        let (back, seed) = read_ensemble(&file).unwrap();
        assert_eq!(seed, 21);
        assert_eq!(back, paths);
        std::fs::write(&file, b"garbage").unwrap();
        assert!(matches!(read_ensemble(&file), Err(Error::Format { .. })));
    }
}
