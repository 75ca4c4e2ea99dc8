//! Pathwise local time of the information process at a fixed level.
//!
//! Three estimators on the path grid: the occupation density, which counts the
//! time spent within `ε` of the level against the clock `t ∧ τ`; the discrete
//! Tanaka formula; and the conditional expectation of the local time given the
//! grid values, which treats the path between two nodes as a Brownian bridge.
//! All are flat after absorption.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::pathsim::SamplePath;

/// Bandwidth multiplier `c` in `ε = c √dt`.
pub const DEFAULT_BANDWIDTH_C: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Occupation,
    Tanaka,
    Bridge,
}

/// `t ↦ L(t, level)` on the grid of the path it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeCurve {
    pub level: f64,
    pub dt: f64,
    /// Value at every grid node `0..=n_steps`.
    pub values: Vec<f64>,
    /// Half-width of the occupation band; `None` for Tanaka curves.
    pub bandwidth: Option<f64>,
    pub kind: EstimatorKind,
}

impl LocalTimeCurve {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Value at grid node `k`.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k.min(self.values.len() - 1)]
    }

    /// Value at the grid node nearest to `t`.
    pub fn at_time(&self, t: f64) -> f64 {
        self.at((t / self.dt).round() as usize)
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(out, "t,L")?;
            for (k, v) in self.values.iter().enumerate() {
                writeln!(out, "{},{}", self.time(k), v)?;
            }
            out.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}

/// `ε = c √dt`.
pub fn default_bandwidth(dt: f64, c: f64) -> f64 {
    c * dt.sqrt()
}

/// Clock weight of grid step `j`: the part of `[t_j, t_{j+1}]` before τ.
fn step_weight(path: &SamplePath, j: usize) -> f64 {
    (path.tau - path.time(j)).clamp(0.0, path.dt)
}

/// `L(t, z) ≈ (1/2ε) ∫_0^{t∧τ} 1{|ξ_s - z| <= ε} ds`, left-point rule.
pub fn occupation_local_time(path: &SamplePath, level: f64, bandwidth: f64) -> Result<LocalTimeCurve> {
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let scale = 0.5 / bandwidth;
    let active = path.active_steps();
    let mut values = Vec::with_capacity(path.n_steps + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for j in 0..path.n_steps {
        if j < active && (path.value(j) - level).abs() <= bandwidth {
            acc += scale * step_weight(path, j);
        }
        values.push(acc);
    }
    Ok(LocalTimeCurve {
        level,
        dt: path.dt,
        values,
        bandwidth: Some(bandwidth),
        kind: EstimatorKind::Occupation,
    })
}

/// Discrete Tanaka formula
/// `|ξ_t - z| - |ξ_0 - z| - Σ sgn(ξ_{t_j} - z)(ξ_{t_{j+1}} - ξ_{t_j})`
/// with `sgn(0) = -1`, clipped to its running maximum.
pub fn tanaka_local_time(path: &SamplePath, level: f64) -> LocalTimeCurve {
    let active = path.active_steps();
    let start = (path.value(0) - level).abs();
    let mut values = Vec::with_capacity(path.n_steps + 1);
    let mut martingale = 0.0;
    let mut running_max: f64 = 0.0;
    values.push(0.0);
    for j in 0..path.n_steps {
        let (a, b) = (path.value(j), path.value(j + 1));
        if j < active {
            let sign = if a - level > 0.0 { 1.0 } else { -1.0 };
            martingale += sign * (b - a);
        }
        let raw = (b - level).abs() - start - martingale;
        running_max = running_max.max(raw);
        values.push(running_max);
    }
    LocalTimeCurve {
        level,
        dt: path.dt,
        values,
        bandwidth: None,
        kind: EstimatorKind::Tanaka,
    }
}

/// `e^{y²} erfc(y)` for `y >= 0`.
fn erfcx(y: f64) -> f64 {
    if y < 25.0 {
        (y * y).exp() * erfc(y)
    } else {
        let q = 1.0 / (2.0 * y * y);
        (1.0 - q * (1.0 - 3.0 * q * (1.0 - 5.0 * q))) / (y * std::f64::consts::PI.sqrt())
    }
}

/// Expected local time at `level` of a Brownian bridge from `a` to `b` over
/// time `span`: `½ √(2π span) e^{(b-a)²/2span} erfc((|a-z| + |b-z|) / √(2 span))`.
pub fn bridge_step_local_time(a: f64, b: f64, span: f64, level: f64) -> f64 {
    if !(span > 0.0) {
        return 0.0;
    }
    let root = (2.0 * span).sqrt();
    let y = ((a - level).abs() + (b - level).abs()) / root;
    let u = (b - a) / root;
    0.5 * (std::f64::consts::PI * 2.0 * span).sqrt() * (u * u - y * y).exp() * erfcx(y)
}

/// Conditional expectation of the local time given the grid values: each step
/// before τ contributes [`bridge_step_local_time`], the step straddling τ
/// running from its left node to `Z` over `τ - t_j`.
pub fn bridge_local_time(path: &SamplePath, level: f64) -> LocalTimeCurve {
    let active = path.active_steps();
    let mut values = Vec::with_capacity(path.n_steps + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for j in 0..path.n_steps {
        if j < active {
            let span = (path.tau - path.time(j)).clamp(0.0, path.dt);
            let end = if j + 1 == active && path.is_absorbed() { path.z } else { path.value(j + 1) };
            acc += bridge_step_local_time(path.value(j), end, span, level);
        }
        values.push(acc);
    }
    LocalTimeCurve {
        level,
        dt: path.dt,
        values,
        bandwidth: None,
        kind: EstimatorKind::Bridge,
    }
}

/// Both sides of the occupation time formula up to `t`:
/// `(∫_0^{t∧τ} g(ξ_s) ds, ∫ g(x) L(t, x) dx)`, the second with occupation
/// local times on a level grid of spacing `ε / 16`.
pub fn occupation_formula_check<G: Fn(f64) -> f64>(path: &SamplePath, g: G, t: f64, bandwidth: f64) -> Result<(f64, f64)> {
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let k_end = path.index_of(t);
    let active = path.active_steps().min(k_end);
    let mut time_side = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..active {
        let x = path.value(j);
        time_side += g(x) * step_weight(path, j);
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if active == 0 {
        return Ok((0.0, 0.0));
    }
    let step = bandwidth / 16.0;
    let lo = lo - bandwidth - step;
    let n = ((hi + bandwidth + step - lo) / step).ceil() as usize;
    let mut space_side = 0.0;
    for i in 0..=n {
        let level = lo + step * i as f64;
        let weight = if i == 0 || i == n { 0.5 } else { 1.0 };
        let curve = occupation_local_time(path, level, bandwidth)?;
        space_side += weight * step * g(level) * curve.at(k_end);
    }
    Ok((time_side, space_side))
}
