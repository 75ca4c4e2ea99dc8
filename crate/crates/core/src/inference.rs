//! Filtering of `(τ, Z)` from the observed path: posterior law, survival
//! probabilities, transition law, drift and innovation process.

use std::f64::consts::PI;

use crate::distributions::ModelSpec;
use crate::error::{Error, Result};
use crate::kernels::{
    bridge_marginal_density, integrate, length_window, ln_mix_weight, log_shift, pin_drift_integral, pin_drift_limit,
    pin_integral, QuadratureConfig, Side,
};
use crate::pathsim::SamplePath;
use crate::surface::{SurfaceCache, SurfaceLayout};

/// What has been seen of the path at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    /// `t < τ` and `ξ_t = x`.
    Running { x: f64 },
    /// The bridge was absorbed at `z` at time `tau <= t`.
    Absorbed { tau: f64, z: f64 },
}

/// Conditional law of `(τ, Z)` given the path up to `t`.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub t: f64,
    pub observation: Observation,
    /// `P(Z = z_i | F_t)`.
    pub pin_weights: Vec<f64>,
    model: ModelSpec,
    cfg: QuadratureConfig,
    /// Normalizer times `e^shift`.
    normalizer: f64,
    shift: f64,
    window: (f64, f64),
}

pub fn posterior(model: &ModelSpec, t: f64, observation: Observation, cfg: &QuadratureConfig) -> Result<PosteriorState> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("posterior needs t > 0, got {t}")));
    }
    match observation {
        Observation::Absorbed { tau, z } => {
            let i = model
                .pinning
                .index_of(z)
                .ok_or_else(|| Error::Contract(format!("absorbed at {z}, which is not a pinning point")))?;
            if !(tau > 0.0 && tau <= t) {
                return Err(Error::Contract(format!("absorption time {tau} is not in (0, {t}]")));
            }
            let mut pin_weights = vec![0.0; model.n_pins()];
            pin_weights[i] = 1.0;
            Ok(PosteriorState {
                t,
                observation,
                pin_weights,
                model: model.clone(),
                cfg: *cfg,
                normalizer: 1.0,
                shift: 0.0,
                window: (tau, tau),
            })
        }
        Observation::Running { x } => {
            let window = length_window(&model.tau, t, cfg)?;
            let shift = log_shift(&model.tau, t, x, &model.pinning.points, window);
            let masses = model
                .pinning
                .iter()
                .map(|(z, p)| Ok(p * pin_integral(&model.tau, t, x, z, window, |_| 1.0, shift, cfg)?))
                .collect::<Result<Vec<f64>>>()?;
            let normalizer: f64 = masses.iter().sum();
            if !(normalizer > 0.0 && normalizer.is_finite()) {
                return Err(Error::Numerical(format!(
                    "posterior normalizer at t = {t}, x = {x} evaluated to {normalizer}"
                )));
            }
            Ok(PosteriorState {
                t,
                observation,
                pin_weights: masses.iter().map(|m| m / normalizer).collect(),
                model: model.clone(),
                cfg: *cfg,
                normalizer,
                shift,
                window,
            })
        }
    }
}

impl PosteriorState {
    pub fn is_absorbed(&self) -> bool {
        matches!(self.observation, Observation::Absorbed { .. })
    }

    /// `ln` of the normalizer of the posterior density; 0 when absorbed.
    pub fn ln_normalizer(&self) -> f64 {
        self.normalizer.ln() - self.shift
    }

    /// `E[g(τ, Z) | F_t]`.
    pub fn expectation<G: Fn(f64, f64) -> f64>(&self, g: G) -> Result<f64> {
        match self.observation {
            Observation::Absorbed { tau, z } => Ok(g(tau, z)),
            Observation::Running { x } => {
                let mut total = 0.0;
                for (z, p) in self.model.pinning.iter() {
                    total += p * pin_integral(&self.model.tau, self.t, x, z, self.window, |r| g(r, z), self.shift, &self.cfg)?;
                }
                Ok(total / self.normalizer)
            }
        }
    }

    /// `E[Z | F_t]`.
    pub fn pin_mean(&self) -> f64 {
        self.model
            .pinning
            .points
            .iter()
            .zip(&self.pin_weights)
            .map(|(z, w)| z * w)
            .sum()
    }

    /// `P(τ > u | F_t)` for `u >= t`.
    pub fn survival(&self, u: f64) -> Result<f64> {
        if u < self.t {
            return Err(Error::Domain(format!("survival needs u >= t = {}, got {u}", self.t)));
        }
        let x = match self.observation {
            Observation::Absorbed { .. } => return Ok(0.0),
            Observation::Running { x } => x,
        };
        if u == self.t {
            return Ok(1.0);
        }
        let (lo, hi) = self.window;
        if u >= hi {
            return Ok(0.0);
        }
        let from = u.max(lo);
        let mut total = 0.0;
        for (z, p) in self.model.pinning.iter() {
            total += p * pin_integral(&self.model.tau, self.t, x, z, (from, hi), |_| 1.0, self.shift, &self.cfg)?;
        }
        Ok((total / self.normalizer).clamp(0.0, 1.0))
    }

    /// `P(t < τ <= u | F_t)`, integrated directly over `(t, u]`.
    pub fn default_probability(&self, u: f64) -> Result<f64> {
        if u < self.t {
            return Err(Error::Domain(format!("horizon u = {u} is before t = {}", self.t)));
        }
        let x = match self.observation {
            Observation::Absorbed { .. } => return Ok(0.0),
            Observation::Running { x } => x,
        };
        let (lo, hi) = self.window;
        let to = u.min(hi);
        if to <= lo {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (z, p) in self.model.pinning.iter() {
            total += p * pin_integral(&self.model.tau, self.t, x, z, (lo, to), |_| 1.0, self.shift, &self.cfg)?;
        }
        Ok((total / self.normalizer).clamp(0.0, 1.0))
    }
}

/// `P(τ > u | ξ_t = x, t < τ)`.
pub fn survival_probability(model: &ModelSpec, t: f64, x: f64, u: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if u < t {
        return Err(Error::Domain(format!("survival needs u >= t, got t = {t}, u = {u}")));
    }
    if u >= model.horizon_bound() {
        return Ok(0.0);
    }
    posterior(model, t, Observation::Running { x }, cfg)?.survival(u)
}

/// Law of `ξ_u` given `ξ_t = x`, relative to the counting measure on the pins
/// plus Lebesgue measure.
#[derive(Debug, Clone)]
pub struct TransitionLaw {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    /// Mass at each pinning point.
    pub atoms: Vec<f64>,
    absorbed: bool,
    model: ModelSpec,
    cfg: QuadratureConfig,
    ln_normalizer: f64,
}

pub fn transition_law(model: &ModelSpec, t: f64, x: f64, u: f64, cfg: &QuadratureConfig) -> Result<TransitionLaw> {
    if !(t > 0.0 && u > t) {
        return Err(Error::Domain(format!("transition law needs 0 < t < u, got t = {t}, u = {u}")));
    }
    if let Some(i) = model.pinning.index_of(x) {
        let mut atoms = vec![0.0; model.n_pins()];
        atoms[i] = 1.0;
        return Ok(TransitionLaw {
            t,
            x,
            u,
            atoms,
            absorbed: true,
            model: model.clone(),
            cfg: *cfg,
            ln_normalizer: 0.0,
        });
    }
    let state = posterior(model, t, Observation::Running { x }, cfg)?;
    let (lo, hi) = state.window;
    let to = u.min(hi);
    let atoms = model
        .pinning
        .iter()
        .map(|(z, p)| {
            if to <= lo {
                Ok(0.0)
            } else {
                Ok(p * pin_integral(&model.tau, t, x, z, (lo, to), |_| 1.0, state.shift, cfg)? / state.normalizer)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TransitionLaw {
        t,
        x,
        u,
        atoms,
        absorbed: false,
        model: model.clone(),
        cfg: *cfg,
        ln_normalizer: state.ln_normalizer(),
    })
}

impl TransitionLaw {
    /// Density of the continuous part (`u < τ`) at `y`.
    pub fn density(&self, y: f64) -> Result<f64> {
        if self.absorbed || self.u >= self.model.horizon_bound() {
            return Ok(0.0);
        }
        // Density at x of a bridge from 0 to y over [0, u], observed at t.
        let phi = bridge_marginal_density(self.t, self.u, y, self.x)?;
        if phi == 0.0 {
            return Ok(0.0);
        }
        let ln_forward = match ln_mix_weight(self.u, y, &self.model, &self.cfg) {
            Ok(v) => v,
            Err(Error::ModelExhausted { .. }) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        Ok((phi.ln() + ln_forward - self.ln_normalizer).exp())
    }

    /// Range of `y` outside which the continuous part is negligible.
    pub fn support_hint(&self) -> (f64, f64) {
        let spread = 12.0 * (self.t * (self.u - self.t) / self.u).sqrt() + 12.0 * self.u.sqrt();
        let pins = &self.model.pinning.points;
        let lo = pins.iter().cloned().fold(self.x, f64::min);
        let hi = pins.iter().cloned().fold(self.x, f64::max);
        (lo - spread, hi + spread)
    }

    /// Integral of the continuous part, split at the pins.
    pub fn continuous_mass(&self) -> Result<f64> {
        if self.absorbed {
            return Ok(0.0);
        }
        let (lo, hi) = self.support_hint();
        let mut cuts = vec![lo];
        cuts.extend(self.model.pinning.points.iter().copied().filter(|z| *z > lo && *z < hi));
        cuts.push(hi);
        let cfg = QuadratureConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            ..self.cfg
        };
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += integrate(|y| self.density(y).unwrap_or(f64::NAN), w[0], w[1], &cfg)?.value;
        }
        Ok(total)
    }

    pub fn total_mass(&self) -> Result<f64> {
        Ok(self.atoms.iter().sum::<f64>() + self.continuous_mass()?)
    }
}

/// Drift of the information process at `(s, x)` before absorption.
pub fn drift(model: &ModelSpec, s: f64, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let window = length_window(&model.tau, s, cfg)?;
    let shift = log_shift(&model.tau, s, x, &model.pinning.points, window);
    let mut mass = 0.0;
    let mut pieces = Vec::with_capacity(model.n_pins());
    for (z, p) in model.pinning.iter() {
        let m = pin_integral(&model.tau, s, x, z, window, |_| 1.0, shift, cfg)?;
        mass += p * m;
        pieces.push((z, p, m));
    }
    if !(mass > 0.0) {
        return Err(Error::Numerical(format!("drift normalizer vanished at s = {s}, x = {x}")));
    }
    let mut numerator = 0.0;
    for (z, p, m) in pieces {
        numerator += p * pin_drift_integral(&model.tau, s, x, z, window, shift, m.max(mass), cfg)?;
    }
    Ok(numerator / mass)
}

/// One-sided limit of the drift as `x` tends to pin `i` from `side`.
pub fn drift_limit(model: &ModelSpec, s: f64, pin: usize, side: Side, cfg: &QuadratureConfig) -> Result<f64> {
    let window = length_window(&model.tau, s, cfg)?;
    let zi = model.pinning.points[pin];
    let shift = log_shift(&model.tau, s, zi, &model.pinning.points, window);
    let mut mass = 0.0;
    for (z, p) in model.pinning.iter() {
        mass += p * pin_integral(&model.tau, s, zi, z, window, |_| 1.0, shift, cfg)?;
    }
    let mut numerator = model.pinning.probs[pin] * pin_drift_limit(&model.tau, s, window, side, shift);
    for (j, (z, p)) in model.pinning.iter().enumerate() {
        if j != pin {
            numerator += p * pin_drift_integral(&model.tau, s, zi, z, window, shift, mass, cfg)?;
        }
    }
    Ok(numerator / mass)
}

/// Drift tabulated over `(s, x)`, falling back to direct quadrature outside
/// the table.
#[derive(Debug, Clone)]
pub struct DriftCache {
    model: ModelSpec,
    cfg: QuadratureConfig,
    table: SurfaceCache,
}

impl DriftCache {
    /// Tabulates the drift for `s` in `[s_min, s_max]`. When the support of τ
    /// is bounded the table stops short of its end, where the drift diverges.
    pub fn build(model: &ModelSpec, s_min: f64, s_max: f64, cfg: &QuadratureConfig) -> Result<Self> {
        let sup = model.horizon_bound();
        let s_max = if sup.is_finite() {
            s_max.min(sup - 0.01 * (sup - s_min))
        } else {
            s_max
        };
        if !(s_max > s_min && s_min > 0.0) {
            return Err(Error::Domain(format!("empty drift table range [{s_min}, {s_max}]")));
        }
        let layout = SurfaceLayout::new(s_min, s_max, model.tau.support_inf(), sup);
        let table = SurfaceCache::build(
            layout,
            &model.pinning.points,
            |s, x| drift(model, s, x, cfg),
            |s, i, side| drift_limit(model, s, i, side, cfg),
        )?;
        Ok(DriftCache {
            model: model.clone(),
            cfg: *cfg,
            table,
        })
    }

    pub fn get(&self, s: f64, x: f64) -> Result<f64> {
        match self.table.eval(s, x) {
            Some(v) => Ok(v),
            None => drift(&self.model, s, x, &self.cfg),
        }
    }

    pub fn table(&self) -> &SurfaceCache {
        &self.table
    }
}

/// Time at which the drift of grid step `j` is evaluated: the left end point,
/// except at `t = 0` where the drift is not defined and the step midpoint is
/// used.
pub fn drift_time(path: &SamplePath, j: usize) -> f64 {
    if j == 0 {
        0.5 * path.dt
    } else {
        path.time(j)
    }
}

/// `I_{t_k} = ξ_{t_k} - Σ_{j<k, t_j<τ} μ(t_j, ξ_{t_j}) dt`, held constant after τ.
pub fn innovation_path<D>(path: &SamplePath, drift_at: D) -> Result<Vec<f64>>
where
    D: Fn(f64, f64) -> Result<f64>,
{
    let n = path.n_steps;
    let active = path.active_steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut compensation = 0.0;
    out.push(path.value(0));
    for k in 1..=n {
        if k <= active {
            let j = k - 1;
            compensation += drift_at(drift_time(path, j), path.value(j))? * path.dt;
            out.push(path.value(k) - compensation);
        } else {
            out.push(out[active]);
        }
    }
    Ok(out)
}

/// Innovation path computed with a [`DriftCache`].
pub fn innovation_path_cached(path: &SamplePath, cache: &DriftCache) -> Result<Vec<f64>> {
    innovation_path(path, |s, x| cache.get(s, x))
}

/// Density of the unconditional law of `ξ_t` on `{t < τ}`, `p(t, x) 𝔟(t, x)`.
/// Used by tests of the filter.
pub fn marginal_density(model: &ModelSpec, t: f64, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let gauss = (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
    Ok(gauss * ln_mix_weight(t, x, model, cfg)?.exp())
}
