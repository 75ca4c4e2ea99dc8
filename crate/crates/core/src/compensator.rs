//! Compensators of the default indicator `1{τ <= t}` and of `Z 1{τ <= t}`.
//!
//! Both are Stieltjes integrals of the intensity kernel `λ_k(s)` against the
//! local time of the path at the pinning levels. Also here: the discrete
//! Meyer approximation `A^h`, and the exponential martingales built from the
//! compensators.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ModelSpec;
use crate::error::{Error, Result};
use crate::inference::{drift_time, posterior, Observation};
use crate::kernels::{integrate, length_window, QuadratureConfig};
use crate::localtime::LocalTimeCurve;
use crate::pathsim::SamplePath;
use crate::surface::{SurfaceCache, SurfaceLayout};

const FRAC_2_SQRT_2PI: f64 = 0.797_884_560_802_865_4;

/// `λ_k(s) = p_k (f(s) / p(s, z_k)) / Σ_i p_i ∫_s^𝔱 (f(r) / p(r, z_i)) p(r - s, z_i - z_k) dr`,
/// evaluated directly by quadrature.
///
/// Both numerator and denominator are scaled by `e^{-z_k² / 2s}`; with that
/// scaling every exponent in the denominator is nonpositive.
pub fn intensity_direct(model: &ModelSpec, k: usize, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let law = &model.tau;
    let n = model.n_pins();
    if k >= n {
        return Err(Error::Contract(format!("pin index {k} out of range for {n} pins")));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("intensity needs s > 0, got {s}")));
    }
    let ln_f = law.ln_pdf(s);
    if ln_f == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let (lo, hi) = length_window(law, s, cfg)?;
    let zk = model.pinning.points[k];
    let c = zk * zk / (2.0 * s);
    let w_lo = (lo - s).sqrt();
    let w_hi = (hi - s).sqrt();
    let mut denominator = 0.0;
    for (zi, p) in model.pinning.iter() {
        let gap = zi - zk;
        let integrand = |w: f64| {
            if w == 0.0 {
                return if gap == 0.0 { FRAC_2_SQRT_2PI * (ln_f + 0.5 * (2.0 * PI * s).ln() + zi * zi / (2.0 * s) - c).exp() } else { 0.0 };
            }
            let r = s + w * w;
            let ln_fr = law.ln_pdf(r);
            if ln_fr == f64::NEG_INFINITY {
                return 0.0;
            }
            FRAC_2_SQRT_2PI
                * (ln_fr + 0.5 * (2.0 * PI * r).ln() + zi * zi / (2.0 * r) - c - gap * gap / (2.0 * w * w)).exp()
        };
        denominator += p * integrate(integrand, w_lo, w_hi, cfg)?.value;
    }
    let numerator = model.pinning.probs[k] * (ln_f + 0.5 * (2.0 * PI * s).ln()).exp();
    if !(denominator > 0.0 && denominator.is_finite()) {
        return Err(Error::Numerical(format!(
            "intensity denominator for pin {k} at s = {s} evaluated to {denominator}"
        )));
    }
    Ok(numerator / denominator)
}

/// `ln λ` on a uniform grid in a coordinate `η`, read back by 4-point
/// Lagrange interpolation.
#[derive(Debug, Clone)]
struct UniformTable {
    e0: f64,
    step: f64,
    values: Vec<f64>,
}

impl UniformTable {
    fn eval(&self, eta: f64) -> Option<f64> {
        let n = self.values.len() - 1;
        let pos = (eta - self.e0) / self.step;
        if !(pos >= -1e-9 && pos <= n as f64 + 1e-9) {
            return None;
        }
        let i = (pos.floor() as isize - 1).clamp(0, n as isize - 3) as usize;
        let mut total = 0.0;
        for a in 0..4 {
            let mut basis = 1.0;
            for b in 0..4 {
                if a != b {
                    basis *= (pos - (i + b) as f64) / (a as f64 - b as f64);
                }
            }
            total += basis * self.values[i + a];
        }
        Some(total)
    }
}

/// The intensity kernels of all pins, tabulated in `ln λ` on a grid that is
/// uniform in `ln s` (or `ln(s / (𝔱 - s))` when 𝔱 is finite). Outside the
/// table the kernel is evaluated directly.
#[derive(Debug, Clone)]
pub struct IntensityKernel {
    model: ModelSpec,
    cfg: QuadratureConfig,
    tables: Vec<Option<UniformTable>>,
    s_lo: f64,
    s_hi: f64,
    factor: f64,
}

impl IntensityKernel {
    /// Grid step of the table coordinate.
    pub const STEP: f64 = 0.02;

    pub fn build(model: &ModelSpec, s_min: f64, s_max: f64, cfg: &QuadratureConfig) -> Result<Self> {
        let sup = model.horizon_bound();
        let s_lo = s_min.max(model.tau.support_inf());
        let s_hi = if sup.is_finite() { s_max.min(sup * (1.0 - 1e-6)) } else { s_max };
        let coord = |s: f64| if sup.is_finite() { s.ln() - (sup - s).ln() } else { s.ln() };
        let inverse = |eta: f64| if sup.is_finite() { sup / (1.0 + (-eta).exp()) } else { eta.exp() };
        let mut tables = vec![None; model.n_pins()];
        if s_hi > s_lo && s_lo > 0.0 {
            let (e0, e1) = (coord(s_lo), coord(s_hi));
            let n = (((e1 - e0) / Self::STEP).ceil() as usize).max(4);
            let etas: Vec<f64> = (0..=n).map(|i| e0 + (e1 - e0) * i as f64 / n as f64).collect();
            for (k, table) in tables.iter_mut().enumerate() {
                let values = etas
                    .par_iter()
                    .enumerate()
                    .map(|(i, &eta)| {
                        let s = match i {
                            0 => s_lo,
                            i if i == n => s_hi,
                            _ => inverse(eta),
                        };
                        Ok(intensity_direct(model, k, s, cfg)?.ln())
                    })
                    .collect::<Result<Vec<f64>>>()?;
                // Kernels that vanish somewhere in the range stay direct.
                if values.iter().all(|v| v.is_finite()) {
                    *table = Some(UniformTable {
                        e0,
                        step: (e1 - e0) / n as f64,
                        values,
                    });
                }
            }
        }
        Ok(IntensityKernel {
            model: model.clone(),
            cfg: *cfg,
            tables,
            s_lo,
            s_hi,
            factor: 1.0,
        })
    }

    /// Multiplies every kernel value by `factor`. Only for sensitivity checks.
    pub fn corrupted(mut self, factor: f64) -> Self {
        self.factor = factor;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn eval(&self, k: usize, s: f64) -> Result<f64> {
        if self.model.tau.ln_pdf(s) == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let sup = self.model.horizon_bound();
        if s >= self.s_lo && s <= self.s_hi {
            if let Some(table) = &self.tables[k] {
                let eta = if sup.is_finite() { s.ln() - (sup - s).ln() } else { s.ln() };
                if let Some(v) = table.eval(eta) {
                    return Ok(self.factor * v.exp());
                }
            }
        }
        Ok(self.factor * intensity_direct(&self.model, k, s, &self.cfg)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensatorKind {
    /// Compensator `K` of `1{τ <= t}`.
    Plain,
    /// Compensator `𝔎` of `Z 1{τ <= t}`.
    Weighted,
}

/// Factor multiplying the kernel in the weighted compensator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFactor {
    /// The path value at the left end of the step.
    #[default]
    PathValue,
    /// The pinning level the local time belongs to.
    PinLevel,
}

/// A compensator on the path grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatorCurve {
    pub dt: f64,
    pub values: Vec<f64>,
    pub kind: CompensatorKind,
}

impl CompensatorCurve {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k.min(self.values.len() - 1)]
    }

    /// Value at the grid node nearest to `t`; the last value beyond the grid.
    pub fn at_time(&self, t: f64) -> f64 {
        self.at((t / self.dt).round() as usize)
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Largest single-step increment.
    pub fn max_step(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(out, "t,K")?;
            for (k, v) in self.values.iter().enumerate() {
                writeln!(out, "{},{}", self.time(k), v)?;
            }
            out.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}

/// Orders `local_times` by pin index, checking that every pin has exactly one.
fn curves_by_pin<'a>(model: &ModelSpec, path: &SamplePath, local_times: &'a [LocalTimeCurve]) -> Result<Vec<&'a LocalTimeCurve>> {
    let mut out = Vec::with_capacity(model.n_pins());
    for &z in &model.pinning.points {
        let mut found = local_times.iter().filter(|c| c.level == z);
        let curve = found
            .next()
            .ok_or_else(|| Error::Contract(format!("no local time curve at pinning level {z}")))?;
        if found.next().is_some() {
            return Err(Error::Contract(format!("more than one local time curve at level {z}")));
        }
        if curve.values.len() != path.n_steps + 1 || curve.dt != path.dt {
            return Err(Error::Contract(format!("local time curve at level {z} is not on the path grid")));
        }
        out.push(curve);
    }
    Ok(out)
}

fn stieltjes(
    model: &ModelSpec,
    path: &SamplePath,
    local_times: &[LocalTimeCurve],
    kernel: &IntensityKernel,
    weight: impl Fn(usize, usize) -> f64,
    kind: CompensatorKind,
) -> Result<CompensatorCurve> {
    let curves = curves_by_pin(model, path, local_times)?;
    let active = path.active_steps();
    let mut values = Vec::with_capacity(path.n_steps + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for j in 0..path.n_steps {
        if j < active {
            let width = (path.tau - path.time(j)).clamp(0.0, path.dt);
            let mid = path.time(j) + 0.5 * width;
            for (k, curve) in curves.iter().enumerate() {
                let increment = curve.values[j + 1] - curve.values[j];
                if increment != 0.0 {
                    acc += weight(j, k) * kernel.eval(k, mid)? * increment;
                }
            }
        }
        values.push(acc);
    }
    Ok(CompensatorCurve {
        dt: path.dt,
        values,
        kind,
    })
}

/// `K_t = Σ_k ∫_0^{t∧τ} λ_k(s) dL(s, z_k)`, midpoint kernel against local-time
/// increments. `local_times` must hold one curve per pinning level.
pub fn compensator_k(
    model: &ModelSpec,
    path: &SamplePath,
    local_times: &[LocalTimeCurve],
    kernel: &IntensityKernel,
) -> Result<CompensatorCurve> {
    stieltjes(model, path, local_times, kernel, |_, _| 1.0, CompensatorKind::Plain)
}

/// `𝔎_t = Σ_k ∫_0^{t∧τ} ξ_s λ_k(s) dL(s, z_k)`, or with `ξ_s` replaced by
/// `z_k` under [`WeightFactor::PinLevel`].
pub fn compensator_frak(
    model: &ModelSpec,
    path: &SamplePath,
    local_times: &[LocalTimeCurve],
    kernel: &IntensityKernel,
    factor: WeightFactor,
) -> Result<CompensatorCurve> {
    let points = &model.pinning.points;
    stieltjes(
        model,
        path,
        local_times,
        kernel,
        |j, k| match factor {
            WeightFactor::PathValue => path.value(j),
            WeightFactor::PinLevel => points[k],
        },
        CompensatorKind::Weighted,
    )
}

/// `P(s < τ <= s + h | ξ_s = x, s < τ)`, tabulated over `(s, x)`.
#[derive(Debug, Clone)]
pub struct WindowDefaultCache {
    model: ModelSpec,
    cfg: QuadratureConfig,
    h: f64,
    table: SurfaceCache,
}

/// `P(s < τ <= s + h | ξ_s = x, s < τ)` by quadrature.
pub fn window_default_probability(model: &ModelSpec, s: f64, x: f64, h: f64, cfg: &QuadratureConfig) -> Result<f64> {
    posterior(model, s, Observation::Running { x }, cfg)?.default_probability(s + h)
}

impl WindowDefaultCache {
    pub fn build(model: &ModelSpec, h: f64, s_min: f64, s_max: f64, cfg: &QuadratureConfig) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("window length must be positive, got {h}")));
        }
        let sup = model.horizon_bound();
        let s_max = if sup.is_finite() {
            s_max.min(sup - 0.01 * (sup - s_min))
        } else {
            s_max
        };
        if !(s_max > s_min && s_min > 0.0) {
            return Err(Error::Domain(format!("empty table range [{s_min}, {s_max}]")));
        }
        let inf = model.tau.support_inf();
        let mut layout = SurfaceLayout::new(s_min, s_max, inf, sup);
        // Below `inf - h` the window holds no τ-mass and the value is zero.
        layout.extra_break = Some(inf - h).filter(|&b| b > 0.0);
        let points = &model.pinning.points;
        let table = SurfaceCache::build(
            layout,
            points,
            |s, x| window_default_probability(model, s, x, h, cfg),
            |s, i, _| window_default_probability(model, s, points[i], h, cfg),
        )?;
        Ok(WindowDefaultCache {
            model: model.clone(),
            cfg: *cfg,
            h,
            table,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn get(&self, s: f64, x: f64) -> Result<f64> {
        match self.table.eval(s, x) {
            Some(v) => Ok(v.clamp(0.0, 1.0)),
            None => window_default_probability(&self.model, s, x, self.h, &self.cfg),
        }
    }
}

/// `A^h_t = (1/h) ∫_0^t P(s < τ < s + h | F_s) ds` on the path grid, left-point
/// rule on `{s < τ}` (step midpoint on the first step, where `s = 0`).
pub fn meyer_approx_ah<P>(path: &SamplePath, h: f64, probability: P) -> Result<Vec<f64>>
where
    P: Fn(f64, f64) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("window length must be positive, got {h}")));
    }
    let active = path.active_steps();
    let mut values = Vec::with_capacity(path.n_steps + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for j in 0..path.n_steps {
        if j < active {
            let width = (path.tau - path.time(j)).clamp(0.0, path.dt);
            acc += probability(drift_time(path, j), path.value(j))? * width / h;
        }
        values.push(acc);
    }
    Ok(values)
}

/// `N^λ_t = (1 + λ 1{τ <= t}) e^{-λ K_t}` on the grid of `k_curve`.
pub fn martingale_n(path: &SamplePath, k_curve: &CompensatorCurve, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("λ must be nonnegative, got {lambda}")));
    }
    Ok(k_curve
        .values
        .iter()
        .enumerate()
        .map(|(k, &kt)| {
            let jump = if path.tau <= k_curve.time(k) { lambda } else { 0.0 };
            (1.0 + jump) * (-lambda * kt).exp()
        })
        .collect())
}

/// `M^λ_t = (1 + λ ξ_t 1{τ <= t}) e^{-λ 𝔎_t}`, with `ξ_t = Z` on `{τ <= t}`.
pub fn martingale_m(path: &SamplePath, frak_curve: &CompensatorCurve, lambda: f64) -> Vec<f64> {
    frak_curve
        .values
        .iter()
        .enumerate()
        .map(|(k, &kt)| {
            let jump = if path.tau <= frak_curve.time(k) { lambda * path.z } else { 0.0 };
            (1.0 + jump) * (-lambda * kt).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{LengthLaw, PinningLaw};
    use crate::kernels::ln_mix_weight;
    use crate::localtime::{occupation_local_time, tanaka_local_time};

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn single_exp() -> ModelSpec {
        ModelSpec::new(LengthLaw::exponential(1.0).unwrap(), PinningLaw::single(0.0)).unwrap()
    }

    fn two_pin() -> ModelSpec {
        ModelSpec::new(
            LengthLaw::uniform(0.5, 2.0).unwrap(),
            PinningLaw::new(vec![-1.0, 1.0], vec![0.3, 0.7]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_pin_matches_brute_force() {
        // (f(s)/p(s,0)) / ∫_s^∞ (f(r)/p(r,0)) p(r-s, 0) dr with r = s + v², so
        // p(r-s, 0) dr = 2 v dv / √(2π v²) = 2 dv / √(2π). Midpoint rule.
        let s = 0.5f64;
        let n = 1_000_000;
        let v_max = 6.0f64;
        let hv = v_max / n as f64;
        let mut den = 0.0;
        for i in 0..n {
            let v = (i as f64 + 0.5) * hv;
            let r = s + v * v;
            den += (-r).exp() * (2.0 * PI * r).sqrt() * 2.0 / (2.0 * PI).sqrt() * hv;
        }
        let expected = (-s).exp() * (2.0 * PI * s).sqrt() / den;
        let got = intensity_direct(&single_exp(), 0, s, &cfg()).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn literal_form_matches_normalizer_form() {
        // λ_k(s) = p_k f(s) / 𝔟(s, z_k).
        let model = two_pin();
        for &s in &[0.1, 0.6, 1.0, 1.7, 1.99] {
            for k in 0..2 {
                let z = model.pinning.points[k];
                let expected = if s < 0.5 {
                    0.0
                } else {
                    model.pinning.probs[k] * model.tau.pdf(s) / ln_mix_weight(s, z, &model, &cfg()).unwrap().exp()
                };
                let got = intensity_direct(&model, k, s, &cfg()).unwrap();
                assert!((got - expected).abs() <= 1e-8 * expected.abs(), "s={s} k={k}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn symmetric_pins_share_kernel() {
        let model = ModelSpec::new(
            LengthLaw::uniform(0.5, 2.0).unwrap(),
            PinningLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        for &s in &[0.7, 1.2, 1.9] {
            let a = intensity_direct(&model, 0, s, &cfg()).unwrap();
            let b = intensity_direct(&model, 1, s, &cfg()).unwrap();
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn zero_outside_support() {
        let model = two_pin();
        assert_eq!(intensity_direct(&model, 0, 0.3, &cfg()).unwrap(), 0.0);
        let kernel = IntensityKernel::build(&model, 1e-3, 3.0, &cfg()).unwrap();
        assert_eq!(kernel.eval(1, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn table_matches_direct() {
        for model in [single_exp(), two_pin()] {
            let kernel = IntensityKernel::build(&model, 1e-3, 5.0, &cfg()).unwrap();
            for i in 0..200 {
                let s = 1e-3 + 4.0 * (i as f64 * 0.618_033_988_7).fract();
                if s >= model.horizon_bound() {
                    continue;
                }
                for k in 0..model.n_pins() {
                    let direct = intensity_direct(&model, k, s, &cfg()).unwrap();
                    let got = kernel.eval(k, s).unwrap();
                    assert!((got - direct).abs() <= 1e-6 * direct.max(1e-300), "s={s} k={k}: {got} vs {direct}");
                }
            }
        }
    }

    fn ramp_path() -> SamplePath {
        SamplePath {
            dt: 0.1,
            n_steps: 8,
            values: vec![0.0, 0.3, -0.2, 0.1, -0.1, 0.0],
            tau: 0.45,
            z: 0.0,
            seed: 0,
            absorbed_index: Some(5),
        }
    }

    #[test]
    fn zero_local_time_gives_zero_compensator() {
        let model = single_exp();
        let kernel = IntensityKernel::build(&model, 1e-3, 2.0, &cfg()).unwrap();
        let mut path = ramp_path();
        path.values = vec![0.0, 0.5, 0.6, 0.7, 0.8, 0.0];
        let lt = occupation_local_time(&path, 0.0, 0.01).unwrap();
        // Only the first step starts inside the band.
        let curve = compensator_k(&model, &path, &[lt], &kernel).unwrap();
        let first = curve.at(1);
        assert!(curve.values[1..].iter().all(|&v| v == first));
    }

    #[test]
    fn compensator_is_a_stieltjes_sum() {
        let model = single_exp();
        let kernel = IntensityKernel::build(&model, 1e-3, 2.0, &cfg()).unwrap();
        let path = ramp_path();
        let lt = tanaka_local_time(&path, 0.0);
        let curve = compensator_k(&model, &path, std::slice::from_ref(&lt), &kernel).unwrap();
        let mut expected = 0.0;
        for j in 0..5 {
            let width = (path.tau - path.time(j)).clamp(0.0, path.dt);
            let mid = path.time(j) + 0.5 * width;
            expected += intensity_direct(&model, 0, mid, &cfg()).unwrap() * (lt.values[j + 1] - lt.values[j]);
            assert!((curve.at(j + 1) - expected).abs() < 1e-8 * expected.max(1.0));
        }
        assert!(curve.values[5..].iter().all(|&v| v == curve.at(5)));
        assert!(curve.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn missing_level_is_a_contract_error() {
        let model = two_pin();
        let kernel = IntensityKernel::build(&model, 1e-3, 2.0, &cfg()).unwrap();
        let path = ramp_path();
        let lt = tanaka_local_time(&path, -1.0);
        assert!(matches!(
            compensator_k(&model, &path, &[lt], &kernel),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn origin_pin_has_zero_weighted_compensator() {
        let model = single_exp();
        let kernel = IntensityKernel::build(&model, 1e-3, 2.0, &cfg()).unwrap();
        let path = ramp_path();
        let lt = tanaka_local_time(&path, 0.0);
        let frak = compensator_frak(&model, &path, &[lt], &kernel, WeightFactor::PinLevel).unwrap();
        assert!(frak.values.iter().all(|&v| v == 0.0));
        let m = martingale_m(&path, &frak, 0.7);
        assert!(m.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn martingales_at_zero_lambda() {
        let model = single_exp();
        let kernel = IntensityKernel::build(&model, 1e-3, 2.0, &cfg()).unwrap();
        let path = ramp_path();
        let lt = tanaka_local_time(&path, 0.0);
        let k = compensator_k(&model, &path, &[lt], &kernel).unwrap();
        assert!(martingale_n(&path, &k, 0.0).unwrap().iter().all(|&v| v == 1.0));
        assert!(martingale_m(&path, &k, 0.0).iter().all(|&v| v == 1.0));
        let n2 = martingale_n(&path, &k, 2.0).unwrap();
        assert!(n2.iter().all(|&v| v > 0.0 && v <= 3.0));
        assert!(martingale_n(&path, &k, -1.0).is_err());
    }

    #[test]
    fn meyer_integrand_vanishes_after_absorption() {
        let path = ramp_path();
        let a = meyer_approx_ah(&path, 0.1, |_, _| Ok(0.5)).unwrap();
        // 4 full steps and half a step before τ = 0.45.
        assert!((a[5] - 0.5 * 0.45 / 0.1).abs() < 1e-12);
        assert!(a[5..].iter().all(|&v| v == a[5]));
    }

    #[test]
    fn window_cache_matches_direct() {
        let model = two_pin();
        let cache = WindowDefaultCache::build(&model, 0.1, 1e-3, 1.5, &cfg()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..300 {
            let s = 1e-3 + 1.4 * (i as f64 * 0.618_033_988_7).fract();
            let x = -2.0 + 4.0 * (i as f64 * 0.414_213_562).fract();
            let direct = window_default_probability(&model, s, x, 0.1, &cfg()).unwrap();
            worst = worst.max((cache.get(s, x).unwrap() - direct).abs());
        }
        assert!(worst < 1e-5, "{worst}");
    }
}
