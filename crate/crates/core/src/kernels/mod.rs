//! Gaussian and bridge densities, and the integrals over the bridge length
//! that the filter, the drift and the compensator kernel are built from.
//!
//! Every integral over `r ∈ (s, 𝔱)` is taken in the variable `w = √(r − s)`,
//! which turns the `(r − s)^{-1/2}` factor of the bridge density into a
//! bounded integrand.

pub mod quadrature;

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use crate::distributions::{LengthLaw, ModelSpec};
use crate::error::{Error, Result};
pub use quadrature::{integrate, integrate_to_infinity, QuadResult, QuadratureConfig};

const FRAC_2_SQRT_2PI: f64 = 0.797_884_560_802_865_4;

/// Gaussian density with variance `t` and mean `y`, evaluated at `x`.
pub fn gaussian_density(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("gaussian density needs positive variance, got {t}")));
    }
    let d = x - y;
    Ok((-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

fn ln_gaussian(t: f64, d: f64) -> f64 {
    -d * d / (2.0 * t) - 0.5 * (2.0 * PI * t).ln()
}

/// Density at `x` of a Brownian bridge from 0 at time 0 to `z` at time `r`,
/// observed at time `t`: Gaussian with mean `t z / r` and variance `t (r - t) / r`.
pub fn bridge_marginal_density(t: f64, r: f64, z: f64, x: f64) -> Result<f64> {
    check_bridge_times(t, r)?;
    gaussian_density(t * (r - t) / r, x, t * z / r)
}

/// The same density written as `p(r - t, z - x) p(t, x) / p(r, z)`, evaluated
/// in log space. Used to cross-check [`bridge_marginal_density`].
pub fn bridge_marginal_density_ratio(t: f64, r: f64, z: f64, x: f64) -> Result<f64> {
    check_bridge_times(t, r)?;
    Ok((ln_gaussian(r - t, z - x) + ln_gaussian(t, x) - ln_gaussian(r, z)).exp())
}

fn check_bridge_times(t: f64, r: f64) -> Result<()> {
    if !(t > 0.0 && t < r) {
        return Err(Error::Domain(format!("bridge density needs 0 < t < r, got t = {t}, r = {r}")));
    }
    Ok(())
}

/// Range of bridge lengths `[lo, hi]` that carries posterior mass at time `s`.
///
/// `hi` is the upper end of the support when it is finite, otherwise the
/// point beyond which the remaining τ-mass is below `truncation_mass` times
/// the mass above `lo`.
pub fn length_window(law: &LengthLaw, s: f64, cfg: &QuadratureConfig) -> Result<(f64, f64)> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("observation time must be positive, got {s}")));
    }
    let sup = law.support_sup();
    let lo = s.max(law.support_inf());
    let tail = law.survival(lo);
    if s >= sup || !(tail > 0.0) {
        return Err(Error::ModelExhausted { s, support_sup: sup });
    }
    let hi = if sup.is_finite() {
        sup
    } else {
        law.inverse_survival(cfg.truncation_mass * tail)
    };
    if !(hi > lo) {
        return Err(Error::ModelExhausted { s, support_sup: sup });
    }
    Ok((lo, hi))
}

/// `-ln` of `φ(r) f(r) dr/dw` at `r = s + w²`, where `φ(r)` is the density at
/// `x` of the bridge of length `r` pinned at `z`, observed at time `s`.
#[inline]
fn pinned_neg_log_weight(law: &LengthLaw, s: f64, x: f64, z: f64, w: f64) -> f64 {
    let r = s + w * w;
    let d = x - z;
    if w == 0.0 {
        return if d == 0.0 {
            -(FRAC_2_SQRT_2PI.ln() + law.ln_pdf(s))
        } else {
            f64::INFINITY
        };
    }
    // (r x - s z)² / (2 r s w²) with r x - s z = s d + w² x
    let a = s * d / w + w * x;
    let exponent = a * a / (2.0 * r * s);
    exponent - law.ln_pdf(r) - 0.5 * (r / (2.0 * PI * s)).ln() - std::f64::consts::LN_2
}

/// Log-scale shift that brings the largest integrand over all `pins` at
/// `(s, x)` close to one. Integrals taken with this shift are multiplied by
/// `e^shift`; ratios of them are unaffected.
pub fn log_shift(law: &LengthLaw, s: f64, x: f64, pins: &[f64], (a, b): (f64, f64)) -> f64 {
    if b <= a {
        return 0.0;
    }
    let w_lo = (a - s).sqrt();
    let w_hi = (b - s).sqrt();
    let mut best = f64::INFINITY;
    for &z in pins {
        // The peak in w sits near |x - z| or near the interior stationary point,
        // so scan both a geometric and a uniform grid.
        let d = (x - z).abs();
        let mut probe = |w: f64| {
            if w > w_lo && w < w_hi {
                best = best.min(pinned_neg_log_weight(law, s, x, z, w));
            }
        };
        for k in 0..=64 {
            let frac = k as f64 / 64.0;
            probe(w_lo + (w_hi - w_lo) * (frac + 1e-3).min(1.0 - 1e-3));
            if w_hi > 0.0 {
                probe(w_hi * (1e-8f64).powf(1.0 - frac));
            }
        }
        for &m in &[0.5, 1.0, 2.0] {
            probe(m * d);
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// `∫_a^b g(r) φ(r) f(r) dr · e^shift` for the bridge pinned at `z` and
/// observed at `(s, x)`; requires `s <= a`.
#[allow(clippy::too_many_arguments)]
pub fn pin_integral<G: Fn(f64) -> f64>(
    law: &LengthLaw,
    s: f64,
    x: f64,
    z: f64,
    (a, b): (f64, f64),
    g: G,
    shift: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(a >= s) {
        return Err(Error::Domain(format!("length integral must start at or after s = {s}, got {a}")));
    }
    if b <= a {
        return Ok(0.0);
    }
    let w_lo = (a - s).sqrt();
    let w_hi = (b - s).sqrt();
    let integrand = |w: f64| {
        let v = (shift - pinned_neg_log_weight(law, s, x, z, w)).exp();
        if v == 0.0 {
            0.0
        } else {
            v * g(s + w * w)
        }
    };
    Ok(integrate(integrand, w_lo, w_hi, cfg)?.value)
}

/// `ln` of the normalizer `Σ_i p_i ∫ φ_i(r) f(r) dr` at `(s, x)`.
pub fn ln_mix_weight(s: f64, x: f64, model: &ModelSpec, cfg: &QuadratureConfig) -> Result<f64> {
    let window = length_window(&model.tau, s, cfg)?;
    let shift = log_shift(&model.tau, s, x, &model.pinning.points, window);
    let mut total = 0.0;
    for (z, p) in model.pinning.iter() {
        total += p * pin_integral(&model.tau, s, x, z, window, |_| 1.0, shift, cfg)?;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical(format!("normalizer at s = {s}, x = {x} evaluated to {total}")));
    }
    Ok(total.ln() - shift)
}

/// The normalizer `Σ_i p_i ∫ φ_i(r) f(r) dr` of the posterior at `(s, x)`.
pub fn mix_weight(s: f64, x: f64, model: &ModelSpec, cfg: &QuadratureConfig) -> Result<f64> {
    let value = ln_mix_weight(s, x, model, cfg)?.exp();
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Numerical(format!(
            "normalizer at s = {s}, x = {x} is outside the floating-point range; use its logarithm"
        )));
    }
    Ok(value)
}

/// Side of a pinning level from which a one-sided limit is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// `(z - x) ∫_{window} φ(r) f(r) / (r - s) dr · e^shift` for one pin.
///
/// The integrand tends to a multiple of a delta function as `x → z`, so for
/// `x` close to `z` the leading Gaussian-in-`1/w` part is integrated in closed
/// form and only the smooth remainder goes to quadrature. `scale` sets the
/// absolute accuracy floor.
#[allow(clippy::too_many_arguments)]
pub fn pin_drift_integral(
    law: &LengthLaw,
    s: f64,
    x: f64,
    z: f64,
    (a, b): (f64, f64),
    shift: f64,
    scale: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let d = x - z;
    if d == 0.0 || b <= a {
        return Ok(0.0);
    }
    let w_lo = (a - s).sqrt();
    let w_hi = (b - s).sqrt();
    if w_lo > 0.0 || d.abs() >= 1e-2 * s.sqrt() {
        let integrand = |w: f64| {
            let v = (shift - pinned_neg_log_weight(law, s, x, z, w)).exp();
            if v == 0.0 {
                0.0
            } else {
                -d * v / (w * w)
            }
        };
        let local = QuadratureConfig {
            abs_tol: cfg.abs_tol.max(cfg.rel_tol * scale),
            ..*cfg
        };
        return Ok(integrate(integrand, w_lo, w_hi, &local)?.value);
    }

    let g0 = (law.ln_pdf(s) + (z * z - x * x) / (2.0 * s) + shift).exp();
    let singular = -d.signum() * g0 * erfc(d.abs() / (SQRT_2 * w_hi));
    let remainder = |w: f64| {
        if w == 0.0 {
            return 0.0;
        }
        let r = s + w * w;
        let gauss = (-d * d / (2.0 * w * w)).exp();
        if gauss == 0.0 {
            return 0.0;
        }
        let delta = (x * x - z * z) / (2.0 * r) + w * w * x * x / (2.0 * s * r);
        let ln_f = law.ln_pdf(r);
        let smooth = if ln_f == f64::NEG_INFINITY {
            0.0
        } else {
            (r / s).sqrt() * (ln_f - delta + shift).exp()
        };
        -d / (w * w) * FRAC_2_SQRT_2PI * gauss * (smooth - g0)
    };
    let local = QuadratureConfig {
        abs_tol: cfg.abs_tol.max(cfg.rel_tol * (g0.abs() + scale)),
        ..*cfg
    };
    Ok(singular + integrate(remainder, 0.0, w_hi, &local)?.value)
}

/// One-sided limit of [`pin_drift_integral`] as `x` approaches `z` itself.
pub fn pin_drift_limit(law: &LengthLaw, s: f64, window: (f64, f64), side: Side, shift: f64) -> f64 {
    if window.0 > s || window.1 <= window.0 {
        return 0.0;
    }
    let f = (law.ln_pdf(s) + shift).exp();
    match side {
        Side::Below => f,
        Side::Above => -f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::PinningLaw;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn gaussian_values() {
        assert!((gaussian_density(1.0, 0.0, 0.0).unwrap() - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(
            gaussian_density(4.0, 1.0, 3.0).unwrap(),
            gaussian_density(4.0, 3.0, 1.0).unwrap()
        );
        let expected = (-0.25f64).exp() / (4.0 * PI).sqrt();
        assert!((gaussian_density(2.0, 1.0, 0.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.219_695_6).abs() < 1e-7);
        assert!(gaussian_density(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_density(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bridge_values() {
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        assert!((bridge_marginal_density(1.0, 2.0, 1.0, 0.5).unwrap() - inv_sqrt_pi).abs() < 1e-15);
        assert!((bridge_marginal_density(1.0, 2.0, 0.0, 0.0).unwrap() - inv_sqrt_pi).abs() < 1e-15);
        assert!((bridge_marginal_density_ratio(1.0, 2.0, 0.0, 0.0).unwrap() - inv_sqrt_pi).abs() < 1e-15);
        let hand = 0.352_065_3_f64.powi(2) / 0.219_695_6;
        assert!((bridge_marginal_density_ratio(1.0, 2.0, 1.0, 0.5).unwrap() - hand).abs() < 1e-6);
        assert!(bridge_marginal_density(2.0, 2.0, 0.0, 0.0).is_err());
        assert!(bridge_marginal_density(0.0, 2.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn bridge_forms_agree(r in 0.1f64..10.0, frac in 0.001f64..0.999, z in -5.0f64..5.0, x in -5.0f64..5.0) {
            let t = frac * r;
            let a = bridge_marginal_density(t, r, z, x).unwrap();
            let b = bridge_marginal_density_ratio(t, r, z, x).unwrap();
            prop_assert!(close(a, b, 1e-12) || a.max(b) < 1e-290, "{a} vs {b}");
        }
    }

    #[test]
    fn bridge_density_integrates_to_one() {
        for &(t, r, z) in &[(0.3f64, 1.0f64, 0.0f64), (1.0, 2.0, 3.0), (0.01, 5.0, -2.0)] {
            let mean = t * z / r;
            let sd = (t * (r - t) / r).sqrt();
            let total = integrate(
                |x| bridge_marginal_density(t, r, z, x).unwrap(),
                mean - 40.0 * sd,
                mean + 40.0 * sd,
                &QuadratureConfig::default(),
            )
            .unwrap()
            .value;
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    fn exp_model(z: f64) -> ModelSpec {
        ModelSpec::new(LengthLaw::exponential(1.0).unwrap(), PinningLaw::single(z)).unwrap()
    }

    /// Midpoint sum of `∫ φ f dr` after `r = s + v⁴`, with the bridge density
    /// taken from the ratio form.
    fn brute_mix_weight(model: &ModelSpec, s: f64, x: f64, upper: f64, panels: usize) -> f64 {
        let v_hi = (upper - s).powf(0.25);
        let h = v_hi / panels as f64;
        let mut total = 0.0;
        for (z, p) in model.pinning.iter() {
            let mut acc = 0.0;
            for k in 0..panels {
                let v = (k as f64 + 0.5) * h;
                let r = s + v.powi(4);
                if r <= s {
                    continue;
                }
                let phi = bridge_marginal_density_ratio(s, r, z, x).unwrap();
                acc += phi * model.tau.pdf(r) * 4.0 * v.powi(3);
            }
            total += p * acc * h;
        }
        total
    }

    #[test]
    fn mix_weight_matches_brute_force() {
        let model = exp_model(0.0);
        let cfg = QuadratureConfig::default();
        let adaptive = mix_weight(0.5, 0.0, &model, &cfg).unwrap();
        let brute = brute_mix_weight(&model, 0.5, 0.0, 40.5, 1_000_000);
        assert!(close(adaptive, brute, 1e-8), "{adaptive} vs {brute}");
    }

    #[test]
    fn mix_weight_off_pin_matches_brute_force() {
        let model = ModelSpec::new(
            LengthLaw::uniform(0.5, 2.0).unwrap(),
            PinningLaw::new(vec![-1.0, 1.0], vec![0.3, 0.7]).unwrap(),
        )
        .unwrap();
        let cfg = QuadratureConfig::default();
        let adaptive = mix_weight(0.7, 0.4, &model, &cfg).unwrap();
        let brute = brute_mix_weight(&model, 0.7, 0.4, 2.0, 1_000_000);
        assert!(close(adaptive, brute, 1e-6), "{adaptive} vs {brute}");
    }

    #[test]
    fn mix_weight_symmetry_and_positivity() {
        let model = ModelSpec::new(
            LengthLaw::uniform(0.5, 2.0).unwrap(),
            PinningLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let cfg = QuadratureConfig::default();
        for &s in &[0.1, 0.5, 1.0, 1.9] {
            for &x in &[0.0, 0.3, 1.0, 2.5] {
                let a = mix_weight(s, x, &model, &cfg).unwrap();
                let b = mix_weight(s, -x, &model, &cfg).unwrap();
                assert!(a > 0.0);
                assert!(close(a, b, 1e-10), "s={s} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mix_weight_continuous_in_s() {
        let model = exp_model(0.5);
        let cfg = QuadratureConfig::default();
        let base = mix_weight(1.0, 0.2, &model, &cfg).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..6 {
            let h = 10f64.powi(-k);
            let diff = (mix_weight(1.0 + h, 0.2, &model, &cfg).unwrap() - base).abs();
            assert!(diff < last);
            last = diff;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn exhausted_model_is_reported() {
        let model = ModelSpec::new(LengthLaw::uniform(0.5, 2.0).unwrap(), PinningLaw::single(0.0)).unwrap();
        let err = mix_weight(2.0, 0.0, &model, &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ModelExhausted { .. }));
        assert!(matches!(
            mix_weight(0.0, 0.0, &model, &QuadratureConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn shifted_normalizer_survives_far_observations() {
        let model = ModelSpec::new(
            LengthLaw::uniform(0.5, 2.0).unwrap(),
            PinningLaw::new(vec![-1.0, 1.0], vec![0.3, 0.7]).unwrap(),
        )
        .unwrap();
        let cfg = QuadratureConfig::default();
        let ln_b = ln_mix_weight(5e-4, -1.13, &model, &cfg).unwrap();
        assert!(ln_b.is_finite() && ln_b < -700.0);
        // Where no underflow occurs the shifted and plain forms agree.
        let plain = mix_weight(0.3, 0.2, &model, &cfg).unwrap();
        assert!(close(ln_mix_weight(0.3, 0.2, &model, &cfg).unwrap().exp(), plain, 1e-14));
        let window = length_window(&model.tau, 0.3, &cfg).unwrap();
        let direct = pin_integral(&model.tau, 0.3, 0.2, 1.0, window, |_| 1.0, 0.0, &cfg).unwrap();
        let shifted = pin_integral(&model.tau, 0.3, 0.2, 1.0, window, |_| 1.0, 2.0, &cfg).unwrap();
        assert!(close(shifted, direct * 2f64.exp(), 1e-10));
    }

    #[test]
    fn drift_integral_has_one_sided_limits() {
        let law = LengthLaw::exponential(1.0).unwrap();
        let cfg = QuadratureConfig::default();
        let s = 0.6;
        let z = 0.4;
        let window = length_window(&law, s, &cfg).unwrap();
        let below = pin_drift_limit(&law, s, window, Side::Below, 0.0);
        let above = pin_drift_limit(&law, s, window, Side::Above, 0.0);
        for &eps in &[1e-4, 1e-6, 1e-9] {
            let lo = pin_drift_integral(&law, s, z - eps, z, window, 0.0, 1.0, &cfg).unwrap();
            let hi = pin_drift_integral(&law, s, z + eps, z, window, 0.0, 1.0, &cfg).unwrap();
            assert!((lo - below).abs() < 50.0 * eps.sqrt(), "{lo} vs {below}");
            assert!((hi - above).abs() < 50.0 * eps.sqrt(), "{hi} vs {above}");
        }
    }

    #[test]
    fn drift_integral_branches_agree_at_threshold() {
        // Just inside and just outside the closed-form branch.
        let law = LengthLaw::gamma(2.0, 0.5).unwrap();
        let cfg = QuadratureConfig::default();
        let s = 0.8;
        let z = -0.3;
        let window = length_window(&law, s, &cfg).unwrap();
        let edge = 1e-2 * s.sqrt();
        let inner = pin_drift_integral(&law, s, z + edge * (1.0 - 1e-9), z, window, 0.0, 1.0, &cfg).unwrap();
        let outer = pin_drift_integral(&law, s, z + edge * (1.0 + 1e-9), z, window, 0.0, 1.0, &cfg).unwrap();
        assert!(close(inner, outer, 1e-7), "{inner} vs {outer}");
    }
}
