//! Model parameterization: the law of the bridge length τ, the discrete law
//! of the pinning point Z, and the seeded random streams that drive them.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::kernels::quadrature::{integrate, QuadratureConfig};

/// A user-supplied length law. Validated numerically by
/// [`LengthLaw::custom`] before it can be used.
pub trait CustomLength: Send + Sync + fmt::Debug {
    fn pdf(&self, r: f64) -> f64;
    fn cdf(&self, r: f64) -> f64;
    /// Upper end of the support; `f64::INFINITY` when unbounded.
    fn support_sup(&self) -> f64;
    fn support_inf(&self) -> f64 {
        0.0
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LengthLaw {
    Exponential {
        rate: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// Exponential law conditioned on `τ < b`.
    TruncatedExponential {
        rate: f64,
        b: f64,
    },
    #[serde(skip)]
    Custom(Arc<dyn CustomLength>),
}

impl LengthLaw {
    pub fn exponential(rate: f64) -> Result<Self> {
        let law = LengthLaw::Exponential { rate };
        law.validate()?;
        Ok(law)
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let law = LengthLaw::Uniform { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        let law = LengthLaw::Gamma { shape, scale };
        law.validate()?;
        Ok(law)
    }

    pub fn truncated_exponential(rate: f64, b: f64) -> Result<Self> {
        let law = LengthLaw::TruncatedExponential { rate, b };
        law.validate()?;
        Ok(law)
    }

    /// Wraps a user law after checking that its density integrates to one,
    /// that its CDF agrees with the integrated density, and that its sampler
    /// stays inside the support.
    pub fn custom(law: Arc<dyn CustomLength>) -> Result<Self> {
        let out = LengthLaw::Custom(law);
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        match *self {
            LengthLaw::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            LengthLaw::Uniform { a, b } => {
                if !(a >= 0.0 && b > a && b.is_finite()) {
                    return bad(format!("uniform law needs 0 <= a < b < inf, got ({a}, {b})"));
                }
            }
            LengthLaw::Gamma { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return bad(format!("gamma parameters must be positive, got ({shape}, {scale})"));
                }
            }
            LengthLaw::TruncatedExponential { rate, b } => {
                if !(rate > 0.0 && rate.is_finite() && b > 0.0 && b.is_finite()) {
                    return bad(format!("truncated exponential needs rate > 0 and 0 < b < inf, got ({rate}, {b})"));
                }
            }
            LengthLaw::Custom(ref law) => validate_custom(law.as_ref())?,
        }
        Ok(())
    }

    /// Lower end of the support.
    pub fn support_inf(&self) -> f64 {
        match self {
            LengthLaw::Uniform { a, .. } => *a,
            LengthLaw::Custom(law) => law.support_inf(),
            _ => 0.0,
        }
    }

    /// `sup{t : F(t) < 1}`.
    pub fn support_sup(&self) -> f64 {
        match self {
            LengthLaw::Uniform { b, .. } | LengthLaw::TruncatedExponential { b, .. } => *b,
            LengthLaw::Custom(law) => law.support_sup(),
            _ => f64::INFINITY,
        }
    }

    pub fn pdf(&self, r: f64) -> f64 {
        match self {
            LengthLaw::Custom(law) => {
                if r <= 0.0 {
                    0.0
                } else {
                    law.pdf(r)
                }
            }
            _ => self.ln_pdf(r).exp(),
        }
    }

    pub fn ln_pdf(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            LengthLaw::Exponential { rate } => rate.ln() - rate * r,
            LengthLaw::Uniform { a, b } => {
                if r >= a && r <= b {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            LengthLaw::Gamma { shape, scale } => gamma_law(shape, scale).ln_pdf(r),
            LengthLaw::TruncatedExponential { rate, b } => {
                if r <= b {
                    rate.ln() - rate * r - (-(-rate * b).exp()).ln_1p()
                } else {
                    f64::NEG_INFINITY
                }
            }
            LengthLaw::Custom(ref law) => law.pdf(r).ln(),
        }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match *self {
            LengthLaw::Exponential { rate } => -(-rate * r).exp_m1(),
            LengthLaw::Uniform { a, b } => ((r - a) / (b - a)).clamp(0.0, 1.0),
            LengthLaw::Gamma { shape, scale } => gamma_law(shape, scale).cdf(r),
            LengthLaw::TruncatedExponential { rate, b } => {
                if r >= b {
                    1.0
                } else {
                    (-rate * r).exp_m1() / (-rate * b).exp_m1()
                }
            }
            LengthLaw::Custom(ref law) => law.cdf(r).clamp(0.0, 1.0),
        }
    }

    /// `P(τ > r)`, computed without cancellation where a closed form exists.
    pub fn survival(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        match *self {
            LengthLaw::Exponential { rate } => (-rate * r).exp(),
            LengthLaw::Gamma { shape, scale } => gamma_law(shape, scale).sf(r),
            LengthLaw::TruncatedExponential { rate, b } => {
                if r >= b {
                    0.0
                } else {
                    // (e^{-λr} - e^{-λb}) / (1 - e^{-λb})
                    (-rate * r).exp() * (-(-rate * (b - r)).exp_m1()) / (-(-rate * b).exp_m1())
                }
            }
            _ => 1.0 - self.cdf(r),
        }
    }

    /// The smallest `r` with `P(τ > r) <= q`, for `q` in `(0, 1]`.
    pub fn inverse_survival(&self, q: f64) -> f64 {
        if q >= 1.0 {
            return self.support_inf();
        }
        if q <= 0.0 {
            return self.support_sup();
        }
        match *self {
            LengthLaw::Exponential { rate } => -q.ln() / rate,
            LengthLaw::Uniform { a, b } => b - q * (b - a),
            LengthLaw::TruncatedExponential { rate, b } => {
                // Solve e^{-λr} = q (1 - e^{-λb}) + e^{-λb}.
                let tail = (-rate * b).exp();
                let target = q * (1.0 - tail) + tail;
                (-target.ln() / rate).min(b)
            }
            _ => self.bisect_survival(q),
        }
    }

    fn bisect_survival(&self, q: f64) -> f64 {
        let sup = self.support_sup();
        let mut lo = self.support_inf();
        let mut hi = if sup.is_finite() { sup } else { lo.max(1.0) };
        if !sup.is_finite() {
            while self.survival(hi) > q {
                lo = hi;
                hi *= 2.0;
                if hi > 1e300 {
                    return f64::INFINITY;
                }
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LengthLaw::Exponential { rate } => 1.0 / rate,
            LengthLaw::Uniform { a, b } => 0.5 * (a + b),
            LengthLaw::Gamma { shape, scale } => shape * scale,
            LengthLaw::TruncatedExponential { rate, b } => {
                let tail = (-rate * b).exp();
                1.0 / rate - b * tail / (1.0 - tail)
            }
            LengthLaw::Custom(_) => {
                let sup = self.support_sup();
                let hi = if sup.is_finite() { sup } else { self.inverse_survival(1e-14) };
                integrate(|r| r * self.pdf(r), self.support_inf(), hi, &QuadratureConfig::default())
                    .map(|q| q.value)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// Draws τ. Inverse-CDF sampling for the closed-form families; the gamma
    /// family uses the Marsaglia–Tsang sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LengthLaw::Gamma { shape, scale } => {
                let law = rand_distr::Gamma::new(shape, scale).expect("validated gamma parameters");
                loop {
                    let r = law.sample(rng);
                    if r > 0.0 {
                        return r;
                    }
                }
            }
            LengthLaw::Custom(ref law) => {
                let mut dynrng = DynRng(rng);
                law.sample(&mut dynrng)
            }
            _ => {
                // u in (0, 1]; survival level q = u keeps the draw strictly inside the support.
                let u = 1.0 - rng.random::<f64>();
                let r = self.inverse_survival(u);
                r.max(f64::MIN_POSITIVE)
            }
        }
    }
}

fn gamma_law(shape: f64, scale: f64) -> statrs::distribution::Gamma {
    statrs::distribution::Gamma::new(shape, 1.0 / scale).expect("validated gamma parameters")
}

struct DynRng<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn validate_custom(law: &dyn CustomLength) -> Result<()> {
    let lo = law.support_inf();
    let sup = law.support_sup();
    if !(lo >= 0.0 && sup > lo) {
        return Err(Error::InvalidModel(format!("custom law has empty support [{lo}, {sup}]")));
    }
    let cfg = QuadratureConfig {
        rel_tol: 1e-11,
        max_subdivisions: 2000,
        ..QuadratureConfig::default()
    };
    // Upper point for an unbounded support: where the CDF says the tail is negligible.
    let hi = if sup.is_finite() {
        sup
    } else {
        let mut hi = lo.max(1.0);
        while 1.0 - law.cdf(hi) > 1e-13 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::InvalidModel("custom law tail does not vanish".into()));
            }
        }
        hi
    };
    let pdf = |r: f64| if r > 0.0 { law.pdf(r) } else { 0.0 };
    let total = integrate(pdf, lo, hi, &cfg)?.value;
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidModel(format!("custom density integrates to {total}, not 1")));
    }
    let mut acc = 0.0;
    let mut prev = lo;
    for k in 1..=100 {
        let r = lo + (hi - lo) * k as f64 / 100.0;
        acc += integrate(pdf, prev, r, &cfg)?.value;
        prev = r;
        if (acc - law.cdf(r)).abs() > 1e-8 {
            return Err(Error::InvalidModel(format!(
                "custom CDF disagrees with integrated density at r = {r}: {} vs {acc}",
                law.cdf(r)
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..1000 {
        let r = law.sample(&mut rng);
        if !(r > 0.0 && r >= lo && r <= sup) {
            return Err(Error::InvalidModel(format!("custom sampler produced {r} outside the support")));
        }
    }
    Ok(())
}

/// Discrete law of the pinning point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningLaw {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PinningLaw {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let law = PinningLaw { points, probs };
        law.validate()?;
        Ok(law)
    }

    pub fn single(z: f64) -> Self {
        PinningLaw {
            points: vec![z],
            probs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidModel("pinning law needs at least one point".into()));
        }
        if self.points.len() != self.probs.len() {
            return Err(Error::InvalidModel(format!(
                "{} pinning points but {} probabilities",
                self.points.len(),
                self.probs.len()
            )));
        }
        if self.points.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidModel("pinning points must be finite".into()));
        }
        if self.points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("pinning points must be strictly increasing".into()));
        }
        if self.probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidModel("pinning probabilities must be positive".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("pinning probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(z, p)| z * p).sum()
    }

    /// Index of the pin equal to `x`, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.points.iter().position(|&z| z == x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.points[self.sample_index(rng)]
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Law of τ together with the law of Z; τ, Z and the driving noise are
/// independent by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub tau: LengthLaw,
    pub pinning: PinningLaw,
}

impl ModelSpec {
    pub fn new(tau: LengthLaw, pinning: PinningLaw) -> Result<Self> {
        let model = ModelSpec { tau, pinning };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.tau.validate()?;
        self.pinning.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: ModelSpec = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// `sup{t : F(t) < 1}`.
    pub fn horizon_bound(&self) -> f64 {
        self.tau.support_sup()
    }

    pub fn n_pins(&self) -> usize {
        self.pinning.len()
    }
}

/// `f(s) / p(s, z)` evaluated in log space.
pub fn density_over_variance_ratio(law: &LengthLaw, s: f64, z: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("density ratio needs s > 0, got {s}")));
    }
    let ln_f = law.ln_pdf(s);
    if ln_f == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok((ln_f + 0.5 * (2.0 * PI * s).ln() + z * z / (2.0 * s)).exp())
}

/// Which independent stream a generator serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Length = 0,
    Pin = 1,
    Noise = 2,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of path `index` under a master seed.
pub fn path_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// A generator for one stream of one path. Streams share the seed and differ
/// in the ChaCha stream id, so they never overlap.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Derived seed for retry `attempt` of a seeded experiment.
pub fn retry_seed(seed: u64, attempt: u32) -> u64 {
    if attempt == 0 {
        seed
    } else {
        splitmix64(seed.wrapping_add(0xa076_1d64_78bd_642f_u64.wrapping_mul(attempt as u64)))
    }
}
