//! Seeded random streams and the primitive draws every sampler is built on.
//!
//! All randomness flows through [`RngState`], a ChaCha8 generator keyed by a
//! 64-bit seed. Independent chains use [`RngState::substream`], which keeps the
//! key and selects a different ChaCha stream id, so their sequences never
//! overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// A fresh generator on stream `index + 1` under the same key. Stream 0 is
    /// the parent's own stream.
    pub fn substream(&self, index: u64) -> Self {
        Self::with_stream(self.seed, index + 1)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    #[inline]
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma draw with the given shape and scale (mean `shape * scale`).
    pub fn gamma(&mut self, shape: f64, scale: f64) -> Result<f64> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::invalid(format!("gamma shape must be positive, got {shape}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("gamma scale must be positive, got {scale}")));
        }
        let dist = Gamma::new(shape, scale).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(dist.sample(&mut self.inner))
    }

    /// Inverse-gamma draw: `X` such that `1/X ~ Gamma(shape, rate = scale)`.
    pub fn inverse_gamma(&mut self, shape: f64, scale: f64) -> Result<f64> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "inverse-gamma scale must be positive, got {scale}"
            )));
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::invalid(format!(
                "inverse-gamma shape must be positive, got {shape}"
            )));
        }
        let g = self.gamma(shape, 1.0 / scale)?;
        Ok(1.0 / g)
    }

    /// Index drawn from a probability vector.
    pub fn discrete(&mut self, weights: &[f64]) -> Result<usize> {
        let sampler = DiscreteSampler::new(weights)?;
        Ok(sampler.draw(self))
    }

    pub fn bivariate_normal(&mut self, spec: &BivariateNormalSpec) -> (f64, f64) {
        spec.draw(self)
    }
}

/// Inverse-CDF sampler over a validated probability vector. Built once and
/// reused when many draws share the same weights.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl DiscreteSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut sampler = Self {
            cumulative: Vec::with_capacity(weights.len()),
            last_positive: 0,
        };
        sampler.rebuild(weights)?;
        Ok(sampler)
    }

    /// Revalidates and reloads the sampler in place, reusing its buffer.
    pub fn rebuild(&mut self, weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        let cumulative = &mut self.cumulative;
        cumulative.clear();
        let mut total = 0.0;
        let mut last_positive = None;
        for (j, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("weight {j} is invalid: {w}")));
            }
            if w > 0.0 {
                last_positive = Some(j);
            }
            total += w;
            cumulative.push(total);
        }
        let last_positive = last_positive.ok_or_else(|| Error::invalid("all weights are zero"))?;
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        self.last_positive = last_positive;
        Ok(())
    }

    #[inline]
    pub fn draw(&self, rng: &mut RngState) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let u = rng.uniform() * total;
        let j = self.cumulative.partition_point(|&c| c <= u);
        j.min(self.last_positive)
    }
}

/// Bivariate normal over `(phi, sigma)`, parameterized by means, standard
/// deviations and correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateNormalSpec {
    mean: (f64, f64),
    sd: (f64, f64),
    corr: f64,
}

impl BivariateNormalSpec {
    pub fn new(mean: (f64, f64), sd: (f64, f64), corr: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(mean.0.is_finite() && mean.1.is_finite()) {
            problems.push("means must be finite".to_string());
        }
        if !(sd.0 > 0.0 && sd.0.is_finite()) {
            problems.push(format!("first standard deviation must be positive, got {}", sd.0));
        }
        if !(sd.1 > 0.0 && sd.1.is_finite()) {
            problems.push(format!("second standard deviation must be positive, got {}", sd.1));
        }
        if !(corr.abs() < 1.0) {
            problems.push(format!("correlation must lie in (-1, 1), got {corr}"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidArgument(problems.join("; ")));
        }
        Ok(Self { mean, sd, corr })
    }

    pub fn mean(&self) -> (f64, f64) {
        self.mean
    }

    pub fn sd(&self) -> (f64, f64) {
        self.sd
    }

    pub fn corr(&self) -> f64 {
        self.corr
    }

    /// Cholesky factor draw.
    pub fn draw(&self, rng: &mut RngState) -> (f64, f64) {
        let z1 = rng.standard_normal();
        let z2 = rng.standard_normal();
        let a = self.mean.0 + self.sd.0 * z1;
        let b = self.mean.1 + self.sd.1 * (self.corr * z1 + (1.0 - self.corr * self.corr).sqrt() * z2);
        (a, b)
    }

    /// Normalized log-density.
    pub fn logpdf(&self, a: f64, b: f64) -> f64 {
        let u = (a - self.mean.0) / self.sd.0;
        let v = (b - self.mean.1) / self.sd.1;
        let one_m_r2 = 1.0 - self.corr * self.corr;
        let quad = (u * u + v * v - 2.0 * self.corr * u * v) / one_m_r2;
        -std::f64::consts::LN_2 - std::f64::consts::PI.ln()
            - self.sd.0.ln()
            - self.sd.1.ln()
            - 0.5 * one_m_r2.ln()
            - 0.5 * quad
    }
}
