//! Bootstrap particle filter, conditional particle filter (CPF) and CPF with
//! ancestor sampling (CPF-AS) for the SV/MSV state space.
//!
//! All three filters share one forward pass. Particles are proposed from the
//! state prior (stationary density at `t = 0`, AR(1) transition afterwards), so
//! the incremental weight is the observation density. Resampling is
//! multinomial and happens at every step.
//!
//! In the conditional filters the last particle (index `N - 1`) is pinned to
//! the reference trajectory. Plain CPF keeps the pinned particle's own
//! ancestry; CPF-AS redraws its ancestor at each `t` with probability
//! proportional to `w_{t-1}^j p(x'_t | x_{t-1}^j)`.
//!
//! Paths are not copied during the pass. Values and ancestor indices are
//! stored per time step and trajectories are rebuilt by backtracking.

use crate::error::{Error, Result};
use crate::model::{LatentPath, ObservationTerms, ReturnsPanel, VolatilityModel};
use crate::rng::{DiscreteSampler, RngState};

/// Normalizes log-weights with max subtraction and returns the log of their
/// sum alongside.
fn normalize_into(logw: &[f64], out: &mut [f64]) -> Result<f64> {
    if logw.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::DegenerateWeights);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logw) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(max + sum.ln())
}

/// `exp(logw - logsumexp(logw))`.
pub fn normalize_log_weights(logw: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; logw.len()];
    normalize_into(logw, &mut out)?;
    Ok(out)
}

/// `count` iid draws from `Discrete(weights)`.
pub fn multinomial_resample(weights: &[f64], count: usize, rng: &mut RngState) -> Result<Vec<usize>> {
    let sampler = DiscreteSampler::new(weights)?;
    Ok((0..count).map(|_| sampler.draw(rng)).collect())
}

/// `N` weighted trajectories over `t = 0..=n`, stored time-major.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    n_particles: usize,
    n_obs: usize,
    values: Vec<f64>,
    ancestors: Vec<usize>,
    weights: Vec<f64>,
}

impl ParticleSystem {
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.n_particles + j]
    }

    /// Index at `t - 1` of the parent of particle `j` at `t`, for `t >= 1`.
    pub fn ancestor(&self, t: usize, j: usize) -> usize {
        assert!(t >= 1, "no ancestors at t = 0");
        self.ancestors[(t - 1) * self.n_particles + j]
    }

    /// Normalized weights at time `t`.
    pub fn weights(&self, t: usize) -> &[f64] {
        &self.weights[t * self.n_particles..(t + 1) * self.n_particles]
    }

    /// Full trajectory of final-time particle `j`, rebuilt through the
    /// ancestor indices.
    pub fn trajectory(&self, j: usize) -> LatentPath {
        self.trajectory_at(self.n_obs, j)
    }

    /// Trajectory `x_{0:t}` ending at particle `j` of time `t`.
    pub fn trajectory_at(&self, n: usize, j: usize) -> LatentPath {
        let mut x = vec![0.0; n + 1];
        let mut k = j;
        for t in (0..=n).rev() {
            x[t] = self.value(t, k);
            if t > 0 {
                k = self.ancestor(t, k);
            }
        }
        LatentPath::from_vec_unchecked(x)
    }

    /// One trajectory drawn according to the final normalized weights.
    pub fn draw_trajectory(&self, rng: &mut RngState) -> Result<LatentPath> {
        let k = rng.discrete(self.weights(self.n_obs))?;
        Ok(self.trajectory(k))
    }
}

#[derive(Clone, Copy)]
enum Reference<'a> {
    Free,
    Pinned { path: &'a [f64], ancestor_sampling: bool },
}

fn forward_pass<M: VolatilityModel>(
    y: &ReturnsPanel,
    params: &M,
    n_particles: usize,
    reference: Reference<'_>,
    rng: &mut RngState,
) -> Result<(ParticleSystem, f64)> {
    if n_particles == 0 {
        return Err(Error::invalid("particle count must be at least 1"));
    }
    let obs = ObservationTerms::new(y, params)?;
    let n = y.n();
    let dyn_ = params.dynamics();
    let sd0 = dyn_.stationary_variance()?.sqrt();
    let sigma = dyn_.sigma.abs();
    let inv_two_var = 1.0 / (2.0 * dyn_.sigma * dyn_.sigma);

    let (free, pinned) = match reference {
        Reference::Free => (n_particles, None),
        Reference::Pinned { path, ancestor_sampling } => {
            if path.len() != n + 1 {
                return Err(Error::DimensionMismatch {
                    expected: n + 1,
                    found: path.len(),
                });
            }
            (n_particles - 1, Some((path, ancestor_sampling)))
        }
    };

    let np = n_particles;
    let mut values = vec![0.0; (n + 1) * np];
    let mut ancestors = vec![0usize; n * np];
    let mut weights = vec![0.0; (n + 1) * np];
    let mut logw = vec![0.0; np];
    let mut anc_logw = vec![0.0; np];
    let mut anc_w = vec![0.0; np];
    let mut sampler = DiscreteSampler::new(&[1.0])?;

    // t = 0: proposal equals the stationary prior, so weights are uniform.
    for j in 0..free {
        values[j] = dyn_.mu + sd0 * rng.standard_normal();
    }
    if let Some((path, _)) = pinned {
        values[np - 1] = path[0];
    }
    weights[..np].fill(1.0 / np as f64);

    let log_np = (np as f64).ln();
    let mut loglik = 0.0;
    for t in 1..=n {
        let (past, present) = values.split_at_mut(t * np);
        let prev = &past[(t - 1) * np..];
        let cur = &mut present[..np];
        let prev_w = &weights[(t - 1) * np..t * np];
        let anc = &mut ancestors[(t - 1) * np..t * np];

        sampler.rebuild(prev_w)?;
        for j in 0..free {
            let a = sampler.draw(rng);
            anc[j] = a;
            cur[j] = dyn_.transition_mean(prev[a]) + sigma * rng.standard_normal();
        }
        if let Some((path, ancestor_sampling)) = pinned {
            let target = path[t];
            cur[np - 1] = target;
            anc[np - 1] = if ancestor_sampling {
                for i in 0..np {
                    let d = target - dyn_.transition_mean(prev[i]);
                    anc_logw[i] = prev_w[i].ln() - d * d * inv_two_var;
                }
                normalize_into(&anc_logw, &mut anc_w).map_err(|_| Error::WeightCollapse { t })?;
                sampler.rebuild(&anc_w)?;
                sampler.draw(rng)
            } else {
                np - 1
            };
        }

        for j in 0..np {
            logw[j] = obs.logpdf(t, cur[j]);
        }
        let w_t = &mut weights[t * np..(t + 1) * np];
        let lse = normalize_into(&logw, w_t).map_err(|_| Error::WeightCollapse { t })?;
        loglik += lse - log_np;
    }

    Ok((
        ParticleSystem {
            n_particles: np,
            n_obs: n,
            values,
            ancestors,
            weights,
        },
        loglik,
    ))
}

/// Bootstrap particle filter. Returns the particle system and the estimate
/// `sum_t log((1/N) sum_j w_t^j)` of the log-likelihood.
pub fn bootstrap_pf<M: VolatilityModel>(
    y: &ReturnsPanel,
    params: &M,
    n_particles: usize,
    rng: &mut RngState,
) -> Result<(ParticleSystem, f64)> {
    forward_pass(y, params, n_particles, Reference::Free, rng)
}

/// Conditional particle filter system with the last particle pinned to
/// `reference`.
pub fn cpf_system<M: VolatilityModel>(
    y: &ReturnsPanel,
    params: &M,
    n_particles: usize,
    reference: &LatentPath,
    ancestor_sampling: bool,
    rng: &mut RngState,
) -> Result<ParticleSystem> {
    let r = Reference::Pinned {
        path: reference.as_slice(),
        ancestor_sampling,
    };
    forward_pass(y, params, n_particles, r, rng).map(|(sys, _)| sys)
}

/// One CPF kernel step: a trajectory drawn from the final weights.
pub fn cpf<M: VolatilityModel>(
    y: &ReturnsPanel,
    params: &M,
    n_particles: usize,
    reference: &LatentPath,
    rng: &mut RngState,
) -> Result<LatentPath> {
    cpf_system(y, params, n_particles, reference, false, rng)?.draw_trajectory(rng)
}

/// One CPF-AS kernel step.
pub fn cpf_as<M: VolatilityModel>(
    y: &ReturnsPanel,
    params: &M,
    n_particles: usize,
    reference: &LatentPath,
    rng: &mut RngState,
) -> Result<LatentPath> {
    cpf_system(y, params, n_particles, reference, true, rng)?.draw_trajectory(rng)
}
