//! Parameter updates given a latent path: closed-form conjugate draws and the
//! adaptive random-walk Metropolis step for `(phi, sigma)`.
//!
//! Each conjugate sampler is split into a pure posterior-parameter function
//! and a draw, so the posterior parameters can be checked on their own.

use crate::error::{Error, Result};
use crate::model::{joint_theta_logdensity, LatentPath, PriorSpec};
use crate::rng::RngState;

/// `IG(shape, scale)`: `1/X ~ Gamma(shape, rate = scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaParams {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    pub mean: f64,
    pub var: f64,
}

/// Posterior of `sigma^2` for a zero-level path under `sigma^2 ~ IG(a0/2, b0/2)`.
pub fn sigma2_posterior(phi: f64, path: &LatentPath, prior: (f64, f64)) -> Result<InvGammaParams> {
    let (a0, b0) = prior;
    if !(a0 > 0.0 && b0 > 0.0) {
        return Err(Error::invalid(format!("IG prior must be positive, got ({a0}, {b0})")));
    }
    let n = path.n_obs();
    if n == 0 {
        return Err(Error::invalid("path needs at least one transition"));
    }
    let ss: f64 = path
        .as_slice()
        .windows(2)
        .map(|w| {
            let r = w[1] - phi * w[0];
            r * r
        })
        .sum();
    Ok(InvGammaParams {
        shape: 0.5 * (a0 + n as f64 + 1.0),
        scale: 0.5 * (b0 + ss),
    })
}

pub fn sample_sigma2_ig(phi: f64, path: &LatentPath, prior: (f64, f64), rng: &mut RngState) -> Result<f64> {
    let post = sigma2_posterior(phi, path, prior)?;
    rng.inverse_gamma(post.shape, post.scale)
}

/// `N(Bb, B)` posterior of `phi` for a zero-level path under
/// `phi ~ N(mu_phi, var_phi)`.
pub fn phi_posterior(sigma: f64, path: &LatentPath, prior: (f64, f64)) -> Result<NormalParams> {
    let (mu_phi, var_phi) = prior;
    if sigma == 0.0 {
        return Err(Error::ZeroSigma);
    }
    if !(var_phi > 0.0) {
        return Err(Error::invalid(format!("prior variance must be positive, got {var_phi}")));
    }
    let s2 = sigma * sigma;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for w in path.as_slice().windows(2) {
        sxx += w[0] * w[0];
        sxy += w[1] * w[0];
    }
    let precision = 1.0 / var_phi + sxx / s2;
    let b = mu_phi / var_phi + sxy / s2;
    let var = 1.0 / precision;
    Ok(NormalParams { mean: var * b, var })
}

pub fn sample_phi_normal(sigma: f64, path: &LatentPath, prior: (f64, f64), rng: &mut RngState) -> Result<f64> {
    let post = phi_posterior(sigma, path, prior)?;
    Ok(rng.normal(post.mean, post.var.sqrt()))
}

/// Posterior of the level `mu` under a flat prior.
pub fn mu_posterior(theta: (f64, f64), path: &LatentPath) -> Result<NormalParams> {
    let (phi, sigma) = theta;
    if !(phi.abs() < 1.0) {
        return Err(Error::Nonstationary(phi.abs()));
    }
    if sigma == 0.0 {
        return Err(Error::ZeroSigma);
    }
    let x = path.as_slice();
    let n = path.n_obs() as f64;
    let s2 = sigma * sigma;
    let one_m_phi2 = 1.0 - phi * phi;
    let resid_sum: f64 = x.windows(2).map(|w| w[1] - phi * w[0]).sum();
    let var = s2 / (n * (1.0 - phi) * (1.0 - phi) + one_m_phi2);
    let mean = var * (one_m_phi2 * x[0] / s2 + (1.0 - phi) * resid_sum / s2);
    Ok(NormalParams { mean, var })
}

pub fn sample_mu(theta: (f64, f64), path: &LatentPath, rng: &mut RngState) -> Result<f64> {
    let post = mu_posterior(theta, path)?;
    Ok(rng.normal(post.mean, post.var.sqrt()))
}

/// Posterior of `beta_i^2` under `beta_i^2 ~ IG(a_i/2, b_i/2)`; `y` holds
/// `y_{i,1..n}` and `path` holds `x_{0..n}`.
pub fn beta2_posterior(path: &LatentPath, y: &[f64], prior: (f64, f64)) -> Result<InvGammaParams> {
    let (a, b) = prior;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("IG prior must be positive, got ({a}, {b})")));
    }
    let n = path.n_obs();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let ss: f64 = y.iter().zip(&path.as_slice()[1..]).map(|(v, x)| v * v * (-x).exp()).sum();
    Ok(InvGammaParams {
        shape: 0.5 * (a + n as f64 + 1.0),
        scale: 0.5 * (b + ss),
    })
}

pub fn sample_beta2(path: &LatentPath, y: &[f64], prior: (f64, f64), rng: &mut RngState) -> Result<f64> {
    let post = beta2_posterior(path, y, prior)?;
    rng.inverse_gamma(post.shape, post.scale)
}

/// State of the adaptive random-walk Metropolis sampler: proposal scale
/// `lambda`, running mean and covariance, and the step-size schedule
/// `gamma_j = (j + gamma_offset)^(-gamma_exponent)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterState {
    pub lambda: f64,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub step_index: u64,
    pub alpha_star: f64,
    pub gamma_exponent: f64,
    pub gamma_offset: f64,
}

impl AdapterState {
    pub const DEFAULT_ALPHA_STAR: f64 = 0.234;
    pub const DEFAULT_GAMMA_EXPONENT: f64 = 0.6;
    pub const DEFAULT_GAMMA_OFFSET: f64 = 10.0;
    pub const DEFAULT_LAMBDA: f64 = 2.38 * 2.38 / 2.0;
    pub const DEFAULT_COV: [[f64; 2]; 2] = [[0.01, 0.0], [0.0, 0.01]];

    /// Default tuning centred on `theta0`.
    pub fn new(theta0: (f64, f64)) -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
            mean: [theta0.0, theta0.1],
            cov: Self::DEFAULT_COV,
            step_index: 0,
            alpha_star: Self::DEFAULT_ALPHA_STAR,
            gamma_exponent: Self::DEFAULT_GAMMA_EXPONENT,
            gamma_offset: Self::DEFAULT_GAMMA_OFFSET,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            problems.push(format!("lambda must be positive, got {}", self.lambda));
        }
        let [[a, b], [c, d]] = self.cov;
        if b != c {
            problems.push("proposal covariance must be symmetric".to_string());
        }
        if !(a >= 0.0 && d >= 0.0 && a * d - b * c >= -1e-15 && a + d > 0.0) {
            problems.push("proposal covariance must be positive semidefinite and nonzero".to_string());
        }
        if !(self.alpha_star > 0.0 && self.alpha_star < 1.0) {
            problems.push(format!("target acceptance must lie in (0, 1), got {}", self.alpha_star));
        }
        if !(self.gamma_exponent > 0.5 && self.gamma_exponent <= 1.0) {
            problems.push(format!(
                "gamma exponent must lie in (0.5, 1], got {}",
                self.gamma_exponent
            ));
        }
        if !(self.gamma_offset >= 0.0) {
            problems.push(format!("gamma offset must be nonnegative, got {}", self.gamma_offset));
        }
        problems
    }

    /// Step length for iteration `j >= 1`.
    pub fn gamma(&self, j: u64) -> f64 {
        (j as f64 + self.gamma_offset).powf(-self.gamma_exponent)
    }

    /// Applies the stochastic-approximation updates with an explicit step
    /// length. `alpha` is the acceptance probability of the move that produced
    /// `theta_new`.
    pub fn update_with_step(&mut self, gamma: f64, alpha: f64, theta_new: (f64, f64)) {
        self.lambda = (self.lambda.ln() + gamma * (alpha - self.alpha_star)).exp();
        let d = [theta_new.0 - self.mean[0], theta_new.1 - self.mean[1]];
        for r in 0..2 {
            for c in 0..2 {
                self.cov[r][c] += gamma * (d[r] * d[c] - self.cov[r][c]);
            }
        }
        // keep exact symmetry under rounding
        let off = 0.5 * (self.cov[0][1] + self.cov[1][0]);
        self.cov[0][1] = off;
        self.cov[1][0] = off;
        self.mean[0] += gamma * d[0];
        self.mean[1] += gamma * d[1];
    }

    /// Advances the step counter and applies the update with `gamma_{j+1}`.
    pub fn update(&mut self, alpha: f64, theta_new: (f64, f64)) {
        self.step_index += 1;
        let g = self.gamma(self.step_index);
        self.update_with_step(g, alpha, theta_new);
    }

    /// Lower Cholesky factor of `lambda * cov`.
    fn proposal_factor(&self) -> [[f64; 2]; 2] {
        let a = self.lambda * self.cov[0][0];
        let b = self.lambda * self.cov[1][0];
        let c = self.lambda * self.cov[1][1];
        if a > 0.0 {
            let l11 = a.sqrt();
            let l21 = b / l11;
            let l22 = (c - l21 * l21).max(0.0).sqrt();
            [[l11, 0.0], [l21, l22]]
        } else {
            [[0.0, 0.0], [0.0, c.max(0.0).sqrt()]]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwmOutcome {
    pub theta: (f64, f64),
    pub proposal: (f64, f64),
    pub accepted: bool,
    /// `min(1, g(proposal) / g(current))`.
    pub accept_prob: f64,
}

fn log_target(theta: (f64, f64), mu: f64, path: &LatentPath, prior: &PriorSpec) -> f64 {
    // sigma = 0 has zero density
    joint_theta_logdensity(theta, mu, path, prior).unwrap_or(f64::NEG_INFINITY)
}

/// One random-walk Metropolis step for `(phi, sigma)` targeting the joint
/// posterior given `mu` and the path. When `adapt` is set the adapter is
/// updated in place; otherwise it is left untouched.
pub fn rwm_joint_step(
    theta: (f64, f64),
    mu: f64,
    path: &LatentPath,
    prior: &PriorSpec,
    adapter: &mut AdapterState,
    adapt: bool,
    rng: &mut RngState,
) -> Result<RwmOutcome> {
    let current = joint_theta_logdensity(theta, mu, path, prior)?;
    if !current.is_finite() {
        return Err(Error::CorruptChainState);
    }
    let l = adapter.proposal_factor();
    let z1 = rng.standard_normal();
    let z2 = rng.standard_normal();
    let proposal = (theta.0 + l[0][0] * z1, theta.1 + l[1][0] * z1 + l[1][1] * z2);
    let cand = log_target(proposal, mu, path, prior);
    let log_ratio = cand - current;
    let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    let u = rng.uniform();
    let accepted = u < accept_prob;
    let next = if accepted { proposal } else { theta };
    if adapt {
        adapter.update(accept_prob, next);
    }
    Ok(RwmOutcome {
        theta: next,
        proposal,
        accepted,
        accept_prob,
    })
}
