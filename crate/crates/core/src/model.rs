//! Parameter containers and log-densities of the univariate and multivariate
//! stochastic volatility models.
//!
//! The latent log-volatility follows a stationary AR(1) around a level `mu`,
//!
//! ```text
//! x_0 ~ N(mu, sigma^2 / (1 - phi^2))
//! x_t = mu + phi (x_{t-1} - mu) + sigma w_t
//! y_it = beta_i exp(x_t / 2) eps_it
//! ```
//!
//! The univariate model ties its scale to the level, `beta = exp(mu / 2)`:
//! with `z_t = x_t - mu`, `y_t = beta exp(z_t / 2) eps_t = exp(x_t / 2) eps_t`.
//! The multivariate model has `mu = 0` and one free scale per asset. Only
//! `sigma^2` enters the densities, so a negative `sigma` is allowed.

use crate::error::{Error, Result};
use crate::rng::BivariateNormalSpec;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// Level, persistence and noise scale of the latent AR(1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDynamics {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl StateDynamics {
    pub fn stationary_variance(&self) -> Result<f64> {
        check_stationary(self.phi)?;
        check_sigma(self.sigma)?;
        Ok(self.sigma * self.sigma / (1.0 - self.phi * self.phi))
    }

    #[inline]
    pub fn transition_mean(&self, x_prev: f64) -> f64 {
        self.mu + self.phi * (x_prev - self.mu)
    }
}

/// Common surface of the SV and MSV parameter sets.
pub trait VolatilityModel {
    fn dynamics(&self) -> StateDynamics;
    /// Per-asset observation scales `beta_i`.
    fn scales(&self) -> Vec<f64>;
}

/// Univariate SV parameters. `beta` is always `exp(mu / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub phi: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl SvParams {
    pub fn new(phi: f64, sigma: f64, mu: f64) -> Self {
        Self { phi, sigma, mu }
    }

    /// Parameters whose level reproduces the observation scale `beta`.
    pub fn from_beta(phi: f64, sigma: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            phi,
            sigma,
            mu: 2.0 * beta.ln(),
        })
    }

    pub fn beta(&self) -> f64 {
        (0.5 * self.mu).exp()
    }
}

impl VolatilityModel for SvParams {
    fn dynamics(&self) -> StateDynamics {
        StateDynamics {
            mu: self.mu,
            phi: self.phi,
            sigma: self.sigma,
        }
    }

    /// The level already sits in the state, so returns are `exp(x_t / 2) eps_t`.
    fn scales(&self) -> Vec<f64> {
        vec![1.0]
    }
}

/// Multivariate SV parameters: one latent path shared by `p` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MsvParams {
    pub phi: f64,
    pub sigma: f64,
    betas: Vec<f64>,
}

impl MsvParams {
    pub fn new(phi: f64, sigma: f64, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("at least one asset scale is required"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::invalid(format!("asset scales must be positive, got {b}")));
        }
        Ok(Self { phi, sigma, betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn p(&self) -> usize {
        self.betas.len()
    }
}

impl VolatilityModel for MsvParams {
    fn dynamics(&self) -> StateDynamics {
        StateDynamics {
            mu: 0.0,
            phi: self.phi,
            sigma: self.sigma,
        }
    }

    fn scales(&self) -> Vec<f64> {
        self.betas.clone()
    }
}

/// Hyperparameters for every parameter-update step.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Bivariate normal on `(phi, sigma)`; its second mean is `mu_q`.
    pub theta_prior: BivariateNormalSpec,
    /// `(a0, b0)` for `sigma^2 ~ IG(a0/2, b0/2)` in individual sampling.
    pub ig_state: (f64, f64),
    /// `(a_i, b_i)` for `beta_i^2 ~ IG(a_i/2, b_i/2)`. A single entry applies
    /// to every asset.
    pub ig_beta: Vec<(f64, f64)>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            theta_prior: BivariateNormalSpec::new((0.95, 0.2), (0.1, 0.2), -0.5)
                .expect("default prior is valid"),
            ig_state: (2.0, 0.2),
            ig_beta: vec![(2.0, 1.0)],
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let (a0, b0) = self.ig_state;
        if !(a0 > 0.0 && b0 > 0.0) {
            problems.push(format!("ig_state hyperparameters must be positive, got ({a0}, {b0})"));
        }
        if self.ig_beta.is_empty() {
            problems.push("ig_beta needs at least one (a, b) pair".to_string());
        }
        for (i, &(a, b)) in self.ig_beta.iter().enumerate() {
            if !(a > 0.0 && b > 0.0) {
                problems.push(format!("ig_beta[{i}] must be positive, got ({a}, {b})"));
            }
        }
        problems
    }

    /// `(mu_phi, sigma_phi^2)` for the normal prior on `phi` alone.
    pub fn phi_normal(&self) -> (f64, f64) {
        let sd = self.theta_prior.sd().0;
        (self.theta_prior.mean().0, sd * sd)
    }

    pub fn ig_beta_for(&self, asset: usize, p: usize) -> Result<(f64, f64)> {
        match self.ig_beta.len() {
            1 => Ok(self.ig_beta[0]),
            len if len == p => Ok(self.ig_beta[asset]),
            len => Err(Error::DimensionMismatch { expected: p, found: len }),
        }
    }
}

/// A log-volatility trajectory `x_{0:n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    x: Vec<f64>,
}

impl LatentPath {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("latent path must contain x_0"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent path has non-finite entries"));
        }
        Ok(Self { x })
    }

    pub(crate) fn from_vec_unchecked(x: Vec<f64>) -> Self {
        Self { x }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    /// Number of stored states, `n + 1`.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of observation times `n`.
    pub fn n_obs(&self) -> usize {
        self.x.len() - 1
    }

    /// The path shifted by `-mu`.
    pub fn centered(&self, mu: f64) -> LatentPath {
        LatentPath {
            x: self.x.iter().map(|v| v - mu).collect(),
        }
    }
}

/// An `n x p` block of returns; row `i` holds `y_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    data: Vec<f64>,
    n: usize,
    p: usize,
    labels: Vec<String>,
}

impl ReturnsPanel {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Data("no data rows".into()));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::Data("no data columns".into()));
        }
        let mut data = Vec::with_capacity(n * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!(
                    "row {} has {} columns, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite value at row {}, column {}", i + 1, j + 1)));
            }
            data.extend(row);
        }
        let labels = (1..=p).map(|i| format!("y{i}")).collect();
        Ok(Self { data, n, p, labels })
    }

    pub fn from_column(y: Vec<f64>) -> Result<Self> {
        Self::from_rows(y.into_iter().map(|v| vec![v]).collect())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Observation `y_{i+1}` across assets.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn column(&self, asset: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.p + asset]).collect()
    }
}

fn check_stationary(phi: f64) -> Result<()> {
    if phi.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Nonstationary(phi.abs()))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma != 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::ZeroSigma)
    }
}

/// `log N(x_curr; mu + phi (x_prev - mu), sigma^2)`.
pub fn transition_logpdf<M: VolatilityModel>(x_prev: f64, x_curr: f64, params: &M) -> Result<f64> {
    let d = params.dynamics();
    check_sigma(d.sigma)?;
    Ok(normal_logpdf(x_curr, d.transition_mean(x_prev), d.sigma * d.sigma))
}

/// `log N(x0; mu, sigma^2 / (1 - phi^2))`.
pub fn initial_logpdf<M: VolatilityModel>(x0: f64, params: &M) -> Result<f64> {
    let d = params.dynamics();
    let var = d.stationary_variance()?;
    Ok(normal_logpdf(x0, d.mu, var))
}

/// `sum_i log N(y_i; 0, beta_i^2 exp(x))`.
pub fn observation_logpdf<M: VolatilityModel>(y_row: &[f64], x: f64, params: &M) -> Result<f64> {
    let scales = params.scales();
    if scales.len() != y_row.len() {
        return Err(Error::DimensionMismatch {
            expected: scales.len(),
            found: y_row.len(),
        });
    }
    Ok(y_row
        .iter()
        .zip(&scales)
        .map(|(&y, &b)| normal_logpdf(y, 0.0, b * b * x.exp()))
        .sum())
}

/// Observation log-density with the per-row sufficient statistics cached.
///
/// For row `t`, `log g(y_t | x) = c - (p/2) x - (s_t / 2) exp(-x)` with
/// `s_t = sum_i y_it^2 / beta_i^2` and `c = -p/2 log(2 pi) - sum_i log beta_i`.
#[derive(Debug, Clone)]
pub struct ObservationTerms {
    constant: f64,
    half_p: f64,
    scaled_sq: Vec<f64>,
}

impl ObservationTerms {
    pub fn new<M: VolatilityModel>(y: &ReturnsPanel, params: &M) -> Result<Self> {
        let scales = params.scales();
        if scales.len() != y.p() {
            return Err(Error::DimensionMismatch {
                expected: scales.len(),
                found: y.p(),
            });
        }
        let inv_sq: Vec<f64> = scales.iter().map(|b| 1.0 / (b * b)).collect();
        let scaled_sq = (0..y.n())
            .map(|i| y.row(i).iter().zip(&inv_sq).map(|(v, w)| v * v * w).sum())
            .collect();
        let p = y.p() as f64;
        let constant = -p * HALF_LN_2PI - scales.iter().map(|b| b.ln()).sum::<f64>();
        Ok(Self {
            constant,
            half_p: 0.5 * p,
            scaled_sq,
        })
    }

    pub fn n(&self) -> usize {
        self.scaled_sq.len()
    }

    /// Log-density of observation `y_t`, `t` in `1..=n`, at state `x`.
    #[inline]
    pub fn logpdf(&self, t: usize, x: f64) -> f64 {
        self.constant - self.half_p * x - 0.5 * self.scaled_sq[t - 1] * (-x).exp()
    }
}

/// Autocorrelation of `y_t^2` at lag `h` implied by the SV model:
/// `(exp(s2 phi^h) - 1) / (kappa exp(s2) - 1)` with `s2 = sigma^2 / (1 - phi^2)`.
pub fn theoretical_sv_acf(phi: f64, sigma: f64, kappa_eps: f64, h: usize) -> Result<f64> {
    check_stationary(phi)?;
    if h == 0 {
        return Err(Error::invalid("lag must be at least 1"));
    }
    if !(kappa_eps >= 1.0) {
        return Err(Error::invalid(format!("kurtosis must be >= 1, got {kappa_eps}")));
    }
    let s2 = sigma * sigma / (1.0 - phi * phi);
    let num = (s2 * phi.powi(h as i32)).exp_m1();
    let den = kappa_eps * s2.exp() - 1.0;
    Ok(num / den)
}

/// `(1 - phi^2)(x_0 - mu)^2 + sum_t ((x_t - mu) - phi (x_{t-1} - mu))^2`.
pub fn state_quadratic(phi: f64, mu: f64, path: &LatentPath) -> f64 {
    let x = path.as_slice();
    let z0 = x[0] - mu;
    let mut q = (1.0 - phi * phi) * z0 * z0;
    for w in x.windows(2) {
        let r = (w[1] - mu) - phi * (w[0] - mu);
        q += r * r;
    }
    q
}

/// Unnormalized log posterior of `(phi, sigma)` given `mu` and the path.
///
/// Returns `-inf` for `|phi| >= 1` so Metropolis proposals outside the
/// stationary region are rejected.
pub fn joint_theta_logdensity(theta: (f64, f64), mu: f64, path: &LatentPath, prior: &PriorSpec) -> Result<f64> {
    let (phi, sigma) = theta;
    check_sigma(sigma)?;
    if !(phi.abs() < 1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let n = path.n_obs() as f64;
    let one_m_phi2 = 1.0 - phi * phi;
    let q = state_quadratic(phi, mu, path);
    let log_prior = prior.theta_prior.logpdf(phi, sigma);
    // x_0 contributes one factor of 1/|sigma|, each transition another.
    Ok(log_prior + 0.5 * one_m_phi2.ln() - (n + 1.0) * sigma.abs().ln() - q / (2.0 * sigma * sigma))
}
