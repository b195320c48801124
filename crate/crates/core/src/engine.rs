//! Full Gibbs chains over states and parameters.
//!
//! Every sweep draws a new log-volatility path with CPF-AS conditioned on the
//! previous one, then updates the parameters given that path:
//!
//! * joint modes move `(phi, sigma)` together with the random-walk Metropolis
//!   step and, in the three-parameter mode, draw `mu` from its conditional;
//! * the individual mode draws `phi` and then `sigma^2` from their separate
//!   conjugate conditionals;
//! * the MSV mode moves `(phi, sigma)` jointly and then draws each `beta_i^2`.

use std::time::Instant;

use crate::conditionals::{
    rwm_joint_step, sample_beta2, sample_mu, sample_phi_normal, sample_sigma2_ig, AdapterState,
};
use crate::error::{Error, Result};
use crate::model::{LatentPath, MsvParams, PriorSpec, ReturnsPanel, SvParams, VolatilityModel};
use crate::particle::{bootstrap_pf, cpf_as};
use crate::rng::RngState;

/// Redraw budget for a stationary `phi` in individual sampling.
const MAX_PHI_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Joint `(phi, sigma)` moves with `mu` held fixed.
    Joint2,
    /// Joint `(phi, sigma)` moves plus a `mu` draw each sweep.
    Joint3,
    /// Separate conjugate draws of `phi` and `sigma^2`, `mu` held fixed.
    Individual2,
    /// Multivariate model with per-asset scales.
    Msv,
}

impl FitMode {
    pub fn name(&self) -> &'static str {
        match self {
            FitMode::Joint2 => "joint2",
            FitMode::Joint3 => "joint3",
            FitMode::Individual2 => "individual2",
            FitMode::Msv => "msv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint2" | "joint-2p" => Some(FitMode::Joint2),
            "joint3" | "joint-3p" => Some(FitMode::Joint3),
            "individual2" | "individual-2p" => Some(FitMode::Individual2),
            "msv" => Some(FitMode::Msv),
            _ => None,
        }
    }
}

/// Initial proposal settings for the Metropolis step.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub alpha_star: f64,
    pub gamma_exponent: f64,
    pub gamma_offset: f64,
    pub lambda0: f64,
    pub cov0: [[f64; 2]; 2],
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            alpha_star: AdapterState::DEFAULT_ALPHA_STAR,
            gamma_exponent: AdapterState::DEFAULT_GAMMA_EXPONENT,
            gamma_offset: AdapterState::DEFAULT_GAMMA_OFFSET,
            lambda0: AdapterState::DEFAULT_LAMBDA,
            cov0: AdapterState::DEFAULT_COV,
        }
    }
}

impl Tuning {
    pub fn adapter(&self, theta0: (f64, f64)) -> AdapterState {
        AdapterState {
            lambda: self.lambda0,
            mean: [theta0.0, theta0.1],
            cov: self.cov0,
            step_index: 0,
            alpha_star: self.alpha_star,
            gamma_exponent: self.gamma_exponent,
            gamma_offset: self.gamma_offset,
        }
    }

    /// Tuning that resumes from an adapted state.
    pub fn from_adapter(a: &AdapterState) -> Self {
        Self {
            alpha_star: a.alpha_star,
            gamma_exponent: a.gamma_exponent,
            gamma_offset: a.gamma_offset,
            lambda0: a.lambda,
            cov0: a.cov,
        }
    }
}

/// Starting values. Unset entries are filled from the prior or the data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialValues {
    pub theta: Option<(f64, f64)>,
    pub mu: Option<f64>,
    pub betas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub mode: FitMode,
    pub n_particles: usize,
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burnin: usize,
    /// Keep every `thin`-th post-burn-in sweep in the parameter traces.
    pub thin: usize,
    /// Keep every `state_thin`-th retained sweep's path.
    pub state_thin: usize,
    pub adapt: bool,
    pub seed: u64,
    pub prior: PriorSpec,
    /// Level used by the two-parameter modes.
    pub fixed_mu: f64,
    pub init: InitialValues,
    pub tuning: Tuning,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: FitMode::Joint2,
            n_particles: 20,
            iterations: 5100,
            burnin: 100,
            thin: 1,
            state_thin: 10,
            adapt: true,
            seed: 0,
            prior: PriorSpec::default(),
            fixed_mu: 0.0,
            init: InitialValues::default(),
            tuning: Tuning::default(),
        }
    }
}

impl FitConfig {
    /// Every violated constraint, one message each.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.n_particles < 2 {
            problems.push(format!("particles must be at least 2, got {}", self.n_particles));
        }
        if self.iterations <= self.burnin {
            problems.push(format!(
                "iterations ({}) must exceed burnin ({})",
                self.iterations, self.burnin
            ));
        }
        if self.thin == 0 {
            problems.push("thin must be at least 1".to_string());
        }
        if self.state_thin == 0 {
            problems.push("state_thin must be at least 1".to_string());
        }
        if !self.fixed_mu.is_finite() {
            problems.push("fixed_mu must be finite".to_string());
        }
        if let Some((phi, sigma)) = self.init.theta {
            if !(phi.abs() < 1.0) {
                problems.push(format!("initial phi must satisfy |phi| < 1, got {phi}"));
            }
            if sigma == 0.0 || !sigma.is_finite() {
                problems.push(format!("initial sigma must be nonzero, got {sigma}"));
            }
        } else {
            let (phi, sigma) = self.prior.theta_prior.mean();
            if !(phi.abs() < 1.0) || sigma == 0.0 {
                problems.push("prior mean is not a valid starting point; set an initial theta".to_string());
            }
        }
        if let Some(b) = &self.init.betas {
            if b.iter().any(|v| !(*v > 0.0)) {
                problems.push("initial betas must be positive".to_string());
            }
        }
        problems.extend(self.prior.validate());
        problems.extend(self.tuning.adapter((0.0, 0.0)).validate());
        problems
    }

    fn check(&self) -> Result<()> {
        let problems = self.validate();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    fn theta0(&self) -> (f64, f64) {
        self.init.theta.unwrap_or_else(|| self.prior.theta_prior.mean())
    }

    /// Number of retained sweeps.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burnin).div_ceil(self.thin)
    }
}

/// Everything a chain produces.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub theta_trace: Vec<(f64, f64)>,
    pub mu_trace: Option<Vec<f64>>,
    /// One trace per asset, holding `beta_i`.
    pub beta_traces: Option<Vec<Vec<f64>>>,
    pub state_draws: Vec<LatentPath>,
    /// Fraction of accepted Metropolis moves after burn-in; 1 for Gibbs-only
    /// chains.
    pub acceptance_rate: f64,
    pub final_adapter: Option<AdapterState>,
    pub config: FitConfig,
    pub wall_clock_seconds: f64,
}

impl ChainOutput {
    pub fn phi_trace(&self) -> Vec<f64> {
        self.theta_trace.iter().map(|t| t.0).collect()
    }

    pub fn sigma_trace(&self) -> Vec<f64> {
        self.theta_trace.iter().map(|t| t.1).collect()
    }

    /// `beta = exp(mu / 2)` along the level trace.
    pub fn beta_from_mu(&self) -> Option<Vec<f64>> {
        self.mu_trace.as_ref().map(|m| m.iter().map(|v| (0.5 * v).exp()).collect())
    }
}

struct Recorder {
    burnin: usize,
    thin: usize,
    state_thin: usize,
    kept: usize,
    theta: Vec<(f64, f64)>,
    mu: Vec<f64>,
    betas: Vec<Vec<f64>>,
    states: Vec<LatentPath>,
    accepted: usize,
    proposals: usize,
}

impl Recorder {
    fn new(cfg: &FitConfig, p: usize) -> Self {
        Self {
            burnin: cfg.burnin,
            thin: cfg.thin,
            state_thin: cfg.state_thin,
            kept: 0,
            theta: Vec::with_capacity(cfg.retained()),
            mu: Vec::new(),
            betas: vec![Vec::new(); p],
            states: Vec::new(),
            accepted: 0,
            proposals: 0,
        }
    }

    fn post_burnin(&self, sweep: usize) -> bool {
        sweep > self.burnin
    }

    /// Whether sweep `sweep` (1-based) is retained.
    fn keeps(&self, sweep: usize) -> bool {
        self.post_burnin(sweep) && (sweep - self.burnin - 1) % self.thin == 0
    }

    fn record(&mut self, theta: (f64, f64), mu: Option<f64>, betas: Option<&[f64]>, path: &LatentPath) {
        self.theta.push(theta);
        if let Some(m) = mu {
            self.mu.push(m);
        }
        if let Some(b) = betas {
            for (trace, v) in self.betas.iter_mut().zip(b) {
                trace.push(*v);
            }
        }
        if self.kept % self.state_thin == 0 {
            self.states.push(path.clone());
        }
        self.kept += 1;
    }

    fn acceptance(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

fn require_univariate(y: &ReturnsPanel) -> Result<()> {
    if y.p() != 1 {
        return Err(Error::Data(format!(
            "univariate fit needs one return column, found {}",
            y.p()
        )));
    }
    Ok(())
}

fn sample_variance(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64
}

fn initial_reference<M: VolatilityModel>(
    y: &ReturnsPanel,
    params: &M,
    n_particles: usize,
    rng: &mut RngState,
) -> Result<LatentPath> {
    let (sys, _) = bootstrap_pf(y, params, n_particles, rng)?;
    sys.draw_trajectory(rng)
}

/// Joint particle Gibbs for the univariate model (`Joint2` or `Joint3`).
pub fn fit_sv_joint(y: &ReturnsPanel, config: &FitConfig, rng: &mut RngState) -> Result<ChainOutput> {
    config.check()?;
    require_univariate(y)?;
    let sample_level = match config.mode {
        FitMode::Joint2 => false,
        FitMode::Joint3 => true,
        other => {
            return Err(Error::InvalidConfig(vec![format!(
                "joint univariate fit cannot run mode {}",
                other.name()
            )]))
        }
    };
    let start = Instant::now();
    let prior = &config.prior;
    let mut theta = config.theta0();
    let mut mu = if sample_level {
        config.init.mu.unwrap_or_else(|| {
            // match E[y^2] = exp(mu + sigma_x^2 / 2) at the starting theta
            let s2x = theta.1 * theta.1 / (1.0 - theta.0 * theta.0);
            sample_variance(&y.column(0)).ln() - 0.5 * s2x
        })
    } else {
        config.fixed_mu
    };
    let mut adapter = config.tuning.adapter(theta);
    let mut path = initial_reference(y, &SvParams::new(theta.0, theta.1, mu), config.n_particles, rng)?;
    let mut rec = Recorder::new(config, 0);

    for sweep in 1..=config.iterations {
        let params = SvParams::new(theta.0, theta.1, mu);
        path = cpf_as(y, &params, config.n_particles, &path, rng)?;
        let step = rwm_joint_step(theta, mu, &path, prior, &mut adapter, config.adapt, rng)?;
        theta = step.theta;
        if sample_level {
            mu = sample_mu(theta, &path, rng)?;
        }
        if rec.post_burnin(sweep) {
            rec.proposals += 1;
            rec.accepted += step.accepted as usize;
        }
        if rec.keeps(sweep) {
            rec.record(theta, sample_level.then_some(mu), None, &path);
        }
    }

    Ok(ChainOutput {
        acceptance_rate: rec.acceptance(),
        theta_trace: rec.theta,
        mu_trace: sample_level.then_some(rec.mu),
        beta_traces: None,
        state_draws: rec.states,
        final_adapter: Some(adapter),
        config: config.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Particle Gibbs with one-at-a-time conjugate draws of `phi` and `sigma^2`.
/// The level is held at `config.fixed_mu`.
pub fn fit_sv_individual(y: &ReturnsPanel, config: &FitConfig, rng: &mut RngState) -> Result<ChainOutput> {
    config.check()?;
    require_univariate(y)?;
    if config.mode != FitMode::Individual2 {
        return Err(Error::InvalidConfig(vec![format!(
            "individual fit cannot run mode {}",
            config.mode.name()
        )]));
    }
    let start = Instant::now();
    let prior = &config.prior;
    let mu = config.fixed_mu;
    let (mut phi, sigma0) = config.theta0();
    let mut sigma = sigma0.abs();
    let mut path = initial_reference(y, &SvParams::new(phi, sigma, mu), config.n_particles, rng)?;
    let mut rec = Recorder::new(config, 0);
    let phi_prior = prior.phi_normal();

    for sweep in 1..=config.iterations {
        path = cpf_as(y, &SvParams::new(phi, sigma, mu), config.n_particles, &path, rng)?;
        let centered = path.centered(mu);
        let mut draws = 0;
        phi = loop {
            let candidate = sample_phi_normal(sigma, &centered, phi_prior, rng)?;
            if candidate.abs() < 1.0 {
                break candidate;
            }
            draws += 1;
            if draws >= MAX_PHI_REDRAWS {
                return Err(Error::Nonstationary(candidate.abs()));
            }
        };
        sigma = sample_sigma2_ig(phi, &centered, prior.ig_state, rng)?.sqrt();
        if rec.keeps(sweep) {
            rec.record((phi, sigma), None, None, &path);
        }
    }

    Ok(ChainOutput {
        acceptance_rate: rec.acceptance(),
        theta_trace: rec.theta,
        mu_trace: None,
        beta_traces: None,
        state_draws: rec.states,
        final_adapter: None,
        config: config.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Joint particle Gibbs for the multivariate model.
pub fn fit_msv(y: &ReturnsPanel, config: &FitConfig, rng: &mut RngState) -> Result<ChainOutput> {
    config.check()?;
    if config.mode != FitMode::Msv {
        return Err(Error::InvalidConfig(vec![format!(
            "multivariate fit cannot run mode {}",
            config.mode.name()
        )]));
    }
    let p = y.p();
    let start = Instant::now();
    let prior = &config.prior;
    let columns: Vec<Vec<f64>> = (0..p).map(|i| y.column(i)).collect();
    let ig: Vec<(f64, f64)> = (0..p).map(|i| prior.ig_beta_for(i, p)).collect::<Result<_>>()?;
    let mut theta = config.theta0();
    let mut betas = match &config.init.betas {
        Some(b) if b.len() != p => {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: b.len(),
            })
        }
        Some(b) => b.clone(),
        None => {
            // match E[y_i^2] = beta_i^2 exp(sigma_x^2 / 2)
            let s2x = theta.1 * theta.1 / (1.0 - theta.0 * theta.0);
            columns
                .iter()
                .map(|c| (sample_variance(c) * (-0.5 * s2x).exp()).sqrt())
                .collect()
        }
    };
    let mut adapter = config.tuning.adapter(theta);
    let params0 = MsvParams::new(theta.0, theta.1, betas.clone())?;
    let mut path = initial_reference(y, &params0, config.n_particles, rng)?;
    let mut rec = Recorder::new(config, p);

    for sweep in 1..=config.iterations {
        let params = MsvParams::new(theta.0, theta.1, betas.clone())?;
        path = cpf_as(y, &params, config.n_particles, &path, rng)?;
        let step = rwm_joint_step(theta, 0.0, &path, prior, &mut adapter, config.adapt, rng)?;
        theta = step.theta;
        for (i, b) in betas.iter_mut().enumerate() {
            *b = sample_beta2(&path, &columns[i], ig[i], rng)?.sqrt();
        }
        if rec.post_burnin(sweep) {
            rec.proposals += 1;
            rec.accepted += step.accepted as usize;
        }
        if rec.keeps(sweep) {
            rec.record(theta, None, Some(&betas), &path);
        }
    }

    Ok(ChainOutput {
        acceptance_rate: rec.acceptance(),
        theta_trace: rec.theta,
        mu_trace: None,
        beta_traces: Some(rec.betas),
        state_draws: rec.states,
        final_adapter: Some(adapter),
        config: config.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the chain selected by `config.mode`.
pub fn fit(y: &ReturnsPanel, config: &FitConfig, rng: &mut RngState) -> Result<ChainOutput> {
    match config.mode {
        FitMode::Joint2 | FitMode::Joint3 => fit_sv_joint(y, config, rng),
        FitMode::Individual2 => fit_sv_individual(y, config, rng),
        FitMode::Msv => fit_msv(y, config, rng),
    }
}
