//! Deterministic grid quadrature for short univariate SV series, written
//! without the crate's density code so it can serve as an independent oracle.
#![allow(dead_code)]

use std::f64::consts::PI;

pub fn gauss(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Univariate SV model with the level inside the state:
/// `y_t | x_t ~ N(0, exp(x_t))`.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub phi: f64,
    pub sigma: f64,
    pub mu: f64,
    pub y: Vec<f64>,
}

pub struct GridResult {
    pub x: Vec<f64>,
    pub dx: f64,
    /// Filtering recursions, unnormalized, `alpha[t][k]` for t in 0..=n.
    pub alpha: Vec<Vec<f64>>,
    /// Backward messages, `beta[n] = 1`.
    pub beta: Vec<Vec<f64>>,
}

impl GridModel {
    fn stationary_var(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }

    pub fn solve(&self, points: usize, half_width_sd: f64) -> GridResult {
        let sd = self.stationary_var().sqrt();
        let lo = self.mu - half_width_sd * sd;
        let dx = 2.0 * half_width_sd * sd / (points - 1) as f64;
        let x: Vec<f64> = (0..points).map(|k| lo + k as f64 * dx).collect();
        let s2 = self.sigma * self.sigma;
        // trans[i][k] = p(x_k | x_i)
        let trans: Vec<Vec<f64>> = x
            .iter()
            .map(|&from| {
                let m = self.mu + self.phi * (from - self.mu);
                x.iter().map(|&to| gauss(to, m, s2)).collect()
            })
            .collect();
        let obs = |t: usize| -> Vec<f64> { x.iter().map(|&v| gauss(self.y[t - 1], 0.0, v.exp())).collect() };
        let n = self.y.len();

        let mut alpha = vec![x.iter().map(|&v| gauss(v, self.mu, self.stationary_var())).collect::<Vec<_>>()];
        for t in 1..=n {
            let g = obs(t);
            let prev = &alpha[t - 1];
            let mut next = vec![0.0; points];
            for (i, a) in prev.iter().enumerate() {
                let w = a * dx;
                for (nk, tr) in next.iter_mut().zip(&trans[i]) {
                    *nk += w * tr;
                }
            }
            for (nk, gk) in next.iter_mut().zip(&g) {
                *nk *= gk;
            }
            alpha.push(next);
        }

        let mut beta = vec![vec![1.0; points]; n + 1];
        for t in (0..n).rev() {
            let g = obs(t + 1);
            let weighted: Vec<f64> = (0..points).map(|k| g[k] * beta[t + 1][k] * dx).collect();
            for i in 0..points {
                beta[t][i] = trans[i].iter().zip(&weighted).map(|(a, b)| a * b).sum();
            }
        }
        GridResult { x, dx, alpha, beta }
    }
}

impl GridResult {
    pub fn log_likelihood(&self) -> f64 {
        let last = self.alpha.last().unwrap();
        (last.iter().sum::<f64>() * self.dx).ln()
    }

    /// Posterior CDF of `x_t` given all observations, at the grid points.
    pub fn marginal_cdf(&self, t: usize) -> Vec<f64> {
        let dens: Vec<f64> = self.alpha[t].iter().zip(&self.beta[t]).map(|(a, b)| a * b).collect();
        let mut cdf = vec![0.0; dens.len()];
        for k in 1..dens.len() {
            cdf[k] = cdf[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * self.dx;
        }
        let total = *cdf.last().unwrap();
        cdf.iter().map(|c| c / total).collect()
    }

    fn cdf_at(&self, cdf: &[f64], v: f64) -> f64 {
        if v <= self.x[0] {
            return 0.0;
        }
        let pos = (v - self.x[0]) / self.dx;
        let k = pos.floor() as usize;
        if k + 1 >= self.x.len() {
            return 1.0;
        }
        let f = pos - k as f64;
        cdf[k] + f * (cdf[k + 1] - cdf[k])
    }

    /// Kolmogorov distance between samples of `x_t` and the grid posterior.
    pub fn ks_distance(&self, t: usize, samples: &[f64]) -> f64 {
        let cdf = self.marginal_cdf(t);
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = self.cdf_at(&cdf, v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// A PASS/FAIL reporter for acceptance-style checks.
pub struct Report {
    pub failures: usize,
}

impl Report {
    pub fn new() -> Self {
        Self { failures: 0 }
    }

    pub fn check(&mut self, label: &str, ok: bool, detail: String) {
        println!("{} {label}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

/// Closed-form conditional posteriors written in the algebraically
/// rearranged forms, as an arithmetic cross-check.
pub mod conjugate {
    /// `(shape, scale)` of the `sigma^2` conditional.
    pub fn sigma2(phi: f64, x: &[f64], a0: f64, b0: f64) -> (f64, f64) {
        let n = x.len() - 1;
        let mut ss = 0.0;
        for t in 1..=n {
            ss += (x[t] - phi * x[t - 1]).powi(2);
        }
        (a0 / 2.0 + (n as f64 + 1.0) / 2.0, b0 / 2.0 + ss / 2.0)
    }

    /// `(mean, var)` of the `phi` conditional.
    pub fn phi(sigma: f64, x: &[f64], m: f64, v: f64) -> (f64, f64) {
        let s2 = sigma * sigma;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for t in 1..x.len() {
            sxx += x[t - 1].powi(2);
            sxy += x[t] * x[t - 1];
        }
        let den = s2 + v * sxx;
        ((m * s2 + v * sxy) / den, s2 * v / den)
    }

    /// `(mean, var)` of the level conditional under a flat prior.
    pub fn mu(phi: f64, sigma: f64, x: &[f64]) -> (f64, f64) {
        let n = (x.len() - 1) as f64;
        let w0 = 1.0 - phi * phi;
        let w = (1.0 - phi).powi(2);
        let mut r = 0.0;
        for t in 1..x.len() {
            r += x[t] - phi * x[t - 1];
        }
        let den = w0 + n * w;
        ((w0 * x[0] + (1.0 - phi) * r) / den, sigma * sigma / den)
    }

    /// `(shape, scale)` of the `beta_i^2` conditional.
    pub fn beta2(x: &[f64], y: &[f64], a: f64, b: f64) -> (f64, f64) {
        let n = y.len();
        let mut ss = 0.0;
        for t in 1..=n {
            ss += y[t - 1] * y[t - 1] / x[t].exp();
        }
        ((a + n as f64 + 1.0) / 2.0, (b + ss) / 2.0)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}
