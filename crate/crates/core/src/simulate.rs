//! Synthetic SV and MSV data, returned together with the latent path that
//! generated it.

use crate::error::{Error, Result};
use crate::model::{LatentPath, MsvParams, ReturnsPanel, SvParams};
use crate::rng::RngState;

/// Draws a zero-mean stationary AR(1) path and per-time return noise scaled by
/// `scales`. Random numbers are consumed as `z_0`, then for each `t`:
/// `w_t` followed by `eps_1t .. eps_pt`.
fn simulate_centered(
    phi: f64,
    sigma: f64,
    scales: &[f64],
    n: usize,
    rng: &mut RngState,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if !(phi.abs() < 1.0) {
        return Err(Error::Nonstationary(phi.abs()));
    }
    if n == 0 {
        return Err(Error::invalid("series length must be at least 1"));
    }
    let sd0 = sigma.abs() / (1.0 - phi * phi).sqrt();
    let mut z = Vec::with_capacity(n + 1);
    z.push(sd0 * rng.standard_normal());
    let mut rows = Vec::with_capacity(n);
    for t in 1..=n {
        let zt = phi * z[t - 1] + sigma * rng.standard_normal();
        z.push(zt);
        let vol = (0.5 * zt).exp();
        rows.push(scales.iter().map(|b| b * vol * rng.standard_normal()).collect());
    }
    Ok((z, rows))
}

pub fn simulate_sv(params: &SvParams, n: usize, rng: &mut RngState) -> Result<(LatentPath, ReturnsPanel)> {
    let (z, rows) = simulate_centered(params.phi, params.sigma, &[params.beta()], n, rng)?;
    let x = z.into_iter().map(|v| params.mu + v).collect();
    Ok((LatentPath::new(x)?, ReturnsPanel::from_rows(rows)?))
}

pub fn simulate_msv(params: &MsvParams, n: usize, rng: &mut RngState) -> Result<(LatentPath, ReturnsPanel)> {
    let (z, rows) = simulate_centered(params.phi, params.sigma, params.betas(), n, rng)?;
    Ok((LatentPath::new(z)?, ReturnsPanel::from_rows(rows)?))
}
