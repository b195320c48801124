//! Trace diagnostics: sample autocorrelations, inefficiency factors, posterior
//! summaries and pointwise bands over sampled state paths.

use crate::error::{Error, Result};
use crate::model::LatentPath;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased autocovariances `gamma(0..=max_lag)` (divisor `n`).
fn autocovariances(trace: &[f64], max_lag: usize) -> Vec<f64> {
    let n = trace.len();
    let m = mean(trace);
    let d: Vec<f64> = trace.iter().map(|v| v - m).collect();
    (0..=max_lag)
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

fn check_trace(trace: &[f64]) -> Result<()> {
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("trace has non-finite values"));
    }
    let first = trace[0];
    if trace.iter().all(|v| *v == first) {
        return Err(Error::invalid("trace is constant"));
    }
    Ok(())
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn sample_acf(trace: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    if trace.len() <= max_lag {
        return Err(Error::invalid(format!(
            "trace length {} must exceed max_lag {max_lag}",
            trace.len()
        )));
    }
    check_trace(trace)?;
    let g = autocovariances(trace, max_lag);
    Ok(g[1..].iter().map(|v| v / g[0]).collect())
}

/// `1 + 2 sum_i rho(i)`, with the sum cut by Geyer's initial positive
/// sequence: adjacent-lag pairs `gamma(2m) + gamma(2m+1)` are accumulated
/// while they stay positive.
pub fn inefficiency_factor(trace: &[f64]) -> Result<f64> {
    const MIN_LEN: usize = 100;
    if trace.len() < MIN_LEN {
        return Err(Error::invalid(format!(
            "inefficiency needs at least {MIN_LEN} draws, got {}",
            trace.len()
        )));
    }
    check_trace(trace)?;
    let n = trace.len();
    let m = mean(trace);
    let d: Vec<f64> = trace.iter().map(|v| v - m).collect();
    let gamma = |k: usize| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = gamma(0);
    let mut pair_sum = 0.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = if k == 0 { g0 } else { gamma(k) } + gamma(k + 1);
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        k += 2;
    }
    Ok((2.0 * pair_sum - g0) / g0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Linear interpolation between order statistics (`sorted` must be sorted).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn posterior_summary(trace: &[f64]) -> Result<PosteriorSummary> {
    if trace.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    let m = mean(trace);
    let sd = if trace.len() > 1 {
        (trace.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (trace.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let s = sorted_copy(trace);
    Ok(PosteriorSummary {
        mean: m,
        sd,
        q025: quantile_sorted(&s, 0.025),
        q50: quantile_sorted(&s, 0.5),
        q975: quantile_sorted(&s, 0.975),
    })
}

/// Pearson correlation of two equal-length traces.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("correlation needs two equal-length traces of length >= 2"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("correlation of a constant trace"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise mean and central `level` band over sampled paths.
pub fn state_band(draws: &[LatentPath], level: f64) -> Result<Vec<BandPoint>> {
    if draws.len() < 2 {
        return Err(Error::invalid("state band needs at least two draws"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("band level must lie in (0, 1), got {level}")));
    }
    let len = draws[0].len();
    if let Some(d) = draws.iter().find(|d| d.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: d.len(),
        });
    }
    let tail = 0.5 * (1.0 - level);
    let mut column = vec![0.0; draws.len()];
    Ok((0..len)
        .map(|t| {
            for (c, d) in column.iter_mut().zip(draws) {
                *c = d.as_slice()[t];
            }
            column.sort_by(f64::total_cmp);
            BandPoint {
                mean: mean(&column),
                lower: quantile_sorted(&column, tail),
                upper: quantile_sorted(&column, 1.0 - tail),
            }
        })
        .collect())
}
