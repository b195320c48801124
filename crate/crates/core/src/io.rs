//! CSV ingestion and emission, the TOML run configuration and run manifests.
//!
//! Numbers are written with 17 significant digits so every `f64` survives a
//! write/read cycle unchanged.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::BandPoint;
use crate::engine::{FitConfig, FitMode, InitialValues, Tuning};
use crate::error::{Error, Result};
use crate::model::{LatentPath, PriorSpec, ReturnsPanel};
use crate::rng::BivariateNormalSpec;

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::Data(format!("{}: malformed csv: {other:?}", path.display())),
    }
}

/// `f64` formatted with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header plus string cells, with 1-based file line numbers per row.
struct RawTable {
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                rec.len()
            )));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok(RawTable { headers, rows })
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let loc = || format!("{}: line {line}, column '{column}'", path.display());
    if cell.is_empty() {
        return Err(Error::Data(format!("{}: empty cell", loc())));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::Data(format!("{}: not a number: '{cell}'", loc())))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("{}: non-finite value '{cell}'", loc())));
    }
    Ok(v)
}

/// Loads a returns panel: one column per asset, one row per time step.
///
/// Files written by `simulate` (leading `t,x` columns, with a `t = 0` row that
/// has no returns) are recognized and reduced to their return columns. A
/// leading `date` column is skipped.
pub fn load_returns_csv(path: &Path) -> Result<ReturnsPanel> {
    let raw = read_raw(path)?;
    let h = &raw.headers;
    let simulated = h.len() >= 3 && h[0] == "t" && h[1] == "x";
    let first = if simulated {
        2
    } else if h[0].eq_ignore_ascii_case("date") {
        1
    } else {
        0
    };
    if first >= h.len() {
        return Err(Error::Data(format!("{}: no numeric return columns", path.display())));
    }
    let mut rows = Vec::with_capacity(raw.rows.len());
    for (line, cells) in &raw.rows {
        if simulated && cells[0] == "0" && cells[first..].iter().all(String::is_empty) {
            continue;
        }
        let row = cells[first..]
            .iter()
            .zip(&h[first..])
            .map(|(c, name)| parse_cell(path, *line, name, c))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    ReturnsPanel::from_rows(rows)?.with_labels(h[first..].to_vec())
}

/// A numeric table as named columns. Used for trace files.
pub fn load_numeric_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let raw = read_raw(path)?;
    let mut cols: Vec<(String, Vec<f64>)> =
        raw.headers.iter().map(|h| (h.clone(), Vec::with_capacity(raw.rows.len()))).collect();
    for (line, cells) in &raw.rows {
        for ((name, col), cell) in cols.iter_mut().zip(cells) {
            col.push(parse_cell(path, *line, name, cell)?);
        }
    }
    Ok(cols)
}

fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn asset_headers(p: usize, labels: &[String]) -> Vec<String> {
    if labels.len() == p {
        labels.to_vec()
    } else if p == 1 {
        vec!["y".to_string()]
    } else {
        (1..=p).map(|i| format!("y{i}")).collect()
    }
}

/// Writes a returns panel, one row per time step.
pub fn write_returns_csv(path: &Path, y: &ReturnsPanel) -> Result<()> {
    let header = asset_headers(y.p(), y.labels());
    write_rows(path, &header, (0..y.n()).map(|i| y.row(i).iter().map(|v| fmt_f64(*v)).collect()))
}

/// Simulation output: columns `t, x, y...`. Row `t = 0` carries the initial
/// state only, so the file has `n + 1` state values and `n` return rows.
pub fn write_simulation_csv(path: &Path, x: &LatentPath, y: &ReturnsPanel) -> Result<()> {
    if x.len() != y.n() + 1 {
        return Err(Error::DimensionMismatch {
            expected: y.n() + 1,
            found: x.len(),
        });
    }
    let mut header = vec!["t".to_string(), "x".to_string()];
    header.extend(asset_headers(y.p(), &[]));
    let xs = x.as_slice();
    let rows = (0..=y.n()).map(|t| {
        let mut row = vec![t.to_string(), fmt_f64(xs[t])];
        if t == 0 {
            row.extend(std::iter::repeat_n(String::new(), y.p()));
        } else {
            row.extend(y.row(t - 1).iter().map(|v| fmt_f64(*v)));
        }
        row
    });
    write_rows(path, &header, rows)
}

/// Sweep number of each retained draw.
pub fn retained_sweeps(cfg: &FitConfig, len: usize) -> impl Iterator<Item = usize> + '_ {
    (0..len).map(move |k| cfg.burnin + 1 + k * cfg.thin)
}

/// `iter, phi, sigma[, mu]`.
pub fn write_theta_trace(
    path: &Path,
    cfg: &FitConfig,
    theta: &[(f64, f64)],
    mu: Option<&[f64]>,
) -> Result<()> {
    let mut header = vec!["iter".to_string(), "phi".to_string(), "sigma".to_string()];
    if mu.is_some() {
        header.push("mu".to_string());
    }
    let rows = retained_sweeps(cfg, theta.len()).enumerate().map(|(k, it)| {
        let mut row = vec![it.to_string(), fmt_f64(theta[k].0), fmt_f64(theta[k].1)];
        if let Some(m) = mu {
            row.push(fmt_f64(m[k]));
        }
        row
    });
    write_rows(path, &header, rows)
}

/// `iter, beta1..betap`.
pub fn write_beta_traces(path: &Path, cfg: &FitConfig, traces: &[Vec<f64>], labels: &[String]) -> Result<()> {
    let len = traces.first().map_or(0, Vec::len);
    let mut header = vec!["iter".to_string()];
    if labels.len() == traces.len() {
        header.extend(labels.iter().map(|l| format!("beta_{l}")));
    } else {
        header.extend((1..=traces.len()).map(|i| format!("beta{i}")));
    }
    let rows = retained_sweeps(cfg, len).enumerate().map(|(k, it)| {
        let mut row = vec![it.to_string()];
        row.extend(traces.iter().map(|t| fmt_f64(t[k])));
        row
    });
    write_rows(path, &header, rows)
}

/// `t, mean, lower, upper`.
pub fn write_state_band(path: &Path, band: &[BandPoint]) -> Result<()> {
    let header = ["t", "mean", "lower", "upper"].map(String::from);
    let rows = band
        .iter()
        .enumerate()
        .map(|(t, b)| vec![t.to_string(), fmt_f64(b.mean), fmt_f64(b.lower), fmt_f64(b.upper)]);
    write_rows(path, &header, rows)
}

/// A table with an integer first column and real-valued remaining columns.
pub fn write_indexed_table(path: &Path, header: &[&str], index: &[usize], columns: &[Vec<f64>]) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    let rows = index.iter().enumerate().map(|(k, i)| {
        let mut row = vec![i.to_string()];
        row.extend(columns.iter().map(|c| fmt_f64(c[k])));
        row
    });
    write_rows(path, &header, rows)
}

/// Rows of labelled strings, for summaries with missing entries.
pub fn write_text_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_rows(path, &header, rows)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub state_thin: Option<usize>,
    pub mode: Option<String>,
    pub adapt: Option<bool>,
    pub chains: Option<usize>,
    pub band_level: Option<f64>,
    pub fixed_mu: Option<f64>,
    pub init_phi: Option<f64>,
    pub init_sigma: Option<f64>,
    pub init_mu: Option<f64>,
    pub init_betas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub phi_mean: Option<f64>,
    pub phi_sd: Option<f64>,
    pub sigma_mean: Option<f64>,
    pub sigma_sd: Option<f64>,
    pub corr: Option<f64>,
    /// `(a0, b0)` of the `IG(a0/2, b0/2)` prior on `sigma^2`.
    pub state_ig: Option<[f64; 2]>,
    /// One `(a_i, b_i)` pair, or one per asset.
    pub beta_ig: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    pub alpha_star: Option<f64>,
    pub gamma_exponent: Option<f64>,
    pub gamma_offset: Option<f64>,
    pub lambda0: Option<f64>,
    pub cov0: Option<[[f64; 2]; 2]>,
}

/// Parameters for `simulate`. Either `beta` (univariate) or `betas`
/// (multivariate) is used; `mu` may replace `beta`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub phi: Option<f64>,
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub n: Option<usize>,
}

/// The run configuration file. Every key is optional; command-line flags are
/// merged on top before use, and the merged result is echoed into the output
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub model: ModelSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(vec![e.message().to_string()]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections are plain tables")
    }

    fn prior(&self, problems: &mut Vec<String>) -> PriorSpec {
        let d = PriorSpec::default();
        let s = &self.prior;
        let (m, sd, corr) = (d.theta_prior.mean(), d.theta_prior.sd(), d.theta_prior.corr());
        let theta_prior = BivariateNormalSpec::new(
            (s.phi_mean.unwrap_or(m.0), s.sigma_mean.unwrap_or(m.1)),
            (s.phi_sd.unwrap_or(sd.0), s.sigma_sd.unwrap_or(sd.1)),
            s.corr.unwrap_or(corr),
        );
        let theta_prior = match theta_prior {
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("prior: {e}"));
                d.theta_prior
            }
        };
        PriorSpec {
            theta_prior,
            ig_state: s.state_ig.map_or(d.ig_state, |v| (v[0], v[1])),
            ig_beta: s
                .beta_ig
                .as_ref()
                .map_or(d.ig_beta, |v| v.iter().map(|p| (p[0], p[1])).collect()),
        }
    }

    fn tuning(&self) -> Tuning {
        let d = Tuning::default();
        let t = &self.tuning;
        Tuning {
            alpha_star: t.alpha_star.unwrap_or(d.alpha_star),
            gamma_exponent: t.gamma_exponent.unwrap_or(d.gamma_exponent),
            gamma_offset: t.gamma_offset.unwrap_or(d.gamma_offset),
            lambda0: t.lambda0.unwrap_or(d.lambda0),
            cov0: t.cov0.unwrap_or(d.cov0),
        }
    }

    /// Builds the engine configuration, reporting every problem at once.
    pub fn fit_config(&self, default_mode: FitMode) -> Result<FitConfig> {
        let mut problems = Vec::new();
        let d = FitConfig::default();
        let r = &self.run;
        let mode = match r.mode.as_deref() {
            None => default_mode,
            Some(s) => FitMode::parse(s).unwrap_or_else(|| {
                problems.push(format!("unknown mode '{s}' (expected joint2, joint3, individual2 or msv)"));
                default_mode
            }),
        };
        let theta = match (r.init_phi, r.init_sigma) {
            (Some(p), Some(s)) => Some((p, s)),
            (None, None) => None,
            _ => {
                problems.push("init_phi and init_sigma must be given together".to_string());
                None
            }
        };
        let prior = self.prior(&mut problems);
        let cfg = FitConfig {
            mode,
            n_particles: r.particles.unwrap_or(d.n_particles),
            iterations: r.iterations.unwrap_or(d.iterations),
            burnin: r.burnin.unwrap_or(d.burnin),
            thin: r.thin.unwrap_or(d.thin),
            state_thin: r.state_thin.unwrap_or(d.state_thin),
            adapt: r.adapt.unwrap_or(d.adapt),
            seed: r.seed.unwrap_or(d.seed),
            prior,
            fixed_mu: r.fixed_mu.unwrap_or(d.fixed_mu),
            init: InitialValues {
                theta,
                mu: r.init_mu,
                betas: r.init_betas.clone(),
            },
            tuning: self.tuning(),
        };
        problems.extend(cfg.validate());
        if let Some(l) = r.band_level {
            if !(l > 0.0 && l < 1.0) {
                problems.push(format!("band_level must lie in (0, 1), got {l}"));
            }
        }
        if r.chains == Some(0) {
            problems.push("chains must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// Record of one CLI run, written as `key: value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub input_digest: Option<String>,
    /// Merged configuration, as TOML.
    pub config: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("command: {}\n", self.command));
        s.push_str(&format!("seed: {}\n", self.seed));
        if let Some(i) = &self.input {
            s.push_str(&format!("input: {}\n", i.display()));
        }
        if let Some(d) = &self.input_digest {
            s.push_str(&format!("input_sha256: {d}\n"));
        }
        for o in &self.outputs {
            s.push_str(&format!("output: {}\n", o.display()));
        }
        s.push_str(&format!("wall_clock_seconds: {:.3}\n", self.wall_clock_seconds));
        for line in self.config.lines().filter(|l| !l.trim().is_empty()) {
            s.push_str(&format!("config: {line}\n"));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| io_err(path, e))
    }
}
