//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or file error,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagnostics::{inefficiency_factor, posterior_summary, sample_acf, state_band};
use crate::engine::{fit, ChainOutput, FitMode};
use crate::error::{Error, Result};
use crate::io::{
    file_digest, io_err, load_numeric_columns, load_returns_csv, write_beta_traces, write_indexed_table,
    write_simulation_csv, write_state_band, write_text_table, write_theta_trace, ConfigFile, RunManifest,
};
use crate::model::{theoretical_sv_acf, MsvParams, ReturnsPanel, SvParams};
use crate::rng::RngState;
use crate::simulate::{simulate_msv, simulate_sv};

const DEFAULT_BAND_LEVEL: f64 = 0.95;

#[derive(Debug, Parser)]
#[command(name = "pgas-sv", version, about = "Particle Gibbs for stochastic volatility models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Joint2,
    Joint3,
    Individual2,
    Msv,
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Joint2 => "joint2",
            ModeArg::Joint3 => "joint3",
            ModeArg::Individual2 => "individual2",
            ModeArg::Msv => "msv",
        }
    }
}

/// Flags shared by the subcommands that read a config and write outputs.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML file with [run], [prior], [tuning] and [model] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub adapt: Option<Switch>,
    /// Independent chains run concurrently, each in its own subdirectory.
    #[arg(long)]
    pub chains: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a latent path and returns.
    Simulate {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        /// Comma-separated per-asset scales; selects the multivariate model.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit the univariate model.
    Fit {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Fit the multivariate model.
    FitMsv {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Summaries, inefficiency factors and ACFs of a trace file.
    Diagnose {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, default_value_t = 50)]
        max_lag: usize,
    },
    /// Theoretical autocorrelation of squared returns.
    AcfTheory {
        #[arg(long)]
        phi: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 3.0)]
        kappa: f64,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::Nonstationary(_) | Error::ZeroSigma => 2,
        Error::Data(_) | Error::Io { .. } | Error::DimensionMismatch { .. } => 3,
        Error::WeightCollapse { .. } | Error::DegenerateWeights | Error::CorruptChainState => 4,
    }
}

/// Parses arguments, runs, reports, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(m) => {
            println!("wrote {} file(s) to the output directory", m.outputs.len());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(run: &RunFlags) -> Result<ConfigFile> {
    let mut c = match &run.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let r = &mut c.run;
    r.seed = run.seed.or(r.seed);
    r.particles = run.particles.or(r.particles);
    r.iterations = run.iters.or(r.iterations);
    r.burnin = run.burnin.or(r.burnin);
    if let Some(m) = run.mode {
        r.mode = Some(m.name().to_string());
    }
    if let Some(a) = run.adapt {
        r.adapt = Some(a == Switch::On);
    }
    r.chains = run.chains.or(r.chains);
    Ok(c)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn finish(
    command: &str,
    dir: &Path,
    seed: u64,
    input: Option<&Path>,
    config: &ConfigFile,
    mut outputs: Vec<PathBuf>,
    start: Instant,
) -> Result<RunManifest> {
    let echo = dir.join("config.toml");
    let text = config.to_toml();
    fs::write(&echo, &text).map_err(|e| io_err(&echo, e))?;
    outputs.push(echo);
    let manifest_path = dir.join("manifest.txt");
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        command: command.to_string(),
        seed,
        input: input.map(Path::to_path_buf),
        input_digest: input.map(file_digest).transpose()?,
        config: text,
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

/// Runs one subcommand and returns its manifest.
pub fn run(command: &Command) -> Result<RunManifest> {
    let start = Instant::now();
    match command {
        Command::Simulate {
            run,
            phi,
            sigma,
            beta,
            mu,
            betas,
            n,
        } => {
            let mut cfg = load_config(run)?;
            let m = &mut cfg.model;
            m.phi = phi.or(m.phi);
            m.sigma = sigma.or(m.sigma);
            m.beta = beta.or(m.beta);
            m.mu = mu.or(m.mu);
            m.betas = betas.clone().or(m.betas.take());
            m.n = n.or(m.n);
            simulate_command(run, &cfg, start)
        }
        Command::Fit { run } => fit_command("fit", run, FitMode::Joint2, start),
        Command::FitMsv { run } => fit_command("fit-msv", run, FitMode::Msv, start),
        Command::Diagnose { run, max_lag } => diagnose_command(run, *max_lag, start),
        Command::AcfTheory {
            phi,
            sigma,
            kappa,
            max_lag,
            output_dir,
        } => acf_theory_command(*phi, *sigma, *kappa, *max_lag, output_dir, start),
    }
}

fn simulate_command(run: &RunFlags, cfg: &ConfigFile, start: Instant) -> Result<RunManifest> {
    let m = &cfg.model;
    let phi = m.phi.unwrap_or(0.92);
    let sigma = m.sigma.unwrap_or(1.5);
    let n = m.n.unwrap_or(1000);
    let seed = cfg.run.seed.unwrap_or(0);
    if n == 0 {
        return Err(Error::InvalidConfig(vec!["n must be at least 1".to_string()]));
    }
    let mut rng = RngState::new(seed);
    let (x, y) = match &m.betas {
        Some(b) => simulate_msv(&MsvParams::new(phi, sigma, b.clone())?, n, &mut rng)?,
        None => {
            let params = match (m.mu, m.beta) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidConfig(vec!["give beta or mu, not both".to_string()]))
                }
                (Some(mu), None) => SvParams::new(phi, sigma, mu),
                (None, b) => SvParams::from_beta(phi, sigma, b.unwrap_or(0.1))?,
            };
            simulate_sv(&params, n, &mut rng)?
        }
    };
    create_dir(&run.output_dir)?;
    let out = run.output_dir.join("simulated.csv");
    write_simulation_csv(&out, &x, &y)?;
    finish("simulate", &run.output_dir, seed, None, cfg, vec![out], start)
}

fn named_traces(out: &ChainOutput, y: &ReturnsPanel) -> Vec<(String, Vec<f64>)> {
    let mut v = vec![("phi".to_string(), out.phi_trace()), ("sigma".to_string(), out.sigma_trace())];
    if let Some(m) = &out.mu_trace {
        v.push(("mu".to_string(), m.clone()));
    }
    if let Some(bs) = &out.beta_traces {
        for (i, b) in bs.iter().enumerate() {
            let name = y.labels().get(i).map_or(format!("beta{}", i + 1), |l| format!("beta_{l}"));
            v.push((name, b.clone()));
        }
    }
    v
}

fn summary_rows(traces: &[(String, Vec<f64>)]) -> Result<Vec<Vec<String>>> {
    traces
        .iter()
        .map(|(name, t)| {
            let s = posterior_summary(t)?;
            let inef = inefficiency_factor(t).map_or("NA".to_string(), crate::io::fmt_f64);
            Ok(vec![
                name.clone(),
                crate::io::fmt_f64(s.mean),
                crate::io::fmt_f64(s.sd),
                crate::io::fmt_f64(s.q025),
                crate::io::fmt_f64(s.q50),
                crate::io::fmt_f64(s.q975),
                inef,
            ])
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 7] = ["parameter", "mean", "sd", "q025", "q50", "q975", "inefficiency"];

fn write_chain(dir: &Path, y: &ReturnsPanel, out: &ChainOutput, band_level: f64) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let cfg = &out.config;
    let mut files = Vec::new();
    let p = dir.join("theta_trace.csv");
    write_theta_trace(&p, cfg, &out.theta_trace, out.mu_trace.as_deref())?;
    files.push(p);
    if let Some(b) = &out.beta_traces {
        let p = dir.join("betas.csv");
        write_beta_traces(&p, cfg, b, y.labels())?;
        files.push(p);
    }
    if out.state_draws.len() >= 2 {
        let p = dir.join("state_band.csv");
        write_state_band(&p, &state_band(&out.state_draws, band_level)?)?;
        files.push(p);
    }
    let p = dir.join("summary.csv");
    write_text_table(&p, &SUMMARY_HEADER, summary_rows(&named_traces(out, y))?)?;
    files.push(p);
    Ok(files)
}

fn report(label: &str, out: &ChainOutput, y: &ReturnsPanel) {
    let means: Vec<String> = named_traces(out, y)
        .iter()
        .map(|(n, t)| format!("{n}={:.4}", t.iter().sum::<f64>() / t.len() as f64))
        .collect();
    println!(
        "{label}: {} retained draws, acceptance {:.3}, {:.1}s; means {}",
        out.theta_trace.len(),
        out.acceptance_rate,
        out.wall_clock_seconds,
        means.join(" ")
    );
}

fn fit_command(command: &str, run: &RunFlags, default_mode: FitMode, start: Instant) -> Result<RunManifest> {
    let cfg_file = load_config(run)?;
    let cfg = cfg_file.fit_config(default_mode)?;
    if default_mode == FitMode::Msv && cfg.mode != FitMode::Msv {
        return Err(Error::InvalidConfig(vec![format!(
            "fit-msv cannot run mode {}",
            cfg.mode.name()
        )]));
    }
    let input = run
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig(vec!["--input is required".to_string()]))?;
    let y = load_returns_csv(input)?;
    let chains = cfg_file.run.chains.unwrap_or(1);
    let band_level = cfg_file.run.band_level.unwrap_or(DEFAULT_BAND_LEVEL);
    create_dir(&run.output_dir)?;

    let mut outputs = Vec::new();
    if chains == 1 {
        let out = fit(&y, &cfg, &mut RngState::new(cfg.seed))?;
        report(command, &out, &y);
        outputs.extend(write_chain(&run.output_dir, &y, &out, band_level)?);
    } else {
        let base = RngState::new(cfg.seed);
        let results: Vec<Result<ChainOutput>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..chains)
                .map(|c| {
                    let mut rng = base.substream(c as u64);
                    let (y, cfg) = (&y, &cfg);
                    s.spawn(move || fit(y, cfg, &mut rng))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
        });
        for (c, r) in results.into_iter().enumerate() {
            let out = r?;
            report(&format!("{command} chain {c}"), &out, &y);
            outputs.extend(write_chain(&run.output_dir.join(format!("chain-{c}")), &y, &out, band_level)?);
        }
    }
    finish(command, &run.output_dir, cfg.seed, Some(input), &cfg_file, outputs, start)
}

fn diagnose_command(run: &RunFlags, max_lag: usize, start: Instant) -> Result<RunManifest> {
    let cfg_file = load_config(run)?;
    let input = run
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig(vec!["--input is required".to_string()]))?;
    let traces: Vec<(String, Vec<f64>)> = load_numeric_columns(input)?
        .into_iter()
        .filter(|(name, _)| name != "iter")
        .collect();
    if traces.is_empty() {
        return Err(Error::Data(format!("{}: no trace columns", input.display())));
    }
    let len = traces[0].1.len();
    if len < 2 {
        return Err(Error::Data(format!("{}: need at least two draws", input.display())));
    }
    let lags = max_lag.min(len - 1);
    if lags == 0 {
        return Err(Error::InvalidConfig(vec!["max_lag must be at least 1".to_string()]));
    }
    create_dir(&run.output_dir)?;
    let summary = run.output_dir.join("diagnostics.csv");
    let rows = summary_rows(&traces)?;
    for r in &rows {
        println!("{}: mean {} sd {} inefficiency {}", r[0], r[1], r[2], r[6]);
    }
    write_text_table(&summary, &SUMMARY_HEADER, rows)?;
    let acfs = traces
        .iter()
        .map(|(_, t)| sample_acf(t, lags))
        .collect::<Result<Vec<_>>>()?;
    let acf_path = run.output_dir.join("acf.csv");
    let mut header = vec!["lag"];
    header.extend(traces.iter().map(|(n, _)| n.as_str()));
    write_indexed_table(&acf_path, &header, &(1..=lags).collect::<Vec<_>>(), &acfs)?;
    let seed = cfg_file.run.seed.unwrap_or(0);
    finish("diagnose", &run.output_dir, seed, Some(input), &cfg_file, vec![summary, acf_path], start)
}

fn acf_theory_command(
    phi: f64,
    sigma: f64,
    kappa: f64,
    max_lag: usize,
    dir: &Path,
    start: Instant,
) -> Result<RunManifest> {
    if max_lag == 0 {
        return Err(Error::InvalidConfig(vec!["max_lag must be at least 1".to_string()]));
    }
    let values = (1..=max_lag)
        .map(|h| theoretical_sv_acf(phi, sigma, kappa, h))
        .collect::<Result<Vec<_>>>()?;
    create_dir(dir)?;
    let p = dir.join("acf_theory.csv");
    write_indexed_table(&p, &["lag", "value"], &(1..=max_lag).collect::<Vec<_>>(), &[values])?;
    let mut cfg = ConfigFile::default();
    cfg.model.phi = Some(phi);
    cfg.model.sigma = Some(sigma);
    finish("acf-theory", dir, 0, None, &cfg, vec![p], start)
}
