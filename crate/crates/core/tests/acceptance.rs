//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod support;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use pgas_sv::cli::{run, Cli};
use pgas_sv::conditionals::{
    beta2_posterior, mu_posterior, phi_posterior, rwm_joint_step, sigma2_posterior, AdapterState,
};
use pgas_sv::diagnostics::{correlation, inefficiency_factor, posterior_summary, sample_acf};
use pgas_sv::engine::{fit, FitConfig, FitMode, Tuning};
use pgas_sv::model::{theoretical_sv_acf, LatentPath, MsvParams, PriorSpec, ReturnsPanel, SvParams};
use pgas_sv::particle::{bootstrap_pf, cpf, cpf_as};
use pgas_sv::rng::{BivariateNormalSpec, RngState};
use pgas_sv::simulate::{simulate_msv, simulate_sv};
use support::{conjugate, rel_err, GridModel, Report};

const MODEL_ONE: (f64, f64, f64) = (0.92, 1.5, 0.1);
const MODEL_TWO: (f64, f64) = (0.97, 1.0);
const BANK_PHI: f64 = 0.86;
const BANK_SIGMA: f64 = 0.32;
const BANK_BETAS: [f64; 3] = [1.64, 1.62, 1.42];

fn model_one() -> SvParams {
    SvParams::from_beta(MODEL_ONE.0, MODEL_ONE.1, MODEL_ONE.2).unwrap()
}

/// Weakly informative prior for the large-sigma simulations.
fn wide_prior() -> PriorSpec {
    PriorSpec {
        theta_prior: BivariateNormalSpec::new((0.9, 1.0), (0.3, 1.0), 0.0).unwrap(),
        ..PriorSpec::default()
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn two_obs_setup() -> (SvParams, ReturnsPanel, GridModel) {
    let p = model_one();
    let (_, y) = simulate_sv(&p, 2, &mut RngState::new(2024)).unwrap();
    let g = GridModel {
        phi: p.phi,
        sigma: p.sigma,
        mu: p.mu,
        y: y.column(0),
    };
    (p, y, g)
}

fn ac1_conjugate_oracle(rep: &mut Report) {
    let ((worst, count), took) = timed(|| {
        let mut rng = RngState::new(1);
        let mut worst: f64 = 0.0;
        let instances = 1000;
        for _ in 0..instances {
            let n = 1 + (rng.uniform() * 30.0) as usize;
            let x: Vec<f64> = (0..=n).map(|_| rng.normal(0.0, 2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.5)).collect();
            let phi = rng.uniform() * 1.98 - 0.99;
            let sigma = 0.05 + 3.0 * rng.uniform();
            let (a, b) = (0.1 + 10.0 * rng.uniform(), 0.01 + 5.0 * rng.uniform());
            let (m, v) = (rng.normal(0.0, 1.0), 0.001 + 2.0 * rng.uniform());
            let path = LatentPath::new(x.clone()).unwrap();

            let s = sigma2_posterior(phi, &path, (a, b)).unwrap();
            let o = conjugate::sigma2(phi, &x, a, b);
            let p = phi_posterior(sigma, &path, (m, v)).unwrap();
            let op = conjugate::phi(sigma, &x, m, v);
            let u = mu_posterior((phi, sigma), &path).unwrap();
            let ou = conjugate::mu(phi, sigma, &x);
            let bt = beta2_posterior(&path, &y, (a, b)).unwrap();
            let ob = conjugate::beta2(&x, &y, a, b);
            for (g, w) in [
                (s.shape, o.0),
                (s.scale, o.1),
                (p.mean, op.0),
                (p.var, op.1),
                (u.mean, ou.0),
                (u.var, ou.1),
                (bt.shape, ob.0),
                (bt.scale, ob.1),
            ] {
                worst = worst.max(rel_err(g, w));
            }
        }
        (worst, instances)
    });
    rep.check(
        "AC1 conjugate posteriors vs arithmetic oracle",
        worst <= 1e-10 && took < Duration::from_secs(5),
        format!("{count} instances, max relative error {worst:.2e} (limit 1e-10), {:.2}s (limit 5s)", took.as_secs_f64()),
    );
}

fn ac2_likelihood_oracle(rep: &mut Report) {
    let (p, y, g) = two_obs_setup();
    let ((grid_ll, mean_ll), took) = timed(|| {
        let grid_ll = g.solve(2000, 9.0).log_likelihood();
        let mut rng = RngState::new(2);
        let runs = 200;
        let mean = (0..runs).map(|_| bootstrap_pf(&y, &p, 10_000, &mut rng).unwrap().1).sum::<f64>() / runs as f64;
        (grid_ll, mean)
    });
    let rel = rel_err(mean_ll, grid_ll);
    rep.check(
        "AC2 bootstrap log-likelihood vs grid quadrature",
        rel < 0.01 && took < Duration::from_secs(120),
        format!(
            "mean of 200 runs {mean_ll:.6}, grid {grid_ll:.6}, relative difference {rel:.2e} (limit 1e-2), {:.1}s (limit 120s)",
            took.as_secs_f64()
        ),
    );
}

fn ac3_cpf_as_invariance(rep: &mut Report) {
    let (p, y, g) = two_obs_setup();
    let (d, took) = timed(|| {
        let grid = g.solve(2000, 9.0);
        let mut rng = RngState::new(3);
        let mut path = LatentPath::new(vec![p.mu; 3]).unwrap();
        let sweeps = 50_000;
        let mut x1 = Vec::with_capacity(sweeps);
        for _ in 0..sweeps {
            path = cpf_as(&y, &p, 20, &path, &mut rng).unwrap();
            x1.push(path.as_slice()[1]);
        }
        grid.ks_distance(1, &x1)
    });
    rep.check(
        "AC3 CPF-AS kernel preserves the state posterior",
        d < 0.02 && took < Duration::from_secs(180),
        format!("N=20, 50000 sweeps, Kolmogorov distance {d:.4} (limit 0.02), {:.1}s (limit 180s)", took.as_secs_f64()),
    );
}

fn ac4_mixing(rep: &mut Report) {
    let truth = model_one();
    let seeds = 10;
    let (wins, took) = timed(|| {
        let mut wins = 0;
        for s in 0..seeds {
            let (_, y) = simulate_sv(&truth, 1000, &mut RngState::new(4000 + s)).unwrap();
            let base = FitConfig {
                n_particles: 20,
                iterations: 5100,
                burnin: 100,
                fixed_mu: truth.mu,
                prior: wide_prior(),
                ..FitConfig::default()
            };
            let joint = fit(&y, &FitConfig { mode: FitMode::Joint2, ..base.clone() }, &mut RngState::new(40 + s)).unwrap();
            let indiv = fit(&y, &FitConfig { mode: FitMode::Individual2, ..base }, &mut RngState::new(40 + s)).unwrap();
            let if_j = inefficiency_factor(&joint.sigma_trace()).unwrap();
            let if_i = inefficiency_factor(&indiv.sigma_trace()).unwrap();
            let c_j = correlation(&joint.phi_trace(), &joint.sigma_trace()).unwrap();
            let c_i = correlation(&indiv.phi_trace(), &indiv.sigma_trace()).unwrap();
            let ok = if_j < if_i && c_j.abs() < c_i.abs();
            println!(
                "  AC4 seed {s}: IF(sigma) joint {if_j:.1} individual {if_i:.1}; corr joint {c_j:.3} individual {c_i:.3} -> {}",
                if ok { "ordering holds" } else { "ordering fails" }
            );
            wins += ok as usize;
        }
        wins
    });
    rep.check(
        "AC4 joint sampling mixes better than individual sampling",
        wins >= 9 && took < Duration::from_secs(1200),
        format!("ordering held on {wins}/{seeds} seeds (need 9), {:.0}s (limit 1200s)", took.as_secs_f64()),
    );
}

fn covers(trace: &[f64], truth: f64) -> bool {
    let s = posterior_summary(trace).unwrap();
    s.q025 <= truth && truth <= s.q975
}

fn ac5_recovery(rep: &mut Report) {
    let seeds = 10;
    let ((sv_hits, msv_hits), took) = timed(|| {
        let truth = model_one();
        let mut sv_hits = 0;
        for s in 0..seeds {
            let (_, y) = simulate_sv(&truth, 1000, &mut RngState::new(5000 + s)).unwrap();
            let cfg = FitConfig {
                mode: FitMode::Joint2,
                iterations: 3100,
                burnin: 100,
                fixed_mu: truth.mu,
                prior: wide_prior(),
                ..FitConfig::default()
            };
            let out = fit(&y, &cfg, &mut RngState::new(50 + s)).unwrap();
            let hit = covers(&out.phi_trace(), truth.phi) && covers(&out.sigma_trace(), truth.sigma);
            println!("  AC5 univariate seed {s}: {}", if hit { "covered" } else { "missed" });
            sv_hits += hit as usize;
        }

        let bank = MsvParams::new(BANK_PHI, BANK_SIGMA, BANK_BETAS.to_vec()).unwrap();
        // sigma mixes slowly here (inefficiency 100-300), so 10000 draws
        let mut msv_hits = 0;
        let mut beta_hits = 0;
        for s in 0..seeds {
            let (_, y) = simulate_msv(&bank, 3000, &mut RngState::new(5100 + s)).unwrap();
            let cfg = FitConfig {
                mode: FitMode::Msv,
                iterations: 10_500,
                burnin: 500,
                ..FitConfig::default()
            };
            let out = fit(&y, &cfg, &mut RngState::new(51 + s)).unwrap();
            let betas = out.beta_traces.as_ref().unwrap();
            let hit = covers(&out.phi_trace(), BANK_PHI) && covers(&out.sigma_trace(), BANK_SIGMA);
            let b = betas.iter().zip(BANK_BETAS).filter(|(t, b)| covers(t, *b)).count();
            println!(
                "  AC5 multivariate seed {s}: (phi, sigma) {}, {b}/3 scales covered",
                if hit { "covered" } else { "missed" }
            );
            msv_hits += hit as usize;
            beta_hits += b;
        }
        println!("  AC5 scale intervals covering truth: {beta_hits}/{}", 3 * seeds);
        (sv_hits, msv_hits)
    });
    rep.check(
        "AC5 parameter recovery",
        sv_hits >= 8 && msv_hits >= 8 && took < Duration::from_secs(2700),
        format!(
            "(phi, sigma) inside central 95% intervals: univariate {sv_hits}/{seeds}, multivariate {msv_hits}/{seeds} (need 8 each), {:.0}s (limit 2700s)",
            took.as_secs_f64()
        ),
    );
}

/// Non-adaptive run whose fixed proposal covariance comes from a short
/// adaptive pilot, scaled by the default `lambda0`.
fn frozen_proposal_fit(y: &ReturnsPanel, cfg: &FitConfig, seed: u64) -> f64 {
    let pilot_cfg = FitConfig {
        iterations: 600,
        burnin: 100,
        adapt: true,
        ..cfg.clone()
    };
    let pilot = fit(y, &pilot_cfg, &mut RngState::new(seed)).unwrap();
    let mut tuning = Tuning::from_adapter(&pilot.final_adapter.unwrap());
    tuning.lambda0 = Tuning::default().lambda0;
    let fixed = FitConfig {
        adapt: false,
        tuning,
        init: pgas_sv::engine::InitialValues {
            theta: pilot.theta_trace.last().copied(),
            mu: pilot.mu_trace.as_ref().and_then(|m| m.last().copied()),
            betas: pilot
                .beta_traces
                .as_ref()
                .map(|b| b.iter().map(|t| *t.last().unwrap()).collect()),
        },
        ..cfg.clone()
    };
    fit(y, &fixed, &mut RngState::new(seed + 1)).unwrap().acceptance_rate
}

fn ac6_adaptive_rwm(rep: &mut Report) {
    let ((running, sp_rate, bank_rate), took) = timed(|| {
        let (path, _) = simulate_sv(&SvParams::new(0.9, 0.4, 0.0), 1000, &mut RngState::new(6000)).unwrap();
        let prior = PriorSpec::default();
        let mut adapter = AdapterState::new((0.95, 0.2));
        let mut rng = RngState::new(60);
        let mut theta = (0.95, 0.2);
        let iterations = 100_000;
        let mut accepted = 0usize;
        for _ in 0..iterations {
            let o = rwm_joint_step(theta, 0.0, &path, &prior, &mut adapter, true, &mut rng).unwrap();
            theta = o.theta;
            accepted += o.accepted as usize;
        }
        let running = accepted as f64 / iterations as f64;

        // S&P-like three-parameter fit: N=10, 2000 draws after 100 burn-in
        let sp = SvParams::from_beta(0.80, 0.36, 0.01).unwrap();
        let (_, y) = simulate_sv(&sp, 1700, &mut RngState::new(6100)).unwrap();
        let cfg = FitConfig {
            mode: FitMode::Joint3,
            n_particles: 10,
            iterations: 2100,
            burnin: 100,
            ..FitConfig::default()
        };
        let sp_rate = frozen_proposal_fit(&y, &cfg, 61);

        // bank-like MSV fit: N=20, 2000 draws after 500 burn-in
        let bank = MsvParams::new(BANK_PHI, BANK_SIGMA, BANK_BETAS.to_vec()).unwrap();
        let (_, y) = simulate_msv(&bank, 3200, &mut RngState::new(6200)).unwrap();
        let cfg = FitConfig {
            mode: FitMode::Msv,
            n_particles: 20,
            iterations: 2500,
            burnin: 500,
            ..FitConfig::default()
        };
        let bank_rate = frozen_proposal_fit(&y, &cfg, 63);
        (running, sp_rate, bank_rate)
    });
    let ok = (running - 0.234).abs() <= 0.05
        && (0.15..=0.45).contains(&sp_rate)
        && (0.15..=0.45).contains(&bank_rate);
    rep.check(
        "AC6 adaptive RWM acceptance",
        ok,
        format!(
            "adaptive running acceptance after 1e5 steps {running:.3} (target 0.234 +/- 0.05); non-adaptive fits: univariate {sp_rate:.3}, multivariate {bank_rate:.3} (range [0.15, 0.45]); {:.0}s",
            took.as_secs_f64()
        ),
    );
}

fn ac7_degeneracy(rep: &mut Report) {
    let params = SvParams::new(0.9, 0.4, 0.0);
    let (_, y) = simulate_sv(&params, 500, &mut RngState::new(7000)).unwrap();
    let mut rng = RngState::new(70);
    let start = bootstrap_pf(&y, &params, 20, &mut rng).unwrap().0.draw_trajectory(&mut rng).unwrap();
    let half = 250;
    let retention = |as_kernel: bool, rng: &mut RngState| {
        let mut path = start.clone();
        let mut kept = 0;
        let sweeps = 200;
        for _ in 0..sweeps {
            let next = if as_kernel {
                cpf_as(&y, &params, 20, &path, rng).unwrap()
            } else {
                cpf(&y, &params, 20, &path, rng).unwrap()
            };
            kept += (next.as_slice()[..=half] == path.as_slice()[..=half]) as usize;
            path = next;
        }
        kept as f64 / sweeps as f64
    };
    let f_cpf = retention(false, &mut rng);
    let f_as = retention(true, &mut rng);
    rep.check(
        "AC7 CPF path degeneracy exceeds CPF-AS",
        f_cpf > f_as,
        format!("prefix x[0..=250] retained in {:.1}% of CPF sweeps vs {:.1}% of CPF-AS sweeps", 100.0 * f_cpf, 100.0 * f_as),
    );
}

fn cli(args: &[&str]) {
    let mut v = vec!["pgas-sv"];
    v.extend_from_slice(args);
    run(&Cli::try_parse_from(v).unwrap().command).unwrap();
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| fs::read(a.join(n)).unwrap() == fs::read(b.join(n)).unwrap())
}

fn ac8_determinism(rep: &mut Report) {
    let d = tempfile::tempdir().unwrap();
    let p = |s: &str| d.path().join(s).to_str().unwrap().to_string();
    cli(&["simulate", "--n", "300", "--seed", "8", "--output-dir", &p("uni")]);
    cli(&["simulate", "--n", "300", "--seed", "8", "--phi", ".86", "--sigma", ".32", "--betas", "1.64,1.62,1.42", "--output-dir", &p("multi")]);
    let uni = p("uni/simulated.csv");
    let multi = p("multi/simulated.csv");
    let traces = ["theta_trace.csv", "state_band.csv", "summary.csv"];
    let mut checks = Vec::new();
    for mode in ["joint2", "joint3", "individual2"] {
        for run_dir in ["a", "b"] {
            cli(&["fit", "--input", &uni, "--mode", mode, "--iters", "150", "--burnin", "30", "--particles", "10", "--seed", "81", "--output-dir", &p(&format!("{mode}-{run_dir}"))]);
        }
        checks.push((mode.to_string(), same_files(&d.path().join(format!("{mode}-a")), &d.path().join(format!("{mode}-b")), &traces)));
    }
    for run_dir in ["a", "b"] {
        cli(&["fit-msv", "--input", &multi, "--iters", "150", "--burnin", "30", "--particles", "10", "--seed", "82", "--output-dir", &p(&format!("msv-{run_dir}"))]);
        cli(&["fit", "--input", &uni, "--chains", "2", "--iters", "100", "--burnin", "20", "--particles", "8", "--seed", "83", "--output-dir", &p(&format!("chains-{run_dir}"))]);
    }
    checks.push((
        "msv".to_string(),
        same_files(&d.path().join("msv-a"), &d.path().join("msv-b"), &["theta_trace.csv", "betas.csv", "state_band.csv", "summary.csv"]),
    ));
    checks.push((
        "two chains".to_string(),
        (0..2).all(|c| same_files(&d.path().join(format!("chains-a/chain-{c}")), &d.path().join(format!("chains-b/chain-{c}")), &traces)),
    ));
    let ok = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks.iter().map(|(m, k)| format!("{m}: {}", if *k { "identical" } else { "DIFFERENT" })).collect();
    rep.check("AC8 reruns produce byte-identical trace files", ok, detail.join(", "));
}

/// Mean sample ACF of `y^2` over replicates, with its standard error.
fn replicate_acf(phi: f64, sigma: f64, n: usize, reps: u64, lags: usize, seed: u64) -> Vec<(f64, f64)> {
    let base = RngState::new(seed);
    let mut acc = vec![Vec::with_capacity(reps as usize); lags];
    for r in 0..reps {
        let (_, y) = simulate_sv(&SvParams::new(phi, sigma, 0.0), n, &mut base.substream(r)).unwrap();
        let y2: Vec<f64> = y.column(0).iter().map(|v| v * v).collect();
        for (k, a) in sample_acf(&y2, lags).unwrap().into_iter().enumerate() {
            acc[k].push(a);
        }
    }
    acc.iter()
        .map(|v| {
            let s = posterior_summary(v).unwrap();
            (s.mean, s.sd / (reps as f64).sqrt())
        })
        .collect()
}

fn max_z(emp: &[(f64, f64)], phi: f64, sigma: f64) -> (f64, usize) {
    emp.iter()
        .enumerate()
        .map(|(k, (m, se))| (((m - theoretical_sv_acf(phi, sigma, 3.0, k + 1).unwrap()) / se).abs(), k + 1))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn ac9_theoretical_acf(rep: &mut Report) {
    let lags = 100;
    let (m1, m2) = ((MODEL_ONE.0, MODEL_ONE.1), MODEL_TWO);
    let gap = (1..=lags)
        .map(|h| {
            (theoretical_sv_acf(m1.0, m1.1, 3.0, h).unwrap() - theoretical_sv_acf(m2.0, m2.1, 3.0, h).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    let (n, reps, z_limit) = (1000, 50, 4.0);
    let (z1, h1) = max_z(&replicate_acf(m1.0, m1.1, n, reps, lags, 9001), m1.0, m1.1);
    let (z2, h2) = max_z(&replicate_acf(m2.0, m2.1, n, reps, lags, 9002), m2.0, m2.1);
    // same estimator on a light-tailed model, reported for context only
    let (zc, hc) = max_z(&replicate_acf(0.9, 0.3, 20_000, reps, lags, 9003), 0.9, 0.3);
    println!("  AC9 context: phi=0.9, sigma=0.3, n=20000: max |z| = {zc:.2} at lag {hc}");
    rep.check(
        "AC9 theoretical ACF of squared returns",
        z1 <= z_limit && z2 <= z_limit,
        format!(
            "max |theory I - theory II| over lags 1..100 = {gap:.4}; simulated vs theory over {reps} replicates of n={n}: max |z| model I {z1:.2} (lag {h1}), model II {z2:.2} (lag {h2}) (limit {z_limit})"
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut rep = Report::new();
    ac1_conjugate_oracle(&mut rep);
    ac2_likelihood_oracle(&mut rep);
    ac3_cpf_as_invariance(&mut rep);
    ac4_mixing(&mut rep);
    ac5_recovery(&mut rep);
    ac6_adaptive_rwm(&mut rep);
    ac7_degeneracy(&mut rep);
    ac8_determinism(&mut rep);
    ac9_theoretical_acf(&mut rep);
    println!(
        "acceptance: {} of 9 criteria passed in {:.0}s",
        9 - rep.failures,
        start.elapsed().as_secs_f64()
    );
    if rep.failures > 0 {
        std::process::exit(1);
    }
}
