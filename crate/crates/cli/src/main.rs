//! Experiment runner: loads a TOML experiment config, applies command-line
//! overrides, executes the requested experiment, and writes CSV artifacts,
//! plain-text reports, and a replayable manifest.
//!
//! Exit codes: 0 success, 1 configuration error, 2 a certification or
//! acceptance check failed, 3 the divergence ceiling was exceeded.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use sgflow::analysis::{
    consensus_error_bound_check, exp_power_integral_bound, fit_rate, write_bound_csv_header,
    BoundReport, BoundRow, RateFit,
};
use sgflow::config::{ConfigError, ExperimentConfig, ExperimentKind, ManifestMeta, Overrides};
use sgflow::dynamics::{average_state, simulate_path, DynamicsError, NoiseModel, SimConfig};
use sgflow::ensemble::{ito_isometry_check, run_ensemble, EnsembleError, EnsembleStats};
use sgflow::graph::{check_window_connectivity, fit_decay_constants};
use sgflow::linalg::Matrix;
use sgflow::objective::{norm, ObjectiveSet, QuadraticObjective};

const DEFAULT_CONFIG: &str = include_str!("../../../configs/six_agent.toml");

#[derive(Parser, Debug)]
#[command(
    name = "sgflow",
    version,
    about = "Distributed stochastic gradient flow over switching digraphs: simulation and certification experiments"
)]
struct Cli {
    /// Experiment config file (TOML); omit to use the built-in six-agent demo
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment kind: simulate | sweep | certify-bounds | consensus-only | isometry
    #[arg(long)]
    experiment: Option<String>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo run count override
    #[arg(long)]
    runs: Option<usize>,
    /// Worker thread count override
    #[arg(long)]
    workers: Option<usize>,
    /// Integration step override (seconds)
    #[arg(long)]
    h: Option<f64>,
    /// Horizon override (seconds)
    #[arg(long)]
    horizon: Option<f64>,
    /// Step-size exponent override (must lie in (1/2, 1])
    #[arg(long)]
    a: Option<f64>,
    /// Step-size scale override
    #[arg(long)]
    beta: Option<f64>,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise intensity scale override (0 disables noise)
    #[arg(long)]
    noise_scale: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
    CheckFailed(String),
    Divergence(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::CheckFailed(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
            CliError::Divergence(m) => write!(f, "divergence: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::DivergenceCeiling { .. } => CliError::Divergence(e.to_string()),
            EnsembleError::Dynamics(DynamicsError::NonFiniteState { .. }) => {
                CliError::Divergence(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NonFiniteState { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_toml_str(DEFAULT_CONFIG)?,
    };
    let experiment_override = match &cli.experiment {
        Some(s) => Some(s.parse::<ExperimentKind>()?),
        None => None,
    };
    let overrides = Overrides {
        experiment: experiment_override,
        seed: cli.seed,
        runs: cli.runs,
        workers: cli.workers,
        h: cli.h,
        horizon: cli.horizon,
        a: cli.a,
        beta: cli.beta,
        out_dir: cli.out.as_ref().map(|p| p.display().to_string()),
        noise_scale: cli.noise_scale,
    };
    config.apply_overrides(&overrides);
    if config.experiment == ExperimentKind::Sweep {
        config.validate_sweep()?;
    }
    // resolve early so invalid configs fail before any directory is created
    let sim = config.build_sim_config()?;

    let out_dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&out_dir)?;
    write_manifest(&config, &out_dir)?;

    match config.experiment {
        ExperimentKind::Simulate => run_simulate(&config, &sim, &out_dir),
        ExperimentKind::Sweep => run_sweep(&config, &out_dir),
        ExperimentKind::CertifyBounds => run_certify(&config, &sim, &out_dir),
        ExperimentKind::ConsensusOnly => run_consensus_only(&config, &sim, &out_dir),
        ExperimentKind::Isometry => run_isometry(&config, &sim, &out_dir),
    }
}

fn write_manifest(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let mut with_meta = config.clone();
    with_meta.manifest = Some(ManifestMeta {
        config_hash: config.config_hash()?,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
    });
    let text = with_meta.to_toml_string()?;
    fs::write(out_dir.join("manifest.toml"), text)?;
    Ok(())
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(out_dir.join(name))?))
}

fn stats_summary(sim: &SimConfig<f64>, stats: &EnsembleStats<f64>) -> Result<String, CliError> {
    let minimizer = sim
        .objectives
        .minimizer()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let last = stats.times.len() - 1;
    let n = stats.n_agents();
    let mut out = String::new();
    out.push_str(&format!(
        "runs: {} ({} diverged), horizon: {}, h: {}\n",
        stats.runs,
        stats.diverged.len(),
        sim.horizon,
        sim.h
    ));
    out.push_str(&format!("minimizer: {:?} (least-norm: {})\n", minimizer.x, minimizer.least_norm));
    out.push_str("final mean states:\n");
    let mut worst_dist = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut worst_cons = 0.0f64;
    for i in 0..n {
        let row: Vec<f64> = (0..sim.dim()).map(|c| stats.mean_state[last][(i, c)]).collect();
        let diff: Vec<f64> = row.iter().zip(&minimizer.x).map(|(a, b)| a - b).collect();
        let dist = norm(&diff);
        worst_dist = worst_dist.max(dist);
        worst_gap = worst_gap.max(stats.mean_gap[last][i]);
        worst_cons = worst_cons.max(stats.mean_consensus_err[last][i]);
        out.push_str(&format!(
            "  agent {}: {:?}, distance to minimizer {:.6}, mean gap {:.6}\n",
            i + 1,
            row,
            dist,
            stats.mean_gap[last][i]
        ));
    }
    out.push_str(&format!(
        "max final distance to minimizer: {worst_dist:.6}\nmax final mean gap: {worst_gap:.6}\nmax final mean consensus error: {worst_cons:.6}\n",
    ));
    out.push_str(&format!(
        "observed state bounds: lo {:?}, hi {:?}\n",
        stats.state_lo, stats.state_hi
    ));
    Ok(out)
}

fn run_simulate(
    config: &ExperimentConfig,
    sim: &SimConfig<f64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let stats = run_ensemble(sim, config.ensemble.runs, config.ensemble.workers)?;
    let mut csv = create(out_dir, "ensemble_stats.csv")?;
    stats.write_csv(&mut csv)?;
    csv.flush()?;
    if config.ensemble.export_trajectory || config.ensemble.runs == 1 {
        let traj = simulate_path(sim, 0)?;
        let mut tcsv = create(out_dir, "trajectory.csv")?;
        traj.write_csv(&mut tcsv)?;
        tcsv.flush()?;
    }
    let mut report = create(out_dir, "report.txt")?;
    writeln!(report, "experiment: simulate")?;
    write!(report, "{}", stats_summary(sim, &stats)?)?;
    report.flush()?;
    println!("simulate: wrote {}", out_dir.display());
    Ok(())
}

fn run_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let horizon = config.sweep.horizon.unwrap_or(config.dynamics.horizon);
    let window = config
        .sweep
        .window
        .map(|w| (w[0], w[1]))
        .unwrap_or((0.2 * horizon, horizon));
    let mut rows: Vec<(f64, f64, RateFit<f64>)> = Vec::new();
    let mut report = create(out_dir, "report.txt")?;
    writeln!(report, "experiment: sweep")?;
    writeln!(report, "horizon: {horizon}, fit window: [{}, {}]", window.0, window.1)?;
    for &a in &config.sweep.a_values {
        let mut sub = config.clone();
        sub.dynamics.a = a;
        sub.dynamics.horizon = horizon;
        let sim = sub.build_sim_config()?;
        let stats = run_ensemble(&sim, sub.ensemble.runs, sub.ensemble.workers)?;
        let subdir = out_dir.join(format!("a_{a:.2}"));
        fs::create_dir_all(&subdir)?;
        let mut csv = create(&subdir, "ensemble_stats.csv")?;
        stats.write_csv(&mut csv)?;
        csv.flush()?;
        let fit = fit_rate(&stats, a, window).map_err(|e| CliError::CheckFailed(e.to_string()))?;
        let last = stats.times.len() - 1;
        let n = stats.n_agents() as f64;
        let final_gap = stats.mean_gap[last].iter().sum::<f64>() / n;
        writeln!(
            report,
            "a = {a}: final gap {final_gap:.6}, fitted exponent {:.4}, predicted {} (exponent {:.4})",
            fit.fitted_exponent,
            fit.predicted.describe(),
            fit.predicted.exponent()
        )?;
        rows.push((a, final_gap, fit));
    }
    let mut csv = create(out_dir, "sweep.csv")?;
    writeln!(csv, "a,final_gap,fitted_exponent,predicted_exponent")?;
    for (a, final_gap, fit) in &rows {
        writeln!(csv, "{a},{final_gap},{},{}", fit.fitted_exponent, fit.predicted.exponent())?;
    }
    csv.flush()?;
    report.flush()?;
    println!("sweep: wrote {}", out_dir.display());
    Ok(())
}

fn run_certify(
    config: &ExperimentConfig,
    sim: &SimConfig<f64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut reports: Vec<BoundReport<f64>> = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    let cert_cfg = &config.certify;

    // 1. window connectivity of the schedule
    let verdict = check_window_connectivity(&sim.schedule, cert_cfg.delta, cert_cfg.tc)
        .map_err(|e| CliError::Config(e.to_string()))?;
    lines.push(format!(
        "window-connectivity (delta = {}, tc = {}): {} ({} edges{})",
        cert_cfg.delta,
        cert_cfg.tc,
        if verdict.strongly_connected { "PASS" } else { "FAIL" },
        verdict.edges.len(),
        if verdict.horizon_limited { ", horizon-limited" } else { "" }
    ));
    let mut all_pass = verdict.strongly_connected;

    // 2. geometric decay envelope of the transition matrix
    let fit = fit_decay_constants(&sim.schedule, cert_cfg.decay_horizon, cert_cfg.decay_grid)
        .map_err(|e| CliError::CheckFailed(e.to_string()))?;
    let rows: Vec<BoundRow<f64>> = fit
        .samples
        .iter()
        .map(|&(t, d)| BoundRow {
            point: t,
            measured: d,
            bound: 1.05 * fit.c * (1.01 * fit.lambda).powf(t),
            slack: 0.0,
        })
        .collect();
    let decay_report = BoundReport::from_rows(
        format!("transition-decay-envelope C={:.6} lambda={:.6}", fit.c, fit.lambda),
        rows,
        Vec::new(),
    );
    lines.push(decay_report.summary_line());
    all_pass &= decay_report.pass;
    reports.push(decay_report);

    // 3. integral envelope grid
    for &a in &cert_cfg.integral_a {
        for &lam in &cert_cfg.integral_lambda {
            let t_max = (f64::MAX.ln() * 0.9) / -lam.ln();
            let grid: Vec<f64> = (0..40)
                .map(|i| 0.1 * (t_max / 0.1_f64).powf(i as f64 / 39.0))
                .collect();
            let rep = exp_power_integral_bound(a, lam, &grid)
                .map_err(|e| CliError::CheckFailed(e.to_string()))?;
            lines.push(rep.summary_line());
            all_pass &= rep.pass;
            reports.push(rep);
        }
    }

    // 4. ensemble + consensus-error expectation bound
    let stats = run_ensemble(sim, config.ensemble.runs, config.ensemble.workers)?;
    let mut csv = create(out_dir, "ensemble_stats.csv")?;
    stats.write_csv(&mut csv)?;
    csv.flush()?;
    let region = config.build_region()?;
    let cert = sim
        .objectives
        .certify_constants(&region, cert_cfg.region_samples)
        .map_err(|e| CliError::Config(e.to_string()))?;
    lines.push(format!(
        "smoothness certificate: grad bound {:.6}, Lipschitz {:.6} ({})",
        cert.grad_bound,
        cert.lipschitz,
        if cert.exact { "exact" } else { "sampled" }
    ));
    let consensus_report = consensus_error_bound_check(&stats, fit.c, fit.lambda, sim, Some(&cert))
        .map_err(|e| CliError::CheckFailed(e.to_string()))?;
    lines.push(consensus_report.summary_line());
    all_pass &= consensus_report.pass;
    reports.push(consensus_report);

    // 5. trajectories must stay inside the certified region
    let mut region_rows = Vec::new();
    for c in 0..sim.dim() {
        region_rows.push(BoundRow {
            point: c as f64 + 1.0,
            measured: stats.state_hi[c],
            bound: region.hi[c],
            slack: 0.0,
        });
        region_rows.push(BoundRow {
            point: c as f64 + 1.0,
            measured: -stats.state_lo[c],
            bound: -region.lo[c],
            slack: 0.0,
        });
    }
    let region_report = BoundReport::from_rows("region-containment", region_rows, Vec::new());
    lines.push(region_report.summary_line());
    all_pass &= region_report.pass;
    reports.push(region_report);

    let mut csv = create(out_dir, "bounds.csv")?;
    write_bound_csv_header(&mut csv)?;
    for rep in &reports {
        rep.write_csv_rows(&mut csv)?;
    }
    csv.flush()?;
    let mut report = create(out_dir, "report.txt")?;
    writeln!(report, "experiment: certify-bounds")?;
    for line in &lines {
        writeln!(report, "{line}")?;
    }
    writeln!(report, "overall: {}", if all_pass { "PASS" } else { "FAIL" })?;
    report.flush()?;
    println!("certify-bounds: wrote {}", out_dir.display());
    for line in &lines {
        println!("  {line}");
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed("one or more certification checks failed".into()))
    }
}

/// Strip gradients and noise from a config: the dynamics reduce to the pure
/// consensus flow.
fn consensus_only_sim(config: &ExperimentConfig) -> Result<SimConfig<f64>, CliError> {
    let base = config.build_sim_config()?;
    let m = base.dim();
    let zero = Matrix::zeros(m, m);
    let quads: Result<Vec<_>, _> = (0..base.n())
        .map(|_| QuadraticObjective::new(zero.clone(), vec![0.0; m], 0.0))
        .collect();
    let objectives = ObjectiveSet::from_quadratics(quads.map_err(|e| CliError::Config(e.to_string()))?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    SimConfig::new(
        base.schedule.clone(),
        objectives,
        base.step,
        NoiseModel::zero(),
        base.h,
        base.horizon,
        base.x0.clone(),
        base.seed,
        base.sample_stride,
    )
    .map_err(|e| CliError::Config(e.to_string()))
}

fn run_consensus_only(
    config: &ExperimentConfig,
    _sim: &SimConfig<f64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let sim = consensus_only_sim(config)?;
    let traj = simulate_path(&sim, 0)?;
    let mut csv = create(out_dir, "trajectory.csv")?;
    traj.write_csv(&mut csv)?;
    csv.flush()?;
    let target = average_state(&sim.x0);
    let tol = config.certify.consensus_tolerance;
    let last = traj.final_states();
    let mut rows = Vec::new();
    for i in 0..sim.n() {
        let diff: Vec<f64> = last.row(i).iter().zip(&target).map(|(a, b)| a - b).collect();
        rows.push(BoundRow { point: i as f64 + 1.0, measured: norm(&diff), bound: tol, slack: 0.0 });
    }
    let report_rows = BoundReport::from_rows("average-consensus", rows, Vec::new());
    let mut csv = create(out_dir, "bounds.csv")?;
    write_bound_csv_header(&mut csv)?;
    report_rows.write_csv_rows(&mut csv)?;
    csv.flush()?;
    let mut report = create(out_dir, "report.txt")?;
    writeln!(report, "experiment: consensus-only")?;
    writeln!(report, "initial average: {target:?}")?;
    writeln!(report, "{}", report_rows.summary_line())?;
    report.flush()?;
    println!("consensus-only: {}", report_rows.summary_line());
    if report_rows.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "agents did not reach the initial average within {tol:e} by t = {}",
            sim.horizon
        )))
    }
}

fn run_isometry(
    config: &ExperimentConfig,
    sim: &SimConfig<f64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let iso = &config.isometry;
    let noise = sim.noise.clone();
    let m = sim.dim();
    let g = move |t: f64| {
        let mut out = vec![0.0; m];
        noise.eval(0, t, &mut out);
        out
    };
    let rep = ito_isometry_check(g, iso.horizon, iso.h, iso.runs, config.seed)?;
    let row = BoundRow { point: iso.horizon, measured: rep.rel_err, bound: 0.05, slack: 0.0 };
    let report_rows = BoundReport::from_rows("stochastic-integral-isometry", vec![row], Vec::new());
    let mut csv = create(out_dir, "bounds.csv")?;
    write_bound_csv_header(&mut csv)?;
    report_rows.write_csv_rows(&mut csv)?;
    csv.flush()?;
    let mut report = create(out_dir, "report.txt")?;
    writeln!(report, "experiment: isometry")?;
    writeln!(
        report,
        "lhs (Monte Carlo) = {}, rhs (quadrature) = {}, relative error = {} over {} paths",
        rep.lhs, rep.rhs, rep.rel_err, rep.runs
    )?;
    writeln!(report, "{}", report_rows.summary_line())?;
    report.flush()?;
    println!(
        "isometry: lhs = {:.6}, rhs = {:.6}, rel err = {:.4} -> {}",
        rep.lhs,
        rep.rhs,
        rep.rel_err,
        if report_rows.pass { "PASS" } else { "FAIL" }
    );
    if report_rows.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "isometry relative error {} exceeds 0.05",
            rep.rel_err
        )))
    }
}
