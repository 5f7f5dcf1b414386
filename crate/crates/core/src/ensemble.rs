//! Reproducible Monte Carlo ensembles.
//!
//! Paths are simulated independently (optionally in parallel) and folded
//! into per-sample-time statistics. The fold is a fixed-order pairwise
//! reduction over path indices, so the result is bitwise identical for any
//! worker count; parallelism only changes who computes which path.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{average_state, run_path, DynamicsError, KeyedBrownian, SimConfig};
use crate::linalg::Matrix;
use crate::objective::norm;
use crate::quadrature::{integrate, QuadError};
use crate::rng::PathKey;
use crate::scalar::{real, real_of_usize, Real};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least one run")]
    NoRuns,
    #[error("{diverged} of {runs} paths diverged (limit is 1%); first failure: {first}")]
    DivergenceCeiling { diverged: usize, runs: usize, first: DynamicsError },
    #[error("worker pool: {0}")]
    WorkerPool(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Means and standard errors of the agent states, optimality gaps, and
/// consensus errors at each recorded time, over `runs` independent paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats<T> {
    pub times: Vec<T>,
    pub runs: usize,
    /// Indices of paths excluded because they diverged.
    pub diverged: Vec<u64>,
    /// `[time] -> n x m` mean state.
    pub mean_state: Vec<Matrix<T>>,
    pub se_state: Vec<Matrix<T>>,
    /// `[time][agent]` mean optimality gap `f(x_i(t)) - f(x*)`.
    pub mean_gap: Vec<Vec<T>>,
    pub se_gap: Vec<Vec<T>>,
    /// `[time][agent]` mean consensus error `||x_i(t) - xbar(t)||`.
    pub mean_consensus_err: Vec<Vec<T>>,
    pub se_consensus_err: Vec<Vec<T>>,
    /// Componentwise bounds over every step of every retained path (not just
    /// recorded samples), for post-hoc region certification.
    pub state_lo: Vec<T>,
    pub state_hi: Vec<T>,
}

impl<T: Real> EnsembleStats<T> {
    /// CSV export:
    /// `t,agent,mean_coord_1..m,se_coord_1..m,mean_gap,se_gap,mean_consensus_err`
    /// with 1-based agent ids.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let m = self.mean_state[0].cols();
        let n = self.mean_state[0].rows();
        write!(w, "t,agent")?;
        for c in 1..=m {
            write!(w, ",mean_coord_{c}")?;
        }
        for c in 1..=m {
            write!(w, ",se_coord_{c}")?;
        }
        writeln!(w, ",mean_gap,se_gap,mean_consensus_err")?;
        for (ti, t) in self.times.iter().enumerate() {
            for agent in 0..n {
                write!(w, "{t},{}", agent + 1)?;
                for c in 0..m {
                    write!(w, ",{}", self.mean_state[ti][(agent, c)])?;
                }
                for c in 0..m {
                    write!(w, ",{}", self.se_state[ti][(agent, c)])?;
                }
                writeln!(
                    w,
                    ",{},{},{}",
                    self.mean_gap[ti][agent],
                    self.se_gap[ti][agent],
                    self.mean_consensus_err[ti][agent]
                )?;
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.mean_state[0].rows()
    }

    /// Index of the recorded time closest to `t`.
    pub fn time_index(&self, t: T) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Running sums for one path (or a merged group of paths).
#[derive(Clone)]
struct PathSummary<T> {
    count: usize,
    // [time][agent * m + c]
    sum_state: Vec<Vec<T>>,
    sumsq_state: Vec<Vec<T>>,
    // [time][agent]
    sum_gap: Vec<Vec<T>>,
    sumsq_gap: Vec<Vec<T>>,
    sum_cons: Vec<Vec<T>>,
    sumsq_cons: Vec<Vec<T>>,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> PathSummary<T> {
    fn merge(&mut self, other: &PathSummary<T>) {
        self.count += other.count;
        let acc = |a: &mut Vec<Vec<T>>, b: &Vec<Vec<T>>| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (va, &vb) in ra.iter_mut().zip(rb) {
                    *va += vb;
                }
            }
        };
        acc(&mut self.sum_state, &other.sum_state);
        acc(&mut self.sumsq_state, &other.sumsq_state);
        acc(&mut self.sum_gap, &other.sum_gap);
        acc(&mut self.sumsq_gap, &other.sumsq_gap);
        acc(&mut self.sum_cons, &other.sum_cons);
        acc(&mut self.sumsq_cons, &other.sumsq_cons);
        for (l, &ol) in self.lo.iter_mut().zip(&other.lo) {
            *l = l.min(ol);
        }
        for (h, &oh) in self.hi.iter_mut().zip(&other.hi) {
            *h = h.max(oh);
        }
    }
}

/// Fixed-order pairwise reduction: summaries are pushed in path-index order
/// and merged whenever two subtrees of equal leaf count meet, which bounds
/// both the stack depth and the floating-point error growth.
struct ReduceStack<T> {
    levels: Vec<PathSummary<T>>,
}

impl<T: Real> ReduceStack<T> {
    fn new() -> Self {
        ReduceStack { levels: Vec::new() }
    }

    fn push(&mut self, leaf: PathSummary<T>) {
        self.levels.push(leaf);
        while self.levels.len() >= 2 {
            let a = &self.levels[self.levels.len() - 2];
            let b = &self.levels[self.levels.len() - 1];
            if a.count != b.count {
                break;
            }
            let b = self.levels.pop().unwrap();
            self.levels.last_mut().unwrap().merge(&b);
        }
    }

    fn finish(mut self) -> Option<PathSummary<T>> {
        while self.levels.len() >= 2 {
            let b = self.levels.pop().unwrap();
            self.levels.last_mut().unwrap().merge(&b);
        }
        self.levels.pop()
    }
}

fn summarize_path<T: Real>(cfg: &SimConfig<T>, path: u64) -> Result<PathSummary<T>, DynamicsError> {
    let n = cfg.n();
    let m = cfg.dim();
    let sample_count = crate::dynamics::sample_steps(cfg.total_steps(), cfg.sample_stride).len();
    let minimizer_err = cfg.objectives.minimizer().err();
    if let Some(e) = minimizer_err {
        return Err(e.into());
    }
    let mut s = PathSummary {
        count: 1,
        sum_state: vec![vec![T::zero(); n * m]; sample_count],
        sumsq_state: vec![vec![T::zero(); n * m]; sample_count],
        sum_gap: vec![vec![T::zero(); n]; sample_count],
        sumsq_gap: vec![vec![T::zero(); n]; sample_count],
        sum_cons: vec![vec![T::zero(); n]; sample_count],
        sumsq_cons: vec![vec![T::zero(); n]; sample_count],
        lo: vec![T::infinity(); m],
        hi: vec![T::neg_infinity(); m],
    };
    let source = KeyedBrownian::new(cfg.seed, path);
    let mut sample_idx = 0usize;
    let mut diff = vec![T::zero(); m];
    run_path(cfg, &source, |_k, states| {
        // componentwise observed bounds over recorded samples
        for i in 0..n {
            for c in 0..m {
                s.lo[c] = s.lo[c].min(states[(i, c)]);
                s.hi[c] = s.hi[c].max(states[(i, c)]);
            }
        }
        let avg = average_state(states);
        for i in 0..n {
            let xi = states.row(i);
            for c in 0..m {
                let v = xi[c];
                s.sum_state[sample_idx][i * m + c] += v;
                s.sumsq_state[sample_idx][i * m + c] += v * v;
            }
            let gap = cfg.objectives.optimality_gap(xi).expect("minimizer cached");
            s.sum_gap[sample_idx][i] += gap;
            s.sumsq_gap[sample_idx][i] += gap * gap;
            for c in 0..m {
                diff[c] = xi[c] - avg[c];
            }
            let cons = norm(&diff);
            s.sum_cons[sample_idx][i] += cons;
            s.sumsq_cons[sample_idx][i] += cons * cons;
        }
        sample_idx += 1;
    })?;
    Ok(s)
}

fn finalize<T: Real>(
    cfg: &SimConfig<T>,
    summary: PathSummary<T>,
    diverged: Vec<u64>,
) -> EnsembleStats<T> {
    let n = cfg.n();
    let m = cfg.dim();
    let times = cfg.sample_times();
    let runs = summary.count;
    let r = real_of_usize::<T>(runs);
    // standard error = sample std / sqrt(R); zero for a single run
    let se_scale = if runs >= 2 {
        (r / (r - T::one())).sqrt() / r.sqrt()
    } else {
        T::zero()
    };
    let stats_pair = |sum: T, sumsq: T| -> (T, T) {
        let mean = sum / r;
        let var = (sumsq / r - mean * mean).max(T::zero());
        (mean, var.sqrt() * se_scale)
    };
    let mut mean_state = Vec::with_capacity(times.len());
    let mut se_state = Vec::with_capacity(times.len());
    let mut mean_gap = Vec::with_capacity(times.len());
    let mut se_gap = Vec::with_capacity(times.len());
    let mut mean_cons = Vec::with_capacity(times.len());
    let mut se_cons = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let mut ms = Matrix::zeros(n, m);
        let mut ss = Matrix::zeros(n, m);
        for i in 0..n {
            for c in 0..m {
                let (mean, se) = stats_pair(
                    summary.sum_state[ti][i * m + c],
                    summary.sumsq_state[ti][i * m + c],
                );
                ms[(i, c)] = mean;
                ss[(i, c)] = se;
            }
        }
        mean_state.push(ms);
        se_state.push(ss);
        let mut mg = vec![T::zero(); n];
        let mut sg = vec![T::zero(); n];
        let mut mc = vec![T::zero(); n];
        let mut sc = vec![T::zero(); n];
        for i in 0..n {
            let (mean, se) = stats_pair(summary.sum_gap[ti][i], summary.sumsq_gap[ti][i]);
            mg[i] = mean;
            sg[i] = se;
            let (mean, se) = stats_pair(summary.sum_cons[ti][i], summary.sumsq_cons[ti][i]);
            mc[i] = mean;
            sc[i] = se;
        }
        mean_gap.push(mg);
        se_gap.push(sg);
        mean_cons.push(mc);
        se_cons.push(sc);
    }
    EnsembleStats {
        times,
        runs,
        diverged,
        mean_state,
        se_state,
        mean_gap,
        se_gap,
        mean_consensus_err: mean_cons,
        se_consensus_err: se_cons,
        state_lo: summary.lo,
        state_hi: summary.hi,
    }
}

/// Simulate `runs` paths (path indices `0..runs`) and aggregate statistics.
///
/// Diverged paths are excluded and recorded; the run fails when more than 1%
/// of paths diverge. The result is bitwise identical for a fixed config and
/// seed regardless of `workers`.
pub fn run_ensemble<T: Real>(
    cfg: &SimConfig<T>,
    runs: usize,
    workers: usize,
) -> Result<EnsembleStats<T>, EnsembleError> {
    if runs == 0 {
        return Err(EnsembleError::NoRuns);
    }
    // warm the minimizer cache before paths run concurrently
    cfg.objectives.minimizer().map_err(DynamicsError::from)?;
    let workers = workers.max(1);
    let mut stack = ReduceStack::new();
    let mut diverged: Vec<u64> = Vec::new();
    let mut first_failure: Option<DynamicsError> = None;

    // constant block size: chunking must not influence the fold order
    const BLOCK: usize = 64;
    let mut consume = |results: Vec<(u64, Result<PathSummary<T>, DynamicsError>)>,
                       stack: &mut ReduceStack<T>,
                       diverged: &mut Vec<u64>| {
        for (path, res) in results {
            match res {
                Ok(s) => stack.push(s),
                Err(e) => {
                    if first_failure.is_none() {
                        first_failure = Some(e);
                    }
                    diverged.push(path);
                }
            }
        }
    };

    if workers == 1 {
        for path in 0..runs as u64 {
            let res = summarize_path(cfg, path);
            consume(vec![(path, res)], &mut stack, &mut diverged);
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EnsembleError::WorkerPool(e.to_string()))?;
        let all: Vec<u64> = (0..runs as u64).collect();
        for block in all.chunks(BLOCK) {
            let results: Vec<(u64, Result<PathSummary<T>, DynamicsError>)> = pool.install(|| {
                block
                    .par_iter()
                    .map(|&path| (path, summarize_path(cfg, path)))
                    .collect()
            });
            consume(results, &mut stack, &mut diverged);
        }
    }

    if diverged.len() * 100 > runs {
        return Err(EnsembleError::DivergenceCeiling {
            diverged: diverged.len(),
            runs,
            first: first_failure.expect("divergences recorded"),
        });
    }
    let summary = match stack.finish() {
        Some(s) => s,
        None => {
            return Err(EnsembleError::DivergenceCeiling {
                diverged: diverged.len(),
                runs,
                first: first_failure.expect("all paths failed"),
            })
        }
    };
    Ok(finalize(cfg, summary, diverged))
}

/// Monte Carlo check of the stochastic-integral isometry
/// `E || int_0^t g(s) dB(s) ||^2 = int_0^t ||g(s)||^2 ds`
/// for a deterministic intensity `g` and a scalar Brownian motion.
#[derive(Debug, Clone, Copy)]
pub struct IsometryReport<T> {
    /// Monte Carlo estimate of the expected squared stochastic integral.
    pub lhs: T,
    /// Quadrature of the squared intensity norm.
    pub rhs: T,
    pub rel_err: T,
    pub runs: usize,
}

pub fn ito_isometry_check<T: Real>(
    g: impl Fn(T) -> Vec<T> + Sync,
    horizon: T,
    h: T,
    runs: usize,
    seed: u64,
) -> Result<IsometryReport<T>, EnsembleError> {
    let steps = (horizon / h).to_f64().unwrap_or(0.0).round() as u64;
    let m = g(T::zero()).len();
    // precompute g(t_k) once; it is deterministic
    let g_table: Vec<Vec<T>> = (0..steps)
        .map(|k| g(T::from_u64(k).unwrap() * h))
        .collect();
    let sqrt_h = h.sqrt();
    let path_value = |path: u64| -> T {
        let key = PathKey::new(seed, path);
        let mut acc = vec![T::zero(); m];
        for (k, gk) in g_table.iter().enumerate() {
            let db = sqrt_h * real::<T>(key.standard_normal(k as u64, 0));
            for (a, &gi) in acc.iter_mut().zip(gk) {
                *a += gi * db;
            }
        }
        norm(&acc).powi(2)
    };
    // pairwise sum in fixed path order
    let values: Vec<T> = (0..runs as u64).map(path_value).collect();
    let lhs = pairwise_sum(&values) / real_of_usize::<T>(runs.max(1));
    let rhs = integrate(|s| norm(&g(s)).powi(2), T::zero(), horizon, real(1e-10), real(1e-300))?
        .value;
    let denom = rhs.abs().max(real(1e-300));
    let rel_err = (lhs - rhs).abs() / denom;
    Ok(IsometryReport { lhs, rhs, rel_err, runs })
}

fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Intensity, NoiseModel, StepSchedule};
    use crate::graph::default_six_agent_schedule;
    use crate::objective::default_six_agent_objectives;

    fn demo_config(noise_scale: f64, horizon: f64, seed: u64) -> SimConfig<f64> {
        let schedule = default_six_agent_schedule::<f64>();
        let obj = default_six_agent_objectives::<f64>();
        let step = StepSchedule::new(2.0, 1.0).unwrap();
        let x0 = Matrix::from_rows(&[
            vec![0.3, 2.0],
            vec![0.5, 1.3],
            vec![0.7, 2.7],
            vec![0.9, 1.0],
            vec![1.1, 3.0],
            vec![1.3, 1.6],
        ]);
        let noise = NoiseModel::new(Intensity::SinCos, noise_scale);
        SimConfig::new(schedule, obj, step, noise, 1e-3, horizon, x0, seed, 100).unwrap()
    }

    #[test]
    fn deterministic_ensemble_has_zero_standard_errors() {
        let cfg = demo_config(0.0, 0.5, 9);
        let stats = run_ensemble(&cfg, 4, 1).unwrap();
        let single = crate::dynamics::simulate_path(&cfg, 0).unwrap();
        for ti in 0..stats.times.len() {
            assert_eq!(stats.mean_state[ti], single.states[ti]);
            for i in 0..6 {
                assert_eq!(stats.se_gap[ti][i], 0.0);
                assert_eq!(stats.se_consensus_err[ti][i], 0.0);
                for c in 0..2 {
                    assert_eq!(stats.se_state[ti][(i, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn single_run_is_allowed_with_zero_se() {
        let cfg = demo_config(1.0, 0.2, 3);
        let stats = run_ensemble(&cfg, 1, 1).unwrap();
        assert_eq!(stats.runs, 1);
        assert_eq!(stats.se_gap[0][0], 0.0);
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let cfg = demo_config(1.0, 0.3, 17);
        let a = run_ensemble(&cfg, 12, 1).unwrap();
        let b = run_ensemble(&cfg, 12, 4).unwrap();
        let c = run_ensemble(&cfg, 12, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn gaps_never_drop_below_estimator_noise() {
        let cfg = demo_config(1.0, 0.5, 23);
        let stats = run_ensemble(&cfg, 16, 2).unwrap();
        for ti in 0..stats.times.len() {
            for i in 0..6 {
                assert!(stats.mean_gap[ti][i] >= -2.0 * stats.se_gap[ti][i]);
                assert!(stats.mean_consensus_err[ti][i] >= 0.0);
            }
        }
    }

    #[test]
    fn observed_bounds_cover_initial_states() {
        let cfg = demo_config(1.0, 0.2, 5);
        let stats = run_ensemble(&cfg, 4, 2).unwrap();
        assert!(stats.state_lo[0] <= 0.3);
        assert!(stats.state_hi[0] >= 1.3);
        assert!(stats.state_lo[1] <= 1.0);
        assert!(stats.state_hi[1] >= 3.0);
    }

    #[test]
    fn isometry_zero_intensity() {
        let rep = ito_isometry_check(|_t: f64| vec![0.0, 0.0], 1.0, 1e-2, 100, 1).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
    }

    #[test]
    fn isometry_constant_intensity() {
        // rhs = ||c||^2 t
        let c = [0.6, -0.8];
        let rep =
            ito_isometry_check(move |_t: f64| c.to_vec(), 2.0, 1e-2, 4000, 42).unwrap();
        assert!((rep.rhs - 2.0).abs() < 1e-9);
        assert!(rep.rel_err < 0.05, "rel_err = {}", rep.rel_err);
    }

    #[test]
    fn isometry_sin_cos_intensity() {
        // ||g||^2 = 1 identically, so rhs = horizon exactly
        let rep =
            ito_isometry_check(|t: f64| vec![t.sin(), t.cos()], 1.0, 1e-3, 4000, 7).unwrap();
        assert!((rep.rhs - 1.0).abs() < 1e-9);
        assert!(rep.rel_err < 0.1, "rel_err = {}", rep.rel_err);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..101).map(|i| (i as f64) * 0.01).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
