//! The agent dynamics: each step applies one consensus exchange plus one
//! stochastic gradient correction,
//!
//! ```text
//! x_i(k+1) = x_i(k) + h * sum_j a_ij(t_k) (x_j(k) - x_i(k))
//!            - eta(t_k) * (h * grad f_i(x_i(k)) + g_i(t_k) * dB_i(k))
//! ```
//!
//! with `dB_i(k) ~ Normal(0, h)`, one independent scalar Brownian motion per
//! agent driving that agent's intensity vector. Time arguments inside a step
//! use the left endpoint `t_k` (Ito convention). Steps are aligned with the
//! graph schedule: `h` must divide every segment duration, so a step never
//! straddles a switch.

use std::sync::Arc;

use thiserror::Error;

use crate::graph::{GraphError, GraphSchedule};
use crate::linalg::Matrix;
use crate::objective::{norm, ObjectiveError, ObjectiveSet};
use crate::rng::{fill_brownian_increments, PathKey};
use crate::scalar::{real, real_of_usize, Real};

/// Abort a path when any coordinate exceeds this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step exponent must lie in (1/2, 1], got {0}")]
    InvalidStepExponent(f64),
    #[error("step scale beta must be positive, got {0}")]
    InvalidStepScale(f64),
    #[error("integration step {h} does not divide segment duration {duration} (segment {index})")]
    StepMisaligned { h: f64, duration: f64, index: usize },
    #[error("horizon {horizon} is not an integer number of steps of {h}")]
    HorizonMisaligned { horizon: f64, h: f64 },
    #[error("initial states are {got_rows}x{got_cols}, expected {rows}x{cols}")]
    InitialStateShape { got_rows: usize, got_cols: usize, rows: usize, cols: usize },
    #[error("noise intensity dimension {got} does not match decision dimension {expected}")]
    NoiseDimension { got: usize, expected: usize },
    #[error("noise intensity exceeds its declared bound: |g({t})| = {observed} > {bound}")]
    NoiseBoundViolated { t: f64, observed: f64, bound: f64 },
    #[error("state diverged at step {step}, agent {agent} (|coordinate| = {magnitude:e})")]
    NonFiniteState { step: u64, agent: usize, magnitude: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Decaying step size `eta(t) = beta / (t + 1)^a` with `a` in (1/2, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule<T> {
    beta: T,
    exponent: T,
}

impl<T: Real> StepSchedule<T> {
    pub fn new(beta: T, exponent: T) -> Result<Self, DynamicsError> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(DynamicsError::InvalidStepScale(beta.to_f64().unwrap_or(f64::NAN)));
        }
        let half = real::<T>(0.5);
        if !(exponent > half && exponent <= T::one()) {
            return Err(DynamicsError::InvalidStepExponent(
                exponent.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(StepSchedule { beta, exponent })
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    pub fn eta(&self, t: T) -> T {
        self.beta / (t + T::one()).powf(self.exponent)
    }

    /// Closed form of `integral_0^t eta(s) ds`.
    pub fn integrated(&self, t: T) -> T {
        if self.exponent == T::one() {
            self.beta * (t + T::one()).ln()
        } else {
            let one_minus_a = T::one() - self.exponent;
            self.beta * ((t + T::one()).powf(one_minus_a) - T::one()) / one_minus_a
        }
    }
}

/// Per-agent noise intensity `g_i(t)` (an m-vector), shared across agents.
#[derive(Clone)]
pub enum Intensity<T> {
    Zero,
    /// Same constant vector for every agent.
    Constant(Vec<T>),
    /// `[sin t, cos t]`; requires a two-dimensional decision space.
    SinCos,
    /// Arbitrary `(agent, t) -> g_i(t)` with a declared norm bound.
    Custom {
        g: Arc<dyn Fn(usize, T) -> Vec<T> + Send + Sync>,
        bound: T,
    },
}

impl<T> std::fmt::Debug for Intensity<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Intensity::Zero => write!(f, "Zero"),
            Intensity::Constant(_) => write!(f, "Constant"),
            Intensity::SinCos => write!(f, "SinCos"),
            Intensity::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Noise intensity with a scalar multiplier and the bound `K` on
/// `||g_i(t)||` it implies.
#[derive(Debug, Clone)]
pub struct NoiseModel<T> {
    intensity: Intensity<T>,
    scale: T,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(intensity: Intensity<T>, scale: T) -> Self {
        NoiseModel { intensity, scale }
    }

    pub fn zero() -> Self {
        NoiseModel { intensity: Intensity::Zero, scale: T::zero() }
    }

    pub fn scaled(&self, factor: T) -> Self {
        NoiseModel { intensity: self.intensity.clone(), scale: self.scale * factor }
    }

    /// The bound `K` with `||g_i(t)|| <= K`.
    pub fn bound(&self) -> T {
        let base = match &self.intensity {
            Intensity::Zero => T::zero(),
            Intensity::Constant(v) => norm(v),
            Intensity::SinCos => T::one(),
            Intensity::Custom { bound, .. } => *bound,
        };
        base * self.scale.abs()
    }

    /// Deterministic dynamics when the bound vanishes.
    pub fn is_zero(&self) -> bool {
        self.bound() == T::zero()
    }

    pub fn check_dimension(&self, m: usize) -> Result<(), DynamicsError> {
        match &self.intensity {
            Intensity::Constant(v) if v.len() != m => {
                Err(DynamicsError::NoiseDimension { got: v.len(), expected: m })
            }
            Intensity::SinCos if m != 2 => Err(DynamicsError::NoiseDimension { got: 2, expected: m }),
            _ => Ok(()),
        }
    }

    /// Write `g_i(t)` into `out`.
    pub fn eval(&self, agent: usize, t: T, out: &mut [T]) {
        match &self.intensity {
            Intensity::Zero => out.fill(T::zero()),
            Intensity::Constant(v) => {
                for (o, &vi) in out.iter_mut().zip(v) {
                    *o = vi * self.scale;
                }
            }
            Intensity::SinCos => {
                out[0] = t.sin() * self.scale;
                out[1] = t.cos() * self.scale;
            }
            Intensity::Custom { g, .. } => {
                let v = g(agent, t);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = vi * self.scale;
                }
            }
        }
    }

    /// Verify `||g_i(t)|| <= K` on a dense time sample over `[0, horizon]`.
    pub fn validate_bound(
        &self,
        n_agents: usize,
        m: usize,
        horizon: T,
        samples: usize,
    ) -> Result<(), DynamicsError> {
        self.check_dimension(m)?;
        let k = self.bound();
        let tol = k * real::<T>(1e-9) + real::<T>(1e-12);
        let mut buf = vec![T::zero(); m];
        for s in 0..=samples {
            let t = horizon * real_of_usize::<T>(s) / real_of_usize::<T>(samples.max(1));
            for agent in 0..n_agents {
                self.eval(agent, t, &mut buf);
                let observed = norm(&buf);
                if observed > k + tol {
                    return Err(DynamicsError::NoiseBoundViolated {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        observed: observed.to_f64().unwrap_or(f64::NAN),
                        bound: k.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Everything one simulation run needs.
#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub schedule: GraphSchedule<T>,
    pub objectives: ObjectiveSet<T>,
    pub step: StepSchedule<T>,
    pub noise: NoiseModel<T>,
    pub h: T,
    pub horizon: T,
    /// Initial states, one row per agent.
    pub x0: Matrix<T>,
    pub seed: u64,
    /// Record every `sample_stride`-th step (step 0 and the final step are
    /// always recorded).
    pub sample_stride: usize,
    steps: u64,
    steps_per_segment: Vec<u64>,
    steps_per_period: u64,
}

impl<T: Real> SimConfig<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        schedule: GraphSchedule<T>,
        objectives: ObjectiveSet<T>,
        step: StepSchedule<T>,
        noise: NoiseModel<T>,
        h: T,
        horizon: T,
        x0: Matrix<T>,
        seed: u64,
        sample_stride: usize,
    ) -> Result<Self, DynamicsError> {
        let n = schedule.n();
        let m = objectives.dim();
        if x0.rows() != n || x0.cols() != m {
            return Err(DynamicsError::InitialStateShape {
                got_rows: x0.rows(),
                got_cols: x0.cols(),
                rows: n,
                cols: m,
            });
        }
        noise.check_dimension(m)?;
        if !(h > T::zero()) || !h.is_finite() {
            return Err(DynamicsError::HorizonMisaligned {
                horizon: horizon.to_f64().unwrap_or(f64::NAN),
                h: h.to_f64().unwrap_or(f64::NAN),
            });
        }
        // every Euler step must see a single constant graph
        let mut steps_per_segment = Vec::with_capacity(schedule.segments().len());
        for (index, seg) in schedule.segments().iter().enumerate() {
            let ratio = (seg.duration / h).to_f64().unwrap_or(f64::NAN);
            let count = ratio.round();
            if count < 1.0 || (ratio - count).abs() > 1e-9 * count.max(1.0) {
                return Err(DynamicsError::StepMisaligned {
                    h: h.to_f64().unwrap_or(f64::NAN),
                    duration: seg.duration.to_f64().unwrap_or(f64::NAN),
                    index,
                });
            }
            steps_per_segment.push(count as u64);
        }
        let steps_per_period: u64 = steps_per_segment.iter().sum();
        let ratio = (horizon / h).to_f64().unwrap_or(f64::NAN);
        let count = ratio.round();
        if count < 1.0 || (ratio - count).abs() > 1e-9 * count.max(1.0) {
            return Err(DynamicsError::HorizonMisaligned {
                horizon: horizon.to_f64().unwrap_or(f64::NAN),
                h: h.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(SimConfig {
            schedule,
            objectives,
            step,
            noise,
            h,
            horizon,
            x0,
            seed,
            sample_stride: sample_stride.max(1),
            steps: count as u64,
            steps_per_segment,
            steps_per_period,
        })
    }

    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    pub fn dim(&self) -> usize {
        self.objectives.dim()
    }

    pub fn total_steps(&self) -> u64 {
        self.steps
    }

    pub fn time_at(&self, step: u64) -> T {
        T::from_u64(step).expect("step count fits the scalar") * self.h
    }

    /// Graph seen by step `k`, resolved by integer step counts so boundary
    /// rounding can never pick the wrong segment.
    pub fn graph_for_step(&self, k: u64) -> &crate::graph::WeightedDigraph<T> {
        let idx = if self.schedule.is_periodic() {
            let mut r = k % self.steps_per_period;
            let mut idx = 0;
            for (i, &c) in self.steps_per_segment.iter().enumerate() {
                if r < c {
                    idx = i;
                    break;
                }
                r -= c;
            }
            idx
        } else if k >= self.steps_per_period {
            self.steps_per_segment.len() - 1
        } else {
            let mut r = k;
            let mut idx = self.steps_per_segment.len() - 1;
            for (i, &c) in self.steps_per_segment.iter().enumerate() {
                if r < c {
                    idx = i;
                    break;
                }
                r -= c;
            }
            idx
        };
        &self.schedule.segments()[idx].graph
    }

    /// Times at which a trajectory or ensemble is recorded.
    pub fn sample_times(&self) -> Vec<T> {
        sample_steps(self.steps, self.sample_stride)
            .into_iter()
            .map(|k| self.time_at(k))
            .collect()
    }
}

pub(crate) fn sample_steps(total: u64, stride: usize) -> Vec<u64> {
    let stride = stride.max(1) as u64;
    let mut steps: Vec<u64> = (0..=total).step_by(stride as usize).collect();
    if *steps.last().unwrap() != total {
        steps.push(total);
    }
    steps
}

/// Source of per-step Brownian increments, so an oracle can replay a fixed
/// path at several resolutions.
pub trait BrownianSource<T>: Send + Sync {
    /// Fill `out[agent]` with the increment of agent's Brownian motion over
    /// step `step` of length `h`.
    fn fill(&self, step: u64, h: T, out: &mut [T]);
}

/// Default source: counter-based draws keyed by (master seed, path).
pub struct KeyedBrownian {
    key: PathKey,
}

impl KeyedBrownian {
    pub fn new(master_seed: u64, path: u64) -> Self {
        KeyedBrownian { key: PathKey::new(master_seed, path) }
    }

    pub fn key(&self) -> PathKey {
        self.key
    }
}

impl<T: Real> BrownianSource<T> for KeyedBrownian {
    fn fill(&self, step: u64, h: T, out: &mut [T]) {
        fill_brownian_increments(self.key, step, h, out);
    }
}

/// States of all agents over the recorded sample steps.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    /// One `n x m` state matrix per recorded time.
    pub states: Vec<Matrix<T>>,
    pub master_seed: u64,
    pub path: u64,
}

impl<T: Real> Trajectory<T> {
    pub fn final_states(&self) -> &Matrix<T> {
        self.states.last().expect("trajectory records at least the initial state")
    }

    /// CSV export: `t,agent,coord_1..coord_m` with 1-based agent ids.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let m = self.states[0].cols();
        write!(w, "t,agent")?;
        for c in 1..=m {
            write!(w, ",coord_{c}")?;
        }
        writeln!(w)?;
        for (t, states) in self.times.iter().zip(&self.states) {
            for agent in 0..states.rows() {
                write!(w, "{t},{}", agent + 1)?;
                for c in 0..m {
                    write!(w, ",{}", states[(agent, c)])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Arithmetic mean of the agent states, per coordinate.
pub fn average_state<T: Real>(states: &Matrix<T>) -> Vec<T> {
    let n = states.rows();
    let m = states.cols();
    let inv = T::one() / real_of_usize::<T>(n);
    let mut avg = vec![T::zero(); m];
    for i in 0..n {
        for (a, &v) in avg.iter_mut().zip(states.row(i)) {
            *a += v;
        }
    }
    for a in &mut avg {
        *a *= inv;
    }
    avg
}

fn step_into<T: Real>(
    states: &Matrix<T>,
    next: &mut Matrix<T>,
    k: u64,
    cfg: &SimConfig<T>,
    increments: &[T],
    grad_buf: &mut [T],
    noise_buf: &mut [T],
) -> Result<(), DynamicsError> {
    let n = cfg.n();
    let m = cfg.dim();
    let t = cfg.time_at(k);
    let eta = cfg.step.eta(t);
    let graph = cfg.graph_for_step(k);
    let noisy = !cfg.noise.is_zero();
    if noisy {
        assert_eq!(increments.len(), n, "one Brownian increment per agent");
    }
    let limit = real::<T>(DIVERGENCE_LIMIT);
    for i in 0..n {
        let xi = states.row(i);
        match cfg.objectives.objective(i) {
            crate::objective::LocalObjective::Quadratic(q) => {
                for (c, slot) in grad_buf.iter_mut().enumerate() {
                    let mut acc = q.q()[c];
                    for (d, &x) in xi.iter().enumerate() {
                        acc += q.p()[(c, d)] * x;
                    }
                    *slot = acc;
                }
            }
            other => {
                let g = other.grad(xi);
                grad_buf.copy_from_slice(&g);
            }
        }
        if noisy {
            cfg.noise.eval(i, t, noise_buf);
        }
        let db = if noisy { increments[i] } else { T::zero() };
        for c in 0..m {
            let mut consensus = T::zero();
            for j in 0..n {
                let w = graph.weight(i, j);
                if w != T::zero() {
                    consensus += w * (states[(j, c)] - xi[c]);
                }
            }
            let noise_term = if noisy { noise_buf[c] * db } else { T::zero() };
            let value = xi[c] + cfg.h * consensus - eta * (cfg.h * grad_buf[c] + noise_term);
            if !value.is_finite() || value.abs() > limit {
                return Err(DynamicsError::NonFiniteState {
                    step: k,
                    agent: i,
                    magnitude: value.abs().to_f64().unwrap_or(f64::NAN),
                });
            }
            next[(i, c)] = value;
        }
    }
    Ok(())
}

/// One update of all agents. `increments` carries the Brownian increment of
/// each agent over step `k` (length `n`; ignored when the noise bound is
/// zero).
pub fn euler_step<T: Real>(
    states: &Matrix<T>,
    k: u64,
    cfg: &SimConfig<T>,
    increments: &[T],
) -> Result<Matrix<T>, DynamicsError> {
    let mut next = Matrix::zeros(states.rows(), states.cols());
    let mut grad_buf = vec![T::zero(); cfg.dim()];
    let mut noise_buf = vec![T::zero(); cfg.dim()];
    step_into(states, &mut next, k, cfg, increments, &mut grad_buf, &mut noise_buf)?;
    Ok(next)
}

/// Simulate one path with the default keyed noise source. Bit-reproducible
/// for a fixed `(cfg.seed, path, h)`.
pub fn simulate_path<T: Real>(cfg: &SimConfig<T>, path: u64) -> Result<Trajectory<T>, DynamicsError> {
    let source = KeyedBrownian::new(cfg.seed, path);
    simulate_path_with_source(cfg, path, &source)
}

/// Simulate one path drawing increments from an explicit source.
pub fn simulate_path_with_source<T: Real>(
    cfg: &SimConfig<T>,
    path: u64,
    source: &dyn BrownianSource<T>,
) -> Result<Trajectory<T>, DynamicsError> {
    let mut recorder = TrajectoryRecorder::new(cfg, path);
    run_path(cfg, source, |k, states| recorder.record(k, states))?;
    Ok(recorder.finish())
}

/// Drive one path, invoking `observe(step, states)` at every recorded step.
/// The observer sees step 0 (initial states), every stride-th step, and the
/// final step.
pub fn run_path<T: Real, F: FnMut(u64, &Matrix<T>)>(
    cfg: &SimConfig<T>,
    source: &dyn BrownianSource<T>,
    mut observe: F,
) -> Result<(), DynamicsError> {
    let n = cfg.n();
    let m = cfg.dim();
    let total = cfg.total_steps();
    let stride = cfg.sample_stride.max(1) as u64;
    let noisy = !cfg.noise.is_zero();
    let mut current = cfg.x0.clone();
    let mut next = Matrix::zeros(n, m);
    let mut increments = vec![T::zero(); n];
    let mut grad_buf = vec![T::zero(); m];
    let mut noise_buf = vec![T::zero(); m];
    observe(0, &current);
    for k in 0..total {
        if noisy {
            source.fill(k, cfg.h, &mut increments);
        }
        step_into(&current, &mut next, k, cfg, &increments, &mut grad_buf, &mut noise_buf)?;
        std::mem::swap(&mut current, &mut next);
        let done = k + 1;
        if done % stride == 0 || done == total {
            observe(done, &current);
        }
    }
    Ok(())
}

struct TrajectoryRecorder<'a, T> {
    cfg: &'a SimConfig<T>,
    times: Vec<T>,
    states: Vec<Matrix<T>>,
    path: u64,
}

impl<'a, T: Real> TrajectoryRecorder<'a, T> {
    fn new(cfg: &'a SimConfig<T>, path: u64) -> Self {
        TrajectoryRecorder { cfg, times: Vec::new(), states: Vec::new(), path }
    }

    fn record(&mut self, k: u64, states: &Matrix<T>) {
        self.times.push(self.cfg.time_at(k));
        self.states.push(states.clone());
    }

    fn finish(self) -> Trajectory<T> {
        Trajectory {
            times: self.times,
            states: self.states,
            master_seed: self.cfg.seed,
            path: self.path,
        }
    }
}
