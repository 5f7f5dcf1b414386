//! Time-varying directed communication graphs.
//!
//! A schedule is a piecewise-constant sequence of weighted digraphs, either
//! periodic or held at the last segment. The module computes Laplacians,
//! exact state transition matrices (products of per-segment matrix
//! exponentials, which equals the time-ordered solution operator for a
//! piecewise-constant generator), window-connectivity verdicts, and fitted
//! geometric decay envelopes for the off-average part of the transition
//! matrix.
//!
//! Weight convention: `weights[(i, j)] = a_ij` is the weight of the edge
//! `j -> i`, i.e. row `i` lists the in-neighbors agent `i` listens to.

use thiserror::Error;

use crate::linalg::{expm, linear_fit, LinalgError, Matrix};
use crate::scalar::{real, real_of_usize, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("schedule has no segments")]
    EmptySchedule,
    #[error("segment {index} has non-positive duration {duration}")]
    NonPositiveDuration { index: usize, duration: f64 },
    #[error("segment {index} has {got} agents, expected {expected}")]
    MismatchedAgentCount { index: usize, got: usize, expected: usize },
    #[error("invalid interval: from {from} to {to}")]
    InvalidInterval { from: f64, to: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-periodic schedule too short: window needs {needed}, schedule covers {available}")]
    NonPeriodicHorizonTooShort { needed: f64, available: f64 },
    #[error("transition matrix shows no geometric decay over the horizon (schedule may not be window-connected, or the horizon is too short)")]
    DecayNotObserved,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Weighted directed graph on `n` agents with non-negative weights and a
/// zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph<T> {
    weights: Matrix<T>,
}

impl<T: Real> WeightedDigraph<T> {
    pub fn new(weights: Matrix<T>) -> Result<Self, GraphError> {
        if !weights.is_square() {
            return Err(GraphError::InvalidWeights(format!(
                "adjacency must be square, got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        let n = weights.rows();
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < T::zero() {
                    return Err(GraphError::InvalidWeights(format!(
                        "weight ({i}, {j}) = {w} must be finite and non-negative"
                    )));
                }
            }
            if weights[(i, i)] != T::zero() {
                return Err(GraphError::InvalidWeights(format!(
                    "diagonal entry ({i}, {i}) must be exactly zero"
                )));
            }
        }
        Ok(WeightedDigraph { weights })
    }

    /// Build from a sparse edge list of `(from, to, weight)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)]) -> Result<Self, GraphError> {
        let mut w = Matrix::zeros(n, n);
        for &(from, to, weight) in edges {
            if from >= n || to >= n {
                return Err(GraphError::InvalidWeights(format!(
                    "edge ({from}, {to}) out of range for {n} agents"
                )));
            }
            w[(to, from)] = w[(to, from)] + weight;
        }
        Self::new(w)
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    /// `a_ij`: weight of the edge from `j` into `i`.
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    /// `L` with `l_ii = sum_j a_ij` and `l_ij = -a_ij` off the diagonal;
    /// every row sums to zero.
    pub fn laplacian(&self) -> Matrix<T> {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                self.weights.row(i).iter().copied().sum()
            } else {
                -self.weights[(i, j)]
            }
        })
    }

    /// True when in-weight equals out-weight at every agent, within `tol`.
    pub fn is_balanced(&self, tol: T) -> bool {
        let row = self.weights.row_sums();
        let col = self.weights.col_sums();
        row.iter().zip(&col).all(|(&r, &c)| (r - c).abs() <= tol)
    }
}

/// One piece of a schedule: a graph held for a positive duration.
#[derive(Debug, Clone)]
pub struct Segment<T> {
    pub duration: T,
    pub graph: WeightedDigraph<T>,
}

/// Piecewise-constant time-varying digraph. When `periodic`, the segment
/// sequence wraps; otherwise the last graph is held beyond the end.
#[derive(Debug, Clone)]
pub struct GraphSchedule<T> {
    segments: Vec<Segment<T>>,
    periodic: bool,
    boundaries: Vec<T>, // cumulative segment end times, last = period
}

impl<T: Real> GraphSchedule<T> {
    pub fn new(segments: Vec<Segment<T>>, periodic: bool) -> Result<Self, GraphError> {
        if segments.is_empty() {
            return Err(GraphError::EmptySchedule);
        }
        let n = segments[0].graph.n();
        let mut boundaries = Vec::with_capacity(segments.len());
        let mut acc = T::zero();
        for (index, seg) in segments.iter().enumerate() {
            if !(seg.duration > T::zero()) || !seg.duration.is_finite() {
                return Err(GraphError::NonPositiveDuration {
                    index,
                    duration: seg.duration.to_f64().unwrap_or(f64::NAN),
                });
            }
            if seg.graph.n() != n {
                return Err(GraphError::MismatchedAgentCount { index, got: seg.graph.n(), expected: n });
            }
            acc += seg.duration;
            boundaries.push(acc);
        }
        Ok(GraphSchedule { segments, periodic, boundaries })
    }

    /// Single constant graph, treated as periodic with the given period.
    pub fn constant(graph: WeightedDigraph<T>, period: T) -> Result<Self, GraphError> {
        Self::new(vec![Segment { duration: period, graph }], true)
    }

    pub fn n(&self) -> usize {
        self.segments[0].graph.n()
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Sum of segment durations (the period, when periodic).
    pub fn period(&self) -> T {
        *self.boundaries.last().unwrap()
    }

    pub fn min_segment_duration(&self) -> T {
        self.segments
            .iter()
            .map(|s| s.duration)
            .fold(T::infinity(), T::min)
    }

    /// All segments balanced within `tol`.
    pub fn is_balanced(&self, tol: T) -> bool {
        self.segments.iter().all(|s| s.graph.is_balanced(tol))
    }

    fn segment_index_at_offset(&self, offset: T) -> usize {
        // offset in [0, period); half-open segments [start, end)
        for (idx, &end) in self.boundaries.iter().enumerate() {
            if offset < end {
                return idx;
            }
        }
        self.segments.len() - 1
    }

    /// Graph active at absolute time `t >= 0`.
    pub fn graph_at(&self, t: T) -> &WeightedDigraph<T> {
        let period = self.period();
        if self.periodic {
            let wrapped = t - period * (t / period).floor();
            let off = if wrapped >= period { T::zero() } else { wrapped };
            &self.segments[self.segment_index_at_offset(off)].graph
        } else if t >= period {
            &self.segments.last().unwrap().graph
        } else {
            &self.segments[self.segment_index_at_offset(t)].graph
        }
    }

    /// Visit maximal constant pieces covering `[from, to]` in time order,
    /// as `(segment index, piece length)`.
    fn walk_pieces(&self, from: T, to: T, mut visit: impl FnMut(usize, T)) {
        if to <= from {
            return;
        }
        let period = self.period();
        let mut cur = from;
        if !self.periodic {
            // finite part, then hold the last segment
            let mut idx = if cur >= period { self.segments.len() } else { self.segment_index_at_offset(cur) };
            while cur < to && idx < self.segments.len() {
                let seg_end = self.boundaries[idx];
                let piece_end = seg_end.min(to);
                if piece_end > cur {
                    visit(idx, piece_end - cur);
                }
                cur = piece_end;
                idx += 1;
            }
            if to > cur {
                visit(self.segments.len() - 1, to - cur);
            }
            return;
        }
        // periodic: align to the offset within the period and wrap
        let base = period * (cur / period).floor();
        let mut offset = cur - base;
        if offset >= period {
            offset = T::zero();
        }
        let mut idx = self.segment_index_at_offset(offset);
        let mut abs = cur;
        let mut seg_remaining = self.boundaries[idx] - offset;
        loop {
            if abs >= to {
                return;
            }
            let piece = seg_remaining.min(to - abs);
            if piece > T::zero() {
                visit(idx, piece);
            }
            abs += piece;
            if piece >= seg_remaining {
                idx = (idx + 1) % self.segments.len();
                seg_remaining = self.segments[idx].duration;
            } else {
                return;
            }
        }
    }

    /// Exact integral of `a_ij` over `[from, to]` (piecewise-constant in time).
    pub fn weight_integral(&self, i: usize, j: usize, from: T, to: T) -> T {
        let mut acc = T::zero();
        self.walk_pieces(from, to, |idx, len| {
            acc += self.segments[idx].graph.weight(i, j) * len;
        });
        acc
    }

    /// Integral of the whole weight matrix over `[from, to]`.
    pub fn weights_integral(&self, from: T, to: T) -> Matrix<T> {
        let n = self.n();
        let mut acc = Matrix::zeros(n, n);
        self.walk_pieces(from, to, |idx, len| {
            let w = self.segments[idx].graph.weights();
            for i in 0..n {
                for j in 0..n {
                    let add = w[(i, j)] * len;
                    acc[(i, j)] += add;
                }
            }
        });
        acc
    }
}

/// Solution operator of `d chi/dt = -L(t) chi` over `[from, to]`:
/// a stochastic matrix, doubly stochastic for balanced schedules.
#[derive(Debug, Clone)]
pub struct TransitionMatrix<T> {
    pub matrix: Matrix<T>,
    pub from: T,
    pub to: T,
}

/// Compute the transition matrix over `[from, to]` as the time-ordered
/// product of per-segment matrix exponentials `exp(-L_k dt_k)`. Exact (to
/// rounding) because the generator is piecewise constant.
pub fn transition_matrix<T: Real>(
    schedule: &GraphSchedule<T>,
    from: T,
    to: T,
) -> Result<TransitionMatrix<T>, GraphError> {
    if !(from >= T::zero()) || !(to >= from) {
        return Err(GraphError::InvalidInterval {
            from: from.to_f64().unwrap_or(f64::NAN),
            to: to.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n = schedule.n();
    let mut phi = Matrix::identity(n);
    // full-duration exponentials recur constantly; cache them per segment
    let mut cache: Vec<Option<Matrix<T>>> = vec![None; schedule.segments().len()];
    let mut err: Option<GraphError> = None;
    schedule.walk_pieces(from, to, |idx, len| {
        if err.is_some() {
            return;
        }
        let seg = &schedule.segments()[idx];
        let full = len == seg.duration;
        if full {
            if cache[idx].is_none() {
                match expm(&seg.graph.laplacian().scale(-len)) {
                    Ok(e) => cache[idx] = Some(e),
                    Err(e) => {
                        err = Some(e.into());
                        return;
                    }
                }
            }
            phi = cache[idx].as_ref().unwrap() * &phi;
        } else {
            match expm(&seg.graph.laplacian().scale(-len)) {
                Ok(e) => phi = &e * &phi,
                Err(e) => err = Some(e.into()),
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(TransitionMatrix { matrix: phi, from, to })
}

/// Result of the `(delta, tc)` window-connectivity check.
#[derive(Debug, Clone)]
pub struct ConnectivityVerdict<T> {
    pub strongly_connected: bool,
    /// Edges `(from, to)` whose weight integrates to at least `delta` over
    /// every window of length `tc`.
    pub edges: Vec<(usize, usize)>,
    /// Worst-case window integral per `(to, from)` pair.
    pub min_integrals: Matrix<T>,
    /// True when the schedule is non-periodic and the verdict only covers
    /// the provided horizon.
    pub horizon_limited: bool,
}

fn is_strongly_connected(n: usize, has_edge: impl Fn(usize, usize) -> bool) -> bool {
    // reachability from node 0 and to node 0 suffices
    let bfs = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = vec![0usize];
        seen[0] = true;
        while let Some(u) = queue.pop() {
            for v in 0..n {
                let connected = if forward { has_edge(u, v) } else { has_edge(v, u) };
                if connected && !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && bfs(true) && bfs(false)
}

/// Check whether the graph formed by edges with window integral at least
/// `delta` over every window of length `tc` is strongly connected.
///
/// The window integral is piecewise linear in the window start, so its
/// minimum over starts is attained at a breakpoint; we evaluate all segment
/// boundaries, all boundaries shifted by `-tc` (wrapped), and the midpoints
/// between consecutive candidates.
pub fn check_window_connectivity<T: Real>(
    schedule: &GraphSchedule<T>,
    delta: T,
    tc: T,
) -> Result<ConnectivityVerdict<T>, GraphError> {
    if !(delta > T::zero()) {
        return Err(GraphError::InvalidParameter("delta must be positive".into()));
    }
    if !(tc > T::zero()) {
        return Err(GraphError::InvalidParameter("tc must be positive".into()));
    }
    let n = schedule.n();
    let period = schedule.period();
    let horizon_limited = !schedule.is_periodic();

    let mut starts: Vec<T> = Vec::new();
    if schedule.is_periodic() {
        for &b in &schedule.boundaries {
            let b0 = if b >= period { T::zero() } else { b };
            starts.push(b0);
            // boundary crossed by the window end
            let shifted = b - tc;
            let wrapped = shifted - period * (shifted / period).floor();
            let wrapped = if wrapped >= period || wrapped < T::zero() { T::zero() } else { wrapped };
            starts.push(wrapped);
        }
        starts.push(T::zero());
    } else {
        if period < tc {
            return Err(GraphError::NonPeriodicHorizonTooShort {
                needed: tc.to_f64().unwrap_or(f64::NAN),
                available: period.to_f64().unwrap_or(f64::NAN),
            });
        }
        let last_start = period - tc;
        starts.push(T::zero());
        starts.push(last_start);
        for &b in &schedule.boundaries {
            if b <= last_start {
                starts.push(b);
            }
            let shifted = b - tc;
            if shifted > T::zero() && shifted <= last_start {
                starts.push(shifted);
            }
        }
    }
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    starts.dedup();
    let mut with_midpoints = Vec::with_capacity(starts.len() * 2);
    for w in starts.windows(2) {
        with_midpoints.push(w[0]);
        with_midpoints.push((w[0] + w[1]) * real::<T>(0.5));
    }
    if let Some(&last) = starts.last() {
        with_midpoints.push(last);
    }

    let mut min_integrals = Matrix::from_fn(n, n, |_, _| T::infinity());
    for &start in &with_midpoints {
        let window = schedule.weights_integral(start, start + tc);
        for i in 0..n {
            for j in 0..n {
                min_integrals[(i, j)] = min_integrals[(i, j)].min(window[(i, j)]);
            }
        }
    }

    // float-robust acceptance at the threshold itself
    let accept = delta - delta * real::<T>(1e-9);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && min_integrals[(i, j)] >= accept {
                edges.push((j, i));
            }
        }
    }
    let strongly_connected =
        is_strongly_connected(n, |from, to| from != to && min_integrals[(to, from)] >= accept);
    Ok(ConnectivityVerdict { strongly_connected, edges, min_integrals, horizon_limited })
}

/// Geometric decay envelope fitted to `d(t) = max_ij |Phi(t,0)_ij - 1/n|`.
#[derive(Debug, Clone)]
pub struct DecayFit<T> {
    /// Envelope constant: `d(t) <= c * lambda^t` at every sample.
    pub c: T,
    /// Per-second decay rate in (0, 1), from a log-linear least squares fit.
    pub lambda: T,
    /// All `(t, d(t))` samples, including `t = 0`.
    pub samples: Vec<(T, T)>,
}

impl<T: Real> DecayFit<T> {
    /// Largest `d(t) / (c_factor * c * (lambda_factor * lambda)^t)` over the
    /// samples; at most one when the inflated envelope is honored.
    pub fn worst_envelope_ratio(&self, c_factor: T, lambda_factor: T) -> T {
        let lam = self.lambda * lambda_factor;
        let c = self.c * c_factor;
        self.samples
            .iter()
            .map(|&(t, d)| d / (c * lam.powf(t)))
            .fold(T::zero(), T::max)
    }
}

/// Fit `(c, lambda)` such that the off-average entries of `Phi(t, 0)` are
/// bounded by `c * lambda^t` on a uniform sample grid over `(0, horizon]`.
///
/// The rate comes from least squares on `ln d(t)`; the constant is then
/// calibrated upward so the envelope dominates every observed sample
/// (including `t = 0`), which makes the fitted pair usable as a certified
/// empirical bound rather than a mean-square trend line.
pub fn fit_decay_constants<T: Real>(
    schedule: &GraphSchedule<T>,
    horizon: T,
    grid: usize,
) -> Result<DecayFit<T>, GraphError> {
    if !(horizon > T::zero()) {
        return Err(GraphError::InvalidParameter("horizon must be positive".into()));
    }
    if grid < 8 {
        return Err(GraphError::InvalidParameter("grid must have at least 8 samples".into()));
    }
    if schedule.is_periodic() && horizon < schedule.period() * real::<T>(5.0) {
        return Err(GraphError::InvalidParameter(
            "horizon must cover at least 5 periods".into(),
        ));
    }
    let n = schedule.n();
    let inv_n = T::one() / real_of_usize::<T>(n);
    let dev = |phi: &Matrix<T>| -> T {
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((phi[(i, j)] - inv_n).abs());
            }
        }
        worst
    };

    let mut samples = Vec::with_capacity(grid + 1);
    samples.push((T::zero(), T::one() - inv_n));
    let mut phi = Matrix::identity(n);
    let mut t_prev = T::zero();
    for k in 1..=grid {
        let t = horizon * real_of_usize::<T>(k) / real_of_usize::<T>(grid);
        let step = transition_matrix(schedule, t_prev, t)?;
        phi = &step.matrix * &phi;
        samples.push((t, dev(&phi)));
        t_prev = t;
    }

    let floor = real::<T>(1e-14);
    let usable: Vec<(T, T)> = samples
        .iter()
        .copied()
        .filter(|&(t, d)| t > T::zero() && d > floor)
        .collect();
    if usable.len() < 2 {
        return Err(GraphError::DecayNotObserved);
    }
    let first = usable.first().unwrap().1;
    let last = usable.last().unwrap().1;
    if !(last < first) {
        return Err(GraphError::DecayNotObserved);
    }
    // a plateau (disconnected schedule) decays early and then stalls; demand
    // visible decay across the last quarter of the usable samples
    let q3 = usable[usable.len() * 3 / 4].1;
    if last > real::<T>(1e-12) && !(last < q3 * real::<T>(0.9)) {
        return Err(GraphError::DecayNotObserved);
    }
    let xs: Vec<T> = usable.iter().map(|&(t, _)| t).collect();
    let ys: Vec<T> = usable.iter().map(|&(_, d)| d.ln()).collect();
    let (_, slope, _) = linear_fit(&xs, &ys).ok_or(GraphError::DecayNotObserved)?;
    if !(slope < T::zero()) {
        return Err(GraphError::DecayNotObserved);
    }
    let lambda = slope.exp();
    // calibrate the constant so the envelope touches the worst sample
    let mut c = T::zero();
    for &(t, d) in &samples {
        if d > T::zero() {
            c = c.max(d / lambda.powf(t));
        }
    }
    Ok(DecayFit { c, lambda, samples })
}

/// Four circulant subgraphs on six agents: subgraph `k` (k = 1..4) has unit
/// edges `v -> v + k (mod 6)`, each held for 0.01 s. Every subgraph is
/// balanced, the union is strongly connected, and every edge accumulates
/// integral 0.01 over any window of length 0.04.
pub fn default_six_agent_schedule<T: Real>() -> GraphSchedule<T> {
    let n = 6;
    let hold = real::<T>(0.01);
    let segments = (1..=4)
        .map(|k| {
            let edges: Vec<(usize, usize, T)> =
                (0..n).map(|v| (v, (v + k) % n, T::one())).collect();
            Segment { duration: hold, graph: WeightedDigraph::from_edges(n, &edges).unwrap() }
        })
        .collect();
    GraphSchedule::new(segments, true).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_bidirectional() -> WeightedDigraph<f64> {
        WeightedDigraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    fn directed_cycle(n: usize) -> WeightedDigraph<f64> {
        let edges: Vec<(usize, usize, f64)> = (0..n).map(|v| (v, (v + 1) % n, 1.0)).collect();
        WeightedDigraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn laplacian_two_node() {
        let l = two_node_bidirectional().laplacian();
        assert_eq!(l, Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]));
    }

    #[test]
    fn laplacian_of_empty_graph_is_zero() {
        let g = WeightedDigraph::new(Matrix::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(g.laplacian(), Matrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_directed_three_cycle() {
        // edges 0->1, 1->2, 2->0 give diag (1,1,1), -1 at (1,0), (2,1), (0,2)
        let l = directed_cycle(3).laplacian();
        let expected = Matrix::from_rows(&[
            vec![1.0, 0.0, -1.0],
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
        ]);
        assert_eq!(l, expected);
        for s in l.row_sums() {
            assert!(s.abs() <= 1e-12);
        }
        // the cycle is balanced, so columns sum to zero as well
        for s in l.col_sums() {
            assert!(s.abs() <= 1e-12);
        }
    }

    #[test]
    fn balance_checks() {
        assert!(directed_cycle(3).is_balanced(1e-12));
        let single = WeightedDigraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert!(!single.is_balanced(1e-12));
        // union of two opposite directed 4-cycles
        let mut edges: Vec<(usize, usize, f64)> = (0..4).map(|v| (v, (v + 1) % 4, 1.0)).collect();
        edges.extend((0..4).map(|v| ((v + 1) % 4, v, 1.0)));
        let both = WeightedDigraph::from_edges(4, &edges).unwrap();
        assert!(both.is_balanced(1e-12));
    }

    #[test]
    fn rejects_negative_weight_and_diagonal() {
        let mut w = Matrix::<f64>::zeros(2, 2);
        w[(0, 1)] = -1.0;
        assert!(WeightedDigraph::new(w).is_err());
        let mut w = Matrix::<f64>::zeros(2, 2);
        w[(0, 0)] = 0.5;
        assert!(WeightedDigraph::new(w).is_err());
    }

    #[test]
    fn graph_at_wraps_periodically() {
        let s = default_six_agent_schedule::<f64>();
        assert_eq!(s.period(), 0.04);
        // t = 0.05 lands in the second subgraph of the second period
        let g = s.graph_at(0.05);
        assert_eq!(g.weight(2, 0), 1.0); // edge 0 -> 2 belongs to shift-2
    }

    #[test]
    fn weight_integral_piecewise_exact() {
        let s = default_six_agent_schedule::<f64>();
        // edge 0 -> 1 exists only in the first subgraph: 0.01 per period
        let i = s.weight_integral(1, 0, 0.0, 0.04);
        assert!((i - 0.01).abs() < 1e-15);
        let i2 = s.weight_integral(1, 0, 0.0, 0.12);
        assert!((i2 - 0.03).abs() < 1e-15);
        // window straddling a period boundary still accumulates 0.01
        let i3 = s.weight_integral(1, 0, 0.035, 0.075);
        assert!((i3 - 0.01).abs() < 1e-12);
    }

    #[test]
    fn transition_identity_on_empty_interval() {
        let s = GraphSchedule::constant(two_node_bidirectional(), 1.0).unwrap();
        let phi = transition_matrix(&s, 0.7, 0.7).unwrap();
        assert!(phi.matrix.max_abs_diff(&Matrix::identity(2)) == 0.0);
    }

    #[test]
    fn transition_two_node_closed_form() {
        let s = GraphSchedule::constant(two_node_bidirectional(), 0.25).unwrap();
        for &tau in &[0.1, 0.4, 1.3, 3.7] {
            let phi = transition_matrix(&s, 0.0, tau).unwrap().matrix;
            let d = (-2.0 * tau).exp();
            assert!((phi[(0, 0)] - (1.0 + d) / 2.0).abs() < 1e-12);
            assert!((phi[(0, 1)] - (1.0 - d) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_rejects_reversed_interval() {
        let s = GraphSchedule::constant(two_node_bidirectional(), 1.0).unwrap();
        assert!(matches!(
            transition_matrix(&s, 1.0, 0.5),
            Err(GraphError::InvalidInterval { .. })
        ));
    }

    #[test]
    fn transition_is_doubly_stochastic_for_balanced_schedule() {
        let s = default_six_agent_schedule::<f64>();
        let phi = transition_matrix(&s, 0.013, 1.277).unwrap().matrix;
        for r in phi.row_sums() {
            assert!((r - 1.0).abs() < 1e-10);
        }
        for c in phi.col_sums() {
            assert!((c - 1.0).abs() < 1e-10);
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!(phi[(i, j)] >= -1e-12);
            }
        }
    }

    #[test]
    fn transition_semigroup_property() {
        let s = default_six_agent_schedule::<f64>();
        // pseudo-random triples from a fixed seed
        let key = crate::rng::PathKey::new(99, 0);
        for k in 0..25u64 {
            let mut vals = [0.0f64; 3];
            for (i, v) in vals.iter_mut().enumerate() {
                *v = (key.standard_normal(k, i as u64).abs() % 2.0) + 0.01;
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (s0, u, t) = (vals[0], vals[1], vals[2]);
            let full = transition_matrix(&s, s0, t).unwrap().matrix;
            let right = transition_matrix(&s, s0, u).unwrap().matrix;
            let left = transition_matrix(&s, u, t).unwrap().matrix;
            assert!(full.max_abs_diff(&(&left * &right)) < 1e-8);
        }
    }

    #[test]
    fn window_connectivity_static_graph() {
        let s = GraphSchedule::constant(directed_cycle(3), 0.5).unwrap();
        // min positive weight * tc = 1.0 * 0.3
        let v = check_window_connectivity(&s, 0.3, 0.3).unwrap();
        assert!(v.strongly_connected);
        assert_eq!(v.edges.len(), 3);
    }

    #[test]
    fn window_connectivity_switching_schedule() {
        let s = default_six_agent_schedule::<f64>();
        let v = check_window_connectivity(&s, 0.01, 0.04).unwrap();
        assert!(v.strongly_connected);
        assert_eq!(v.edges.len(), 24); // 6 edges per subgraph, 4 subgraphs
        assert!(!v.horizon_limited);
    }

    #[test]
    fn window_connectivity_isolated_agent() {
        // agent 2 never has an in-edge
        let g = WeightedDigraph::from_edges(3, &[(0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0)]).unwrap();
        let s = GraphSchedule::constant(g, 1.0).unwrap();
        let v = check_window_connectivity(&s, 0.1, 0.5).unwrap();
        assert!(!v.strongly_connected);
    }

    #[test]
    fn window_connectivity_non_periodic_too_short() {
        let g = directed_cycle(3);
        let s = GraphSchedule::new(vec![Segment { duration: 0.2, graph: g }], false).unwrap();
        assert!(matches!(
            check_window_connectivity(&s, 0.1, 0.5),
            Err(GraphError::NonPeriodicHorizonTooShort { .. })
        ));
    }

    #[test]
    fn window_connectivity_non_periodic_reports_limited_verdict() {
        let g = directed_cycle(3);
        let s = GraphSchedule::new(vec![Segment { duration: 2.0, graph: g }], false).unwrap();
        let v = check_window_connectivity(&s, 0.1, 0.5).unwrap();
        assert!(v.strongly_connected);
        assert!(v.horizon_limited);
    }

    #[test]
    fn decay_fit_two_node_matches_closed_form() {
        // d(t) = e^{-2t} / 2 exactly, so lambda = e^{-2}
        let s = GraphSchedule::constant(two_node_bidirectional(), 1.0).unwrap();
        let fit = fit_decay_constants(&s, 8.0, 32).unwrap();
        let expected = (-2.0f64).exp();
        assert!((fit.lambda - expected).abs() / expected < 0.02, "lambda = {}", fit.lambda);
        assert!(fit.worst_envelope_ratio(1.0, 1.0) <= 1.0 + 1e-12);
    }

    #[test]
    fn decay_fit_complete_three_node() {
        // complete graph Laplacian has eigenvalue n; lambda = e^{-3}
        let g = WeightedDigraph::from_edges(
            3,
            &[(0, 1, 1.0), (1, 0, 1.0), (0, 2, 1.0), (2, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let s = GraphSchedule::constant(g, 1.0).unwrap();
        let fit = fit_decay_constants(&s, 8.0, 32).unwrap();
        let expected = (-3.0f64).exp();
        assert!((fit.lambda - expected).abs() / expected < 0.02, "lambda = {}", fit.lambda);
    }

    #[test]
    fn decay_fit_disconnected_fails() {
        // two isolated bidirectional pairs: consensus never happens
        let g = WeightedDigraph::from_edges(4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)])
            .unwrap();
        let s = GraphSchedule::constant(g, 1.0).unwrap();
        assert!(matches!(
            fit_decay_constants(&s, 8.0, 32),
            Err(GraphError::DecayNotObserved)
        ));
    }

    #[test]
    fn default_schedule_envelope_certifies() {
        let s = default_six_agent_schedule::<f64>();
        let fit = fit_decay_constants(&s, 24.0, 50).unwrap();
        assert!(fit.lambda > 0.0 && fit.lambda < 1.0);
        // inflated envelope from the certified bound must hold at all samples
        assert!(fit.worst_envelope_ratio(1.05, 1.01) <= 1.0);
    }

    #[test]
    fn default_schedule_segments_are_balanced() {
        let s = default_six_agent_schedule::<f64>();
        assert!(s.is_balanced(1e-12));
    }
}
