//! Cross-module properties: transition-matrix invariants on randomized
//! schedules, zero-noise equivalence, and strong convergence on a fixed
//! Brownian path replayed at several resolutions.

use proptest::prelude::*;
use sgflow::dynamics::{
    simulate_path, simulate_path_with_source, BrownianSource, Intensity, NoiseModel, SimConfig,
    StepSchedule,
};
use sgflow::graph::{
    default_six_agent_schedule, transition_matrix, GraphSchedule, Segment, WeightedDigraph,
};
use sgflow::linalg::Matrix;
use sgflow::objective::default_six_agent_objectives;
use sgflow::rng::PathKey;

fn demo_x0() -> Matrix<f64> {
    Matrix::from_rows(&[
        vec![0.3, 2.0],
        vec![0.5, 1.3],
        vec![0.7, 2.7],
        vec![0.9, 1.0],
        vec![1.1, 3.0],
        vec![1.3, 1.6],
    ])
}

fn demo_config(noise: NoiseModel<f64>, h: f64, horizon: f64, stride: usize) -> SimConfig<f64> {
    SimConfig::new(
        default_six_agent_schedule::<f64>(),
        default_six_agent_objectives::<f64>(),
        StepSchedule::new(2.0, 1.0).unwrap(),
        noise,
        h,
        horizon,
        demo_x0(),
        42,
        stride,
    )
    .unwrap()
}

/// Random small weighted digraph schedule derived from a seed.
fn random_schedule(seed: u64, n: usize, segments: usize) -> GraphSchedule<f64> {
    let key = PathKey::new(seed, 0);
    let segs = (0..segments)
        .map(|s| {
            let mut w = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let u = key.standard_normal((s * n * n + i * n + j) as u64, 0);
                        if u > 0.0 {
                            w[(i, j)] = u.min(2.0);
                        }
                    }
                }
            }
            Segment { duration: 0.25, graph: WeightedDigraph::new(w).unwrap() }
        })
        .collect();
    GraphSchedule::new(segs, true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn transition_matrices_are_stochastic(seed in any::<u64>(), n in 2usize..5, segs in 1usize..4) {
        let schedule = random_schedule(seed, n, segs);
        let key = PathKey::new(seed, 1);
        let mut pts = [
            key.standard_normal(0, 0).abs() % 3.0,
            key.standard_normal(1, 0).abs() % 3.0,
            key.standard_normal(2, 0).abs() % 3.0,
        ];
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let [s, u, t] = pts;
        let phi = transition_matrix(&schedule, s, t).unwrap().matrix;
        for r in phi.row_sums() {
            prop_assert!((r - 1.0).abs() < 1e-10, "row sum {r}");
        }
        for i in 0..n {
            for j in 0..n {
                prop_assert!(phi[(i, j)] >= -1e-12, "negative entry {}", phi[(i, j)]);
            }
        }
        // semigroup composition through the midpoint
        let left = transition_matrix(&schedule, u, t).unwrap().matrix;
        let right = transition_matrix(&schedule, s, u).unwrap().matrix;
        prop_assert!(phi.max_abs_diff(&(&left * &right)) < 1e-8);
    }
}

#[test]
fn zero_scale_noise_equals_zero_noise_bitwise() {
    let a = demo_config(NoiseModel::new(Intensity::SinCos, 0.0), 1e-3, 1.0, 10);
    let b = demo_config(NoiseModel::zero(), 1e-3, 1.0, 10);
    let ta = simulate_path(&a, 0).unwrap();
    let tb = simulate_path(&b, 0).unwrap();
    for (sa, sb) in ta.states.iter().zip(&tb.states) {
        assert_eq!(sa, sb);
    }
}

/// Replays increments produced on a fine grid, pre-aggregated to this
/// resolution.
struct TableBrownian {
    increments: Vec<Vec<f64>>,
}

impl BrownianSource<f64> for TableBrownian {
    fn fill(&self, step: u64, _h: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.increments[step as usize]);
    }
}

fn aggregate(fine: &[Vec<f64>], factor: usize) -> Vec<Vec<f64>> {
    fine.chunks(factor)
        .map(|chunk| {
            let n = chunk[0].len();
            (0..n).map(|i| chunk.iter().map(|row| row[i]).sum()).collect()
        })
        .collect()
}

#[test]
fn strong_convergence_on_fixed_brownian_path() {
    // one Brownian path generated at h/16 drives runs at h, h/2, and h/16;
    // the noise enters additively, so halving the step roughly halves the
    // pathwise error
    let h = 1e-3;
    let horizon = 2.0;
    let fine_factor = 16;
    let fine_h = h / fine_factor as f64;
    let fine_steps = (horizon / fine_h).round() as usize;
    let key = PathKey::new(1234, 0);
    let fine: Vec<Vec<f64>> = (0..fine_steps)
        .map(|k| {
            (0..6)
                .map(|agent| fine_h.sqrt() * key.standard_normal(k as u64, agent as u64))
                .collect()
        })
        .collect();
    let noise = NoiseModel::new(Intensity::SinCos, 1.0);
    let run = |step: f64, stride: usize, factor: usize| {
        let cfg = demo_config(noise.clone(), step, horizon, stride);
        let table = TableBrownian { increments: aggregate(&fine, factor) };
        simulate_path_with_source(&cfg, 0, &table).unwrap()
    };
    let coarse = run(h, 50, 16);
    let half = run(h / 2.0, 100, 8);
    let fine_run = run(fine_h, 800, 1);
    assert_eq!(coarse.times.len(), fine_run.times.len());
    let max_diff = |a: &sgflow::TrajectoryF64, b: &sgflow::TrajectoryF64| {
        a.states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| x.max_abs_diff(y))
            .fold(0.0f64, f64::max)
    };
    let err_c = max_diff(&coarse, &fine_run);
    let err_h = max_diff(&half, &fine_run);
    assert!(err_c < 0.05, "coarse error too large: {err_c}");
    let ratio = err_c / err_h;
    assert!(
        (1.3..=2.7).contains(&ratio),
        "step-halving ratio {ratio} outside the first-order band (errors {err_c:.3e}, {err_h:.3e})"
    );
}

#[test]
fn consensus_contraction_tracks_fitted_decay() {
    // zero gradient, zero noise: the max deviation from the average decays
    // at least as fast as the fitted envelope predicts
    let schedule = default_six_agent_schedule::<f64>();
    let fit = sgflow::graph::fit_decay_constants(&schedule, 24.0, 50).unwrap();
    let zeros = Matrix::<f64>::zeros(2, 2);
    let objs = (0..6)
        .map(|_| sgflow::objective::QuadraticObjective::new(zeros.clone(), vec![0.0, 0.0], 0.0).unwrap())
        .collect();
    let cfg = SimConfig::new(
        schedule,
        sgflow::objective::ObjectiveSet::from_quadratics(objs).unwrap(),
        StepSchedule::new(1.0, 1.0).unwrap(),
        NoiseModel::zero(),
        1e-3,
        8.0,
        demo_x0(),
        0,
        100,
    )
    .unwrap();
    let traj = simulate_path(&cfg, 0).unwrap();
    let avg0 = sgflow::dynamics::average_state(&cfg.x0);
    let x0_norm = cfg.x0.frobenius_norm();
    for (t, states) in traj.times.iter().zip(&traj.states) {
        let mut worst = 0.0f64;
        for i in 0..6 {
            let d: Vec<f64> = states.row(i).iter().zip(&avg0).map(|(a, b)| a - b).collect();
            worst = worst.max(sgflow::objective::norm(&d));
        }
        // sqrt(n) * C * lambda^t * ||x(0)|| dominates the deviation
        let bound = 6.0f64.sqrt() * fit.c * fit.lambda.powf(*t) * x0_norm;
        assert!(worst <= bound * 1.01 + 1e-9, "t = {t}: {worst} > {bound}");
    }
}
