//! Numerical certification of the method's quantitative claims: integral
//! envelopes with explicit constants, consensus-error expectation bounds,
//! and convergence-rate regime fits on ensemble output.

use thiserror::Error;

use crate::dynamics::{SimConfig, StepSchedule};
use crate::ensemble::EnsembleStats;
use crate::linalg::{linear_fit, quadratic_fit};
use crate::objective::SmoothnessCertificate;
use crate::quadrature::{integrate, QuadError};
use crate::scalar::{real, real_of_usize, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("step exponent {0} outside the supported range (1/2, 1]")]
    OutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no usable points in the fit window")]
    EmptyWindow,
    #[error("gap is non-positive throughout the fit window; regression undefined")]
    NonPositiveGap,
    #[error("missing smoothness certificate (gradient bound unavailable)")]
    MissingCertificate,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// One evaluation point of a bound check. `slack` is the allowance added to
/// the bound (zero for analytic bounds, two standard errors for Monte Carlo
/// measurements).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow<T> {
    pub point: T,
    pub measured: T,
    pub bound: T,
    pub slack: T,
}

impl<T: Real> BoundRow<T> {
    pub fn violation(&self) -> T {
        self.measured - self.bound - self.slack
    }
}

/// Verdict of a bound check over a grid: pass iff no row exceeds its bound
/// plus slack.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub claim: String,
    pub rows: Vec<BoundRow<T>>,
    /// Points skipped because the integrand overflowed the float range.
    pub skipped: Vec<T>,
    pub max_violation: T,
    pub pass: bool,
}

impl<T: Real> BoundReport<T> {
    pub fn from_rows(claim: impl Into<String>, rows: Vec<BoundRow<T>>, skipped: Vec<T>) -> Self {
        let max_violation = rows
            .iter()
            .map(BoundRow::violation)
            .fold(T::neg_infinity(), T::max);
        let pass = !rows.is_empty() && max_violation <= T::zero();
        BoundReport { claim: claim.into(), rows, skipped, max_violation, pass }
    }

    /// CSV export: `claim,point,measured,bound,violation`.
    pub fn write_csv_rows<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.claim,
                row.point,
                row.measured,
                row.bound,
                row.violation()
            )?;
        }
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} (max violation {:e}, {} points{})",
            self.claim,
            if self.pass { "PASS" } else { "FAIL" },
            self.max_violation.to_f64().unwrap_or(f64::NAN),
            self.rows.len(),
            if self.skipped.is_empty() {
                String::new()
            } else {
                format!(", {} skipped", self.skipped.len())
            }
        )
    }
}

/// Write the standard bound-report CSV header.
pub fn write_bound_csv_header<W: std::io::Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "claim,point,measured,bound,violation")
}

/// Check the integral envelope
/// `int_0^t lambda^{-s} / (s+1)^a ds <= d1 lambda^{-t}/(t+1)^a + d2/(t+1)^a + d3`
/// on a grid of `t` values, with the envelope constants
/// `d1 = (t0+1)/(ln(1/lambda)(t0+1) - a)`, `d2 = lambda^{-t0} t0 (t0+1)^a`,
/// `d3 = a lambda^{-t0} t0 (t0+1) / (ln(1/lambda)(t0+1) - a)` and
/// `t0 = max(a/ln(1/lambda) - 1, 0) + 1`.
///
/// The left side is evaluated by adaptive quadrature at relative tolerance
/// 1e-8; grid points where `lambda^{-t}` overflows are skipped and listed.
pub fn exp_power_integral_bound<T: Real>(
    a: T,
    lambda: T,
    t_grid: &[T],
) -> Result<BoundReport<T>, AnalysisError> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!("a must be positive, got {a}")));
    }
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(AnalysisError::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    let ln_inv = -lambda.ln();
    let t0 = (a / ln_inv - T::one()).max(T::zero()) + T::one();
    let denom = ln_inv * (t0 + T::one()) - a;
    let d1 = (t0 + T::one()) / denom;
    let lam_pow_t0 = (t0 * ln_inv).exp();
    let d2 = lam_pow_t0 * t0 * (t0 + T::one()).powf(a);
    let d3 = a * lam_pow_t0 * t0 * (t0 + T::one()) / denom;

    let ln_max = real::<T>(f64::MAX.ln() * 0.98);
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut skipped = Vec::new();
    for &t in t_grid {
        if !(t > T::zero()) || !t.is_finite() {
            return Err(AnalysisError::InvalidParameter(format!(
                "grid points must be positive and finite, got {t}"
            )));
        }
        if t * ln_inv > ln_max {
            skipped.push(t);
            continue;
        }
        // integrand in log space: exp(s ln(1/lambda) - a ln(s+1))
        let lhs = match integrate(
            |s: T| (s * ln_inv - a * (s + T::one()).ln()).exp(),
            T::zero(),
            t,
            real(1e-8),
            real(1e-300),
        ) {
            Ok(q) => q.value,
            Err(QuadError::NonFinite { .. }) => {
                skipped.push(t);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let growth = (t * ln_inv).exp();
        let rhs = d1 * growth / (t + T::one()).powf(a) + d2 / (t + T::one()).powf(a) + d3;
        rows.push(BoundRow { point: t, measured: lhs, bound: rhs, slack: T::zero() });
    }
    Ok(BoundReport::from_rows(
        format!("integral-envelope a={a} lambda={lambda}"),
        rows,
        skipped,
    ))
}

/// Check the consensus-error expectation bound
/// `E||x_i(t) - xbar(t)|| <= th1 lambda^t + th2 I1(t) + th3 sqrt(I2(t))`
/// with `I1 = int_0^t lambda^{t-s} eta(s) ds`,
/// `I2 = int_0^t lambda^{2(t-s)} eta(s)^2 ds`,
/// `th1 = sqrt(nm) C ||x(0)||`, `th2 = sqrt(m) n^{3/2} C M`,
/// `th3 = sqrt(m) n^{3/2} C K`, against the measured ensemble means at every
/// sample time and agent, with two standard errors of slack.
pub fn consensus_error_bound_check<T: Real>(
    stats: &EnsembleStats<T>,
    c_const: T,
    lambda: T,
    cfg: &SimConfig<T>,
    cert: Option<&SmoothnessCertificate<T>>,
) -> Result<BoundReport<T>, AnalysisError> {
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(AnalysisError::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    let cert = cert.ok_or(AnalysisError::MissingCertificate)?;
    let n = cfg.n();
    let m = cfg.dim();
    let nf = real_of_usize::<T>(n);
    let mf = real_of_usize::<T>(m);
    let x0_norm = cfg.x0.frobenius_norm();
    let grad_bound = cert.grad_bound;
    let noise_bound = cfg.noise.bound();
    let th1 = (nf * mf).sqrt() * c_const * x0_norm;
    let th2 = mf.sqrt() * nf.powf(real(1.5)) * c_const * grad_bound;
    let th3 = mf.sqrt() * nf.powf(real(1.5)) * c_const * noise_bound;
    let ln_lam = lambda.ln();
    let step = cfg.step;

    let mut rows = Vec::with_capacity(stats.times.len() * n);
    for (ti, &t) in stats.times.iter().enumerate() {
        let (i1, i2) = if t > T::zero() {
            let i1 = integrate(
                |s: T| ((t - s) * ln_lam).exp() * step.eta(s),
                T::zero(),
                t,
                real(1e-8),
                real(1e-300),
            )?
            .value;
            let i2 = integrate(
                |s: T| (real::<T>(2.0) * (t - s) * ln_lam).exp() * step.eta(s).powi(2),
                T::zero(),
                t,
                real(1e-8),
                real(1e-300),
            )?
            .value;
            (i1, i2)
        } else {
            (T::zero(), T::zero())
        };
        let bound = th1 * (t * ln_lam).exp() + th2 * i1 + th3 * i2.max(T::zero()).sqrt();
        for agent in 0..n {
            rows.push(BoundRow {
                point: t,
                measured: stats.mean_consensus_err[ti][agent],
                bound,
                slack: real::<T>(2.0) * stats.se_consensus_err[ti][agent],
            });
        }
    }
    Ok(BoundReport::from_rows("consensus-error-bound", rows, Vec::new()))
}

/// Predicted decay regime of the expected optimality gap as a function of
/// the step exponent `a` in (1/2, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateModel<T> {
    /// `t^{-p}`.
    Power { exponent: T },
    /// `sqrt(ln t) / t^{1/4}` (the boundary case a = 3/4).
    LogPower,
    /// `1 / ln t` (the case a = 1).
    InverseLog,
}

impl<T: Real> RateModel<T> {
    /// Polynomial decay exponent of the regime (zero for the inverse-log
    /// regime, 1/4 for the log-power regime).
    pub fn exponent(&self) -> T {
        match self {
            RateModel::Power { exponent } => *exponent,
            RateModel::LogPower => real(0.25),
            RateModel::InverseLog => T::zero(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RateModel::Power { exponent } => format!("t^-{exponent}"),
            RateModel::LogPower => "sqrt(ln t)/t^0.25".to_string(),
            RateModel::InverseLog => "1/ln t".to_string(),
        }
    }
}

/// The rate regime table: `a - 1/2` for `1/2 < a < 3/4`, the log-power
/// regime at `a = 3/4`, `1 - a` for `3/4 < a < 1`, and inverse-log at
/// `a = 1`.
pub fn rate_regime<T: Real>(a: T) -> Result<RateModel<T>, AnalysisError> {
    let half = real::<T>(0.5);
    let three_quarters = real::<T>(0.75);
    if !(a > half && a <= T::one()) {
        return Err(AnalysisError::OutOfRange(a.to_f64().unwrap_or(f64::NAN)));
    }
    if a == T::one() {
        Ok(RateModel::InverseLog)
    } else if a == three_quarters {
        Ok(RateModel::LogPower)
    } else if a < three_quarters {
        Ok(RateModel::Power { exponent: a - half })
    } else {
        Ok(RateModel::Power { exponent: T::one() - a })
    }
}

/// Closed-form `int_0^t eta(s) ds` for a step schedule.
pub fn integrated_step_size<T: Real>(step: &StepSchedule<T>, t: T) -> T {
    step.integrated(t)
}

/// Power-law fit of a decaying series on a window, reported against the
/// predicted regime. The predicted rates are upper bounds, so callers
/// compare "at least as fast as" rather than asserting equality.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit<T> {
    /// `p` from the least-squares fit `ln gap = ln c - p ln t`.
    pub fitted_exponent: T,
    pub predicted: RateModel<T>,
    pub window: (T, T),
    pub residual_rms: T,
    /// Second-order coefficient of the log-log residual; large magnitude
    /// means the series is not a pure power law over the window.
    pub curvature: T,
    pub curvature_flagged: bool,
    /// True when non-positive gap values had to be dropped from the window.
    pub window_shrunk: bool,
    pub points: usize,
}

const CURVATURE_FLAG_THRESHOLD: f64 = 0.002;

/// Fit `ln gap` against `ln t` on `[window.0, window.1]` for one series.
pub fn fit_rate_series<T: Real>(
    times: &[T],
    gaps: &[T],
    a: T,
    window: (T, T),
) -> Result<RateFit<T>, AnalysisError> {
    let predicted = rate_regime(a)?;
    if times.len() != gaps.len() {
        return Err(AnalysisError::InvalidParameter(
            "times and gaps must have equal length".into(),
        ));
    }
    let in_window: Vec<(T, T)> = times
        .iter()
        .zip(gaps)
        .filter(|&(&t, _)| t >= window.0 && t <= window.1 && t > T::zero())
        .map(|(&t, &g)| (t, g))
        .collect();
    if in_window.is_empty() {
        return Err(AnalysisError::EmptyWindow);
    }
    let usable: Vec<(T, T)> = in_window.iter().copied().filter(|&(_, g)| g > T::zero()).collect();
    let window_shrunk = usable.len() < in_window.len();
    if usable.len() < 3 {
        return Err(AnalysisError::NonPositiveGap);
    }
    let xs: Vec<T> = usable.iter().map(|&(t, _)| t.ln()).collect();
    let ys: Vec<T> = usable.iter().map(|&(_, g)| g.ln()).collect();
    let (_, slope, residual_rms) = linear_fit(&xs, &ys).ok_or(AnalysisError::EmptyWindow)?;
    let curvature = quadratic_fit(&xs, &ys).map(|(_, _, c2)| c2).unwrap_or(T::zero());
    Ok(RateFit {
        fitted_exponent: -slope,
        predicted,
        window,
        residual_rms,
        curvature,
        curvature_flagged: curvature.abs() > real(CURVATURE_FLAG_THRESHOLD),
        window_shrunk,
        points: usable.len(),
    })
}

/// Fit the across-agent mean optimality gap of an ensemble.
pub fn fit_rate<T: Real>(
    stats: &EnsembleStats<T>,
    a: T,
    window: (T, T),
) -> Result<RateFit<T>, AnalysisError> {
    let n = stats.n_agents();
    let nf = real_of_usize::<T>(n);
    let gaps: Vec<T> = stats
        .mean_gap
        .iter()
        .map(|per_agent| per_agent.iter().copied().sum::<T>() / nf)
        .collect();
    fit_rate_series(&stats.times, &gaps, a, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_default;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn integral_envelope_basic_grid() {
        let r = exp_power_integral_bound(1.0, 0.5, &[1.0, 5.0, 10.0, 20.0]).unwrap();
        assert!(r.pass, "{}", r.summary_line());
        assert!(r.skipped.is_empty());
        // left sides are genuinely positive and below the bound
        for row in &r.rows {
            assert!(row.measured > 0.0);
            assert!(row.measured <= row.bound);
        }
    }

    #[test]
    fn integral_envelope_small_t_dominated_by_constants() {
        let r = exp_power_integral_bound(1.0, 0.5, &[1e-9]).unwrap();
        assert!(r.pass);
        let row = &r.rows[0];
        assert!(row.measured < 1e-8);
        assert!(row.bound > 0.0);
    }

    #[test]
    fn integral_envelope_log_spaced_grid() {
        let grid: Vec<f64> = (0..50)
            .map(|i| 0.1 * (50.0f64 / 0.1).powf(i as f64 / 49.0))
            .collect();
        let r = exp_power_integral_bound(0.6, 0.9, &grid).unwrap();
        assert!(r.pass, "{}", r.summary_line());
    }

    #[test]
    fn integral_envelope_skips_overflowing_points() {
        // lambda = 0.3: lambda^{-t} overflows past t ~ 589
        let r = exp_power_integral_bound(1.0, 0.3, &[10.0, 1000.0]).unwrap();
        assert_eq!(r.skipped, vec![1000.0]);
        assert_eq!(r.rows.len(), 1);
        assert!(r.pass);
    }

    #[test]
    fn integral_envelope_full_parameter_grid() {
        // the full parameter grid; t capped just below the overflow limit
        for &a in &[0.6, 1.0, 2.0] {
            for &lam in &[0.3f64, 0.5, 0.9] {
                let t_max: f64 = (f64::MAX.ln() * 0.9) / -lam.ln();
                let grid: Vec<f64> = (0..40)
                    .map(|i| 0.1 * (t_max / 0.1).powf(i as f64 / 39.0))
                    .collect();
                let r = exp_power_integral_bound(a, lam, &grid).unwrap();
                assert!(r.pass, "a={a} lambda={lam}: {}", r.summary_line());
                assert!(r.skipped.is_empty());
            }
        }
    }

    #[test]
    fn integral_envelope_rejects_bad_parameters() {
        assert!(exp_power_integral_bound(0.0, 0.5, &[1.0]).is_err());
        assert!(exp_power_integral_bound(1.0, 1.5, &[1.0]).is_err());
        assert!(exp_power_integral_bound(1.0, 0.5, &[-1.0]).is_err());
    }

    #[test]
    fn regime_table_cases() {
        match rate_regime(0.6f64).unwrap() {
            RateModel::Power { exponent } => approx(exponent, 0.1, 1e-15),
            other => panic!("unexpected regime {other:?}"),
        }
        assert_eq!(rate_regime(0.75f64).unwrap(), RateModel::LogPower);
        match rate_regime(0.9f64).unwrap() {
            RateModel::Power { exponent } => approx(exponent, 0.1, 1e-15),
            other => panic!("unexpected regime {other:?}"),
        }
        assert_eq!(rate_regime(1.0f64).unwrap(), RateModel::InverseLog);
        assert!(matches!(rate_regime(0.5f64), Err(AnalysisError::OutOfRange(_))));
        assert!(matches!(rate_regime(1.01f64), Err(AnalysisError::OutOfRange(_))));
    }

    #[test]
    fn regime_exponents_agree_at_the_boundary() {
        // the two power regimes meet the log-power exponent at a = 3/4
        let eps = 1e-9;
        let below = rate_regime(0.75f64 - eps).unwrap().exponent();
        let above = rate_regime(0.75f64 + eps).unwrap().exponent();
        let at = rate_regime(0.75f64).unwrap().exponent();
        approx(below, 0.25, 1e-8);
        approx(above, 0.25, 1e-8);
        approx(at, 0.25, 0.0);
    }

    #[test]
    fn integrated_step_matches_quadrature() {
        for &(beta, a) in &[(2.0, 1.0), (1.0, 0.75), (0.5, 0.6), (3.0, 0.95)] {
            let s = StepSchedule::new(beta, a).unwrap();
            for &t in &[0.5, 3.0, 17.0] {
                let closed = integrated_step_size(&s, t);
                let quad = integrate(|u: f64| s.eta(u), 0.0, t, 1e-12, 0.0).unwrap().value;
                assert!(
                    (closed - quad).abs() / closed.abs().max(1e-12) < 1e-10,
                    "beta={beta} a={a} t={t}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let times: Vec<f64> = (1..200).map(|i| i as f64 * 0.5).collect();
        let gaps: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(-0.4)).collect();
        let fit = fit_rate_series(&times, &gaps, 0.9, (1.0, 100.0)).unwrap();
        approx(fit.fitted_exponent, 0.4, 1e-6);
        assert!(!fit.curvature_flagged, "curvature {}", fit.curvature);
        assert!(!fit.window_shrunk);
    }

    #[test]
    fn fit_flags_log_power_curvature() {
        // sqrt(ln t)/t^{1/4} is not a pure power law: the power fit lands in
        // the vicinity of 0.25 (dragged below it by the sqrt(ln t) factor)
        // and the quadratic residual term is flagged
        let times: Vec<f64> = (0..400).map(|i| 10.0 + (1e4 - 10.0) * i as f64 / 399.0).collect();
        let gaps: Vec<f64> = times.iter().map(|t| t.ln().sqrt() / t.powf(0.25)).collect();
        let fit = fit_rate_series(&times, &gaps, 0.75, (10.0, 1e4)).unwrap();
        assert!(
            fit.fitted_exponent > 0.15 && fit.fitted_exponent < 0.3,
            "p = {}",
            fit.fitted_exponent
        );
        assert!(fit.curvature_flagged, "curvature {}", fit.curvature);
    }

    #[test]
    fn fit_shrinks_window_on_non_positive_gaps() {
        let times: Vec<f64> = (1..100).map(|i| i as f64).collect();
        let mut gaps: Vec<f64> = times.iter().map(|t| t.powf(-0.3)).collect();
        gaps[10] = 0.0;
        gaps[20] = -1e-9;
        let fit = fit_rate_series(&times, &gaps, 0.8, (1.0, 99.0)).unwrap();
        assert!(fit.window_shrunk);
        approx(fit.fitted_exponent, 0.3, 1e-3);
        // all non-positive: unrecoverable
        let zeros = vec![0.0; times.len()];
        assert!(matches!(
            fit_rate_series(&times, &zeros, 0.8, (1.0, 99.0)),
            Err(AnalysisError::NonPositiveGap)
        ));
    }

    #[test]
    fn consensus_bound_reduces_to_decay_term_without_noise_or_gradients() {
        // zero objectives and zero noise make M = K = 0, so the bound is
        // th1 * lambda^t alone and the measured deviation must sit below it
        use crate::dynamics::{NoiseModel, SimConfig};
        use crate::ensemble::run_ensemble;
        use crate::graph::{default_six_agent_schedule, fit_decay_constants};
        use crate::linalg::Matrix;
        use crate::objective::{ObjectiveSet, QuadraticObjective, Region};

        let schedule = default_six_agent_schedule::<f64>();
        let fit = fit_decay_constants(&schedule, 24.0, 50).unwrap();
        let zeros = Matrix::<f64>::zeros(2, 2);
        let objs = (0..6)
            .map(|_| QuadraticObjective::new(zeros.clone(), vec![0.0, 0.0], 0.0).unwrap())
            .collect();
        let x0 = Matrix::from_fn(6, 2, |i, j| 0.3 + 0.2 * (i as f64) - 0.5 * (j as f64));
        let cfg = SimConfig::new(
            schedule,
            ObjectiveSet::from_quadratics(objs).unwrap(),
            StepSchedule::new(1.0, 1.0).unwrap(),
            NoiseModel::zero(),
            1e-3,
            8.0,
            x0,
            0,
            200,
        )
        .unwrap();
        let stats = run_ensemble(&cfg, 2, 1).unwrap();
        let region = Region::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let cert = cfg.objectives.certify_constants(&region, 100).unwrap();
        assert_eq!(cert.grad_bound, 0.0);
        assert_eq!(cfg.noise.bound(), 0.0);
        let rep = consensus_error_bound_check(&stats, fit.c, fit.lambda, &cfg, Some(&cert)).unwrap();
        assert!(rep.pass, "{}", rep.summary_line());
        // without a certificate the check has no gradient bound to use
        assert!(matches!(
            consensus_error_bound_check(&stats, fit.c, fit.lambda, &cfg, None),
            Err(AnalysisError::MissingCertificate)
        ));
    }

    #[test]
    fn quadrature_default_tolerance_is_tight() {
        // the eta integrand used by the consensus bound must integrate to
        // full default accuracy
        let s = StepSchedule::new(2.0, 1.0).unwrap();
        let q = integrate_default(|u: f64| s.eta(u), 0.0, 30.0).unwrap();
        approx(q.value, 2.0 * 31.0f64.ln(), 1e-7);
    }
}
