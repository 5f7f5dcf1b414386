//! Local objective functions, their gradients and Hessians, the global
//! minimizer of the sum, and region-scoped smoothness certificates.
//!
//! Quadratics are bounded-gradient only on bounded sets, so the gradient
//! bound and Lipschitz constant are certified over an explicit region; the
//! simulation side records observed state bounds so a run can be checked
//! against the certified region after the fact.

use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::linalg::{solve, sym_least_norm_solve, sym_min_eigenvalue, sym_spectral_norm, LinalgError, Matrix};
use crate::scalar::{real, real_of_usize, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric within {tol:e}")]
    NotSymmetric { tol: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotConvex { min_eig: f64 },
    #[error("objective set is empty")]
    EmptySet,
    #[error("region is unbounded or empty")]
    UnboundedRegion,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Newton iteration for the minimizer did not converge")]
    MinimizerNotConverged,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Evaluator interface for a twice continuously differentiable convex
/// objective. Implementations must be pure and thread-safe.
pub trait ObjectiveFn<T>: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    fn grad(&self, x: &[T]) -> Vec<T>;
    fn hessian(&self, x: &[T]) -> Matrix<T>;
}

/// `f(x) = x' P x / 2 + q' x + c` with symmetric positive semidefinite `P`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective<T> {
    p: Matrix<T>,
    q: Vec<T>,
    c: T,
}

impl<T: Real> QuadraticObjective<T> {
    pub fn new(p: Matrix<T>, q: Vec<T>, c: T) -> Result<Self, ObjectiveError> {
        if !p.is_square() || p.rows() != q.len() {
            return Err(ObjectiveError::DimensionMismatch { expected: p.rows(), got: q.len() });
        }
        if !p.is_symmetric(real(1e-12)) {
            return Err(ObjectiveError::NotSymmetric { tol: 1e-12 });
        }
        let min_eig = sym_min_eigenvalue(&p)?;
        if min_eig < real(-1e-10) {
            return Err(ObjectiveError::NotConvex { min_eig: min_eig.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(QuadraticObjective { p, q, c })
    }

    pub fn p(&self) -> &Matrix<T> {
        &self.p
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }
}

impl<T: Real> ObjectiveFn<T> for QuadraticObjective<T> {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn value(&self, x: &[T]) -> T {
        let px = self.p.matvec(x);
        let quad = x.iter().zip(&px).map(|(&a, &b)| a * b).sum::<T>() * real::<T>(0.5);
        let lin = x.iter().zip(&self.q).map(|(&a, &b)| a * b).sum::<T>();
        quad + lin + self.c
    }

    fn grad(&self, x: &[T]) -> Vec<T> {
        let mut g = self.p.matvec(x);
        for (gi, &qi) in g.iter_mut().zip(&self.q) {
            *gi += qi;
        }
        g
    }

    fn hessian(&self, _x: &[T]) -> Matrix<T> {
        self.p.clone()
    }
}

/// One agent's objective: an exact quadratic or a boxed custom evaluator.
#[derive(Clone)]
pub enum LocalObjective<T> {
    Quadratic(QuadraticObjective<T>),
    Custom(Arc<dyn ObjectiveFn<T>>),
}

impl<T: Real> LocalObjective<T> {
    fn as_fn(&self) -> &dyn ObjectiveFn<T> {
        match self {
            LocalObjective::Quadratic(q) => q,
            LocalObjective::Custom(c) => c.as_ref(),
        }
    }

    pub fn dim(&self) -> usize {
        self.as_fn().dim()
    }

    pub fn value(&self, x: &[T]) -> T {
        self.as_fn().value(x)
    }

    pub fn grad(&self, x: &[T]) -> Vec<T> {
        self.as_fn().grad(x)
    }

    pub fn hessian(&self, x: &[T]) -> Matrix<T> {
        self.as_fn().hessian(x)
    }
}

impl<T> std::fmt::Debug for LocalObjective<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LocalObjective::Quadratic(_) => write!(f, "LocalObjective::Quadratic"),
            LocalObjective::Custom(_) => write!(f, "LocalObjective::Custom"),
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> Region<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self, ObjectiveError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(ObjectiveError::UnboundedRegion);
        }
        for (&l, &h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(ObjectiveError::UnboundedRegion);
            }
        }
        Ok(Region { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }
}

/// Gradient bound and gradient Lipschitz constant certified over a region.
#[derive(Debug, Clone)]
pub struct SmoothnessCertificate<T> {
    /// Bound on `||grad f_i(x)||` over the region.
    pub grad_bound: T,
    /// Lipschitz constant of every gradient (max Hessian spectral norm).
    pub lipschitz: T,
    pub region: Region<T>,
    /// True when the constants came from exact quadratic structure rather
    /// than sampling.
    pub exact: bool,
}

/// Minimizer of the summed objective.
#[derive(Debug, Clone)]
pub struct Minimizer<T> {
    pub x: Vec<T>,
    pub f_min: T,
    /// Gradient norm of the sum at `x`.
    pub residual: T,
    /// Set when the quadratic system was singular and a least-norm solution
    /// was reported instead of a unique minimizer.
    pub least_norm: bool,
}

/// The `n` local objectives over a shared decision space.
#[derive(Debug, Clone)]
pub struct ObjectiveSet<T> {
    objectives: Vec<LocalObjective<T>>,
    dim: usize,
    minimizer: OnceLock<Result<Minimizer<T>, ObjectiveError>>,
}

impl<T: Real> ObjectiveSet<T> {
    pub fn new(objectives: Vec<LocalObjective<T>>) -> Result<Self, ObjectiveError> {
        let dim = objectives.first().ok_or(ObjectiveError::EmptySet)?.dim();
        for o in &objectives {
            if o.dim() != dim {
                return Err(ObjectiveError::DimensionMismatch { expected: dim, got: o.dim() });
            }
        }
        Ok(ObjectiveSet { objectives, dim, minimizer: OnceLock::new() })
    }

    pub fn from_quadratics(quads: Vec<QuadraticObjective<T>>) -> Result<Self, ObjectiveError> {
        Self::new(quads.into_iter().map(LocalObjective::Quadratic).collect())
    }

    pub fn n(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self, i: usize) -> &LocalObjective<T> {
        &self.objectives[i]
    }

    fn check_dim(&self, x: &[T]) -> Result<(), ObjectiveError> {
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Gradient of agent `i`'s objective.
    pub fn grad(&self, i: usize, x: &[T]) -> Result<Vec<T>, ObjectiveError> {
        self.check_dim(x)?;
        Ok(self.objectives[i].grad(x))
    }

    /// `f(x) = sum_i f_i(x)`.
    pub fn sum_value(&self, x: &[T]) -> T {
        self.objectives.iter().map(|o| o.value(x)).sum()
    }

    pub fn sum_grad(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim];
        for o in &self.objectives {
            for (acc, v) in g.iter_mut().zip(o.grad(x)) {
                *acc += v;
            }
        }
        g
    }

    fn all_quadratic(&self) -> Option<(Matrix<T>, Vec<T>)> {
        let mut p_sum = Matrix::zeros(self.dim, self.dim);
        let mut q_sum = vec![T::zero(); self.dim];
        for o in &self.objectives {
            match o {
                LocalObjective::Quadratic(q) => {
                    p_sum = &p_sum + q.p();
                    for (acc, &v) in q_sum.iter_mut().zip(q.q()) {
                        *acc += v;
                    }
                }
                LocalObjective::Custom(_) => return None,
            }
        }
        Some((p_sum, q_sum))
    }

    fn compute_minimizer(&self) -> Result<Minimizer<T>, ObjectiveError> {
        let x = if let Some((p_sum, q_sum)) = self.all_quadratic() {
            let rhs: Vec<T> = q_sum.iter().map(|&q| -q).collect();
            match solve(&p_sum, &rhs) {
                Ok(x) => Minimizer { x, f_min: T::zero(), residual: T::zero(), least_norm: false },
                Err(LinalgError::Singular { .. }) => {
                    let (x, truncated) = sym_least_norm_solve(&p_sum, &rhs)?;
                    Minimizer { x, f_min: T::zero(), residual: T::zero(), least_norm: truncated }
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            self.newton_minimizer()?
        };
        let residual = norm(&self.sum_grad(&x.x));
        let f_min = self.sum_value(&x.x);
        Ok(Minimizer { residual, f_min, ..x })
    }

    fn newton_minimizer(&self) -> Result<Minimizer<T>, ObjectiveError> {
        let mut x = vec![T::zero(); self.dim];
        let tol = real::<T>(1e-12);
        for _ in 0..100 {
            let g = self.sum_grad(&x);
            if norm(&g) <= tol {
                return Ok(Minimizer { x, f_min: T::zero(), residual: T::zero(), least_norm: false });
            }
            let mut h = Matrix::zeros(self.dim, self.dim);
            for o in &self.objectives {
                h = &h + &o.hessian(&x);
            }
            // damped: regularize a singular Hessian slightly
            let step = match solve(&h, &g) {
                Ok(s) => s,
                Err(_) => {
                    let bump = h.max_abs().max(T::one()) * real::<T>(1e-10);
                    let mut hr = h.clone();
                    for i in 0..self.dim {
                        hr[(i, i)] += bump;
                    }
                    solve(&hr, &g)?
                }
            };
            for (xi, s) in x.iter_mut().zip(step) {
                *xi -= s;
            }
        }
        Err(ObjectiveError::MinimizerNotConverged)
    }

    /// Minimizer of the summed objective, computed once and cached.
    pub fn minimizer(&self) -> Result<&Minimizer<T>, ObjectiveError> {
        self.minimizer
            .get_or_init(|| self.compute_minimizer())
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `f(x) - f(x*)`, clamped to zero when the value is within 1e-14 of it.
    pub fn optimality_gap(&self, x: &[T]) -> Result<T, ObjectiveError> {
        self.check_dim(x)?;
        let m = self.minimizer()?;
        let gap = self.sum_value(x) - m.f_min;
        if gap.abs() <= real(1e-14) {
            Ok(T::zero())
        } else {
            Ok(gap)
        }
    }

    /// Certify the gradient bound and Lipschitz constant over `region`.
    ///
    /// Quadratics are handled exactly: the Lipschitz constant is the largest
    /// Hessian spectral norm, and the gradient norm is convex so its maximum
    /// over a box sits at a corner. Custom evaluators are sampled on a
    /// lattice of at least `samples` points. Either way the result carries a
    /// 1.01 safety factor.
    pub fn certify_constants(
        &self,
        region: &Region<T>,
        samples: usize,
    ) -> Result<SmoothnessCertificate<T>, ObjectiveError> {
        if region.dim() != self.dim {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim, got: region.dim() });
        }
        if samples < 100 {
            return Err(ObjectiveError::InvalidParameter(
                "certification needs at least 100 samples".into(),
            ));
        }
        let m = self.dim;
        let all_quadratic = self.objectives.iter().all(|o| matches!(o, LocalObjective::Quadratic(_)));
        let exact = all_quadratic && m <= 20;

        let mut grad_max = T::zero();
        let mut lip_max = T::zero();
        if exact {
            for o in &self.objectives {
                lip_max = lip_max.max(sym_spectral_norm(&o.hessian(&region.lo))?);
            }
            // enumerate the 2^m corners
            let corners = 1usize << m;
            let mut x = vec![T::zero(); m];
            for mask in 0..corners {
                for d in 0..m {
                    x[d] = if mask & (1 << d) != 0 { region.hi[d] } else { region.lo[d] };
                }
                for o in &self.objectives {
                    grad_max = grad_max.max(norm(&o.grad(&x)));
                }
            }
        } else {
            let per_axis = (samples as f64).powf(1.0 / m as f64).ceil().max(2.0) as usize;
            let mut x = vec![T::zero(); m];
            let mut idx = vec![0usize; m];
            loop {
                for d in 0..m {
                    let frac = real_of_usize::<T>(idx[d]) / real_of_usize::<T>(per_axis - 1);
                    x[d] = region.lo[d] + (region.hi[d] - region.lo[d]) * frac;
                }
                for o in &self.objectives {
                    grad_max = grad_max.max(norm(&o.grad(&x)));
                    lip_max = lip_max.max(sym_spectral_norm(&o.hessian(&x))?);
                }
                // odometer increment over the lattice
                let mut d = 0;
                loop {
                    if d == m {
                        return Ok(SmoothnessCertificate {
                            grad_bound: grad_max * real(1.01),
                            lipschitz: lip_max * real(1.01),
                            region: region.clone(),
                            exact,
                        });
                    }
                    idx[d] += 1;
                    if idx[d] < per_axis {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
            }
        }
        Ok(SmoothnessCertificate {
            grad_bound: grad_max * real(1.01),
            lipschitz: lip_max * real(1.01),
            region: region.clone(),
            exact,
        })
    }
}

pub fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// The six demo quadratics over two coordinates:
/// `f_i(x) = a_i x1^2 - b_i x1 + (i/6) x2^2 - ((i+1)/2) x2` for i = 1..6.
pub fn default_six_agent_objectives<T: Real>() -> ObjectiveSet<T> {
    let a = [0.3, 0.15, 0.15, 0.1, 0.2, 0.1];
    let b = [0.5, 0.8, 0.5, 0.8, 0.2, 0.2];
    let quads = (0..6)
        .map(|k| indexed_quadratic(k + 1, a[k], b[k]).unwrap())
        .collect();
    ObjectiveSet::from_quadratics(quads).unwrap()
}

/// Build agent `i`'s quadratic from the indexed scalar pattern
/// `a x1^2 - b x1 + (i/6) x2^2 - ((i+1)/2) x2` (1-based agent index).
pub fn indexed_quadratic<T: Real>(i: usize, a: f64, b: f64) -> Result<QuadraticObjective<T>, ObjectiveError> {
    let mut p = Matrix::zeros(2, 2);
    p[(0, 0)] = real(2.0 * a);
    p[(1, 1)] = real(i as f64 / 3.0);
    let q = vec![real(-b), real(-((i as f64 + 1.0) / 2.0))];
    QuadraticObjective::new(p, q, T::zero())
}
