//! Adaptive numerical integration on finite intervals with a Gauss–Kronrod
//! 7/15 pair. Intervals are refined globally (worst error first) until the
//! accumulated error estimate meets the requested tolerance.

use thiserror::Error;

use crate::scalar::{real, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("integrand not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("quadrature did not converge: error {error:e} after {intervals} intervals")]
    NotConverged { error: f64, intervals: usize },
}

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights. Standard QUADPACK values.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod_panel<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> Result<(T, T), QuadError> {
    let half = (b - a) * real::<T>(0.5);
    let center = (a + b) * real::<T>(0.5);
    let mut kronrod = T::zero();
    let mut gauss = T::zero();
    // symmetric node pairs; XGK indices 1, 3, 5 carry the off-center Gauss nodes
    for i in 0..7 {
        let off = half * real::<T>(XGK[i]);
        let fa = f(center - off);
        let fb = f(center + off);
        if !fa.is_finite() {
            return Err(QuadError::NonFinite { x: (center - off).to_f64().unwrap_or(f64::NAN) });
        }
        if !fb.is_finite() {
            return Err(QuadError::NonFinite { x: (center + off).to_f64().unwrap_or(f64::NAN) });
        }
        let pair = fa + fb;
        kronrod += real::<T>(WGK[i]) * pair;
        if i % 2 == 1 {
            gauss += real::<T>(WG[i / 2]) * pair;
        }
    }
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { x: center.to_f64().unwrap_or(f64::NAN) });
    }
    kronrod += real::<T>(WGK[7]) * fc;
    gauss += real::<T>(WG[3]) * fc;
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok((value, error))
}

/// Integrate `f` over `[a, b]` to the requested relative/absolute tolerance.
pub fn integrate<T: Real>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    rel_tol: T,
    abs_tol: T,
) -> Result<Quadrature<T>, QuadError> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(QuadError::InvalidInterval {
            a: a.to_f64().unwrap_or(f64::NAN),
            b: b.to_f64().unwrap_or(f64::NAN),
        });
    }
    if a == b {
        return Ok(Quadrature { value: T::zero(), error: T::zero(), intervals: 0 });
    }
    let (v, e) = kronrod_panel(&f, a, b)?;
    let mut panels = vec![Panel { a, b, value: v, error: e }];
    let max_panels = 4096;
    loop {
        let total: T = panels.iter().map(|p| p.value).sum();
        let err: T = panels.iter().map(|p| p.error).sum();
        let target = abs_tol.max(rel_tol * total.abs());
        if err <= target {
            return Ok(Quadrature { value: total, error: err, intervals: panels.len() });
        }
        if panels.len() >= max_panels {
            return Err(QuadError::NotConverged {
                error: err.to_f64().unwrap_or(f64::NAN),
                intervals: panels.len(),
            });
        }
        // split the panel with the largest error estimate
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, p)| {
                if p.error > be {
                    (i, p.error)
                } else {
                    (bi, be)
                }
            });
        let Panel { a: pa, b: pb, .. } = panels.swap_remove(worst);
        let mid = (pa + pb) * real::<T>(0.5);
        if mid <= pa || mid >= pb {
            // interval below floating-point resolution; accept as is
            let (v, _) = kronrod_panel(&f, pa, pb)?;
            panels.push(Panel { a: pa, b: pb, value: v, error: T::zero() });
            continue;
        }
        let (v1, e1) = kronrod_panel(&f, pa, mid)?;
        let (v2, e2) = kronrod_panel(&f, mid, pb)?;
        panels.push(Panel { a: pa, b: mid, value: v1, error: e1 });
        panels.push(Panel { a: mid, b: pb, value: v2, error: e2 });
    }
}

/// Convenience wrapper with the crate's default 1e-8 relative tolerance.
pub fn integrate_default<T: Real>(f: impl Fn(T) -> T, a: T, b: T) -> Result<Quadrature<T>, QuadError> {
    integrate(f, a, b, real(1e-8), real(1e-300))
}
