//! Truncated heat traces and the three-term small-time fit.
//!
//! For a polygon the heat trace behaves as
//! `A / (4 pi t) -+ L / (8 sqrt(pi t)) + K` as `t -> 0`, minus for Dirichlet and
//! plus for Neumann, where `K` is the corner sum. For a trapezoid
//! `K = (pi^2 / 24) q - 1/12`, so the fit recovers the angle invariant as well.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::{BoundaryCondition, Spectrum};
use crate::geometry::AngleInvariant;

/// Relative tail size above which a partial trace is flagged.
pub const TRUNCATION_WARN: f64 = 1e-6;

/// Relative tail size allowed at the left end of a fit window.
pub const WINDOW_TAIL: f64 = 1e-8;

pub const MAX_CONDITION: f64 = 1e12;

/// Grid points used by callers that do not choose.
pub const DEFAULT_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeatError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("design matrix condition number {0:.3e} exceeds 1e12")]
    IllConditionedFit(f64),
    #[error("fit window [{t_min:.3e}, {t_max:.3e}] is empty after truncation control")]
    WindowTooNarrow { t_min: f64, t_max: f64 },
}

/// A partial heat trace with its truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialTrace {
    pub value: f64,
    /// Weyl estimate of the omitted terms, `(N / (lambda_N t)) exp(-t lambda_N)`.
    pub tail: f64,
    /// `tail > 1e-6 value`.
    pub truncation_warning: bool,
}

/// `sum_k exp(-t lambda_k)` over the given spectrum.
pub fn heat_trace_partial(s: &Spectrum, t: f64) -> Result<PartialTrace, HeatError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(HeatError::InvalidInput(format!("t = {t} must be positive")));
    }
    let value = trace_sum(&s.eigenvalues, t);
    let tail = weyl_tail(&s.eigenvalues, t);
    Ok(PartialTrace { value, tail, truncation_warning: tail > TRUNCATION_WARN * value })
}

fn trace_sum(eigs: &[f64], t: f64) -> f64 {
    // Smallest terms first.
    eigs.iter().rev().map(|&l| (-t * l).exp()).sum()
}

fn weyl_tail(eigs: &[f64], t: f64) -> f64 {
    match eigs.last() {
        Some(&ln) if ln > 0.0 => eigs.len() as f64 / (ln * t) * (-t * ln).exp(),
        _ => 0.0,
    }
}

/// Fitted heat invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatInvariants {
    pub area: f64,
    pub perimeter: f64,
    #[serde(rename = "K")]
    pub corner_constant: f64,
    /// `(24 K + 2) / pi^2`.
    #[serde(rename = "q")]
    pub q_estimate: f64,
    /// RMS relative residual of the three-term fit.
    pub residual: f64,
    /// RMS relative residual of the fit without the constant term.
    #[serde(rename = "residualTwoTerm")]
    pub residual_two_term: f64,
    #[serde(rename = "tWindow")]
    pub t_window: (f64, f64),
    /// The left end of the window was moved to control truncation.
    #[serde(rename = "windowAdjusted")]
    pub window_adjusted: bool,
    #[serde(rename = "gridSize")]
    pub grid_size: usize,
    #[serde(rename = "conditionNumber")]
    pub condition_number: f64,
}

impl HeatInvariants {
    pub fn angle_invariant(&self) -> AngleInvariant {
        AngleInvariant { q: self.q_estimate }
    }
}

/// `[max(10/lambda_N, 1e-4), 40/lambda_N]` clipped to `[1e-4, 1e-1]`.
pub fn default_window(s: &Spectrum) -> Option<(f64, f64)> {
    let ln = *s.eigenvalues.last()?;
    if ln <= 0.0 {
        return None;
    }
    let lo = (10.0 / ln).clamp(1e-4, 1e-1);
    let hi = (40.0 / ln).clamp(1e-4, 1e-1);
    Some((lo, hi))
}

/// Widens the window of a first fit using the width scale `w = 2A/L`.
///
/// Periodic and diffractive orbits add terms of order `exp(-w^2 / t)` to the
/// trace, so `t_max = w^2 / 16` keeps them below `1e-7`, while the larger times
/// shift the weight onto the low, most accurately computed eigenvalues.
pub fn widened_window(first: &HeatInvariants) -> Option<(f64, f64)> {
    if !(first.area > 0.0 && first.perimeter > 0.0) {
        return None;
    }
    let w = 2.0 * first.area / first.perimeter;
    let t_max = (w * w / 16.0).min(1e-1);
    (t_max > first.t_window.1).then_some((first.t_window.0, t_max))
}

/// Default fit followed by a refit on [`widened_window`].
///
/// Suited to discretized spectra, whose relative error grows with the
/// eigenvalue index.
pub fn fit_invariants_widened(s: &Spectrum, grid_size: usize) -> Result<HeatInvariants, HeatError> {
    let first = fit_invariants(s, None, grid_size)?;
    match widened_window(&first) {
        Some(w) => fit_invariants(s, Some(w), grid_size),
        None => Ok(first),
    }
}

/// Fits `A / (4 pi t) -+ L / (8 sqrt(pi t)) + K` on a geometric grid in `window`.
///
/// The left end of the window is moved right until the truncation tail is
/// below `1e-8` of the trace. Rows are scaled by `t`, which weights every grid
/// point by its relative error.
pub fn fit_invariants(s: &Spectrum, window: Option<(f64, f64)>, grid_size: usize) -> Result<HeatInvariants, HeatError> {
    if grid_size < 20 {
        return Err(HeatError::InvalidInput(format!("grid size {grid_size} is below 20")));
    }
    if s.count() < 3 {
        return Err(HeatError::InvalidInput("spectrum has fewer than three eigenvalues".into()));
    }
    let (t_min0, t_max) = match window {
        Some(w) => w,
        None => default_window(s).ok_or_else(|| HeatError::InvalidInput("spectrum has no positive eigenvalue".into()))?,
    };
    if !(t_min0 > 0.0 && t_max > t_min0) {
        return Err(HeatError::InvalidInput(format!("window [{t_min0}, {t_max}] is not an interval")));
    }
    let mut t_min = t_min0;
    while weyl_tail(&s.eigenvalues, t_min) >= WINDOW_TAIL * trace_sum(&s.eigenvalues, t_min) {
        t_min *= 1.02;
        if t_min >= t_max {
            return Err(HeatError::WindowTooNarrow { t_min, t_max });
        }
    }
    // A factor below ~1.5 leaves too little leverage to separate the three terms.
    if t_max / t_min < 1.5 {
        return Err(HeatError::WindowTooNarrow { t_min, t_max });
    }
    let ts: Vec<f64> = (0..grid_size)
        .map(|i| t_min * (t_max / t_min).powf(i as f64 / (grid_size - 1) as f64))
        .collect();
    let ys: Vec<f64> = ts.par_iter().map(|&t| trace_sum(&s.eigenvalues, t)).collect();
    let sign = match s.boundary_condition {
        BoundaryCondition::Dirichlet => -1.0,
        BoundaryCondition::Neumann => 1.0,
    };
    let row = |t: f64| [1.0 / (4.0 * PI * t), sign / (8.0 * (PI * t).sqrt()), 1.0];

    let design = DMatrix::from_fn(grid_size, 3, |i, j| ts[i] * row(ts[i])[j]);
    let rhs = DVector::from_fn(grid_size, |i, _| ts[i] * ys[i]);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition_number > MAX_CONDITION {
        return Err(HeatError::IllConditionedFit(condition_number));
    }
    let coef = svd.solve(&rhs, 0.0).map_err(|e| HeatError::InvalidInput(e.to_string()))?;
    let rms = |fitted: &DVector<f64>| -> f64 {
        let r = &rhs - fitted;
        let rel: f64 = r.iter().zip(rhs.iter()).map(|(a, b)| (a / b).powi(2)).sum();
        (rel / grid_size as f64).sqrt()
    };
    let residual = rms(&(&design * &coef));

    let two = design.columns(0, 2).clone_owned();
    let coef2 = two.clone().svd(true, true).solve(&rhs, 0.0).map_err(|e| HeatError::InvalidInput(e.to_string()))?;
    let residual_two_term = rms(&(&two * &coef2));

    let corner_constant = coef[2];
    Ok(HeatInvariants {
        area: coef[0],
        perimeter: coef[1],
        corner_constant,
        q_estimate: AngleInvariant::from_corner_constant(corner_constant).q,
        residual,
        residual_two_term,
        t_window: (t_min, t_max),
        window_adjusted: t_min != t_min0,
        grid_size,
        condition_number,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::exact_rectangle_spectrum;
    use proptest::prelude::*;

    #[test]
    fn single_term() {
        let s = Spectrum::new(vec![1.0], BoundaryCondition::Dirichlet);
        let p = heat_trace_partial(&s, 1.0).unwrap();
        assert!((p.value - (-1f64).exp()).abs() < 1e-16);
        assert!(heat_trace_partial(&s, 0.0).is_err());
    }

    #[test]
    fn large_time_is_dominated_by_ground_state() {
        let s = exact_rectangle_spectrum(1.0, 1.0, 50, BoundaryCondition::Dirichlet);
        let t = 2.0;
        let p = heat_trace_partial(&s, t).unwrap();
        let lead = (-t * s.eigenvalues[0]).exp();
        assert!((p.value - lead) / lead < 1e-12);
    }

    #[test]
    fn square_invariants_from_exact_spectrum() {
        let d = exact_rectangle_spectrum(1.0, 1.0, 2000, BoundaryCondition::Dirichlet);
        let inv = fit_invariants(&d, None, 40).unwrap();
        assert!((inv.area - 1.0).abs() < 0.01, "{inv:?}");
        assert!((inv.perimeter - 4.0).abs() < 0.08, "{inv:?}");
        assert!((inv.corner_constant - 0.25).abs() < 0.025, "{inv:?}");
        assert!(inv.window_adjusted);
        assert!(inv.residual < inv.residual_two_term);
        let n = exact_rectangle_spectrum(1.0, 1.0, 2000, BoundaryCondition::Neumann);
        let inv = fit_invariants(&n, None, 40).unwrap();
        assert!((inv.area - 1.0).abs() < 0.01, "{inv:?}");
        assert!((inv.perimeter - 4.0).abs() < 0.08, "{inv:?}");
    }

    #[test]
    fn fit_is_deterministic() {
        let d = exact_rectangle_spectrum(1.0, 2.0, 800, BoundaryCondition::Dirichlet);
        let a = fit_invariants(&d, None, 30).unwrap();
        let b = fit_invariants(&d, None, 30).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn narrow_window_is_rejected() {
        let d = exact_rectangle_spectrum(1.0, 1.0, 200, BoundaryCondition::Dirichlet);
        let err = fit_invariants(&d, Some((1e-4, 2e-4)), 20).unwrap_err();
        assert!(matches!(err, HeatError::WindowTooNarrow { .. }));
        assert!(fit_invariants(&d, None, 10).is_err());
    }

    #[test]
    fn json_keys() {
        let d = exact_rectangle_spectrum(1.0, 1.0, 500, BoundaryCondition::Dirichlet);
        let v = serde_json::to_value(fit_invariants(&d, None, 20).unwrap()).unwrap();
        for key in ["area", "perimeter", "K", "q", "residual", "tWindow"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn trace_decreases_in_t(t in 1e-4f64..1.0, f in 1.001f64..3.0) {
            let s = exact_rectangle_spectrum(1.0, 1.3, 300, BoundaryCondition::Dirichlet);
            let a = heat_trace_partial(&s, t).unwrap().value;
            let b = heat_trace_partial(&s, t * f).unwrap().value;
            prop_assert!(b < a);
        }
    }
}
