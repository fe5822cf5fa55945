//! Windowed wave trace of a spectrum and its singularities.
//!
//! The probe pairs `sum_j exp(i t sqrt(lambda_j))` with a Gaussian window of
//! width `sigma` centred at `t0`, shifted to frequency `k`:
//!
//! `I(k) = sigma sqrt(2 pi) sum_j exp(i (sqrt(lambda_j) - k) t0) exp(-sigma^2 (sqrt(lambda_j) - k)^2 / 2)`.
//!
//! A closed geodesic of length `t0` makes `|I(k)|` grow like `k^a`, where `a` is
//! the order of the singularity.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billiards::LengthSpectrum;
use crate::eigensolver::Spectrum;

/// Decision margin between order classes.
pub const ORDER_MARGIN: f64 = 0.25;

/// Estimates this close to a margin are not classified.
pub const TIE_WIDTH: f64 = 0.05;

/// Estimated orders are clamped to this range.
pub const ORDER_CLAMP: (f64, f64) = (-3.0, 1.5);

/// Largest window width used by default.
pub const DEFAULT_SIGMA: f64 = 0.15;

/// Terms farther than this many window widths from `k` are dropped.
const CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("probe stays below {ratio:.1}x the off-peak level across the window")]
    NoiseFloor { ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub k: f64,
    pub re: f64,
    pub im: f64,
}

impl ProbeSample {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn arg(&self) -> f64 {
        self.im.atan2(self.re)
    }
}

/// Another known length lies within `3 sigma` of `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowOverlapWarning {
    pub t0: f64,
    pub other: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityProbe {
    pub t0: f64,
    pub sigma: f64,
    pub samples: Vec<ProbeSample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<WindowOverlapWarning>,
}

/// Square roots of the eigenvalues, ascending.
pub struct Frequencies(Vec<f64>);

impl Frequencies {
    pub fn new(s: &Spectrum) -> Self {
        Frequencies(s.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect())
    }

    pub fn top(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }

    /// `I(k)` for the window at `t0`.
    pub fn value(&self, t0: f64, sigma: f64, k: f64) -> Complex64 {
        let reach = CUTOFF / sigma;
        let lo = self.0.partition_point(|&w| w < k - reach);
        let hi = self.0.partition_point(|&w| w <= k + reach);
        let sum: Complex64 = self.0[lo..hi]
            .iter()
            .map(|&w| {
                let x = w - k;
                Complex64::from_polar((-0.5 * sigma * sigma * x * x).exp(), x * t0)
            })
            .sum();
        sum * (sigma * (2.0 * PI).sqrt())
    }
}

fn check_window(t0: f64, sigma: f64) -> Result<(), WaveError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(WaveError::InvalidInput(format!("window width {sigma} is not positive")));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(WaveError::InvalidInput(format!("time {t0} is not positive")));
    }
    Ok(())
}

/// `I(k)` at every `k` of `ks`.
pub fn probe(s: &Spectrum, t0: f64, sigma: f64, ks: &[f64]) -> Result<SingularityProbe, WaveError> {
    check_window(t0, sigma)?;
    let f = Frequencies::new(s);
    let samples = ks
        .par_iter()
        .map(|&k| {
            let v = f.value(t0, sigma, k);
            ProbeSample { k, re: v.re, im: v.im }
        })
        .collect();
    Ok(SingularityProbe { t0, sigma, samples, warnings: Vec::new() })
}

/// [`probe`] with overlap warnings against known lengths.
pub fn probe_near(
    s: &Spectrum,
    t0: f64,
    sigma: f64,
    ks: &[f64],
    lengths: &[f64],
) -> Result<SingularityProbe, WaveError> {
    let mut p = probe(s, t0, sigma, ks)?;
    p.warnings = overlap_warnings(lengths, t0, sigma);
    Ok(p)
}

/// Known lengths other than the nearest one that fall within `3 sigma` of `t0`.
pub fn overlap_warnings(lengths: &[f64], t0: f64, sigma: f64) -> Vec<WindowOverlapWarning> {
    let mut close: Vec<f64> = lengths.iter().copied().filter(|l| (l - t0).abs() <= 3.0 * sigma).collect();
    close.sort_by(|a, b| (a - t0).abs().total_cmp(&(b - t0).abs()));
    close.into_iter().skip(1).map(|other| WindowOverlapWarning { t0, other, sigma }).collect()
}

/// `min(0.15, gap / 4)` for the smallest gap between lengths.
pub fn default_sigma(lengths: &LengthSpectrum) -> f64 {
    lengths.min_gap().map_or(DEFAULT_SIGMA, |g| (g / 4.0).min(DEFAULT_SIGMA))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitClass {
    /// Order near `1/2`: the `2h` band or a `C(1,1)` family.
    Band,
    /// Order near `0`: an isolated orbit such as `l_F`, or `2h_alpha` with `alpha = pi/2`.
    Isolated,
    /// Order at most `-1/2`: `2mb` or a diffractive `2h_alpha`.
    Diffractive,
    Ambiguous,
}

/// Orders expected for the orbit classes of a trapezoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTable {
    pub rows: Vec<OrderRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub orbit: String,
    /// Upper bound for `2mb`, exact value otherwise.
    pub order: f64,
    pub at_most: bool,
    pub class: OrbitClass,
}

impl Default for OrderTable {
    fn default() -> Self {
        let row = |orbit: &str, order: f64, at_most: bool, class| OrderRow { orbit: orbit.into(), order, at_most, class };
        OrderTable {
            rows: vec![
                row("2h", 0.5, false, OrbitClass::Band),
                row("2mb", -0.5, true, OrbitClass::Diffractive),
                row("lF", 0.0, false, OrbitClass::Isolated),
                row("2hAlpha (alpha diffractive)", -0.5, false, OrbitClass::Diffractive),
                row("2hAlpha (alpha = pi/2)", 0.0, false, OrbitClass::Isolated),
                row("2hAlpha (isosceles)", 0.5, false, OrbitClass::Band),
            ],
        }
    }
}

impl OrderTable {
    /// Expected order of `2mb`: `-m/2` is an upper bound.
    pub fn two_mb_bound(m: u32) -> f64 {
        -(m as f64) / 2.0
    }
}

/// Class of an estimated order; estimates within [`TIE_WIDTH`] of a margin are ambiguous.
pub fn classify_order(a: f64) -> OrbitClass {
    if (a - ORDER_MARGIN).abs() < TIE_WIDTH || (a + ORDER_MARGIN).abs() < TIE_WIDTH || !a.is_finite() {
        OrbitClass::Ambiguous
    } else if a > ORDER_MARGIN {
        OrbitClass::Band
    } else if a >= -ORDER_MARGIN {
        OrbitClass::Isolated
    } else {
        OrbitClass::Diffractive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityCandidate {
    pub t0: f64,
    /// `|I(k_ref)|` at the peak.
    pub amplitude: f64,
    pub k_ref: f64,
    /// Amplitude over the median of the scan.
    pub significance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_order: Option<OrderEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_orbit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_length: Option<f64>,
}

impl SingularityCandidate {
    pub fn class(&self) -> OrbitClass {
        self.estimated_order.as_ref().map_or(OrbitClass::Ambiguous, |o| classify_order(o.order))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub t: f64,
    pub abs: f64,
    pub arg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakScan {
    pub sigma: f64,
    pub k_ref: f64,
    pub threshold: f64,
    pub median: f64,
    pub grid: Vec<ScanPoint>,
    pub candidates: Vec<SingularityCandidate>,
}

impl PeakScan {
    /// `t,abs,arg` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,abs,arg\n");
        for p in &self.grid {
            let _ = writeln!(out, "{:.10e},{:.10e},{:.10e}", p.t, p.abs, p.arg);
        }
        out
    }

    /// Labels every candidate with the nearest length within `tol`.
    pub fn match_lengths(&mut self, lengths: &LengthSpectrum, tol: f64) {
        for c in &mut self.candidates {
            match lengths.nearest(c.t0) {
                Some(line) if (line.length - c.t0).abs() <= tol => {
                    c.matched_orbit = Some(line.labels.join("|"));
                    c.matched_length = Some(line.length);
                }
                _ => {
                    c.matched_orbit = None;
                    c.matched_length = None;
                }
            }
        }
    }

    pub fn unmatched(&self) -> Vec<&SingularityCandidate> {
        self.candidates.iter().filter(|c| c.matched_length.is_none()).collect()
    }
}

/// Local maxima of `|I(k_ref)|` over `t_range` above `threshold` times the median.
///
/// The grid step is `sigma / 8`; peak positions are refined by a parabola
/// through the three grid values around each maximum.
pub fn scan_peaks(
    s: &Spectrum,
    t_range: (f64, f64),
    sigma: f64,
    k_ref: f64,
    threshold: f64,
) -> Result<PeakScan, WaveError> {
    let (t_lo, t_hi) = t_range;
    check_window(t_lo, sigma)?;
    if !(t_hi > t_lo) {
        return Err(WaveError::InvalidInput(format!("empty time range [{t_lo}, {t_hi}]")));
    }
    let step = sigma / 8.0;
    let n = ((t_hi - t_lo) / step).ceil() as usize + 1;
    let f = Frequencies::new(s);
    let grid: Vec<ScanPoint> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = (t_lo + i as f64 * step).min(t_hi);
            let v = f.value(t, sigma, k_ref);
            ScanPoint { t, abs: v.norm(), arg: v.arg() }
        })
        .collect();
    let median = median(grid.iter().map(|p| p.abs));
    let mut candidates = Vec::new();
    if median > 0.0 {
        for i in 1..grid.len().saturating_sub(1) {
            let (a, b, c) = (grid[i - 1].abs, grid[i].abs, grid[i + 1].abs);
            if b > a && b >= c && b > threshold * median {
                let den = a - 2.0 * b + c;
                let shift = if den < 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
                candidates.push(SingularityCandidate {
                    t0: grid[i].t + shift * step,
                    amplitude: b,
                    k_ref,
                    significance: b / median,
                    estimated_order: None,
                    matched_orbit: None,
                    matched_length: None,
                });
            }
        }
    }
    Ok(PeakScan { sigma, k_ref, threshold, median, grid, candidates })
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Clamped log-log slope.
    pub order: f64,
    /// Half-width of the 95% confidence interval.
    pub half_width: f64,
    pub k_window: (f64, f64),
    pub clamped: bool,
    /// Median of `|I|` over the window relative to the off-peak level.
    pub contrast: f64,
}

/// Samples in the log-log fit.
const ORDER_SAMPLES: usize = 64;

/// Offsets, in window widths, of the off-peak reference times.
const OFF_PEAK: [f64; 8] = [-6.0, -5.0, -4.0, -3.0, 3.0, 4.0, 5.0, 6.0];

/// `k` range `[0.1, 0.8] sqrt(lambda_N)` used when none is given.
pub fn default_k_window(s: &Spectrum) -> (f64, f64) {
    let top = Frequencies::new(s).top();
    (0.1 * top, 0.8 * top)
}

/// Least-squares slope of `log |I(k)|` against `log k` over `k_window`.
pub fn estimate_order(s: &Spectrum, t0: f64, sigma: f64, k_window: (f64, f64)) -> Result<OrderEstimate, WaveError> {
    check_window(t0, sigma)?;
    let f = Frequencies::new(s);
    let top = f.top();
    let (k_lo, k_hi) = k_window;
    if !(k_lo > 0.0 && k_hi > k_lo) {
        return Err(WaveError::InvalidInput(format!("bad frequency window [{k_lo}, {k_hi}]")));
    }
    if k_lo < 0.1 * top * (1.0 - 1e-12) || k_hi > 0.8 * top * (1.0 + 1e-12) {
        return Err(WaveError::InvalidInput(format!(
            "frequency window [{k_lo}, {k_hi}] leaves [0.1, 0.8] x {top}"
        )));
    }
    let ks: Vec<f64> =
        (0..ORDER_SAMPLES).map(|i| k_lo * (k_hi / k_lo).powf(i as f64 / (ORDER_SAMPLES - 1) as f64)).collect();
    let rows: Vec<(f64, f64, f64)> = ks
        .par_iter()
        .map(|&k| {
            let on = f.value(t0, sigma, k).norm();
            let off = median(OFF_PEAK.iter().map(|d| f.value((t0 + d * sigma).max(sigma), sigma, k).norm()));
            (k, on, off)
        })
        .collect();
    let contrast = median(rows.iter().map(|&(_, on, off)| if off > 0.0 { on / off } else { f64::INFINITY }));
    if rows.iter().all(|&(_, on, off)| on < 10.0 * off) {
        return Err(WaveError::NoiseFloor { ratio: 10.0 });
    }
    let (slope, half_width) = fit_slope(&log_points(rows.iter().map(|&(k, on, _)| (k, on))));
    let clamped = slope < ORDER_CLAMP.0 || slope > ORDER_CLAMP.1;
    Ok(OrderEstimate {
        order: slope.clamp(ORDER_CLAMP.0, ORDER_CLAMP.1),
        half_width,
        k_window,
        clamped,
        contrast,
    })
}

fn log_points(rows: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    rows.filter(|r| r.1 > 0.0).map(|(k, v)| (k.ln(), v.ln())).collect()
}

/// Slope and 95% half-width of the least-squares line through `pts`.
fn fit_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return (f64::NAN, f64::INFINITY);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (slope, 1.96 * se)
}

/// Adds order estimates to every candidate of a scan.
pub fn estimate_orders(s: &Spectrum, scan: &mut PeakScan, k_window: (f64, f64)) {
    let sigma = scan.sigma;
    for c in &mut scan.candidates {
        c.estimated_order = estimate_order(s, c.t0, sigma, k_window).ok();
    }
}
