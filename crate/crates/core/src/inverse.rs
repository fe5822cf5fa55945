//! Reconstruction of a trapezoid from its spectrum.
//!
//! The heat trace gives the area `A`, perimeter `L` and angle invariant `q`.
//! Rectangles are recognised by `q = 8/pi^2` and finished with the first
//! eigenvalue. Otherwise the wave trace is scanned upward: the first singularity
//! of order `1/2` is `2h`, and `A, L, q, h` determine the trapezoid. When the
//! Fagnano orbit `l_F` comes first, the next singularity in `(l_F, 2 l_F)` of
//! nonzero order at least `-1/2` is `2h_alpha` (order `-1/2`) or `2h` (order
//! `1/2`); if there is none, `alpha = pi/2`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billiards::{length_spectrum, LengthSpectrum};
use crate::eigensolver::{BoundaryCondition, Spectrum};
use crate::geometry::{
    angle_function, angle_function_inverse, DomainError, OrbitCatalog, Trapezoid, FIT_RECTANGLE_TOL, RECTANGLE_Q,
};
use crate::heat_trace::{fit_invariants_widened, HeatError, HeatInvariants, DEFAULT_GRID};
use crate::wave_trace::{
    estimate_orders, scan_peaks, OrbitClass, SingularityCandidate, WaveError,
};

/// Sign-change samples along the constraint curve.
const ROOT_SAMPLES: usize = 256;

/// Orders below this are taken as `2mb` with `m >= 2` in the second scan.
const MULTIPLE_BOUNCE_ORDER: f64 = -0.75;

/// Relative agreement required of exact invariants.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InverseError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no trapezoid satisfies the constraints: {0}")]
    NoSolution(String),
    #[error("{} distinct solutions", .0.len())]
    NonUnique(Vec<Trapezoid>),
    #[error("recomputed {name} = {got} disagrees with {want}")]
    InconsistentInvariants { name: String, got: f64, want: f64 },
    #[error("no branch survives validation: {0}")]
    InvariantMismatch(String),
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Sides `a <= c` with `lambda_1 = pi^2 (1/a^2 + 1/c^2)` and `a c = area`.
///
/// For Neumann spectra pass the first nonzero eigenvalue `pi^2 / c^2`, see
/// [`reconstruct_rectangle_from`].
pub fn reconstruct_rectangle(lambda1: f64, area: f64) -> Result<(f64, f64), InverseError> {
    if !(lambda1 > 0.0 && area > 0.0 && lambda1.is_finite() && area.is_finite()) {
        return Err(InverseError::InvalidInput(format!("lambda1 = {lambda1}, area = {area}")));
    }
    let floor = 2.0 * PI * PI / area;
    if lambda1 < floor * (1.0 - 1e-9) {
        return Err(InverseError::NoSolution(format!("lambda1 {lambda1} is below 2 pi^2 / A = {floor}")));
    }
    // x = a^2 solves x^2 - m A^2 x + A^2 = 0 with m = lambda1 / pi^2.
    let m = lambda1 / (PI * PI);
    let p = m * area * area;
    let disc = (p * p - 4.0 * area * area).max(0.0).sqrt();
    let x = 2.0 * area * area / (p + disc);
    let a = x.sqrt();
    Ok((a, area / a))
}

/// Rectangle of the given area matching the first relevant eigenvalue of `s`.
///
/// `area_tol` is the relative uncertainty of a fitted area. An eigenvalue that
/// only a rectangle up to `area_tol` smaller could produce is read as a
/// square, whose side follows from the eigenvalue alone.
pub fn reconstruct_rectangle_from(s: &Spectrum, area: f64, area_tol: f64) -> Result<Trapezoid, InverseError> {
    let (a, c) = match s.boundary_condition {
        BoundaryCondition::Dirichlet => {
            let l1 = *s.eigenvalues.first().ok_or_else(|| InverseError::InvalidInput("empty spectrum".into()))?;
            let floor = 2.0 * PI * PI / area;
            if l1 < floor && l1 >= floor * (1.0 - area_tol) {
                let side = PI * (2.0 / l1).sqrt();
                (side, side)
            } else {
                reconstruct_rectangle(l1, area)?
            }
        }
        BoundaryCondition::Neumann => {
            let l1 = s
                .eigenvalues
                .iter()
                .copied()
                .find(|&l| l > 1e-8 * s.eigenvalues.last().copied().unwrap_or(1.0))
                .ok_or_else(|| InverseError::InvalidInput("no nonzero Neumann eigenvalue".into()))?;
            let c = PI / l1.sqrt();
            let a = area / c;
            if a > c * (1.0 + area_tol) {
                return Err(InverseError::NoSolution(format!("short side {a} exceeds long side {c}")));
            }
            (a.min(c), c)
        }
    };
    Ok(Trapezoid::rectangle(c, a)?)
}

/// Roots of `f` on `[lo, hi]` from sign changes on a uniform grid.
///
/// Each bracket is narrowed by bisection and finished with safeguarded secant
/// steps. Endpoints where `|f| <= end_tol` count as roots.
fn find_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, end_tol: f64) -> Vec<f64> {
    let xs: Vec<f64> = (0..=ROOT_SAMPLES).map(|i| lo + (hi - lo) * i as f64 / ROOT_SAMPLES as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    if ys[0].abs() <= end_tol {
        roots.push(lo);
    }
    for i in 0..ROOT_SAMPLES {
        let (a, b) = (xs[i], xs[i + 1]);
        let (fa, fb) = (ys[i], ys[i + 1]);
        if fa == 0.0 && i > 0 {
            roots.push(a);
            continue;
        }
        if fa * fb < 0.0 {
            roots.push(refine(&f, a, b, fa, fb));
        }
    }
    if ys[ROOT_SAMPLES].abs() <= end_tol && roots.last().is_none_or(|&r| (r - hi).abs() > 1e-9 * (hi - lo)) {
        roots.push(hi);
    }
    roots
}

fn refine(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    let width = b - a;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
            fb = fm;
        } else {
            a = m;
            fa = fm;
        }
        if b - a <= 1e-6 * width {
            break;
        }
    }
    // Illinois variant of regula falsi: a side kept twice has its value halved.
    let mut side = 0i8;
    for _ in 0..200 {
        let s = b - fb * (b - a) / (fb - fa);
        let x = if s > a && s < b { s } else { 0.5 * (a + b) };
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fa * fx < 0.0 {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    if fa.abs() <= fb.abs() {
        a
    } else {
        b
    }
}

/// Points of the curve `F(alpha) + F(beta) = q`, `beta <= alpha <= pi/2`,
/// parameterized by `tau = (q/2 - F(alpha))^2`, which is smooth at both ends.
#[derive(Debug, Clone, Copy)]
struct AngleCurve {
    q: f64,
    tau_max: f64,
}

impl AngleCurve {
    fn new(q: f64) -> Result<Self, InverseError> {
        if !(q.is_finite() && q >= RECTANGLE_Q * (1.0 - 1e-12)) {
            return Err(InverseError::NoSolution(format!("q = {q} is below 8/pi^2")));
        }
        let span = (0.5 * q - 4.0 / (PI * PI)).max(0.0);
        Ok(AngleCurve { q, tau_max: span * span })
    }

    fn angles(&self, tau: f64) -> (f64, f64) {
        let r = tau.clamp(0.0, self.tau_max).sqrt();
        let alpha = angle_function_inverse(0.5 * self.q - r).unwrap_or(FRAC_PI_2).min(FRAC_PI_2);
        let beta = angle_function_inverse(0.5 * self.q + r).unwrap_or(alpha).min(alpha);
        (alpha, beta)
    }
}

fn csc(x: f64) -> f64 {
    1.0 / x.sin()
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

/// The trapezoid with area `a`, perimeter `l`, angle invariant `q` and height `h`.
pub fn solve_from_h(a: f64, l: f64, q: f64, h: f64) -> Result<Trapezoid, InverseError> {
    if !(a > 0.0 && l > 0.0 && h > 0.0 && [a, l, q, h].iter().all(|v| v.is_finite())) {
        return Err(InverseError::InvalidInput(format!("A = {a}, L = {l}, q = {q}, h = {h}")));
    }
    let s = (l - 2.0 * a / h) / h;
    if s <= 2.0 * (1.0 + 1e-12) {
        return Err(InverseError::NoSolution(format!("csc alpha + csc beta = {s} is not above 2")));
    }
    let curve = AngleCurve::new(q)?;
    if curve.tau_max == 0.0 {
        return Err(InverseError::NoSolution("q = 8/pi^2 describes a rectangle".into()));
    }
    let residual = |tau: f64| {
        let (al, be) = curve.angles(tau);
        csc(al) + csc(be) - s
    };
    let roots = find_roots(residual, 0.0, curve.tau_max, 1e-13 * s);
    let sols: Vec<Trapezoid> = roots
        .into_iter()
        .filter_map(|tau| {
            let (al, be) = curve.angles(tau);
            let sum = 2.0 * a / h;
            let diff = h * (cot(al) + cot(be));
            Trapezoid::new(0.5 * (sum + diff), h, al, be).ok()
        })
        .collect();
    match sols.len() {
        0 => Err(InverseError::NoSolution(format!("no angle pair with csc sum {s} on the q = {q} curve"))),
        1 => Ok(sols[0]),
        _ => Err(InverseError::NonUnique(sols)),
    }
}

/// The trapezoid with perimeter `l`, angle invariant `q`, Fagnano length `l_f`
/// and altitude `h_alpha = B sin(beta)`; `area`, when given, is checked.
pub fn solve_from_lf_halpha(
    l: f64,
    q: f64,
    l_f: f64,
    h_alpha: f64,
    area: Option<f64>,
) -> Result<Trapezoid, InverseError> {
    if !(l > 0.0 && l_f > 0.0 && h_alpha > 0.0 && [l, q, l_f, h_alpha].iter().all(|v| v.is_finite())) {
        return Err(InverseError::InvalidInput(format!("L = {l}, q = {q}, lF = {l_f}, hAlpha = {h_alpha}")));
    }
    let sin_a = l_f / (2.0 * h_alpha);
    if sin_a > 1.0 + 1e-12 {
        return Err(InverseError::NoSolution(format!("lF / (2 hAlpha) = {sin_a} exceeds 1")));
    }
    let alpha = sin_a.min(1.0).asin();
    let rest = q - angle_function(alpha);
    let beta = angle_function_inverse(rest)
        .filter(|b| *b <= alpha * (1.0 + 1e-12))
        .ok_or_else(|| InverseError::NoSolution(format!("F(beta) = {rest} has no root beta <= alpha")))?
        .min(alpha);
    let base = h_alpha / beta.sin();
    let h = (l - 2.0 * base) / ((0.5 * alpha).tan() + (0.5 * beta).tan());
    if !(h > 0.0) {
        return Err(InverseError::NoSolution(format!("height {h} is not positive")));
    }
    let t = Trapezoid::new(base, h, alpha, beta).map_err(|e| InverseError::NoSolution(e.to_string()))?;
    if let Some(want) = area {
        if (t.area() - want).abs() > EXACT_TOL * want {
            return Err(InverseError::InconsistentInvariants { name: "area".into(), got: t.area(), want });
        }
    }
    Ok(t)
}

/// The constraints of a trapezoid `T1` whose `2h` is seen where an isosceles
/// `T2` has `2h_alpha`: same `q` and `l_F`, height `h1`, and `2h1 < 2h_alpha(T1)`.
///
/// Returns a solution only if one exists; it never should.
pub fn solve_case_two(q: f64, l_f: f64, h1: f64) -> Result<Trapezoid, InverseError> {
    if !(l_f > 0.0 && h1 > 0.0) {
        return Err(InverseError::InvalidInput(format!("lF = {l_f}, h = {h1}")));
    }
    let curve = AngleCurve::new(q)?;
    // On the curve, h_alpha(T1) = l_F / (2 sin alpha1) > h1 needs sin alpha1 < l_F / (2 h1).
    let bound = l_f / (2.0 * h1);
    let slack = |tau: f64| bound * (1.0 - EXACT_TOL) - curve.angles(tau).0.sin();
    let best = (0..=ROOT_SAMPLES)
        .map(|i| curve.tau_max * i as f64 / ROOT_SAMPLES as f64)
        .max_by(|x, y| slack(*x).total_cmp(&slack(*y)))
        .unwrap_or(0.0);
    if slack(best) <= 0.0 {
        return Err(InverseError::NoSolution(format!(
            "every angle pair with q = {q} has sin(alpha) >= {bound}"
        )));
    }
    let (alpha, beta) = curve.angles(best);
    let base = l_f / (2.0 * alpha.sin() * beta.sin());
    Trapezoid::new(base, h1, alpha, beta).map_err(|e| InverseError::NoSolution(e.to_string()))
}

/// Exact invariants compared by [`check_isospectral_consistency`], in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantTuple {
    pub area: f64,
    pub perimeter: f64,
    pub q: f64,
    pub shortest: f64,
    /// `l_F` when the Fagnano orbit lies inside.
    pub fagnano: Option<f64>,
    pub two_h_alpha: f64,
}

impl InvariantTuple {
    pub fn of(t: &Trapezoid) -> Self {
        let c = OrbitCatalog::new(t);
        InvariantTuple {
            area: t.area(),
            perimeter: t.perimeter(),
            q: t.angle_invariant().q,
            shortest: c.two_h.length.min(c.two_b),
            fagnano: c.fagnano.filter(|f| f.exists_inside).map(|f| f.length),
            two_h_alpha: c.two_h_alpha.length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Consistency {
    Congruent,
    DistinctInvariants { invariant: String, first: Option<f64>, second: Option<f64> },
    /// All invariants agree but the trapezoids differ; never expected.
    PotentiallyIsospectral,
}

fn differ(x: f64, y: f64) -> bool {
    (x - y).abs() > EXACT_TOL * x.abs().max(y.abs()).max(1e-300)
}

pub fn check_isospectral_consistency(t1: &Trapezoid, t2: &Trapezoid) -> Consistency {
    let (a, b) = (InvariantTuple::of(t1), InvariantTuple::of(t2));
    let scalar = [
        ("area", a.area, b.area),
        ("perimeter", a.perimeter, b.perimeter),
        ("q", a.q, b.q),
        ("min(2h,2b)", a.shortest, b.shortest),
    ];
    for (name, x, y) in scalar {
        if differ(x, y) {
            return Consistency::DistinctInvariants { invariant: name.into(), first: Some(x), second: Some(y) };
        }
    }
    let fag = match (a.fagnano, b.fagnano) {
        (Some(x), Some(y)) => differ(x, y),
        (None, None) => false,
        _ => true,
    };
    if fag {
        return Consistency::DistinctInvariants { invariant: "lF".into(), first: a.fagnano, second: b.fagnano };
    }
    if differ(a.two_h_alpha, b.two_h_alpha) {
        return Consistency::DistinctInvariants {
            invariant: "2hAlpha".into(),
            first: Some(a.two_h_alpha),
            second: Some(b.two_h_alpha),
        };
    }
    let same = !differ(t1.base(), t2.base())
        && !differ(t1.height(), t2.height())
        && !differ(t1.alpha(), t2.alpha())
        && !differ(t1.beta(), t2.beta());
    if same {
        Consistency::Congruent
    } else {
        Consistency::PotentiallyIsospectral
    }
}

/// Settings of [`scan_and_reconstruct`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub min_count: usize,
    pub grid_size: usize,
    /// Window width; `None` picks one from the frequency range.
    pub sigma: Option<f64>,
    /// Peaks count when `|I|` exceeds this multiple of the scan median.
    pub significance: f64,
    /// `k_ref` as a fraction of `sqrt(lambda_N)`.
    pub k_ref_fraction: f64,
    /// Order-fit window as fractions of `sqrt(lambda_N)`.
    pub k_window: (f64, f64),
    pub rectangle_tol: f64,
    /// Relative tolerances on area, perimeter and `q` when validating a branch.
    pub fit_tolerance: (f64, f64, f64),
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            min_count: 800,
            grid_size: DEFAULT_GRID,
            sigma: None,
            significance: 5.0,
            k_ref_fraction: 0.5,
            k_window: (0.1, 0.8),
            rectangle_tol: FIT_RECTANGLE_TOL,
            fit_tolerance: (0.02, 0.04, 0.05),
        }
    }
}

/// Default window width: `3 / k_ref`, kept within `[0.03, 0.15]`.
pub fn scan_sigma(k_ref: f64) -> f64 {
    (3.0 / k_ref).clamp(0.03, 0.15)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Rectangle,
    FirstOrderHalfIs2h,
    LFThen2hAlpha,
    LFThen2h,
    AlphaRightAngle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchResult {
    pub branch: Branch,
    pub trapezoid: Trapezoid,
    /// Times read as `2h`, `l_F`, `2h_alpha` along the way.
    pub readings: Vec<(String, f64)>,
    /// `(recomputed - fitted) / fitted` for area, perimeter and `q`.
    pub invariant_residuals: (f64, f64, f64),
    /// Significant peaks with no line of the reconstructed length spectrum within `2 sigma`.
    pub unmatched_peaks: Vec<f64>,
    /// Candidates whose classification was assumed rather than measured.
    pub assumed: Vec<(f64, OrbitClass)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Unique,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub outcome: Outcome,
    /// The surviving branch when the outcome is unique.
    pub trapezoid: Option<Trapezoid>,
    pub branch: Option<Branch>,
    pub invariants: HeatInvariants,
    pub sigma: f64,
    pub k_ref: f64,
    pub threshold: f64,
    pub candidates: Vec<SingularityCandidate>,
    /// Every branch that survived validation.
    pub branches: Vec<BranchResult>,
    /// Branches abandoned, with the reason.
    pub rejected: Vec<(String, String)>,
    pub config: ReconstructConfig,
}

impl ReconstructionReport {
    pub fn contains(&self, t: &Trapezoid, tol: f64) -> bool {
        self.branches.iter().any(|b| {
            let r = &b.trapezoid;
            (r.base() - t.base()).abs() <= tol * t.base()
                && (r.height() - t.height()).abs() <= tol * t.height()
                && (r.alpha() - t.alpha()).abs() <= tol
                && (r.beta() - t.beta()).abs() <= tol
        })
    }
}

/// Trapezoids with area `a`, perimeter `l` and height `h`, running from the
/// isosceles one at `u = 0` to `alpha = pi/2` at `u = 1`.
pub fn height_family(a: f64, l: f64, h: f64, u: f64) -> Option<Trapezoid> {
    let s = (l - 2.0 * a / h) / h;
    if !(s > 2.0) || !(0.0..=1.0).contains(&u) {
        return None;
    }
    let iso = (2.0 / s).asin();
    let alpha = iso + (FRAC_PI_2 - iso) * u;
    let beta = (1.0 / (s - csc(alpha))).clamp(-1.0, 1.0).asin().min(alpha);
    let base = 0.5 * (2.0 * a / h + h * (cot(alpha) + cot(beta)));
    Trapezoid::new(base, h, alpha, beta).ok()
}

/// Picks the member of a one-parameter family that best explains the observed
/// peaks and the fitted invariants.
///
/// With fitted invariants the exact solvers are badly conditioned: along a
/// level set of `q` the sum `csc alpha + csc beta` barely moves, so a small
/// error in `q` leaves no solution, and the split between `alpha` and `beta`
/// is decided by the remaining peaks.
struct Selector<'a> {
    inv: &'a HeatInvariants,
    observed: &'a [f64],
    sigma: f64,
    t_end: f64,
    tol: (f64, f64, f64),
}

impl Selector<'_> {
    const GRID: usize = 64;
    const GOLDEN_STEPS: usize = 40;

    fn score(&self, t: &Trapezoid) -> f64 {
        let Ok(lines) = length_spectrum(t, self.t_end + 2.0 * self.sigma) else { return f64::INFINITY };
        let peaks: f64 = self
            .observed
            .iter()
            .map(|&x| {
                let d = lines.nearest(x).map_or(f64::INFINITY, |l| (l.length - x).abs()) / self.sigma;
                (d * d).min(4.0)
            })
            .sum();
        let r = [
            relative(t.area(), self.inv.area) / self.tol.0,
            relative(t.perimeter(), self.inv.perimeter) / self.tol.1,
            relative(t.angle_invariant().q, self.inv.q_estimate) / self.tol.2,
        ];
        peaks + r.iter().map(|v| v * v).sum::<f64>()
    }

    fn select(&self, family: impl Fn(f64) -> Option<Trapezoid>, what: &str) -> Result<Trapezoid, InverseError> {
        let eval = |u: f64| family(u).map_or(f64::INFINITY, |t| self.score(&t));
        let scores: Vec<f64> = (0..=Self::GRID).map(|i| eval(i as f64 / Self::GRID as f64)).collect();
        let (best, &top) = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is not empty");
        if !top.is_finite() {
            return Err(InverseError::NoSolution(format!("no member of the {what} family is admissible")));
        }
        let step = 1.0 / Self::GRID as f64;
        let (mut lo, mut hi) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
        lo = lo.max(0.0);
        hi = hi.min(1.0);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (eval(x1), eval(x2));
        for _ in 0..Self::GOLDEN_STEPS {
            if f1 <= f2 {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - g * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + g * (hi - lo);
                f2 = eval(x2);
            }
        }
        let u = if f1.min(f2) < top { if f1 <= f2 { x1 } else { x2 } } else { best as f64 * step };
        family(u).ok_or_else(|| InverseError::NoSolution(format!("{what} family member at {u} vanished")))
    }

    fn from_h(&self, h: f64) -> Result<Trapezoid, InverseError> {
        let (a, l) = (self.inv.area, self.inv.perimeter);
        self.select(|u| height_family(a, l, h, u), "height")
    }

    /// `q` is varied within its tolerance.
    fn from_lf_halpha(&self, l_f: f64, h_alpha: f64) -> Result<Trapezoid, InverseError> {
        let (l, q, tq) = (self.inv.perimeter, self.inv.q_estimate, self.tol.2);
        self.select(|u| solve_from_lf_halpha(l, q * (1.0 + tq * (2.0 * u - 1.0)), l_f, h_alpha, None).ok(), "lF")
    }
}

/// What a candidate is taken to be in one branch of the decision procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Reading {
    Band,
    Isolated,
    HalfNegative,
    Skip,
}

#[derive(Debug, Clone)]
struct Path {
    l_f: Option<f64>,
    two_b: Option<f64>,
    readings: Vec<(String, f64)>,
    assumed: Vec<(f64, OrbitClass)>,
}

struct Pipeline<'a> {
    select: Selector<'a>,
    cands: &'a [SingularityCandidate],
    sigma: f64,
    finished: Vec<(Branch, Result<Trapezoid, InverseError>, Path)>,
}

impl Pipeline<'_> {
    /// Readings compatible with the measured order in the given phase.
    fn readings(&self, c: &SingularityCandidate, second_phase: bool) -> Vec<Reading> {
        let class = c.class();
        let order = c.estimated_order.map(|o| o.order);
        let diffractive = |o: Option<f64>| {
            if second_phase && o.is_some_and(|a| a >= MULTIPLE_BOUNCE_ORDER) {
                Reading::HalfNegative
            } else {
                Reading::Skip
            }
        };
        match class {
            OrbitClass::Band => vec![Reading::Band],
            OrbitClass::Isolated => vec![if second_phase { Reading::Skip } else { Reading::Isolated }],
            OrbitClass::Diffractive => vec![diffractive(order)],
            OrbitClass::Ambiguous => match order {
                Some(a) if a > 0.0 => {
                    vec![Reading::Band, if second_phase { Reading::Skip } else { Reading::Isolated }]
                }
                Some(_) => {
                    let alt = if second_phase { Reading::HalfNegative } else { Reading::Skip };
                    vec![alt, if second_phase { Reading::Skip } else { Reading::Isolated }]
                }
                None => {
                    if second_phase {
                        vec![Reading::Band, Reading::HalfNegative, Reading::Skip]
                    } else {
                        vec![Reading::Band, Reading::Isolated, Reading::Skip]
                    }
                }
            },
        }
    }

    fn explore(&mut self, from: usize, path: Path) {
        for i in from..self.cands.len() {
            let c = &self.cands[i];
            let t = c.t0;
            if let Some(lf) = path.l_f {
                if t <= lf + 2.0 * self.sigma {
                    continue;
                }
                if t >= 2.0 * lf - self.sigma {
                    break;
                }
            }
            let second = path.l_f.is_some();
            if second && path.two_b.is_some_and(|b| is_multiple(t, b, 2.0 * self.sigma)) {
                continue;
            }
            let options = self.readings(c, second);
            let forked = options.len() > 1;
            for r in options {
                let mut p = path.clone();
                if forked {
                    let assumed = match r {
                        Reading::Band => OrbitClass::Band,
                        Reading::Isolated => OrbitClass::Isolated,
                        Reading::HalfNegative | Reading::Skip => OrbitClass::Diffractive,
                    };
                    p.assumed.push((t, assumed));
                }
                match r {
                    Reading::Band => {
                        p.readings.push(("2h".into(), t));
                        let branch = if second { Branch::LFThen2h } else { Branch::FirstOrderHalfIs2h };
                        self.finished.push((branch, self.select.from_h(0.5 * t), p));
                    }
                    Reading::Isolated => {
                        p.readings.push(("lF".into(), t));
                        p.l_f = Some(t);
                        self.explore(i + 1, p);
                    }
                    Reading::HalfNegative => {
                        let lf = path.l_f.expect("second phase");
                        p.readings.push(("2hAlpha".into(), t));
                        self.finished.push((Branch::LFThen2hAlpha, self.select.from_lf_halpha(lf, 0.5 * t), p));
                    }
                    Reading::Skip => {
                        if !second && p.two_b.is_none() {
                            p.two_b = Some(t);
                            p.readings.push(("2b".into(), t));
                        }
                        self.explore(i + 1, p);
                    }
                }
            }
            return;
        }
        if let Some(lf) = path.l_f {
            let mut p = path;
            p.readings.push(("alpha=pi/2".into(), lf));
            self.finished.push((Branch::AlphaRightAngle, self.select.from_lf_halpha(lf, 0.5 * lf), p));
        }
    }
}

fn is_multiple(t: f64, unit: f64, tol: f64) -> bool {
    let m = (t / unit).round();
    m >= 1.0 && (t - m * unit).abs() <= tol
}

fn relative(got: f64, want: f64) -> f64 {
    (got - want) / want
}

/// Runs the decision procedure on a spectrum.
pub fn scan_and_reconstruct(s: &Spectrum, cfg: &ReconstructConfig) -> Result<ReconstructionReport, InverseError> {
    if s.count() < cfg.min_count {
        return Err(InverseError::InvalidInput(format!(
            "{} eigenvalues; at least {} are needed",
            s.count(),
            cfg.min_count
        )));
    }
    let inv = fit_invariants_widened(s, cfg.grid_size)?;
    let top = s.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let k_ref = cfg.k_ref_fraction * top;
    let sigma = cfg.sigma.unwrap_or_else(|| scan_sigma(k_ref));
    let mut report = ReconstructionReport {
        outcome: Outcome::Unique,
        trapezoid: None,
        branch: None,
        invariants: inv.clone(),
        sigma,
        k_ref,
        threshold: cfg.significance,
        candidates: Vec::new(),
        branches: Vec::new(),
        rejected: Vec::new(),
        config: cfg.clone(),
    };
    if (inv.q_estimate - RECTANGLE_Q).abs() < cfg.rectangle_tol {
        let t = reconstruct_rectangle_from(s, inv.area, cfg.fit_tolerance.0)?;
        report.branches.push(BranchResult {
            branch: Branch::Rectangle,
            trapezoid: t,
            readings: vec![("lambda1".into(), s.eigenvalues[0])],
            invariant_residuals: (
                relative(t.area(), inv.area),
                relative(t.perimeter(), inv.perimeter),
                relative(t.angle_invariant().q, inv.q_estimate),
            ),
            unmatched_peaks: Vec::new(),
            assumed: Vec::new(),
        });
        report.trapezoid = Some(t);
        report.branch = Some(Branch::Rectangle);
        return Ok(report);
    }

    let t_end = inv.perimeter;
    let mut scan = scan_peaks(s, (6.0 * sigma, t_end), sigma, k_ref, cfg.significance)?;
    let kw = (cfg.k_window.0 * top, cfg.k_window.1 * top);
    estimate_orders(s, &mut scan, kw);
    report.candidates = scan.candidates.clone();

    let observed: Vec<f64> = scan.candidates.iter().map(|c| c.t0).collect();
    let select = Selector { inv: &inv, observed: &observed, sigma, t_end, tol: cfg.fit_tolerance };
    let mut pipe = Pipeline { select, cands: &scan.candidates, sigma, finished: Vec::new() };
    pipe.explore(0, Path { l_f: None, two_b: None, readings: Vec::new(), assumed: Vec::new() });
    let finished = std::mem::take(&mut pipe.finished);

    for (branch, result, path) in finished {
        let name = format!("{branch:?} {:?}", path.readings);
        let t = match result {
            Ok(t) => t,
            Err(e) => {
                report.rejected.push((name, e.to_string()));
                continue;
            }
        };
        let res = (
            relative(t.area(), inv.area),
            relative(t.perimeter(), inv.perimeter),
            relative(t.angle_invariant().q, inv.q_estimate),
        );
        let (ta, tl, tq) = cfg.fit_tolerance;
        if res.0.abs() > ta || res.1.abs() > tl || res.2.abs() > tq {
            report.rejected.push((name, format!("invariant residuals {res:?}")));
            continue;
        }
        let unmatched = match length_spectrum(&t, t_end + 2.0 * sigma) {
            Ok(lines) => unmatched_peaks(&observed, &lines, 2.0 * sigma),
            Err(e) => {
                report.rejected.push((name, e.to_string()));
                continue;
            }
        };
        if !unmatched.is_empty() {
            report.rejected.push((name, format!("peaks {unmatched:?} have no orbit")));
            continue;
        }
        let duplicate = report.branches.iter().any(|b| {
            let r = &b.trapezoid;
            (r.base() - t.base()).abs() <= 1e-9 * t.base()
                && (r.height() - t.height()).abs() <= 1e-9 * t.height()
                && (r.alpha() - t.alpha()).abs() <= 1e-9
                && (r.beta() - t.beta()).abs() <= 1e-9
        });
        if !duplicate {
            report.branches.push(BranchResult {
                branch,
                trapezoid: t,
                readings: path.readings,
                invariant_residuals: res,
                unmatched_peaks: unmatched,
                assumed: path.assumed,
            });
        }
    }
    match report.branches.len() {
        0 => {
            let why: Vec<String> = report.rejected.iter().map(|(b, r)| format!("{b}: {r}")).collect();
            Err(InverseError::InvariantMismatch(why.join("; ")))
        }
        1 => {
            report.trapezoid = Some(report.branches[0].trapezoid);
            report.branch = Some(report.branches[0].branch);
            Ok(report)
        }
        _ => {
            report.outcome = Outcome::Ambiguous;
            Ok(report)
        }
    }
}

/// Observed times with no line of `lines` within `tol`.
pub fn unmatched_peaks(observed: &[f64], lines: &LengthSpectrum, tol: f64) -> Vec<f64> {
    observed
        .iter()
        .copied()
        .filter(|&t| lines.nearest(t).is_none_or(|l| (l.length - t).abs() > tol))
        .collect()
}
