//! Closed billiard trajectories in convex polygons by unfolding.
//!
//! A trajectory that leaves edge `w0` and then reflects off `w1, ..., w(n-1)`
//! is a straight line through the chain of copies `g_k(P)`, where
//! `g_k = s(w0) s(w1) ... s(w(k-1))` and `s(e)` reflects across edge `e`. The
//! line closes when `g_n` maps it onto itself: `g_n` is a translation for even
//! `n`, giving a band of parallel orbits, and a glide reflection for odd `n`,
//! giving an isolated orbit along the glide axis.
//!
//! Edges are numbered as in [`Polygon::edge`]; for a trapezoid `0` is the base,
//! `1` the right leg, `2` the top and `3` the left leg.

mod diagonals;
mod map;
mod search;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrbitCatalog, Polygon, Trapezoid, Vec2};

pub use diagonals::{find_generalized_diagonals, find_generalized_diagonals_with, ChainSearch, ConicalChain};
pub use map::{billiard_map, poincare_map, render_svg, trace_orbit, BounceState, PoincareData};
pub use search::{enumerate_orbits, enumerate_orbits_with, OrbitSearch, SearchConfig};

/// Longest reflection word explored.
pub const PERIOD_CAP: usize = 24;

/// Word-tree nodes visited before a search gives up.
pub const DEFAULT_NODE_BUDGET: usize = 4_000_000;

/// Relative tolerance under which two lengths are the same spectrum line.
pub const MERGE_TOL: f64 = 1e-9;

/// A segment meets a vertex when closer than this fraction of the diameter.
pub const VERTEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BilliardError {
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("search budget exhausted after {nodes} nodes")]
    BudgetExceeded { nodes: usize },
    #[error("one-sided difference quotients disagree by {0:.3e}")]
    DerivativeInstability(f64),
    #[error("trajectory meets a vertex")]
    VertexHit,
}

/// An isometry `x -> L x + t` of the plane produced by reflections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldingIsometry {
    /// Orthogonal linear part.
    pub linear: Matrix2<f64>,
    pub translation: Vec2,
    /// `(-1)^(number of reflections)`.
    pub parity: i8,
}

impl UnfoldingIsometry {
    pub fn identity() -> Self {
        UnfoldingIsometry { linear: Matrix2::identity(), translation: Vec2::zeros(), parity: 1 }
    }

    /// Reflection across the line through `a` and `b`.
    pub fn reflection(a: Vec2, b: Vec2) -> Self {
        let u = (b - a).normalize();
        let linear = Matrix2::new(2.0 * u.x * u.x - 1.0, 2.0 * u.x * u.y, 2.0 * u.x * u.y, 2.0 * u.y * u.y - 1.0);
        UnfoldingIsometry { linear, translation: a - linear * a, parity: -1 }
    }

    pub fn apply(&self, p: &Vec2) -> Vec2 {
        self.linear * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec2) -> Vec2 {
        self.linear * v
    }

    /// `x -> self(other(x))`.
    pub fn after(&self, other: &UnfoldingIsometry) -> UnfoldingIsometry {
        UnfoldingIsometry {
            linear: self.linear * other.linear,
            translation: self.linear * other.translation + self.translation,
            parity: self.parity * other.parity,
        }
    }

    pub fn inverse(&self) -> UnfoldingIsometry {
        let lt = self.linear.transpose();
        UnfoldingIsometry { linear: lt, translation: -(lt * self.translation), parity: self.parity }
    }
}

/// The reflections of `word` applied in order, first `word[0]`.
pub fn compose_word(p: &Polygon, word: &[usize]) -> Result<UnfoldingIsometry, BilliardError> {
    validate_word(p, word)?;
    Ok(word.iter().fold(UnfoldingIsometry::identity(), |acc, &e| {
        let (a, b) = p.edge(e);
        UnfoldingIsometry::reflection(a, b).after(&acc)
    }))
}

fn validate_word(p: &Polygon, word: &[usize]) -> Result<(), BilliardError> {
    if word.is_empty() {
        return Err(BilliardError::InvalidWord("empty word".into()));
    }
    if let Some(&e) = word.iter().find(|&&e| e >= p.len()) {
        return Err(BilliardError::InvalidWord(format!("edge {e} does not exist")));
    }
    if word.windows(2).any(|w| w[0] == w[1]) {
        return Err(BilliardError::InvalidWord("consecutive entries repeat an edge".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum OrbitKind {
    Band {
        translation: Vec2,
        /// Distance between the two boundary orbits.
        width: f64,
        swept_area: f64,
    },
    Isolated {
        axis_point: Vec2,
        axis_direction: Vec2,
    },
}

/// A closed billiard trajectory that avoids vertices, or an isolated one that
/// meets one (`conical`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedGeodesic {
    /// Edges in reflection order.
    pub word: Vec<usize>,
    pub length: f64,
    pub kind: OrbitKind,
    pub conical: bool,
    pub diffractive: bool,
    pub period_parity: Parity,
    /// A point of the orbit on edge `word[0]` (mid-band for bands).
    pub basepoint: Vec2,
    /// Direction of travel leaving the basepoint.
    pub direction: Vec2,
    /// `k` when the word is the `k`-th power of a shorter word.
    pub multiple: u32,
}

impl ClosedGeodesic {
    pub fn period(&self) -> usize {
        self.word.len()
    }

    pub fn is_band(&self) -> bool {
        matches!(self.kind, OrbitKind::Band { .. })
    }

    pub fn label(&self) -> String {
        let kind = if self.is_band() { "band" } else { "isolated" };
        let word: Vec<String> = self.word.iter().map(|e| e.to_string()).collect();
        format!("{kind}:{}", word.join("-"))
    }
}

/// Least rotation of the word or of its reversal.
pub(crate) fn canonical_word(word: &[usize]) -> Vec<usize> {
    let n = word.len();
    let mut best: Option<Vec<usize>> = None;
    let rev: Vec<usize> = word.iter().rev().copied().collect();
    for w in [word, rev.as_slice()] {
        for r in 0..n {
            let cand: Vec<usize> = w[r..].iter().chain(&w[..r]).copied().collect();
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or_default()
}

/// Largest `k` with `word = u^k`.
pub(crate) fn word_power(word: &[usize]) -> u32 {
    let n = word.len();
    (1..=n)
        .find(|&p| n.is_multiple_of(p) && (p..n).all(|i| word[i] == word[i - p]))
        .map_or(1, |p| (n / p) as u32)
}

/// `theta = pi / N` for an integer `N >= 2`.
pub fn is_pi_over_n(theta: f64) -> bool {
    let n = (PI / theta).round();
    n >= 2.0 && (n * theta - PI).abs() <= 1e-9
}

/// A trajectory into this corner can come straight back: the angle is
/// diffractive or `pi/N` with `N` even.
fn reverses(theta: f64) -> bool {
    let n = (PI / theta).round();
    !is_pi_over_n(theta) || n as i64 % 2 == 0
}

/// One length of the spectrum with the orbits realizing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub length: f64,
    pub labels: Vec<String>,
    /// Some orbit of this length avoids every vertex.
    pub regular: bool,
    /// Some orbit of this length meets a diffractive vertex.
    pub diffractive: bool,
}

/// Sorted, merged lengths of closed geodesics up to a cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSpectrum {
    pub lines: Vec<SpectrumLine>,
    pub merge_tol: f64,
    pub lmax: f64,
    /// False when a search stopped on its budget.
    pub complete: bool,
}

struct Source {
    length: f64,
    label: String,
    regular: bool,
    diffractive: bool,
}

impl LengthSpectrum {
    /// Merges enumerated orbits and closed conical orbits built from chains.
    ///
    /// A chain from a vertex back to itself closes with its own length; any
    /// other chain closes by retracing itself when both of its corners send a
    /// trajectory straight back. Boundary edges whose end angles are both at
    /// least `pi/2` carry the bouncing orbits along that edge. Multiples up to
    /// `lmax` are included throughout.
    pub fn build(p: &Polygon, orbits: &OrbitSearch, chains: &ChainSearch, lmax: f64) -> LengthSpectrum {
        let angles = p.interior_angles();
        let mut sources: Vec<Source> = orbits
            .orbits
            .iter()
            .filter(|o| o.length <= lmax * (1.0 + MERGE_TOL))
            .map(|o| Source { length: o.length, label: o.label(), regular: !o.conical, diffractive: o.diffractive })
            .collect();
        for c in &chains.chains {
            let (closed, label) = if c.on_boundary {
                let n = p.len();
                let open = angles[c.start] >= FRAC_PI_2 - 1e-12 && angles[c.end % n] >= FRAC_PI_2 - 1e-12;
                if !open {
                    continue;
                }
                (2.0 * c.length, format!("edge:{}", c.start))
            } else if c.start == c.end && !c.word.is_empty() {
                (c.length, format!("loop:{}", c.label()))
            } else {
                if !reverses(angles[c.start]) || !reverses(angles[c.end]) {
                    continue;
                }
                (2.0 * c.length, format!("retrace:{}", c.label()))
            };
            let mut m = 1;
            while m as f64 * closed <= lmax * (1.0 + MERGE_TOL) {
                let label = if m == 1 { label.clone() } else { format!("{label}x{m}") };
                sources.push(Source { length: m as f64 * closed, label, regular: false, diffractive: c.diffractive });
                m += 1;
            }
        }
        sources.sort_by(|a, b| a.length.total_cmp(&b.length).then_with(|| a.label.cmp(&b.label)));
        let mut lines: Vec<SpectrumLine> = Vec::new();
        for s in sources {
            match lines.last_mut() {
                Some(l) if (s.length - l.length).abs() <= MERGE_TOL * l.length.max(1.0) => {
                    if !l.labels.contains(&s.label) {
                        l.labels.push(s.label);
                    }
                    l.regular |= s.regular;
                    l.diffractive |= s.diffractive;
                }
                _ => lines.push(SpectrumLine {
                    length: s.length,
                    labels: vec![s.label],
                    regular: s.regular,
                    diffractive: s.diffractive,
                }),
            }
        }
        LengthSpectrum { lines, merge_tol: MERGE_TOL, lmax, complete: orbits.complete && chains.complete }
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.length).collect()
    }

    /// The line closest to `length`.
    pub fn nearest(&self, length: f64) -> Option<&SpectrumLine> {
        self.lines.iter().min_by(|a, b| (a.length - length).abs().total_cmp(&(b.length - length).abs()))
    }

    pub fn contains(&self, length: f64, rel_tol: f64) -> bool {
        self.nearest(length).is_some_and(|l| (l.length - length).abs() <= rel_tol * length.max(1.0))
    }

    /// Smallest distance between consecutive lines.
    pub fn min_gap(&self) -> Option<f64> {
        self.lines.windows(2).map(|w| w[1].length - w[0].length).min_by(f64::total_cmp)
    }

    /// Adds the trapezoid catalog labels (`2h`, `2b`, `lF`, ...) to matching lines.
    pub fn label_catalog(&mut self, t: &Trapezoid) {
        let catalog = OrbitCatalog::new(t);
        for e in catalog.entries(self.lmax) {
            let Some(len) = e.length else { continue };
            if !e.exists_inside {
                continue;
            }
            let tag = if e.multiple > 1 { format!("{}[m={}]", e.label, e.multiple) } else { e.label.clone() };
            if let Some(line) = self
                .lines
                .iter_mut()
                .find(|l| (l.length - len).abs() <= 10.0 * MERGE_TOL * len.max(1.0))
            {
                if !line.labels.contains(&tag) {
                    line.labels.insert(0, tag);
                }
            }
        }
    }
}

/// Length spectrum of a trapezoid up to `lmax`, with catalog labels.
pub fn length_spectrum(t: &Trapezoid, lmax: f64) -> Result<LengthSpectrum, BilliardError> {
    let cfg = SearchConfig::new(lmax);
    let spec = polygon_length_spectrum(&t.vertices(), &cfg)?;
    if !spec.complete {
        return Err(BilliardError::BudgetExceeded { nodes: cfg.node_budget });
    }
    let mut spec = spec;
    spec.label_catalog(t);
    Ok(spec)
}

/// Length spectrum of a convex polygon; incomplete searches are flagged, not errors.
pub fn polygon_length_spectrum(p: &Polygon, cfg: &SearchConfig) -> Result<LengthSpectrum, BilliardError> {
    let orbits = enumerate_orbits_with(p, cfg)?;
    let chains = find_generalized_diagonals_with(p, cfg)?;
    Ok(LengthSpectrum::build(p, &orbits, &chains, cfg.lmax))
}

/// The shortest closed geodesic of `t` with its label.
pub fn shortest_orbit(t: &Trapezoid, lcap: f64) -> Result<(f64, String), BilliardError> {
    let floor = (2.0 * t.height()).min(2.0 * t.top());
    if !(lcap >= floor * (1.0 - 1e-12)) {
        return Err(BilliardError::InvalidInput(format!("cap {lcap} is below min(2h, 2b) = {floor}")));
    }
    let spec = length_spectrum(t, lcap.max(floor) * (1.0 + 1e-9))?;
    let first = spec.lines.first().ok_or_else(|| BilliardError::InvalidInput("no closed geodesic below the cap".into()))?;
    Ok((first.length, first.labels[0].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_3;

    fn square() -> Polygon {
        Trapezoid::rectangle(1.0, 1.0).unwrap().vertices()
    }

    #[test]
    fn word_composition() {
        let sq = square();
        let g = compose_word(&sq, &[0, 2]).unwrap();
        assert!((g.linear - Matrix2::identity()).norm() < 1e-15);
        assert!((g.translation - Vec2::new(0.0, 2.0)).norm() < 1e-15);
        assert!(compose_word(&sq, &[0, 0]).is_err());
        assert!(compose_word(&sq, &[]).is_err());
        let t = Trapezoid::new(2.0, 0.7, 1.1, 0.9).unwrap().vertices();
        for w in [vec![0], vec![0, 1, 3], vec![1, 2, 3, 0, 2]] {
            let g = compose_word(&t, &w).unwrap();
            assert_eq!(g.parity, -1);
            assert!((g.linear.determinant() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_words_and_powers() {
        assert_eq!(canonical_word(&[2, 0, 1]), vec![0, 1, 2]);
        assert_eq!(canonical_word(&[1, 0, 2]), vec![0, 1, 2]);
        assert_eq!(word_power(&[0, 2, 0, 2]), 2);
        assert_eq!(word_power(&[0, 1, 3, 0, 1, 3]), 2);
        assert_eq!(word_power(&[0, 1, 3]), 1);
        assert!(is_pi_over_n(FRAC_PI_2) && is_pi_over_n(FRAC_PI_3));
        assert!(!is_pi_over_n(1.2));
    }

    #[test]
    fn square_spectrum_matches_lattice() {
        let spec = polygon_length_spectrum(&square(), &SearchConfig::new(5.0)).unwrap();
        assert!(spec.complete);
        let mut want: Vec<f64> = Vec::new();
        for p in 0..=3i32 {
            for q in 0..=3i32 {
                let l = 2.0 * ((p * p + q * q) as f64).sqrt();
                if (p, q) != (0, 0) && l <= 5.0 && !want.iter().any(|w| (w - l).abs() < 1e-9) {
                    want.push(l);
                }
            }
        }
        want.sort_by(f64::total_cmp);
        let got = spec.lengths();
        assert_eq!(got.len(), want.len(), "{got:?}");
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
        assert!(spec.lines.iter().all(|l| !l.diffractive));
    }

    #[test]
    fn shortest_orbit_cases() {
        let thin = Trapezoid::new(2.0, 0.3, FRAC_PI_3, FRAC_PI_3).unwrap();
        let (l, label) = shortest_orbit(&thin, 4.0).unwrap();
        assert!((l - 0.6).abs() < 1e-12, "{l} {label}");
        assert_eq!(label, "2h");
        let tall = Trapezoid::new(2.0, 1.2, FRAC_PI_3, FRAC_PI_3).unwrap();
        let (l, label) = shortest_orbit(&tall, 4.0).unwrap();
        assert!((l - 2.0 * tall.top()).abs() < 1e-12, "{l} {label}");
        assert_eq!(label, "2b");
        assert!(shortest_orbit(&tall, 0.1).is_err());
    }

    #[test]
    fn catalog_lengths_present() {
        let t = Trapezoid::new(2.0, 1.2, FRAC_PI_3, FRAC_PI_3).unwrap();
        let spec = length_spectrum(&t, 3.5).unwrap();
        for l in [2.4, 3.0, 2.0 * t.top(), 2.0 * 2.0 * FRAC_PI_3.sin()] {
            assert!(spec.contains(l, 1e-9), "{l} missing from {:?}", spec.lengths());
        }
        let fag = spec.nearest(3.0).unwrap();
        assert!(fag.labels.iter().any(|s| s == "lF"));
        assert!(spec.min_gap().unwrap() > MERGE_TOL);
    }
}
