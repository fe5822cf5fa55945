//! Billiard segments from a vertex to a vertex (generalized diagonals).
//!
//! Rays leaving vertex `V` are unfolded through successive copies of the
//! polygon. The directions still alive after `k` crossings form an angular
//! interval, and every vertex of the `k`-th copy inside that interval is the end
//! of a chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::search::{Frame, SearchConfig};
use super::{is_pi_over_n, BilliardError, UnfoldingIsometry, VERTEX_TOL};
use crate::geometry::{segment_distance, Polygon, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicalChain {
    pub start: usize,
    pub end: usize,
    /// Edges reflected off between the two vertices.
    pub word: Vec<usize>,
    pub length: f64,
    /// Unit direction leaving `start`.
    pub direction: Vec2,
    /// An endpoint angle is not of the form `pi/N`.
    pub diffractive: bool,
    /// The chain is the edge from `start` to `end`.
    pub on_boundary: bool,
}

impl ConicalChain {
    pub fn label(&self) -> String {
        let word: Vec<String> = self.word.iter().map(|e| e.to_string()).collect();
        if word.is_empty() {
            format!("v{}-v{}", self.start, self.end)
        } else {
            format!("v{}-{}-v{}", self.start, word.join("-"), self.end)
        }
    }

    fn key(&self) -> (usize, Vec<usize>, usize) {
        let fwd = (self.start, self.word.clone(), self.end);
        let rev = (self.end, self.word.iter().rev().copied().collect(), self.start);
        fwd.min(rev)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSearch {
    /// Sorted by length; a chain and its reversal appear once.
    pub chains: Vec<ConicalChain>,
    pub complete: bool,
    pub nodes: usize,
}

/// Vertex-to-vertex segments of length at most `lmax`, including the edges.
pub fn find_generalized_diagonals(p: &Polygon, lmax: f64) -> Result<ChainSearch, BilliardError> {
    find_generalized_diagonals_with(p, &SearchConfig::new(lmax))
}

pub fn find_generalized_diagonals_with(p: &Polygon, cfg: &SearchConfig) -> Result<ChainSearch, BilliardError> {
    cfg.validate()?;
    let n = p.len();
    let budget = (cfg.node_budget / n).max(1);
    let parts: Vec<ChainWalker> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut w = ChainWalker::new(p, v, cfg, budget);
            w.start();
            w
        })
        .collect();
    let complete = parts.iter().all(|w| !w.exhausted);
    let nodes = parts.iter().map(|w| w.nodes).sum();
    let angles = p.interior_angles();
    let diffractive = |a: usize, b: usize| !is_pi_over_n(angles[a]) || !is_pi_over_n(angles[b]);
    let mut chains: Vec<ConicalChain> = parts.into_iter().flat_map(|w| w.found).collect();
    for i in 0..n {
        let (a, b) = p.edge(i);
        if (b - a).norm() <= cfg.lmax * (1.0 + 1e-12) {
            chains.push(ConicalChain {
                start: i,
                end: (i + 1) % n,
                word: Vec::new(),
                length: (b - a).norm(),
                direction: (b - a).normalize(),
                diffractive: diffractive(i, (i + 1) % n),
                on_boundary: true,
            });
        }
    }
    let mut keyed: Vec<_> = chains.into_iter().map(|c| (c.key(), c.on_boundary, c)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    let mut chains: Vec<ConicalChain> = keyed.into_iter().map(|(_, _, c)| c).collect();
    chains.sort_by(|a, b| a.length.total_cmp(&b.length).then_with(|| a.key().cmp(&b.key())));
    Ok(ChainSearch { chains, complete, nodes })
}

struct ChainWalker<'a> {
    frame: Frame,
    angles: Vec<f64>,
    start_vertex: usize,
    cfg: &'a SearchConfig,
    scale: f64,
    budget: usize,
    nodes: usize,
    exhausted: bool,
    word: Vec<usize>,
    found: Vec<ConicalChain>,
}

impl<'a> ChainWalker<'a> {
    fn new(p: &'a Polygon, v: usize, cfg: &'a SearchConfig, budget: usize) -> Self {
        let n = p.len();
        let verts = p.vertices();
        let (prev, cur, next) = (verts[(v + n - 1) % n], verts[v], verts[(v + 1) % n]);
        let bis = ((next - cur).normalize() + (prev - cur).normalize()).normalize();
        let rot = nalgebra::Matrix2::new(bis.x, bis.y, -bis.y, bis.x);
        let frame = Frame::new(p, UnfoldingIsometry { linear: rot, translation: -(rot * cur), parity: 1 });
        ChainWalker {
            frame,
            angles: p.interior_angles(),
            start_vertex: v,
            cfg,
            scale: p.diameter(),
            budget,
            nodes: 0,
            exhausted: false,
            word: Vec::new(),
            found: Vec::new(),
        }
    }

    fn start(&mut self) {
        let half = 0.5 * self.angles[self.start_vertex];
        self.visit(&UnfoldingIsometry::identity(), (-half, half), None);
    }

    /// Explores the copy `g(P)` for directions in `(lo, hi)`, entered through `entry`.
    fn visit(&mut self, g: &UnfoldingIsometry, (lo, hi): (f64, f64), entry: Option<usize>) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let n = self.frame.verts.len();
        let v0 = self.start_vertex;
        let lmax = self.cfg.lmax * (1.0 + 1e-12);
        let skip = |j: usize| match entry {
            Some(e) => j == e || j == (e + 1) % n,
            None => j == v0 || j == (v0 + 1) % n || j == (v0 + n - 1) % n,
        };
        for j in 0..n {
            if skip(j) {
                continue;
            }
            let q = g.apply(&self.frame.verts[j]);
            let r = q.norm();
            if r > lmax {
                continue;
            }
            let phi = q.y.atan2(q.x);
            let tol = VERTEX_TOL * self.scale / r;
            if phi > lo + tol && phi < hi - tol {
                let end_diff = !is_pi_over_n(self.angles[j]) || !is_pi_over_n(self.angles[v0]);
                let back = self.frame.to.inverse();
                self.found.push(ConicalChain {
                    start: v0,
                    end: j,
                    word: self.word.clone(),
                    length: r,
                    direction: back.apply_vector(&(q / r)),
                    diffractive: end_diff,
                    on_boundary: false,
                });
            }
        }
        if self.word.len() >= self.cfg.period_max {
            return;
        }
        let mid = 0.5 * (lo + hi);
        for e in 0..n {
            if self.exhausted {
                return;
            }
            let is_entry = entry == Some(e);
            let at_start = entry.is_none() && (e == v0 || (e + 1) % n == v0);
            if is_entry || at_start {
                continue;
            }
            let a = g.apply(&self.frame.verts[e]);
            let b = g.apply(&self.frame.verts[(e + 1) % n]);
            if segment_distance(&Vec2::zeros(), &a, &b) > lmax {
                continue;
            }
            let Some((s, t)) = arc(a, b, mid) else { continue };
            let (nlo, nhi) = (s.max(lo), t.min(hi));
            if nhi - nlo <= VERTEX_TOL * self.scale / self.cfg.lmax {
                continue;
            }
            self.word.push(e);
            let next = g.after(&self.frame.reflections[e]);
            self.visit(&next, (nlo, nhi), Some(e));
            self.word.pop();
        }
    }
}

/// Directions from the origin that hit segment `ab`, as an interval of angles
/// measured near `mid`; `None` when the segment lies behind.
fn arc(a: Vec2, b: Vec2, mid: f64) -> Option<(f64, f64)> {
    let rel = |p: Vec2| {
        let (s, c) = mid.sin_cos();
        let x = c * p.x + s * p.y;
        let y = -s * p.x + c * p.y;
        y.atan2(x)
    };
    let (ra, rb) = (rel(a), rel(b));
    let (lo, hi) = (ra.min(rb), ra.max(rb));
    if hi - lo >= std::f64::consts::PI {
        return None;
    }
    Some((lo + mid, hi + mid))
}
