//! Depth-first search over reflection words.
//!
//! The search starts on edge `e`, in a frame where `e` lies on the `y` axis
//! with the polygon on the left. Trajectories leaving through `e` are the lines
//! `y = m x + c`, and crossing an unfolded edge with one endpoint on each side
//! is a pair of linear inequalities in `(m, c)`. The set of lines that cross
//! every edge of the word so far is therefore a convex polygon, the corridor.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    canonical_word, is_pi_over_n, word_power, BilliardError, ClosedGeodesic, OrbitKind, Parity, UnfoldingIsometry,
    DEFAULT_NODE_BUDGET, PERIOD_CAP, VERTEX_TOL,
};
use crate::geometry::{segment_distance, Polygon, Vec2};

/// Lines steeper than this against the starting edge's normal are skipped;
/// every closed orbit meets some edge of its word within 89.7 degrees of the normal.
const SLOPE_BOUND: f64 = 200.0;

/// Corridors thinner than this (in `(m, c)` area, relative to the diameter) are dropped.
const AREA_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub lmax: f64,
    pub period_max: usize,
    pub node_budget: usize,
}

impl SearchConfig {
    pub fn new(lmax: f64) -> Self {
        SearchConfig { lmax, period_max: PERIOD_CAP, node_budget: DEFAULT_NODE_BUDGET }
    }

    pub(crate) fn validate(&self) -> Result<(), BilliardError> {
        if !(self.lmax > 0.0 && self.lmax.is_finite()) {
            return Err(BilliardError::InvalidInput(format!("length cap {} is not positive", self.lmax)));
        }
        if self.period_max == 0 || self.period_max > PERIOD_CAP {
            return Err(BilliardError::InvalidInput(format!(
                "period cap {} outside 1..={PERIOD_CAP}",
                self.period_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSearch {
    /// Sorted by length, then by canonical word; one entry per orbit class.
    pub orbits: Vec<ClosedGeodesic>,
    pub complete: bool,
    pub nodes: usize,
}

/// Closed non-conical orbits (and isolated conical ones) up to `lmax`.
pub fn enumerate_orbits(p: &Polygon, lmax: f64, period_max: usize) -> Result<OrbitSearch, BilliardError> {
    enumerate_orbits_with(p, &SearchConfig { period_max, ..SearchConfig::new(lmax) })
}

pub fn enumerate_orbits_with(p: &Polygon, cfg: &SearchConfig) -> Result<OrbitSearch, BilliardError> {
    cfg.validate()?;
    let n = p.len();
    let budget = (cfg.node_budget / n).max(1);
    let parts: Vec<Walker> = (0..n)
        .into_par_iter()
        .map(|e| {
            let mut w = Walker::new(p, e, cfg, budget);
            w.start();
            w
        })
        .collect();
    let complete = parts.iter().all(|w| !w.exhausted);
    let nodes = parts.iter().map(|w| w.nodes).sum();
    let mut all: Vec<(Vec<usize>, ClosedGeodesic)> =
        parts.into_iter().flat_map(|w| w.found).map(|o| (canonical_word(&o.word), o)).collect();
    all.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.word.cmp(&b.1.word)));
    all.dedup_by(|a, b| a.0 == b.0);
    all.sort_by(|a, b| a.1.length.total_cmp(&b.1.length).then_with(|| a.0.cmp(&b.0)));
    Ok(OrbitSearch { orbits: all.into_iter().map(|(_, o)| o).collect(), complete, nodes })
}

/// The polygon in the frame of one starting edge.
pub(crate) struct Frame {
    /// Rigid motion from polygon to frame coordinates.
    pub to: UnfoldingIsometry,
    pub verts: Vec<Vec2>,
    pub normals: Vec<Vec2>,
    pub reflections: Vec<UnfoldingIsometry>,
}

impl Frame {
    pub fn new(p: &Polygon, to: UnfoldingIsometry) -> Frame {
        let verts: Vec<Vec2> = p.vertices().iter().map(|v| to.apply(v)).collect();
        let n = verts.len();
        let normals = (0..n)
            .map(|i| {
                let e = verts[(i + 1) % n] - verts[i];
                Vec2::new(e.y, -e.x).normalize()
            })
            .collect();
        let reflections = (0..n).map(|i| UnfoldingIsometry::reflection(verts[i], verts[(i + 1) % n])).collect();
        Frame { to, verts, normals, reflections }
    }

    /// Frame in which edge `e` runs up the `y` axis from the origin.
    fn for_edge(p: &Polygon, e: usize) -> Frame {
        let (a, b) = p.edge(e);
        let u = (b - a).normalize();
        let nrm = Vec2::new(u.y, -u.x);
        let rot = Matrix2::new(nrm.x, nrm.y, -nrm.y, nrm.x);
        Frame::new(p, UnfoldingIsometry { linear: rot, translation: -(rot * a), parity: 1 })
    }
}

/// `a m + b c <= r`, tight when the line passes through `vertex`.
#[derive(Clone, Copy)]
struct Constraint {
    a: f64,
    b: f64,
    r: f64,
    vertex: usize,
}

struct Walker<'a> {
    poly: &'a Polygon,
    frame: Frame,
    angles: Vec<f64>,
    cfg: &'a SearchConfig,
    scale: f64,
    budget: usize,
    nodes: usize,
    exhausted: bool,
    found: Vec<ClosedGeodesic>,
    word: Vec<usize>,
    constraints: Vec<Constraint>,
    start_edge: (Vec2, Vec2),
}

impl<'a> Walker<'a> {
    fn new(poly: &'a Polygon, e: usize, cfg: &'a SearchConfig, budget: usize) -> Self {
        let frame = Frame::for_edge(poly, e);
        let n = poly.len();
        let start_edge = (frame.verts[e], frame.verts[(e + 1) % n]);
        Walker {
            poly,
            frame,
            angles: poly.interior_angles(),
            cfg,
            scale: poly.diameter(),
            budget,
            nodes: 0,
            exhausted: false,
            found: Vec::new(),
            word: vec![e],
            constraints: Vec::new(),
            start_edge,
        }
    }

    fn start(&mut self) {
        let e = self.word[0];
        let n = self.poly.len();
        let len = self.start_edge.1.y;
        self.constraints.push(Constraint { a: 0.0, b: 1.0, r: len, vertex: (e + 1) % n });
        self.constraints.push(Constraint { a: 0.0, b: -1.0, r: 0.0, vertex: e });
        let box_ = vec![[-SLOPE_BOUND, 0.0], [SLOPE_BOUND, 0.0], [SLOPE_BOUND, len], [-SLOPE_BOUND, len]];
        let g = self.frame.reflections[e];
        self.visit(&g, box_);
    }

    fn visit(&mut self, g: &UnfoldingIsometry, corridor: Vec<[f64; 2]>) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let k = self.word.len();
        if k >= 2 && self.word[k - 1] != self.word[0] {
            self.close(g);
        }
        if k >= self.cfg.period_max {
            return;
        }
        let n = self.poly.len();
        let last = self.word[k - 1];
        for e in 0..n {
            if e == last || self.exhausted {
                continue;
            }
            let (a, b) = (g.apply(&self.frame.verts[e]), g.apply(&self.frame.verts[(e + 1) % n]));
            let normal = g.apply_vector(&self.frame.normals[e]);
            // `q` must end up left of the direction of travel, `p` right.
            let (p, q, vp, vq) = if Vec2::new((b - a).y, -(b - a).x).dot(&normal) > 0.0 {
                (a, b, e, (e + 1) % n)
            } else {
                (b, a, (e + 1) % n, e)
            };
            if segments_distance(self.start_edge, (a, b)) > self.cfg.lmax * (1.0 + 1e-12) {
                continue;
            }
            let left = Constraint { a: q.x, b: 1.0, r: q.y, vertex: vq };
            let right = Constraint { a: -p.x, b: -1.0, r: -p.y, vertex: vp };
            let clipped = clip(&clip(&corridor, &left), &right);
            if clipped.len() < 3 || polygon_area(&clipped) <= AREA_TOL * self.scale {
                continue;
            }
            self.constraints.push(left);
            self.constraints.push(right);
            self.word.push(e);
            let next = g.after(&self.frame.reflections[e]);
            self.visit(&next, clipped);
            self.word.pop();
            self.constraints.truncate(self.constraints.len() - 2);
        }
    }

    /// Tests whether the current word closes into an orbit.
    fn close(&mut self, g: &UnfoldingIsometry) {
        let tol = VERTEX_TOL * self.scale;
        let lmax = self.cfg.lmax * (1.0 + 1e-12);
        if g.parity > 0 {
            if (g.linear - Matrix2::identity()).norm() > 1e-9 {
                return;
            }
            let tau = g.translation;
            let len = tau.norm();
            if tau.x <= 1e-12 * self.scale || len > lmax {
                return;
            }
            let m = tau.y / tau.x;
            if m.abs() > SLOPE_BOUND {
                return;
            }
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for c in &self.constraints {
                if c.b > 0.0 {
                    hi = hi.min(c.r - c.a * m);
                } else {
                    lo = lo.max(c.a * m - c.r);
                }
            }
            let secant = (1.0 + m * m).sqrt();
            let width = (hi - lo) / secant;
            if width <= tol {
                return;
            }
            let kind = OrbitKind::Band {
                translation: self.frame.to.inverse().apply_vector(&tau),
                width,
                swept_area: width * len,
            };
            self.push(m, 0.5 * (lo + hi), len, kind, false, false);
        } else {
            let r = g.linear;
            let a1 = Vec2::new(r[(0, 0)] + 1.0, r[(1, 0)]);
            let a2 = Vec2::new(r[(0, 1)], r[(1, 1)] + 1.0);
            let axis = if a1.norm() >= a2.norm() { a1.normalize() } else { a2.normalize() };
            let t = g.translation;
            let glide = t.dot(&axis);
            let d = axis * glide.signum();
            let len = glide.abs();
            if len <= 1e-12 * self.scale || d.x <= 1e-12 || len > lmax {
                return;
            }
            let m = d.y / d.x;
            if m.abs() > SLOPE_BOUND {
                return;
            }
            let na = Vec2::new(-axis.y, axis.x);
            let c = t.dot(&na) / (2.0 * na.y);
            let secant = (1.0 + m * m).sqrt();
            let (slack, vertex) = self
                .constraints
                .iter()
                .map(|k| ((k.r - k.a * m - k.b * c) / secant, k.vertex))
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .unwrap_or((f64::INFINITY, 0));
            if slack < -tol {
                return;
            }
            let conical = slack <= tol;
            let diffractive = conical && !is_pi_over_n(self.angles[vertex]);
            let back = self.frame.to.inverse();
            let kind = OrbitKind::Isolated {
                axis_point: back.apply(&Vec2::new(0.0, c)),
                axis_direction: back.apply_vector(&Vec2::new(1.0, m).normalize()),
            };
            self.push(m, c, len, kind, conical, diffractive);
        }
    }

    fn push(&mut self, m: f64, c: f64, length: f64, kind: OrbitKind, conical: bool, diffractive: bool) {
        let back = self.frame.to.inverse();
        let basepoint = back.apply(&Vec2::new(0.0, c));
        let incoming = back.apply_vector(&Vec2::new(1.0, m).normalize());
        let (a, b) = self.poly.edge(self.word[0]);
        let u = (b - a).normalize();
        let nrm = Vec2::new(u.y, -u.x);
        let direction = incoming - nrm * (2.0 * incoming.dot(&nrm));
        let period_parity = if self.word.len().is_multiple_of(2) { Parity::Even } else { Parity::Odd };
        self.found.push(ClosedGeodesic {
            word: self.word.clone(),
            length,
            kind,
            conical,
            diffractive,
            period_parity,
            basepoint,
            direction,
            multiple: word_power(&self.word),
        });
    }
}

/// Sutherland-Hodgman step against `a m + b c <= r`.
fn clip(poly: &[[f64; 2]], k: &Constraint) -> Vec<[f64; 2]> {
    let f = |p: &[f64; 2]| k.r - k.a * p[0] - k.b * p[1];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fp, fq) = (f(&p), f(&q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let s = fp / (fp - fq);
            out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        .abs()
}

pub(crate) fn segments_distance(s: (Vec2, Vec2), t: (Vec2, Vec2)) -> f64 {
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).perp(&(b - o));
    let d1 = cross(s.0, s.1, t.0);
    let d2 = cross(s.0, s.1, t.1);
    let d3 = cross(t.0, t.1, s.0);
    let d4 = cross(t.0, t.1, s.1);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    segment_distance(&s.0, &t.0, &t.1)
        .min(segment_distance(&s.1, &t.0, &t.1))
        .min(segment_distance(&t.0, &s.0, &s.1))
        .min(segment_distance(&t.1, &s.0, &s.1))
}
