//! The billiard map and the linearized return map of a closed orbit.

use std::fmt::Write as _;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::{BilliardError, ClosedGeodesic, VERTEX_TOL};
use crate::geometry::{Polygon, Vec2};

/// A point on edge `edge` at arc length `s` from its first vertex, leaving in
/// direction `cos(theta) n + sin(theta) t` with `n` the inward normal and `t`
/// the edge direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BounceState {
    pub edge: usize,
    pub s: f64,
    pub theta: f64,
}

impl BounceState {
    pub fn point(&self, p: &Polygon) -> Vec2 {
        let (a, b) = p.edge(self.edge);
        a + (b - a).normalize() * self.s
    }

    pub fn direction(&self, p: &Polygon) -> Vec2 {
        let (t, n) = edge_frame(p, self.edge);
        n * self.theta.cos() + t * self.theta.sin()
    }

    /// State on `edge` at `point` leaving along `dir`.
    pub fn from_ray(p: &Polygon, edge: usize, point: Vec2, dir: Vec2) -> BounceState {
        let (a, _) = p.edge(edge);
        let (t, n) = edge_frame(p, edge);
        let d = dir.normalize();
        BounceState { edge, s: (point - a).dot(&t), theta: d.dot(&t).atan2(d.dot(&n)) }
    }
}

fn edge_frame(p: &Polygon, e: usize) -> (Vec2, Vec2) {
    let (a, b) = p.edge(e);
    let t = (b - a).normalize();
    (t, Vec2::new(-t.y, t.x))
}

/// Next bounce after `state`.
pub fn billiard_map(p: &Polygon, state: &BounceState) -> Result<BounceState, BilliardError> {
    if state.edge >= p.len() || !state.s.is_finite() || !state.theta.is_finite() {
        return Err(BilliardError::InvalidInput(format!("bad state {state:?}")));
    }
    if state.theta.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(BilliardError::InvalidInput("direction does not point inside".into()));
    }
    let x = state.point(p);
    let d = state.direction(p);
    let tol = VERTEX_TOL * p.diameter();
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..p.len() {
        if j == state.edge {
            continue;
        }
        let (a, b) = p.edge(j);
        let e = b - a;
        let den = d.perp(&e);
        if den.abs() < 1e-300 {
            continue;
        }
        let w = a - x;
        let t = w.perp(&e) / den;
        let u = w.perp(&d) / den;
        let len = e.norm();
        if t > tol && u * len >= -tol && (1.0 - u) * len >= -tol && best.is_none_or(|(bt, _, _)| t < bt) {
            best = Some((t, j, u));
        }
    }
    let (t, j, u) = best.ok_or(BilliardError::VertexHit)?;
    let len = p.edge_length(j);
    if u * len <= tol || (1.0 - u) * len <= tol {
        return Err(BilliardError::VertexHit);
    }
    let hit = x + d * t;
    let (_, n) = edge_frame(p, j);
    let out = d - n * (2.0 * d.dot(&n));
    Ok(BounceState::from_ray(p, j, hit, out))
}

/// Bounces of one period of `orbit`, starting on `word[0]`; the last state
/// returns to `word[0]`.
pub fn trace_orbit(p: &Polygon, orbit: &ClosedGeodesic) -> Result<Vec<BounceState>, BilliardError> {
    let start = BounceState::from_ray(p, orbit.word[0], orbit.basepoint, orbit.direction);
    iterate(p, &start, &orbit.word)
}

fn iterate(p: &Polygon, start: &BounceState, word: &[usize]) -> Result<Vec<BounceState>, BilliardError> {
    let mut out = Vec::with_capacity(word.len() + 1);
    out.push(*start);
    let mut s = *start;
    for k in 0..word.len() {
        s = billiard_map(p, &s)?;
        if s.edge != word[(k + 1) % word.len()] {
            return Err(BilliardError::VertexHit);
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareData {
    /// Jacobian of the return map in `(s, theta)`.
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
    pub det_i_minus_p: f64,
}

/// Linearized return map by central differences.
pub fn poincare_map(p: &Polygon, orbit: &ClosedGeodesic) -> Result<PoincareData, BilliardError> {
    let start = BounceState::from_ray(p, orbit.word[0], orbit.basepoint, orbit.direction);
    let ret = |s: f64, th: f64| -> Result<(f64, f64), BilliardError> {
        let st = BounceState { edge: start.edge, s, theta: th };
        let last = *iterate(p, &st, &orbit.word)?.last().unwrap();
        Ok((last.s, last.theta))
    };
    let f0 = ret(start.s, start.theta)?;
    let steps = [1e-6 * p.diameter(), 1e-6];
    let mut m = Matrix2::zeros();
    for (col, h) in steps.into_iter().enumerate() {
        let shift = |sign: f64| {
            if col == 0 {
                ret(start.s + sign * h, start.theta)
            } else {
                ret(start.s, start.theta + sign * h)
            }
        };
        let (fp, fm) = (shift(1.0)?, shift(-1.0)?);
        let fwd = [(fp.0 - f0.0) / h, (fp.1 - f0.1) / h];
        let bwd = [(f0.0 - fm.0) / h, (f0.1 - fm.1) / h];
        let scale = fwd.iter().chain(&bwd).fold(1.0f64, |m, v| m.max(v.abs()));
        let gap = (fwd[0] - bwd[0]).abs().max((fwd[1] - bwd[1]).abs()) / scale;
        if gap > 1e-3 {
            return Err(BilliardError::DerivativeInstability(gap));
        }
        m[(0, col)] = 0.5 * (fwd[0] + bwd[0]);
        m[(1, col)] = 0.5 * (fwd[1] + bwd[1]);
    }
    Ok(PoincareData {
        matrix: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
        det: m.determinant(),
        det_i_minus_p: (Matrix2::identity() - m).determinant(),
    })
}

/// SVG drawing of the polygon with the orbits that can be traced.
pub fn render_svg(p: &Polygon, orbits: &[ClosedGeodesic]) -> String {
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for v in p.vertices() {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let size = 400.0;
    let scale = size / (hi - lo).max();
    let pad = 10.0;
    let map = |v: &Vec2| ((v.x - lo.x) * scale + pad, (hi.y - v.y) * scale + pad);
    let (w, h) = ((hi.x - lo.x) * scale + 2.0 * pad, (hi.y - lo.y) * scale + 2.0 * pad);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}">"#);
    let pts: Vec<String> = p
        .vertices()
        .iter()
        .map(|v| {
            let (x, y) = map(v);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ = writeln!(out, r#"<polygon points="{}" fill="none" stroke="black"/>"#, pts.join(" "));
    for o in orbits {
        let Ok(states) = trace_orbit(p, o) else { continue };
        let pts: Vec<String> = states
            .iter()
            .map(|s| {
                let (x, y) = map(&s.point(p));
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="steelblue"><title>{} {:.6}</title></polyline>"#,
            pts.join(" "),
            o.label(),
            o.length
        );
    }
    out.push_str("</svg>\n");
    out
}
