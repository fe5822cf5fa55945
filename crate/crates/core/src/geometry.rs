//! Trapezoid parameterization, convex polygons and the closed-form orbit catalog.
//!
//! A non-obtuse trapezoid is stored as `(B, h, alpha, beta)`: the long base, the
//! height, and the two base angles with `0 < beta <= alpha <= pi/2`. Everything
//! else (top side, legs, area, perimeter) is derived on demand.
//!
//! Vertex and edge numbering is fixed throughout the crate:
//!
//! ```text
//!        TL (3) ---- edge 2 ---- TR (2)
//!        /                           \
//!   edge 3                          edge 1
//!      /                                \
//!  BL (0) ---------- edge 0 ---------- BR (1)
//! ```
//!
//! The alpha corner is `BL`, the beta corner is `BR`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Lower bound of the angle invariant, attained only by rectangles.
pub const RECTANGLE_Q: f64 = 8.0 / (PI * PI);

/// Tolerance for the rectangle test on exact geometry.
pub const EXACT_RECTANGLE_TOL: f64 = 1e-9;

/// Default rectangle tolerance when `q` comes from a spectral fit.
pub const FIT_RECTANGLE_TOL: f64 = 1e-2;

/// Largest denominator tried when testing `alpha / beta` for rationality.
pub const CMN_MAX_DENOMINATOR: u32 = 20;

/// Tolerance on `|alpha/beta - n/m|` for the rationality test.
pub const CMN_TOL: f64 = 1e-9;

const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("lengths must be positive and finite (B = {base}, h = {height})")]
    NonPositiveLength { base: f64, height: f64 },
    #[error("angles must satisfy 0 < beta <= alpha <= pi/2 (alpha = {alpha}, beta = {beta})")]
    AngleOrder { alpha: f64, beta: f64 },
    #[error("top side b = {top} is not positive; the trapezoid degenerates")]
    Degenerate { top: f64 },
    #[error("top side b = {top} exceeds the base B = {base}")]
    TopExceedsBase { top: f64, base: f64 },
    #[error("polygon is invalid: {0}")]
    Polygon(String),
    #[error("polygon is not a non-obtuse trapezoid: {0}")]
    NotATrapezoid(String),
}

/// `F(x) = 1 / (x (pi - x))`, strictly decreasing on `(0, pi/2]`.
pub fn angle_function(x: f64) -> f64 {
    1.0 / (x * (PI - x))
}

/// Inverse of [`angle_function`] restricted to `(0, pi/2]`.
///
/// Returns `None` when `y < 4/pi^2` (no angle in range) or `y` is not finite.
pub fn angle_function_inverse(y: f64) -> Option<f64> {
    if !y.is_finite() || y <= 0.0 {
        return None;
    }
    let disc = PI * PI - 4.0 / y;
    if disc < -1e-14 {
        return None;
    }
    // x (pi - x) = 1/y; the smaller root. Written to avoid cancellation for large y.
    let s = disc.max(0.0).sqrt();
    Some((2.0 / y) / (PI + s))
}

/// A non-obtuse trapezoid in the `(B, h, alpha, beta)` normal form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrapezoidParams", into = "TrapezoidParams")]
pub struct Trapezoid {
    base: f64,
    height: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct TrapezoidParams {
    #[serde(rename = "B")]
    base: f64,
    h: f64,
    alpha: f64,
    beta: f64,
}

impl TryFrom<TrapezoidParams> for Trapezoid {
    type Error = DomainError;

    fn try_from(p: TrapezoidParams) -> Result<Self, Self::Error> {
        Trapezoid::new(p.base, p.h, p.alpha, p.beta)
    }
}

impl From<Trapezoid> for TrapezoidParams {
    fn from(t: Trapezoid) -> Self {
        TrapezoidParams { base: t.base, h: t.height, alpha: t.alpha, beta: t.beta }
    }
}

impl Trapezoid {
    /// Validates and builds a trapezoid from its base, height and base angles.
    pub fn new(base: f64, height: f64, alpha: f64, beta: f64) -> Result<Self, DomainError> {
        if !(base.is_finite() && height.is_finite() && base > 0.0 && height > 0.0) {
            return Err(DomainError::NonPositiveLength { base, height });
        }
        if !(alpha.is_finite() && beta.is_finite())
            || beta <= 0.0
            || beta > alpha
            || alpha > FRAC_PI_2 + ANGLE_TOL
        {
            return Err(DomainError::AngleOrder { alpha, beta });
        }
        let alpha = alpha.min(FRAC_PI_2);
        let beta = beta.min(alpha);
        let t = Trapezoid { base, height, alpha, beta };
        let top = t.top();
        if top <= 0.0 {
            return Err(DomainError::Degenerate { top });
        }
        if top > base * (1.0 + 1e-15) {
            return Err(DomainError::TopExceedsBase { top, base });
        }
        Ok(t)
    }

    /// Axis-aligned rectangle `width x height` as a trapezoid with right base angles.
    pub fn rectangle(width: f64, height: f64) -> Result<Self, DomainError> {
        Trapezoid::new(width, height, FRAC_PI_2, FRAC_PI_2)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Top side `b = B - h (cot alpha + cot beta)`.
    pub fn top(&self) -> f64 {
        self.base - self.height * (cot(self.alpha) + cot(self.beta))
    }

    /// Left leg `h / sin alpha`.
    pub fn left_leg(&self) -> f64 {
        self.height / self.alpha.sin()
    }

    /// Right leg `h / sin beta`.
    pub fn right_leg(&self) -> f64 {
        self.height / self.beta.sin()
    }

    pub fn area(&self) -> f64 {
        0.5 * self.height * (self.base + self.top())
    }

    pub fn perimeter(&self) -> f64 {
        self.base + self.top() + self.left_leg() + self.right_leg()
    }

    pub fn angle_invariant(&self) -> AngleInvariant {
        AngleInvariant { q: angle_function(self.alpha) + angle_function(self.beta) }
    }

    /// True when both base angles are right angles (to `tol` in `q`).
    pub fn is_rectangle(&self) -> bool {
        self.angle_invariant().is_rectangle(EXACT_RECTANGLE_TOL)
    }

    /// True when the legs have equal length.
    pub fn is_isosceles(&self) -> bool {
        (self.alpha - self.beta).abs() <= ANGLE_TOL
    }

    /// Vertices `BL, BR, TR, TL` in counterclockwise order.
    pub fn vertices(&self) -> Polygon {
        let h = self.height;
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(self.base, 0.0),
            Vec2::new(self.base - h * cot(self.beta), h),
            Vec2::new(h * cot(self.alpha), h),
        ];
        Polygon { vertices: pts }
    }

    /// Triangle formed by extending the legs above the top side; `None` for rectangles.
    pub fn extended_triangle(&self) -> Option<ExtendedTriangle> {
        let gamma = PI - self.alpha - self.beta;
        if gamma <= ANGLE_TOL {
            return None;
        }
        Some(ExtendedTriangle {
            apex_angle: gamma,
            h_alpha: self.base * self.beta.sin(),
            h_beta: self.base * self.alpha.sin(),
            acute: gamma <= FRAC_PI_2 + ANGLE_TOL,
        })
    }

    /// Recovers the normal form of a convex quadrilateral that is a non-obtuse trapezoid.
    ///
    /// Rectangles are normalized so that the base is the longer side.
    pub fn from_polygon(p: &Polygon) -> Result<Self, DomainError> {
        let v = &p.vertices;
        if v.len() != 4 {
            return Err(DomainError::NotATrapezoid(format!("{} vertices", v.len())));
        }
        let scale = p.diameter();
        let edge = |i: usize| v[(i + 1) % 4] - v[i];
        let mut best: Option<Trapezoid> = None;
        for i in 0..2 {
            let (e, f) = (edge(i), edge(i + 2));
            if cross(&e, &f).abs() > 1e-9 * e.norm() * f.norm() {
                continue;
            }
            // Base is the longer of the two parallel sides.
            let (bi, ti) = if e.norm() >= f.norm() { (i, i + 2) } else { (i + 2, i) };
            let base_vec = edge(bi);
            let base = base_vec.norm();
            let height = cross(&base_vec, &(v[(ti) % 4] - v[bi])).abs() / base;
            let angles = p.interior_angles();
            let a0 = angles[bi];
            let a1 = angles[(bi + 1) % 4];
            let (alpha, beta) = if a0 >= a1 { (a0, a1) } else { (a1, a0) };
            if alpha > FRAC_PI_2 + 1e-9 {
                continue;
            }
            if let Ok(t) = Trapezoid::new(base, height, alpha.min(FRAC_PI_2), beta.min(FRAC_PI_2)) {
                let keep = match best {
                    None => true,
                    Some(prev) => t.base > prev.base + 1e-12 * scale,
                };
                if keep {
                    best = Some(t);
                }
            }
        }
        best.ok_or_else(|| DomainError::NotATrapezoid("no parallel pair with non-obtuse base angles".into()))
    }
}

fn cot(x: f64) -> f64 {
    if (x - FRAC_PI_2).abs() <= ANGLE_TOL {
        0.0
    } else {
        x.cos() / x.sin()
    }
}

pub(crate) fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Triangle obtained by extending the legs of a trapezoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedTriangle {
    pub apex_angle: f64,
    /// Altitude from the alpha corner, `B sin beta`.
    pub h_alpha: f64,
    /// Altitude from the beta corner, `B sin alpha`.
    pub h_beta: f64,
    pub acute: bool,
}

/// The angle invariant `q = F(alpha) + F(beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInvariant {
    pub q: f64,
}

impl AngleInvariant {
    pub fn is_rectangle(&self, tol: f64) -> bool {
        (self.q - RECTANGLE_Q).abs() < tol
    }

    /// Corner constant of the heat expansion, `(pi^2/24) q - 1/12`.
    pub fn corner_constant(&self) -> f64 {
        PI * PI / 24.0 * self.q - 1.0 / 12.0
    }

    /// Inverse of [`AngleInvariant::corner_constant`].
    pub fn from_corner_constant(k: f64) -> Self {
        AngleInvariant { q: (24.0 * k + 2.0) / (PI * PI) }
    }
}

/// A convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

#[derive(Serialize, Deserialize)]
struct PolygonRepr {
    vertices: Vec<[f64; 2]>,
}

impl Serialize for Polygon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolygonRepr { vertices: self.vertices.iter().map(|v| [v.x, v.y]).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PolygonRepr::deserialize(d)?;
        Polygon::new(r.vertices.iter().map(|p| Vec2::new(p[0], p[1])).collect())
            .map_err(serde::de::Error::custom)
    }
}

impl Polygon {
    /// Builds a strictly convex polygon; clockwise input is reversed.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self, DomainError> {
        let n = vertices.len();
        if n < 3 {
            return Err(DomainError::Polygon(format!("{n} vertices")));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(DomainError::Polygon("non-finite coordinate".into()));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let scale = vertices
            .iter()
            .flat_map(|a| vertices.iter().map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(DomainError::Polygon("all vertices coincide".into()));
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(&(b - a), &(c - b)) <= 1e-12 * scale * scale {
                return Err(DomainError::Polygon(format!("not strictly convex at vertex {}", (i + 1) % n)));
            }
        }
        let turning: f64 = (0..n)
            .map(|i| {
                let e = vertices[(i + 1) % n] - vertices[i];
                let f = vertices[(i + 2) % n] - vertices[(i + 1) % n];
                cross(&e, &f).atan2(e.dot(&f))
            })
            .sum();
        if (turning - 2.0 * PI).abs() > 1e-9 {
            return Err(DomainError::Polygon("boundary winds more than once".into()));
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        (b - a).norm()
    }

    /// Interior angle at each vertex.
    pub fn interior_angles(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let prev = self.vertices[(i + n - 1) % n];
                let cur = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                let u = prev - cur;
                let w = next - cur;
                cross(&w, &u).atan2(w.dot(&u))
            })
            .collect()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.len()).map(|i| self.edge_length(i)).sum()
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d: f64 = 0.0;
        for a in v {
            for b in v {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    pub fn min_edge(&self) -> f64 {
        (0..self.len()).map(|i| self.edge_length(i)).fold(f64::INFINITY, f64::min)
    }

    /// Heat-expansion corner sum `sum (pi^2 - theta^2) / (24 pi theta)`.
    pub fn corner_sum(&self) -> f64 {
        heat_corner_sum(&self.interior_angles())
    }

    /// Applies `x -> R x + t` with `R` a rotation by `angle`.
    pub fn transformed(&self, angle: f64, shift: Vec2) -> Polygon {
        let (s, c) = angle.sin_cos();
        let vertices = self
            .vertices
            .iter()
            .map(|v| Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y) + shift)
            .collect();
        Polygon { vertices }
    }

    /// Mirror image across the y axis, reordered counterclockwise.
    pub fn mirrored(&self) -> Polygon {
        let mut vertices: Vec<Vec2> = self.vertices.iter().map(|v| Vec2::new(-v.x, v.y)).collect();
        vertices.reverse();
        Polygon { vertices }
    }

    /// Euclidean distance from `p` to the boundary.
    pub fn boundary_distance(&self, p: &Vec2) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                segment_distance(p, &a, &b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// True when `p` lies inside or within `tol` of the polygon.
    pub fn contains(&self, p: &Vec2, tol: f64) -> bool {
        (0..self.len()).all(|i| {
            let (a, b) = self.edge(i);
            let e = b - a;
            cross(&e, &(p - a)) >= -tol * e.norm()
        })
    }
}

/// `sum (pi^2 - theta^2) / (24 pi theta)` over the given angles.
pub fn heat_corner_sum(angles: &[f64]) -> f64 {
    angles.iter().map(|&t| (PI * PI - t * t) / (24.0 * PI * t)).sum()
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| cross(&v[i], &v[(i + 1) % n])).sum::<f64>()
}

pub(crate) fn segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let e = b - a;
    let len2 = e.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&e) / len2).clamp(0.0, 1.0);
    (p - (a + e * s)).norm()
}

/// The `2h` bouncing-ball family between the two parallel sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightBand {
    pub length: f64,
    pub swept_area: f64,
}

/// The Fagnano orbit of the extended triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fagnano {
    /// `2 B sin alpha sin beta`.
    pub length: f64,
    pub exists_inside: bool,
    /// The orbit passes through the top-right vertex.
    pub diffractive: bool,
    /// `alpha = pi/2`: the triangle collapses onto the `2h_alpha` orbit.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeightAlphaClass {
    Diffractive,
    NonDiffractive,
    BandMember,
}

/// The doubled altitude of the extended triangle from the alpha corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightAlpha {
    /// `2 B sin beta`.
    pub length: f64,
    pub classification: HeightAlphaClass,
    /// The foot of the altitude lies on the right leg.
    pub exists_inside: bool,
}

/// Closed-form periodic orbits of a trapezoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitCatalog {
    pub two_h: HeightBand,
    /// `2b`; the multiples `2mb` come from [`OrbitCatalog::two_mb`].
    pub two_b: f64,
    pub fagnano: Option<Fagnano>,
    pub two_h_alpha: HeightAlpha,
    /// Coprime `(m, n)` with `m alpha = n beta <= pi/2`.
    pub cmn_families: Vec<(u32, u32)>,
}

/// One row of the catalog export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub label: String,
    pub length: Option<f64>,
    pub multiple: u32,
    pub exists_inside: bool,
    pub diffractive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mn: Option<(u32, u32)>,
}

impl OrbitCatalog {
    pub fn new(t: &Trapezoid) -> Self {
        let (base, h, alpha, beta) = (t.base, t.height, t.alpha, t.beta);
        let top = t.top();
        let rect = t.is_rectangle();
        let leg_foot = base * beta.sin() * beta.cos();
        let foot_tol = 1e-12 * base;
        let foot_inside = h >= leg_foot - foot_tol;

        let fagnano = (!rect).then(|| {
            let length = 2.0 * base * alpha.sin() * beta.sin();
            let acute = alpha + beta >= FRAC_PI_2 - ANGLE_TOL;
            let exists_inside = acute && foot_inside;
            Fagnano {
                length,
                exists_inside,
                diffractive: exists_inside && (h - leg_foot).abs() <= foot_tol,
                degenerate: (alpha - FRAC_PI_2).abs() <= ANGLE_TOL,
            }
        });

        let classification = if t.is_isosceles() && !rect {
            HeightAlphaClass::BandMember
        } else if [FRAC_PI_2, FRAC_PI_3, FRAC_PI_4].iter().any(|a| (alpha - a).abs() <= ANGLE_TOL) {
            HeightAlphaClass::NonDiffractive
        } else {
            HeightAlphaClass::Diffractive
        };

        OrbitCatalog {
            two_h: HeightBand { length: 2.0 * h, swept_area: 2.0 * h * top },
            two_b: 2.0 * top,
            fagnano,
            two_h_alpha: HeightAlpha {
                length: 2.0 * base * beta.sin(),
                classification,
                exists_inside: foot_inside,
            },
            cmn_families: cmn_pair(alpha, beta).into_iter().collect(),
        }
    }

    /// `2mb` for `m = 1, 2, ...` up to `lmax`.
    pub fn two_mb(&self, lmax: f64) -> Vec<f64> {
        (1..).map(|m| m as f64 * self.two_b).take_while(|&l| l <= lmax).collect()
    }

    /// Flattened export with labels `2h`, `2b`, `2mb`, `lF`, `2hAlpha`, `Cmn`.
    pub fn entries(&self, lmax: f64) -> Vec<CatalogEntry> {
        let entry = |label: &str, length: f64, multiple: u32, exists: bool, diffractive: bool| CatalogEntry {
            label: label.into(),
            length: Some(length),
            multiple,
            exists_inside: exists,
            diffractive,
            mn: None,
        };
        let mut out = vec![entry("2h", self.two_h.length, 1, true, false)];
        for (i, l) in self.two_mb(lmax).into_iter().enumerate() {
            let label = if i == 0 { "2b" } else { "2mb" };
            out.push(entry(label, l, i as u32 + 1, true, true));
        }
        if let Some(f) = self.fagnano {
            out.push(entry("lF", f.length, 1, f.exists_inside, f.diffractive));
        }
        let ha = &self.two_h_alpha;
        out.push(entry(
            "2hAlpha",
            ha.length,
            1,
            ha.exists_inside,
            ha.classification == HeightAlphaClass::Diffractive,
        ));
        for &(m, n) in &self.cmn_families {
            out.push(CatalogEntry {
                label: "Cmn".into(),
                length: None,
                multiple: 1,
                exists_inside: true,
                diffractive: false,
                mn: Some((m, n)),
            });
        }
        out
    }
}

/// Detects `alpha / beta = n / m` with `m <= 20` and `m alpha <= pi/2`.
fn cmn_pair(alpha: f64, beta: f64) -> Option<(u32, u32)> {
    let r = alpha / beta;
    // Continued-fraction convergents p/q of r.
    let (mut p0, mut q0, mut p1, mut q1) = (1u64, 0u64, r.floor() as u64, 1u64);
    let mut x = r;
    loop {
        if q1 > CMN_MAX_DENOMINATOR as u64 {
            return None;
        }
        if (r - p1 as f64 / q1 as f64).abs() < CMN_TOL {
            let (n, m) = (p1 as u32, q1 as u32);
            return (m as f64 * alpha <= FRAC_PI_2 + ANGLE_TOL).then_some((m, n));
        }
        let frac = x - x.floor();
        if frac < 1e-15 {
            return None;
        }
        x = 1.0 / frac;
        let a = x.floor() as u64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn equilateral_cut_trapezoid() {
        let t = Trapezoid::new(2.0, 3f64.sqrt() / 2.0, FRAC_PI_3, FRAC_PI_3).unwrap();
        assert!(close(t.top(), 1.0, 1e-14));
        assert!(close(t.area(), 3.0 * 3f64.sqrt() / 4.0, 1e-14));
        assert!(close(t.perimeter(), 5.0, 1e-14));
    }

    #[test]
    fn unit_square() {
        let t = Trapezoid::new(1.0, 1.0, FRAC_PI_2, FRAC_PI_2).unwrap();
        assert_eq!(t.top(), 1.0);
        assert_eq!(t.area(), 1.0);
        assert_eq!(t.perimeter(), 4.0);
        assert!(t.is_rectangle());
        assert!(t.extended_triangle().is_none());
        assert!(close(t.vertices().corner_sum(), 0.25, 1e-15));
    }

    #[test]
    fn rejects_degenerate_and_misordered() {
        assert!(matches!(Trapezoid::new(1.0, 5.0, FRAC_PI_3, FRAC_PI_3), Err(DomainError::Degenerate { .. })));
        assert!(matches!(Trapezoid::new(1.0, 0.1, 0.5, 0.6), Err(DomainError::AngleOrder { .. })));
        assert!(matches!(Trapezoid::new(1.0, 0.1, 2.0, 0.6), Err(DomainError::AngleOrder { .. })));
        assert!(matches!(Trapezoid::new(-1.0, 0.1, 1.0, 0.6), Err(DomainError::NonPositiveLength { .. })));
    }

    #[test]
    fn q_values() {
        let sq = Trapezoid::rectangle(1.0, 1.0).unwrap();
        assert!(close(sq.angle_invariant().q, 8.0 / (PI * PI), 1e-15));
        let t = Trapezoid::new(2.0, 0.5, FRAC_PI_3, FRAC_PI_3).unwrap();
        assert!(close(t.angle_invariant().q, 9.0 / (PI * PI), 1e-14));
    }

    #[test]
    fn inverse_of_f() {
        for &x in &[1e-3, 0.1, 0.7, 1.2, FRAC_PI_2] {
            assert!(close(angle_function_inverse(angle_function(x)).unwrap(), x, 1e-13));
        }
        assert!(angle_function_inverse(0.3).is_none());
    }

    #[test]
    fn catalog_reference_values() {
        let t = Trapezoid::new(2.0, 1.2, FRAC_PI_3, FRAC_PI_3).unwrap();
        let c = OrbitCatalog::new(&t);
        let f = c.fagnano.unwrap();
        assert!(close(f.length, 3.0, 1e-14));
        assert!(f.exists_inside && !f.diffractive && !f.degenerate);
        assert!(close(c.two_h_alpha.length, 2.0 * 3f64.sqrt(), 1e-14));
        assert_eq!(c.two_h_alpha.classification, HeightAlphaClass::BandMember);
        assert_eq!(c.cmn_families, vec![(1, 1)]);
        assert!(close(t.extended_triangle().unwrap().apex_angle, FRAC_PI_3, 1e-14));
    }

    #[test]
    fn right_angle_fagnano_collapses() {
        let t = Trapezoid::new(2.0, 1.0, FRAC_PI_2, 1.0).unwrap();
        let c = OrbitCatalog::new(&t);
        let f = c.fagnano.unwrap();
        assert!(f.degenerate);
        assert!(close(f.length, c.two_h_alpha.length, 1e-14));
        assert_eq!(c.two_h_alpha.classification, HeightAlphaClass::NonDiffractive);
    }

    #[test]
    fn obtuse_extended_triangle_has_no_fagnano() {
        let t = Trapezoid::new(4.0, 0.3, 0.6, 0.5).unwrap();
        assert!(!t.extended_triangle().unwrap().acute);
        assert!(!OrbitCatalog::new(&t).fagnano.unwrap().exists_inside);
    }

    #[test]
    fn cmn_detection() {
        assert_eq!(cmn_pair(0.6, 0.3), Some((1, 2)));
        assert_eq!(cmn_pair(0.45, 0.3), Some((2, 3)));
        assert_eq!(cmn_pair(1.2, 0.8), None);
        assert_eq!(cmn_pair(1.0, 0.7), None);
        assert_eq!(cmn_pair(0.5, 0.5 / 2f64.sqrt()), None);
    }

    #[test]
    fn json_shape() {
        let t = Trapezoid::new(2.0, 1.0, 75f64.to_radians(), 60f64.to_radians()).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"B\":2.0") && s.contains("\"h\":1.0"));
        let back: Trapezoid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Trapezoid>(r#"{"B":1,"h":5,"alpha":1.0,"beta":1.0}"#).is_err());
        let p = t.vertices();
        let back: Polygon = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn from_polygon_recovers_normal_form() {
        let t = Trapezoid::new(2.0, 1.0, 75f64.to_radians(), 60f64.to_radians()).unwrap();
        let moved = t.vertices().transformed(0.7, Vec2::new(3.0, -1.0)).mirrored();
        let back = Trapezoid::from_polygon(&moved).unwrap();
        assert!(close(back.base(), 2.0, 1e-12));
        assert!(close(back.height(), 1.0, 1e-12));
        assert!(close(back.alpha(), t.alpha(), 1e-12));
        assert!(close(back.beta(), t.beta(), 1e-12));
        let r = Trapezoid::rectangle(1.0, 3.0).unwrap();
        let back = Trapezoid::from_polygon(&r.vertices()).unwrap();
        assert!(close(back.base(), 3.0, 1e-12) && close(back.height(), 1.0, 1e-12));
    }

    #[test]
    fn polygon_validation() {
        let square = |s: f64| vec![Vec2::new(0.0, 0.0), Vec2::new(s, 0.0), Vec2::new(s, s), Vec2::new(0.0, s)];
        let mut cw = square(1.0);
        cw.reverse();
        let p = Polygon::new(cw).unwrap();
        assert!(close(p.area(), 1.0, 1e-15));
        let mut dented = square(1.0);
        dented.insert(1, Vec2::new(0.5, 0.2));
        assert!(Polygon::new(dented).is_err());
        assert!(Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]).is_err());
        let angles = p.interior_angles();
        assert!(angles.iter().all(|a| close(*a, FRAC_PI_2, 1e-15)));
    }

    pub(crate) fn trapezoid_strategy() -> impl Strategy<Value = Trapezoid> {
        (0.5f64..3.0, 0.02f64..=1.0, 0.05f64..=1.0, 0.05f64..0.97).prop_map(|(base, ua, ub, uh)| {
            let alpha = ua * FRAC_PI_2;
            let beta = ub * alpha;
            let hmax = base / (cot(alpha) + cot(beta));
            Trapezoid::new(base, uh * hmax, alpha, beta).unwrap()
        })
    }

    proptest! {
        #[test]
        fn q_is_bounded_below(t in trapezoid_strategy()) {
            let q = t.angle_invariant().q;
            prop_assert!(q >= RECTANGLE_Q - 1e-15);
            if !t.is_rectangle() {
                prop_assert!(q > RECTANGLE_Q);
            }
        }

        #[test]
        fn base_identity(t in trapezoid_strategy()) {
            let b = t.top() + t.height() * (cot(t.alpha()) + cot(t.beta()));
            prop_assert!((b - t.base()).abs() <= 4.0 * f64::EPSILON * t.base());
        }

        #[test]
        fn corner_sum_identity(t in trapezoid_strategy()) {
            let direct = t.vertices().corner_sum();
            let closed = t.angle_invariant().corner_constant();
            prop_assert!((direct - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        }

        #[test]
        fn polygon_matches_closed_forms(t in trapezoid_strategy()) {
            let p = t.vertices();
            prop_assert!(close(p.area(), t.area(), 1e-12));
            prop_assert!(close(p.perimeter(), t.perimeter(), 1e-12));
            let ext: f64 = p.interior_angles().iter().map(|a| PI - a).sum();
            prop_assert!(close(ext, 2.0 * PI, 1e-12));
        }

        #[test]
        fn fagnano_needs_acute_triangle(t in trapezoid_strategy()) {
            let c = OrbitCatalog::new(&t);
            if let Some(f) = c.fagnano {
                if t.alpha() + t.beta() < FRAC_PI_2 - 1e-12 {
                    prop_assert!(!f.exists_inside);
                }
                if f.exists_inside {
                    prop_assert!(c.two_h_alpha.length < 2.0 * f.length);
                }
            }
        }

        #[test]
        fn legs_beat_cotangents(t in trapezoid_strategy()) {
            let csc = 1.0 / t.alpha().sin() + 1.0 / t.beta().sin();
            prop_assert!(csc > cot(t.alpha()) + cot(t.beta()));
        }
    }
}
