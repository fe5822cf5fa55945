//! Structured triangulations of convex polygons and their uniform refinement.

use std::collections::HashMap;

use super::EigenError;
use crate::geometry::{cross, Polygon, Vec2};

/// Default cap on triangle angles.
pub const MAX_ANGLE_DEG: f64 = 150.0;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[u32; 3]>,
    pub boundary: Vec<bool>,
    /// Longest edge.
    pub size: f64,
}

impl Mesh {
    /// Triangulates `poly` with edges no longer than about `mesh_size`.
    ///
    /// Quadrilaterals get a bilinear grid with each cell split along its shorter
    /// diagonal, triangles a regular subdivision, and larger polygons a fan from
    /// the centroid with every fan triangle subdivided regularly.
    pub fn build(poly: &Polygon, mesh_size: f64, max_angle_deg: f64) -> Result<Mesh, EigenError> {
        if !(mesh_size.is_finite() && mesh_size > 0.0) {
            return Err(EigenError::Mesh(format!("mesh size {mesh_size} is not positive")));
        }
        let v = poly.vertices();
        let (nodes, triangles) = match v.len() {
            3 => triangle_grid(v[0], v[1], v[2], mesh_size),
            4 => quad_grid([v[0], v[1], v[2], v[3]], mesh_size),
            _ => fan_grid(v, mesh_size),
        };
        let mut mesh = Mesh { nodes, triangles, boundary: Vec::new(), size: 0.0 };
        mesh.finish(poly, max_angle_deg)?;
        Ok(mesh)
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn refine(&self, poly: &Polygon) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.triangles.len() * 2);
        let mut midpoint = |a: u32, b: u32, nodes: &mut Vec<Vec2>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                nodes.push((nodes[a as usize] + nodes[b as usize]) * 0.5);
                (nodes.len() - 1) as u32
            })
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut mesh = Mesh { nodes, triangles, boundary: Vec::new(), size: 0.0 };
        mesh.finish(poly, 180.0).expect("refinement preserves angles");
        mesh
    }

    pub fn interior_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Largest interior angle over all triangles, in degrees.
    pub fn max_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_angles(&self.nodes, t).into_iter().fold(0.0, f64::max))
            .fold(0.0, f64::max)
            .to_degrees()
    }

    fn finish(&mut self, poly: &Polygon, max_angle_deg: f64) -> Result<(), EigenError> {
        let scale = poly.diameter();
        let mut size: f64 = 0.0;
        for t in &mut self.triangles {
            let [a, b, c] = t.map(|i| self.nodes[i as usize]);
            let area2 = cross(&(b - a), &(c - a));
            if area2.abs() <= 1e-14 * scale * scale {
                return Err(EigenError::Mesh("degenerate triangle".into()));
            }
            if area2 < 0.0 {
                t.swap(1, 2);
            }
            size = size.max((b - a).norm()).max((c - b).norm()).max((a - c).norm());
        }
        let cap = max_angle_deg.to_radians();
        for t in &self.triangles {
            let worst = triangle_angles(&self.nodes, t).into_iter().fold(0.0, f64::max);
            if worst > cap + 1e-12 {
                return Err(EigenError::Mesh(format!(
                    "triangle angle {:.1} deg exceeds the {:.1} deg cap",
                    worst.to_degrees(),
                    max_angle_deg
                )));
            }
        }
        let tol = 1e-10 * scale;
        self.boundary = self.nodes.iter().map(|p| poly.boundary_distance(p) <= tol).collect();
        self.size = size;
        Ok(())
    }
}

fn triangle_angles(nodes: &[Vec2], t: &[u32; 3]) -> [f64; 3] {
    let p = t.map(|i| nodes[i as usize]);
    let mut out = [0.0; 3];
    for k in 0..3 {
        let u = p[(k + 1) % 3] - p[k];
        let w = p[(k + 2) % 3] - p[k];
        out[k] = cross(&u, &w).abs().atan2(u.dot(&w));
    }
    out
}

fn divisions(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

fn quad_grid(p: [Vec2; 4], h: f64) -> (Vec<Vec2>, Vec<[u32; 3]>) {
    let nu = divisions((p[1] - p[0]).norm().max((p[2] - p[3]).norm()), h);
    let nv = divisions((p[3] - p[0]).norm().max((p[2] - p[1]).norm()), h);
    let mut nodes = Vec::with_capacity((nu + 1) * (nv + 1));
    for j in 0..=nv {
        let v = j as f64 / nv as f64;
        for i in 0..=nu {
            let u = i as f64 / nu as f64;
            nodes.push(
                p[0] * ((1.0 - u) * (1.0 - v)) + p[1] * (u * (1.0 - v)) + p[2] * (u * v) + p[3] * ((1.0 - u) * v),
            );
        }
    }
    let idx = |i: usize, j: usize| (j * (nu + 1) + i) as u32;
    let mut tris = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            let ac = (nodes[c as usize] - nodes[a as usize]).norm();
            let bd = (nodes[d as usize] - nodes[b as usize]).norm();
            if ac <= bd * (1.0 + 1e-12) {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    (nodes, tris)
}

fn triangle_grid(a: Vec2, b: Vec2, c: Vec2, h: f64) -> (Vec<Vec2>, Vec<[u32; 3]>) {
    let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
    subdivided_triangle(a, b, c, divisions(longest, h))
}

fn subdivided_triangle(a: Vec2, b: Vec2, c: Vec2, n: usize) -> (Vec<Vec2>, Vec<[u32; 3]>) {
    let mut nodes = Vec::new();
    let mut idx = vec![vec![0u32; n + 1]; n + 1];
    for (j, row) in idx.iter_mut().enumerate() {
        for (i, slot) in row.iter_mut().enumerate().take(n + 1 - j) {
            *slot = nodes.len() as u32;
            nodes.push(a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64));
        }
    }
    let mut tris = Vec::new();
    for j in 0..n {
        for i in 0..n - j {
            tris.push([idx[j][i], idx[j][i + 1], idx[j + 1][i]]);
            if i + 1 < n - j {
                tris.push([idx[j][i + 1], idx[j + 1][i + 1], idx[j + 1][i]]);
            }
        }
    }
    (nodes, tris)
}

fn fan_grid(v: &[Vec2], h: f64) -> (Vec<Vec2>, Vec<[u32; 3]>) {
    let centroid = v.iter().fold(Vec2::zeros(), |s, p| s + p) / v.len() as f64;
    let mut nodes: Vec<Vec2> = Vec::new();
    let mut seen: HashMap<(u64, u64), u32> = HashMap::new();
    let mut tris = Vec::new();
    let n = v.len();
    // One subdivision count for all fan triangles keeps the shared spokes conforming.
    let longest = (0..n)
        .map(|k| (v[k] - centroid).norm().max((v[(k + 1) % n] - v[k]).norm()))
        .fold(0.0, f64::max);
    let parts = divisions(longest, h);
    for k in 0..n {
        let (sub_nodes, sub_tris) = subdivided_triangle(centroid, v[k], v[(k + 1) % n], parts);
        let map: Vec<u32> = sub_nodes
            .iter()
            .map(|p| {
                // Shared spokes are generated by bit-identical expressions.
                *seen.entry((p.x.to_bits(), p.y.to_bits())).or_insert_with(|| {
                    nodes.push(*p);
                    (nodes.len() - 1) as u32
                })
            })
            .collect();
        tris.extend(sub_tris.iter().map(|t| t.map(|i| map[i as usize])));
    }
    (nodes, tris)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Trapezoid;

    fn total_area(m: &Mesh) -> f64 {
        m.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| m.nodes[i as usize]);
                0.5 * cross(&(b - a), &(c - a))
            })
            .sum()
    }

    #[test]
    fn trapezoid_mesh_covers_domain() {
        let t = Trapezoid::new(2.0, 1.0, 75f64.to_radians(), 60f64.to_radians()).unwrap();
        let p = t.vertices();
        let m = Mesh::build(&p, 0.1, MAX_ANGLE_DEG).unwrap();
        assert!((total_area(&m) - t.area()).abs() < 1e-12);
        assert!(m.size <= 0.1 * 1.5);
        let r = m.refine(&p);
        assert_eq!(r.triangles.len(), 4 * m.triangles.len());
        assert!((total_area(&r) - t.area()).abs() < 1e-12);
        assert!((r.size - m.size / 2.0).abs() < 1e-12);
        let boundary_nodes = r.boundary.iter().filter(|b| **b).count();
        let coarse_boundary = m.boundary.iter().filter(|b| **b).count();
        assert_eq!(boundary_nodes, 2 * coarse_boundary);
    }

    #[test]
    fn triangle_and_fan_meshes_conform() {
        let tri = Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]).unwrap();
        let m = Mesh::build(&tri, 0.1, MAX_ANGLE_DEG).unwrap();
        assert!((total_area(&m) - 0.5).abs() < 1e-13);
        assert_eq!(m.nodes.len(), 136);
        let hex: Vec<Vec2> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                let r = if k % 2 == 0 { 1.0 } else { 1.3 };
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let hex = Polygon::new(hex).unwrap();
        let m = Mesh::build(&hex, 0.2, MAX_ANGLE_DEG).unwrap();
        assert!((total_area(&m) - hex.area()).abs() < 1e-12);
        // Euler characteristic of a disc: V - E + F = 1.
        let mut edges = std::collections::HashSet::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        assert_eq!(m.nodes.len() as i64 - edges.len() as i64 + m.triangles.len() as i64, 1);
    }

    #[test]
    fn angle_cap_is_enforced() {
        let t = Trapezoid::new(2.0, 0.05, 0.2, 0.2).unwrap();
        let err = Mesh::build(&t.vertices(), 0.5, 100.0).unwrap_err();
        assert!(matches!(err, EigenError::Mesh(_)));
    }
}
