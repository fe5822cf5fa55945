//! Piecewise-linear stiffness and mass matrices.

use super::mesh::Mesh;
use super::sparse::CsrMatrix;
use super::BoundaryCondition;
use crate::geometry::Vec2;

/// Discrete pencil `K u = lambda M u` restricted to the free nodes.
pub struct Pencil {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub coords: Vec<Vec2>,
}

pub fn assemble(mesh: &Mesh, bc: BoundaryCondition) -> Pencil {
    let mut k = Vec::with_capacity(mesh.triangles.len() * 9);
    let mut m = Vec::with_capacity(mesh.triangles.len() * 9);
    for t in &mesh.triangles {
        let p = t.map(|i| mesh.nodes[i as usize]);
        // Gradients of the barycentric coordinates are (b_i, c_i) / (2 area).
        let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let c = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        let area = 0.5 * (b[0] * c[1] - b[1] * c[0]);
        let ks = 0.25 / area;
        let ms = area / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                k.push((t[i], t[j], ks * (b[i] * b[j] + c[i] * c[j])));
                m.push((t[i], t[j], if i == j { 2.0 * ms } else { ms }));
            }
        }
    }
    let n = mesh.nodes.len();
    let stiffness = CsrMatrix::from_triplets(n, &k);
    let mass = CsrMatrix::from_triplets(n, &m);
    match bc {
        BoundaryCondition::Neumann => Pencil { stiffness, mass, coords: mesh.nodes.clone() },
        BoundaryCondition::Dirichlet => {
            let keep: Vec<bool> = mesh.boundary.iter().map(|b| !b).collect();
            let coords = mesh.nodes.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
            Pencil { stiffness: stiffness.restrict(&keep), mass: mass.restrict(&keep), coords }
        }
    }
}
