//! Laplace eigenvalues of convex polygons by piecewise-linear finite elements.
//!
//! [`compute_spectrum`] meshes the polygon, refines uniformly, solves each level
//! with the sliced shift-invert Lanczos solver and Richardson-extrapolates the
//! two finest levels assuming second-order convergence.

pub mod fem;
pub mod lanczos;
pub mod ldl;
pub mod mesh;
pub mod sparse;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Polygon, Trapezoid};
pub use lanczos::SolverConfig;
pub use mesh::{Mesh, MAX_ANGLE_DEG};

/// Largest number of eigenvalues [`compute_spectrum`] accepts.
pub const MAX_COUNT: usize = 5000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("eigensolver did not converge: {0}")]
    Convergence(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

impl BoundaryCondition {
    /// One-letter tag used in spectrum files.
    pub fn tag(self) -> char {
        match self {
            BoundaryCondition::Dirichlet => 'D',
            BoundaryCondition::Neumann => 'N',
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "D" | "d" | "dirichlet" | "Dirichlet" => Some(BoundaryCondition::Dirichlet),
            "N" | "n" | "neumann" | "Neumann" => Some(BoundaryCondition::Neumann),
            _ => None,
        }
    }
}

/// A domain as it appears in input files: a trapezoid in normal form or a polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Trapezoid(Trapezoid),
    Polygon(Polygon),
}

impl Domain {
    pub fn polygon(&self) -> Polygon {
        match self {
            Domain::Trapezoid(t) => t.vertices(),
            Domain::Polygon(p) => p.clone(),
        }
    }

    /// The trapezoid normal form when the domain is one.
    pub fn trapezoid(&self) -> Option<Trapezoid> {
        match self {
            Domain::Trapezoid(t) => Some(*t),
            Domain::Polygon(p) => Trapezoid::from_polygon(p).ok(),
        }
    }

    /// Parses either `{"B", "h", "alpha", "beta"}` or `{"vertices": [[x, y], ...]}`.
    pub fn from_json(s: &str) -> Result<Self, String> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| e.to_string())?;
        if v.get("vertices").is_some() {
            serde_json::from_value::<Polygon>(v).map(Domain::Polygon).map_err(|e| e.to_string())
        } else {
            serde_json::from_value::<Trapezoid>(v).map(Domain::Trapezoid).map_err(|e| e.to_string())
        }
    }
}

/// Ascending eigenvalues with their boundary condition and error estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub boundary_condition: BoundaryCondition,
    /// Estimated relative error of each eigenvalue (zero for exact spectra).
    pub accuracy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_domain: Option<Domain>,
}

impl Spectrum {
    /// Exact values; sorts the input.
    pub fn new(mut eigenvalues: Vec<f64>, bc: BoundaryCondition) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let accuracy = vec![0.0; eigenvalues.len()];
        Spectrum { eigenvalues, boundary_condition: bc, accuracy, source_domain: None }
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_accuracy(&self) -> f64 {
        self.accuracy.iter().copied().fold(0.0, f64::max)
    }

    /// `index,eigenvalue,accuracy` rows after a `# boundary_condition: D` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# boundary_condition: {}\nindex,eigenvalue,accuracy\n", self.boundary_condition.tag());
        for (i, (l, a)) in self.eigenvalues.iter().zip(&self.accuracy).enumerate() {
            out.push_str(&format!("{},{l:e},{a:e}\n", i + 1));
        }
        out
    }

    /// Reads [`Spectrum::to_csv`] output or a bare column of eigenvalues.
    ///
    /// Lines starting with `#` are comments; a `# boundary_condition:` comment
    /// overrides `bc`. With several columns the one headed `eigenvalue` is used,
    /// or the second when there is no header.
    pub fn from_csv(text: &str, bc: BoundaryCondition) -> Result<Spectrum, EigenError> {
        let bad = |line: usize, what: &str| EigenError::InvalidInput(format!("line {line}: {what}"));
        let mut bc = bc;
        let (mut col, mut acc_col) = (None, None);
        let (mut values, mut accuracy) = (Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(tag) = c.trim().strip_prefix("boundary_condition:") {
                    bc = BoundaryCondition::from_tag(tag.trim()).ok_or_else(|| bad(i + 1, "unknown boundary condition"))?;
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields[0].parse::<f64>().is_err() && values.is_empty() && col.is_none() {
                col = fields.iter().position(|f| f.eq_ignore_ascii_case("eigenvalue"));
                acc_col = fields.iter().position(|f| f.eq_ignore_ascii_case("accuracy"));
                if col.is_none() {
                    return Err(bad(i + 1, "header has no eigenvalue column"));
                }
                continue;
            }
            let c = col.unwrap_or(if fields.len() > 1 { 1 } else { 0 });
            let v: f64 = fields
                .get(c)
                .and_then(|f| f.parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(i + 1, "no eigenvalue"))?;
            values.push(v);
            accuracy.push(acc_col.and_then(|a| fields.get(a)).and_then(|f| f.parse().ok()).unwrap_or(0.0));
        }
        if values.is_empty() {
            return Err(EigenError::InvalidInput("no eigenvalues".into()));
        }
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        Ok(Spectrum {
            eigenvalues: idx.iter().map(|&i| values[i]).collect(),
            boundary_condition: bc,
            accuracy: idx.iter().map(|&i| accuracy[i]).collect(),
            source_domain: None,
        })
    }

    /// The first `n` eigenvalues.
    pub fn truncated(&self, n: usize) -> Spectrum {
        let n = n.min(self.count());
        Spectrum {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            boundary_condition: self.boundary_condition,
            accuracy: self.accuracy[..n].to_vec(),
            source_domain: self.source_domain.clone(),
        }
    }

    /// Largest `|lambda_k - 4 pi k / A| / lambda_k` over `k >= from`.
    pub fn weyl_deviation(&self, area: f64, from: usize) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .skip(from.saturating_sub(1))
            .map(|(i, &l)| (l - 4.0 * PI * (i + 1) as f64 / area).abs() / l)
            .fold(0.0, f64::max)
    }
}

/// Separable spectrum of the `a x c` rectangle, lowest `n` with multiplicity.
pub fn exact_rectangle_spectrum(a: f64, c: f64, n: usize, bc: BoundaryCondition) -> Spectrum {
    assert!(a > 0.0 && c > 0.0, "rectangle sides must be positive");
    let start = match bc {
        BoundaryCondition::Dirichlet => 1u64,
        BoundaryCondition::Neumann => 0u64,
    };
    let value = |m: u64, k: u64| PI * PI * ((m * m) as f64 / (a * a) + (k * k) as f64 / (c * c));
    // Weyl's law overshoots the needed cutoff for small n; grow until enough modes fit.
    let mut cutoff = 4.0 * PI * (n as f64 + 10.0) / (a * c) + value(start, start);
    loop {
        let mut vals = Vec::new();
        let mut m = start;
        while value(m, start) <= cutoff {
            let mut k = start;
            while value(m, k) <= cutoff {
                vals.push(value(m, k));
                k += 1;
            }
            m += 1;
        }
        if vals.len() >= n {
            vals.sort_by(f64::total_cmp);
            vals.truncate(n);
            return Spectrum::new(vals, bc);
        }
        cutoff *= 1.5;
    }
}

/// Settings for [`compute_spectrum_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumOptions {
    /// Target edge length of the coarsest mesh.
    pub mesh_size: f64,
    /// Number of meshes, each a uniform refinement of the previous one.
    pub levels: usize,
    pub max_angle_deg: f64,
    pub solver: SolverConfig,
}

impl SpectrumOptions {
    pub fn new(mesh_size: f64, levels: usize) -> Self {
        SpectrumOptions { mesh_size, levels, max_angle_deg: MAX_ANGLE_DEG, solver: SolverConfig::default() }
    }

    /// Two levels with `k_n h = 3` on the coarse mesh.
    ///
    /// Extrapolation brings the low modes to high accuracy; the top of the
    /// spectrum is accurate to a few percent.
    pub fn for_count(poly: &Polygon, n: usize) -> Self {
        let k = (4.0 * PI * n as f64 / poly.area()).sqrt();
        let h = (3.0 / k).min(poly.min_edge() / 8.0);
        SpectrumOptions::new(h, 2)
    }
}

/// A computed spectrum together with its per-level raw values.
#[derive(Debug, Clone)]
pub struct SpectrumRun {
    pub spectrum: Spectrum,
    /// Raw eigenvalues on each mesh, coarsest first.
    pub levels: Vec<Vec<f64>>,
    pub unknowns: Vec<usize>,
    pub mesh_sizes: Vec<f64>,
}

impl SpectrumRun {
    /// `log2(|l0 - l1| / |l1 - l2|)` per eigenvalue from the three finest levels.
    pub fn observed_orders(&self) -> Option<Vec<f64>> {
        let l = self.levels.len();
        (l >= 3).then(|| observed_orders(&self.levels[l - 3], &self.levels[l - 2], &self.levels[l - 1]))
    }
}

pub fn observed_orders(l0: &[f64], l1: &[f64], l2: &[f64]) -> Vec<f64> {
    l0.iter().zip(l1).zip(l2).map(|((a, b), c)| ((a - b).abs() / (b - c).abs()).log2()).collect()
}

/// `(4 fine - coarse) / 3` elementwise.
pub fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
}

/// Lowest `n` eigenvalues with `levels` meshes starting from `mesh_size`.
pub fn compute_spectrum(
    poly: &Polygon,
    bc: BoundaryCondition,
    n: usize,
    mesh_size: f64,
    levels: usize,
) -> Result<Spectrum, EigenError> {
    compute_spectrum_with(poly, bc, n, &SpectrumOptions::new(mesh_size, levels)).map(|r| r.spectrum)
}

pub fn compute_spectrum_with(
    poly: &Polygon,
    bc: BoundaryCondition,
    n: usize,
    opts: &SpectrumOptions,
) -> Result<SpectrumRun, EigenError> {
    if n == 0 || n > MAX_COUNT {
        return Err(EigenError::InvalidInput(format!("count {n} outside 1..={MAX_COUNT}")));
    }
    if opts.levels < 2 {
        return Err(EigenError::InvalidInput("at least two mesh levels are needed for extrapolation".into()));
    }
    if opts.mesh_size > poly.min_edge() / 8.0 * (1.0 + 1e-9) {
        return Err(EigenError::InvalidInput(format!(
            "mesh size {} does not resolve the shortest edge {} by 8 elements",
            opts.mesh_size,
            poly.min_edge()
        )));
    }
    let base_shift = match bc {
        BoundaryCondition::Dirichlet => 0.0,
        BoundaryCondition::Neumann => -1.0,
    };
    let mut mesh = Mesh::build(poly, opts.mesh_size, opts.max_angle_deg)?;
    let mut levels = Vec::with_capacity(opts.levels);
    let mut unknowns = Vec::new();
    let mut sizes = Vec::new();
    for level in 0..opts.levels {
        if level > 0 {
            mesh = mesh.refine(poly);
        }
        let pencil = fem::assemble(&mesh, bc);
        unknowns.push(pencil.stiffness.n());
        sizes.push(mesh.size);
        levels.push(lanczos::lowest_eigenvalues(&pencil, n, base_shift, &opts.solver)?);
    }
    let l = levels.len();
    let fine = &levels[l - 1];
    let coarse = &levels[l - 2];
    let extrapolated = richardson(coarse, fine);
    let floor = 1e-8 * fine.last().copied().unwrap_or(1.0).abs().max(1.0);
    let accuracy: Vec<f64> = if l >= 3 {
        let previous = richardson(&levels[l - 3], coarse);
        extrapolated.iter().zip(&previous).map(|(a, b)| (a - b).abs() / a.abs().max(floor)).collect()
    } else {
        extrapolated.iter().zip(fine.iter().zip(coarse)).map(|(a, (f, c))| (f - c).abs() / 3.0 / a.abs().max(floor)).collect()
    };
    let mut eigenvalues = extrapolated;
    if bc == BoundaryCondition::Neumann {
        // The constant mode is exact in the discrete space.
        for v in eigenvalues.iter_mut().take_while(|v| v.abs() <= floor) {
            *v = v.abs();
        }
    }
    eigenvalues.sort_by(f64::total_cmp);
    let spectrum = Spectrum {
        eigenvalues,
        boundary_condition: bc,
        accuracy,
        source_domain: Some(match Trapezoid::from_polygon(poly) {
            Ok(t) if &t.vertices() == poly => Domain::Trapezoid(t),
            _ => Domain::Polygon(poly.clone()),
        }),
    };
    Ok(SpectrumRun { spectrum, levels, unknowns, mesh_sizes: sizes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    #[test]
    fn rectangle_oracle() {
        let d = exact_rectangle_spectrum(1.0, 1.0, 6, BoundaryCondition::Dirichlet);
        let p2 = PI * PI;
        let want = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0].map(|x| x * p2);
        for (a, b) in d.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        let nm = exact_rectangle_spectrum(1.0, 1.0, 4, BoundaryCondition::Neumann);
        assert_eq!(nm.eigenvalues[0], 0.0);
        assert!((nm.eigenvalues[1] - p2).abs() < 1e-12 && (nm.eigenvalues[2] - p2).abs() < 1e-12);
        assert!((nm.eigenvalues[3] - 2.0 * p2).abs() < 1e-12);
        let r = exact_rectangle_spectrum(1.0, 2.0, 1, BoundaryCondition::Dirichlet);
        assert!((r.eigenvalues[0] - 1.25 * p2).abs() < 1e-12);
        let big = exact_rectangle_spectrum(1.0, 1.0, 2000, BoundaryCondition::Dirichlet);
        assert_eq!(big.count(), 2000);
        assert!(big.weyl_deviation(1.0, 100) < 0.2);
    }

    #[test]
    fn csv_round_trip() {
        let s = exact_rectangle_spectrum(1.0, 2.0, 30, BoundaryCondition::Neumann);
        let back = Spectrum::from_csv(&s.to_csv(), BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(back, s);
        let bare = Spectrum::from_csv("30.5\n# note\n19.7\n\n", BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(bare.eigenvalues, vec![19.7, 30.5]);
        assert!(Spectrum::from_csv("index,lambda\n1,2\n", BoundaryCondition::Dirichlet).is_err());
        assert!(Spectrum::from_csv("", BoundaryCondition::Dirichlet).is_err());
    }

    #[test]
    fn unit_square_fem_converges() {
        let sq = Trapezoid::rectangle(1.0, 1.0).unwrap().vertices();
        let run = compute_spectrum_with(&sq, BoundaryCondition::Dirichlet, 10, &SpectrumOptions::new(1.0 / 16.0, 3)).unwrap();
        let exact = exact_rectangle_spectrum(1.0, 1.0, 10, BoundaryCondition::Dirichlet);
        for (a, b) in run.spectrum.eigenvalues.iter().zip(&exact.eigenvalues) {
            assert!((a - b).abs() / b < 5e-3, "{a} vs {b}");
        }
        for level in &run.levels {
            for (a, b) in level.iter().zip(&exact.eigenvalues) {
                assert!(a >= b, "Dirichlet P1 values are upper bounds");
            }
        }
        let orders = run.observed_orders().unwrap();
        assert!(orders.iter().all(|o| (1.7..=2.3).contains(o)), "{orders:?}");
    }

    #[test]
    fn neumann_has_zero_mode() {
        let sq = Trapezoid::rectangle(1.0, 1.0).unwrap().vertices();
        let s = compute_spectrum(&sq, BoundaryCondition::Neumann, 5, 1.0 / 16.0, 2).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-8);
        assert!((s.eigenvalues[1] - PI * PI).abs() / (PI * PI) < 5e-3);
    }

    #[test]
    fn rejects_coarse_mesh() {
        let sq = Trapezoid::rectangle(1.0, 1.0).unwrap().vertices();
        assert!(matches!(compute_spectrum(&sq, BoundaryCondition::Dirichlet, 5, 0.2, 2), Err(EigenError::InvalidInput(_))));
    }

    #[test]
    fn domain_json_forms() {
        let d = Domain::from_json(r#"{"B":2,"h":1,"alpha":1.2,"beta":1.0}"#).unwrap();
        assert!(matches!(d, Domain::Trapezoid(_)));
        let d = Domain::from_json(r#"{"vertices":[[0,0],[1,0],[0,1]]}"#).unwrap();
        assert_eq!(d.polygon().vertices()[2], Vec2::new(0.0, 1.0));
        assert!(Domain::from_json(r#"{"B":1,"h":5,"alpha":1.0,"beta":1.0}"#).is_err());
    }
}
