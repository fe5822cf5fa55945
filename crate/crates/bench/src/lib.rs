//! Fixtures shared by the kernel benchmarks.

use isospec::eigensolver::exact_rectangle_spectrum;
use isospec::{BoundaryCondition, Spectrum, Trapezoid};

/// `B = 2, h = 1, alpha = 75 deg, beta = 60 deg`.
pub fn reference_trapezoid() -> Trapezoid {
    Trapezoid::new(2.0, 1.0, 75f64.to_radians(), 60f64.to_radians()).expect("valid trapezoid")
}

pub fn square_spectrum(n: usize) -> Spectrum {
    exact_rectangle_spectrum(1.0, 1.0, n, BoundaryCondition::Dirichlet)
}
