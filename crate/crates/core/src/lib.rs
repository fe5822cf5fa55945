//! Spectral geometry of non-obtuse trapezoids.

pub mod billiards;
pub mod eigensolver;
pub mod geometry;
pub mod heat_trace;
pub mod inverse;
pub mod properties;
pub mod wave_trace;

pub use billiards::{BilliardError, ClosedGeodesic, LengthSpectrum};
pub use eigensolver::{BoundaryCondition, Domain, EigenError, Spectrum};
pub use geometry::{AngleInvariant, DomainError, OrbitCatalog, Polygon, Trapezoid, Vec2};
pub use heat_trace::{HeatError, HeatInvariants};
pub use inverse::{InverseError, ReconstructionReport};
pub use properties::{run_suite, SuiteReport};
pub use wave_trace::{OrbitClass, SingularityCandidate, SingularityProbe, WaveError};
