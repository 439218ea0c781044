//! Consensus on the rotation group SO(n) through a convex relaxation.
//!
//! The convex hull of SO(n) is the linear image of the free spectrahedron of
//! size `2^{n-1}` ([`hull`]). Maximizing a linear functional over it reduces to
//! a top eigenvector ([`spectral::linear_max_over_hull`]), and the
//! consensus protocols in [`protocols`] distribute that problem over a
//! communication graph ([`topology`]) using dual decomposition or ADMM.

pub mod error;
pub mod exec;
pub mod hull;
pub mod problems;
pub mod protocols;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use hull::{HullOperator, Rotation, SpectraPoint};
pub use problems::{PointCloud, ProblemInstance};
pub use protocols::{run, ProtocolConfig, ProtocolKind, RunOutcome, Termination, TraceRecord};
pub use topology::CommGraph;
