//! Reduced functions, balayage and Jensen-measure envelopes on finite
//! sub-Markov grids.
//!
//! A [`MarkovGrid`] carries a sub-stochastic kernel `P`; functions `u` with
//! `u ≥ Pu` on interior nodes form the superharmonic cones in which
//! [`reduce`] computes the least majorant `R_φ` of an obstacle `φ`. The
//! [`jensen`] module computes the same envelope from the measure side, one
//! linear program per node, and [`audit`] checks that both routes, the
//! exhaustion construction and `φ ∨ R̂_φ` all coincide.

pub mod audit;
pub mod cone;
pub mod error;
pub mod exhaustion;
pub mod function;
pub mod grid;
pub mod instances;
pub mod io;
pub mod jensen;
mod linalg;
pub mod lp;
pub mod oracle;
pub mod potential;
pub mod reduite;
pub mod schemes;

pub use audit::{duality_audit, AuditOptions, AuditReport};
pub use cone::{is_superharmonic, SuperharmonicCone};
pub use error::{Error, Result};
pub use exhaustion::Exhaustion;
pub use function::{GridFunction, Measure};
pub use grid::{build_lattice, Kernel, MarkovGrid, NodeSet};
pub use jensen::{
    envelope_general, is_jensen, jensen_envelope, optimal_measure, EnvelopeReport, JensenMeasure, JensenOptions,
    JensenVerdict,
};
pub use potential::{exit_time, green_potential, harmonic_measure, is_potential, reference_u0};
pub use reduite::{balayage_measure, reduce, EnvelopeResult, Solver, SolverConfig};
