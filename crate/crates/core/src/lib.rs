//! Spin-statistics tomography for spin-l systems.
//!
//! The density matrix of a spin-l system is expanded in an orthonormal
//! operator basis λ_{n,i} organized by the order `n` of the spin statistics
//! (moments ⟨L_d^n⟩ along a direction `d`) and by coherence |m′−m| in the
//! L_z basis. Projective measurements of spin components along at least
//! 4l+1 directions then determine every coefficient by linear inversion.

pub mod basis;
pub mod bipartite;
pub mod decoherence;
pub mod error;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod random;
pub mod spin;
pub mod strategy;
pub mod tomography;

pub use basis::{complete_basis, BasisLabel, CoefficientVector, OperatorBasis};
pub use error::{Error, Result};
pub use measurement::{MeasurementRecord, OutcomeData, OutcomeDistribution, RecordEntry};
pub use spin::{
    build_spin_operators, projector_family, spin_component, DensityMatrix, Direction, HermitianOperator,
    ProjectorFamily, SpinLength, SpinOperators,
};
pub use tomography::{DesignMatrix, DirectionSet, ReconstructionReport};
