//! Spectral shift function laboratory for two-dimensional Schrödinger
//! operators in crossed magnetic and electric fields.

pub mod eigenscan;
pub mod error;
pub mod funcalc;
pub mod lattice;
pub mod linalg;
pub mod potentials;
pub mod quadrature;
pub mod semiclassics;
pub mod sparse;
pub mod ssf;

pub use eigenscan::{EigenCandidate, ExclusionReport, ScanOptions, Verdict};
pub use error::{Error, Result};
pub use funcalc::{Eigensystem, SmoothingFunction, WindowKind};
pub use lattice::{DiscreteOperator, Grid2D, OperatorParams, OperatorTag};
pub use potentials::{Bump, DecayBound, Extents, PotentialSpec, Profile};
pub use semiclassics::{KernelKind, SymbolContext, TauberianKernel, Weight};
pub use ssf::{OperatorContext, SsfEngine, SsfMethod, SsfOptions, SsfQuery, SsfResult};
