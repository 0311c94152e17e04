//! Construction and verification of second-order Darboux transformations of
//! one-dimensional Schrödinger Hamiltonians h = −d²/dx² + V(x).
//!
//! The library builds a transformed potential V₂ from a seed potential V₀ and
//! two transformation functions u₁, u₂ (solutions of h₀u = αu at energies
//! inside a spectral gap), analyses the regularity of the Wronskian W(u₁,u₂)
//! whose zeros would be singularities of V₂, and verifies the resulting
//! partner spectrum against the predicted level deletions and creations.
//!
//! Module map:
//! - [`grid`], [`stencil`]: uniform grids and finite-difference kernels.
//! - [`potential`]: seed potentials, tail classification, tabulated I/O.
//! - [`ode`]: Numerov integration at arbitrary energy, node counting,
//!   asymptotic classification, Wronskian traces.
//! - [`spectrum`]: shooting eigensolver with node-count bracketing.
//! - [`darboux`]: first/second-order transforms, the intertwiner L and its
//!   adjoint, kernel functions of L⁺.
//! - [`regularity`]: construction of transformation functions with prescribed
//!   node counts and verification of the Wronskian regularity theorems.
//! - [`susy`]: superalgebra residuals and spectral-outcome case analysis.

pub mod darboux;
pub mod error;
pub mod grid;
pub mod ode;
pub mod potential;
pub mod regularity;
pub mod spectrum;
pub mod stencil;
pub mod susy;

pub use darboux::{ChainClass, DarbouxPair, KernelFunctions, V1Result};
pub use error::CoreError;
pub use grid::Grid;
pub use ode::{AsymClass, SideClass, WaveFunction, WronskianTrace};
pub use potential::{Potential, PotentialClass, PotentialLabel, SymmetryHint};
pub use regularity::{RegularityReport, TheoremCase, TransformSpec, USelector};
pub use spectrum::{SolverOptions, Spectrum};
pub use susy::{AlgebraReport, CaseLabel, CompletenessReport, OutcomeComparison, SpectralOutcome};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, error::CoreError>;
