use thiserror::Error;

/// Errors surfaced by the construction and verification pipeline.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("unknown builtin potential `{0}` (expected harmonic, quartic, or shifted_harmonic)")]
    UnknownPotential(String),

    #[error("invalid parameters for potential `{kind}`: {reason}")]
    InvalidParameter { kind: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids differ between operands")]
    GridMismatch,

    #[error("energies differ between operands ({0} vs {1})")]
    EnergyMismatch(f64, f64),

    #[error("mixing angle {0} outside [0, pi)")]
    ThetaRange(f64),

    #[error("no decaying seed: E = {energy} is not below V = {v_edge} at the {side} grid edge")]
    NoForbiddenRegion {
        energy: f64,
        v_edge: f64,
        side: &'static str,
    },

    #[error("solution overflowed despite rescaling")]
    Overflow,

    #[error("failed to bracket level {k}: {reason}")]
    BracketFailure { k: usize, reason: String },

    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("eigenfunction index {k} out of range (spectrum holds {len} levels)")]
    EigenIndexOutOfRange { k: usize, len: usize },

    #[error("alpha ordering violated: alpha2 = {alpha2} must exceed alpha1 = {alpha1}")]
    AlphaOrder { alpha1: f64, alpha2: f64 },

    #[error("degenerate transformation pair: Wronskian vanishes identically")]
    DegenerateWronskian,

    #[error("pair is not regular: Wronskian has {0} zero crossing(s) inside the grid")]
    NonRegularPair(usize),

    #[error("alpha = {alpha} does not sit inside gap {k} ({lo}, {hi})")]
    AlphaOutsideGap {
        alpha: f64,
        k: usize,
        lo: f64,
        hi: f64,
    },

    #[error("alpha = {alpha} does not match any computed level within {tol}")]
    NoMatchingLevel { alpha: f64, tol: f64 },

    #[error(
        "no mixing angle produced {target} node(s) with the requested asymptotics \
         (observed node counts {observed_min}..={observed_max})"
    )]
    NodeTargetUnreachable {
        target: usize,
        observed_min: usize,
        observed_max: usize,
    },

    #[error("asymptotic fit failed on the {side} tail: {reason}")]
    AsymptoticFit { side: &'static str, reason: String },

    #[error("configuration outside the six spectral-outcome cases: {0}")]
    UnclassifiedConfiguration(String),

    #[error("test set for {op} lies entirely in the kernel of L")]
    EmptyTestSet { op: &'static str },

    #[error("declared basis set fails orthogonality: |<e{i}, e{j}>| = {overlap:.3e}")]
    BasisNotOrthogonal { i: usize, j: usize, overlap: f64 },

    #[error("tabulated potential: {0}")]
    TableFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
