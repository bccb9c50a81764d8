//! Finite-dimensional engine for histories of quantum effects.
//!
//! The crate models homogeneous histories (finite time-indexed sequences of
//! effect operators), their class operators under unitary evolution, the
//! decoherence functional `d(u, v) = tr(C(u) rho C(v)^†)`, consistency
//! predicates and the induced probability measures, Boolean history algebras
//! with operator-valued valuations, and the alpha-parameterized partial sums
//! that organize effects into difference posets.
//!
//! Everything is dense, double-precision, and desk-scale by design: system
//! dimensions of a few, supports of a few time points, tensor spaces up to a
//! hard cap. All values are immutable after construction and all operations
//! are pure functions.

pub mod decoherence;
pub mod effect_sums;
pub mod effects;
pub mod histories;
pub mod logic;
pub mod numlin;
pub mod proj_lattice;

pub use num_complex::Complex64;
pub use num_rational::Ratio;

/// Rational scalar used for exponents and alpha parameters.
pub type Rational = Ratio<i64>;

/// Numerical thresholds used by validation and predicates.
///
/// `lin` guards linear identities (hermiticity, trace normalization),
/// `psd` guards operator-order and positivity checks, `func` guards
/// identities that pass through functional calculus, and `rank` is the
/// spectral threshold separating range from kernel in projector joins.
/// `dim_cap` bounds the dimension of any constructed tensor space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub lin: f64,
    pub psd: f64,
    pub func: f64,
    pub rank: f64,
    pub dim_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lin: 1e-10,
            psd: 1e-9,
            func: 1e-8,
            rank: 1e-8,
            dim_cap: 4096,
        }
    }
}

/// Errors shared by every module in the crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("operator is not an effect (eigenvalue {eigenvalue} outside [0, 1])")]
    NotEffect { eigenvalue: f64 },
    #[error("operator is not a density state: {reason}")]
    NotState { reason: String },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operands are not summable: {detail}")]
    NotSummable { detail: String },
    #[error("operands are not comparable: {detail}")]
    NotComparable { detail: String },
    #[error("history has a non-projector effect at time {time}")]
    NotProjectorHistory { time: f64 },
    #[error("extension time {t_star} is not after the final support time {t_final}")]
    TimeNotAfterFinal { t_star: f64, t_final: f64 },
    #[error("expected {expected} block effects, got {got}")]
    SlotMismatch { expected: usize, got: usize },
    #[error("formal sum is not admissible: {detail}")]
    NotAdmissible { detail: String },
    #[error("completion hint does not close the sum to a unit decomposition (residual {residual:.3e})")]
    IncompleteHint { residual: f64 },
    #[error("family fails {mode} consistency at tolerance {tolerance:.3e}: {violations} pair(s), worst residual {worst:.3e}")]
    NotConsistent {
        mode: String,
        tolerance: f64,
        violations: usize,
        worst: f64,
    },
    #[error("designated unit has vanishing weight ({weight:.3e})")]
    NullUnit { weight: f64 },
    #[error("elements do not live in a common algebra: {detail}")]
    NotInCommonAlgebra { detail: String },
    #[error("atoms {i} and {j} are not disjoint")]
    NotDisjoint { i: usize, j: usize },
    #[error("atom family is not complete (residual {residual:.3e})")]
    NotComplete { residual: f64 },
    #[error("conditioning element has weight below threshold ({weight:.3e})")]
    ZeroCondition { weight: f64 },
    #[error("meet is undefined: operators do not commute (residual {residual:.3e})")]
    MeetUndefined { residual: f64 },
    #[error("outcome {label:?} of a projective measurement is not a projector")]
    NotProjectiveMeasurement { label: String },
    #[error("support mismatch: {detail}")]
    SupportMismatch { detail: String },
    #[error("alpha parameters differ: {left} vs {right}")]
    AlphaMismatch { left: String, right: String },
    #[error("tensor dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("eigensolver failed to converge (off-diagonal norm {off:.3e})")]
    EigenFailed { off: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
