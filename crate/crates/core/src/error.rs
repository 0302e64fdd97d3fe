use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state dimension {requested} exceeds the cap of {cap}")]
    DimensionCap { requested: u128, cap: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("register layouts differ")]
    LayoutMismatch,
    #[error("register index {0} out of range")]
    NoSuchRegister(usize),
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("map is not a permutation of its register")]
    NotPermutation,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("element count exceeds the enumeration cap of {0}")]
    SizeCap(usize),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("invalid oracle instance: {0}")]
    InvalidInstance(String),
    #[error("shift operators U_f(x e_j) are not available for this oracle")]
    ShiftUnavailable,
    #[error("trial budget of {budget} exhausted without a verified result")]
    BudgetExhausted { budget: usize },
    #[error("promise violated: {0}")]
    PromiseViolation(String),
    #[error("no candidate passed verification")]
    NoVerifiedCandidate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
