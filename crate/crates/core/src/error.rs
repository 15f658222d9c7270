use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("space must contain at least one point")]
    EmptySpace,
    #[error("objects live on different spaces ({left} vs {right} points)")]
    SpaceMismatch { left: usize, right: usize },
    #[error("point {point} is outside a space of {n_points} points")]
    PointOutOfRange { point: usize, n_points: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid rational: {0}")]
    InvalidRational(String),
    #[error("distribution masses must sum to 1 (got {0})")]
    NotAProbability(String),
    #[error("alphabets differ")]
    AlphabetMismatch,
    #[error("group element does not match its group spec: {0}")]
    SpecMismatch(String),
    #[error("factor index {index} out of range for {count} factors")]
    FactorIndexOutOfRange { index: usize, count: usize },
    #[error("tile too large: {size} elements exceeds limit {limit}")]
    TileTooLarge { size: u128, limit: u128 },
    #[error("unsupported tile: {0}")]
    UnsupportedTile(String),
    #[error("generators do not commute: {0} and {1}")]
    NonCommuting(usize, usize),
    #[error("torsion generator {generator} does not have order dividing {modulus}")]
    TorsionOrder { generator: usize, modulus: u64 },
    #[error("wrong number of generators: expected {expected}, got {got}")]
    GeneratorCount { expected: usize, got: usize },
    #[error("empty element set")]
    EmptyElementSet,
    #[error("identity element in freeness window")]
    IdentityInWindow,
    #[error("coverage {achieved} does not exceed required {required}")]
    CoverageShortfall { achieved: String, required: String },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("pi is infeasible on {n_points} points: {detail}")]
    InfeasiblePi { n_points: usize, detail: String },
    #[error("good partition verification failed after {attempts} attempts (worst bad mass {worst})")]
    VerificationFailed { attempts: u32, worst: String },
    #[error("pushforwards of the two labelings differ")]
    PushforwardMismatch,
    #[error("factor {factor} is not transitive ({orbits} orbits)")]
    NotTransitive { factor: usize, orbits: usize },
    #[error("factor is not free on the tile window (defect {0})")]
    NotFree(String),
    #[error("no admissible tile up to the cap: {0}")]
    NoGoodTile(String),
    #[error("base sizes differ: {alpha} vs {beta}")]
    BaseSizeMismatch { alpha: usize, beta: usize },
    #[error("matching defect {defect} violates bound {bound} in column {column}")]
    DefectBoundViolated { column: usize, defect: usize, bound: String },
    #[error("tower levels overlap at point {0}")]
    LevelOverlap(usize),
    #[error("budget violated in {component}: {value} not below {bound}")]
    BudgetViolated { component: String, value: String, bound: String },
    #[error("only rank-1 torsion-free factors can be ergodized")]
    RankUnsupported,
    #[error("ergodization needs {needed} changed points, budget allows {allowed}")]
    BudgetExceeded { needed: usize, allowed: String },
    #[error("final discrepancy {value} not below {eps}")]
    FinalDiscrepancyExceeded { value: String, eps: String },
    #[error("factor count mismatch: {0}")]
    FactorCountMismatch(String),
    #[error("word {0} is not a single factor letter")]
    NotALetter(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
