use thiserror::Error;

/// Errors raised while loading or manipulating diagrams.
#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("level 0 must consist of exactly one vertex, found {0}")]
    BadRoot(usize),

    #[error("sink vertex `{vertex}` at level {level}: no outgoing arrows")]
    Sink { level: usize, vertex: String },

    #[error("unreachable vertex `{vertex}` at level {level}: no incoming arrows")]
    Unreachable { level: usize, vertex: String },

    #[error("level mismatch at gap {gap}: arrow {from} -> {to}: {detail}")]
    LevelMismatch {
        gap: usize,
        from: String,
        to: String,
        detail: String,
    },

    #[error("requested depth {requested} exceeds available depth {available} of a finite-prefix presentation")]
    DepthExceeded { requested: usize, available: usize },

    #[error("invalid telescope cuts: {0}")]
    BadCuts(String),

    #[error("arrow count overflow at gap {gap}: {detail}")]
    CountOverflow { gap: usize, detail: String },
}

/// Errors from the potential-sensitive computations (tight arrows, geodesics,
/// minimizer counts).
#[derive(Debug, Error)]
pub enum TieError {
    #[error(
        "tie ambiguity at gap {gap}, arrow {from} -> {to}: tightness defect {defect:.3e} lies \
         inside the float-tolerance gray zone (tol {tol:.3e}); rerun in exact-rational mode"
    )]
    Ambiguous {
        gap: usize,
        from: String,
        to: String,
        defect: f64,
        tol: f64,
    },
}

/// Errors from the DP statistics layer.
#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),

    #[error(transparent)]
    Tie(#[from] TieError),
}

/// Errors from geodesic-subdiagram extraction and queries.
#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),

    #[error(transparent)]
    Tie(#[from] TieError),

    #[error("level {requested} is beyond the certified depth {certified} ({certification})")]
    Uncertified {
        requested: usize,
        certified: usize,
        certification: String,
    },

    #[error("geodesic path family exceeds the materialization cap {cap}; counts and membership remain available")]
    PathCapExceeded { cap: usize },
}

/// Errors from the finite-level algebra layer.
#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("level {level} has {paths} paths, exceeding the cap {cap}")]
    PathCapExceeded {
        level: usize,
        paths: usize,
        cap: usize,
    },

    #[error("block mismatch: {0}")]
    BlockMismatch(String),

    #[error("state is not consistent with the algebra: {0}")]
    BadState(String),

    #[error("subdiagram certification insufficient: certified to {certified}, requested {requested}")]
    CertificationExceeded { certified: usize, requested: usize },

    #[error("weights are not tracial: {0}")]
    NonTracialWeights(String),

    #[error(transparent)]
    Tie(#[from] TieError),

    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// Errors from the construction procedures.
#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("supernatural sequence stuck at gap {gap}: {detail}")]
    StuckGap { gap: usize, detail: String },

    #[error("base diagram violates the multiplicity >= 2 hypothesis at gap {gap} ({from} -> {to}); telescope the base first")]
    MultiplicityTooSmall {
        gap: usize,
        from: String,
        to: String,
    },

    #[error("dimension mismatch between matrix systems at gap {gap}")]
    SystemMismatch { gap: usize },

    #[error(transparent)]
    Diagram(#[from] DiagramError),

    #[error(transparent)]
    Tie(#[from] TieError),
}
