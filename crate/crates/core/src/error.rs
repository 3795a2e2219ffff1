use thiserror::Error;

pub type Result<T> = std::result::Result<T, AcdError>;

#[derive(Debug, Error)]
pub enum AcdError {
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("design is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("observation {index} has leverage {leverage}; deletion undefined")]
    UnitLeverage { index: usize, leverage: f64 },

    #[error("residual variance is zero; distances undefined")]
    PerfectFit,

    #[error("all rows are identical; kernel bandwidth is zero")]
    ZeroBandwidth,

    #[error("gradient matrix is zero; no leading direction")]
    ZeroGradientMatrix,

    #[error("local fit at anchor {anchor} failed: {source}")]
    Anchor {
        anchor: usize,
        #[source]
        source: Box<AcdError>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<AcdError>,
    },

    #[error("degenerate trim: {flagged} of {n} rows flagged")]
    DegenerateTrim { flagged: usize, n: usize },

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl AcdError {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        AcdError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            AcdError::InvalidData(_) => "invalid_data",
            AcdError::InvalidParameter(_) => "invalid_parameter",
            AcdError::NotPositiveDefinite => "not_positive_definite",
            AcdError::RankDeficient { .. } => "rank_deficient",
            AcdError::UnitLeverage { .. } => "unit_leverage",
            AcdError::PerfectFit => "perfect_fit",
            AcdError::ZeroBandwidth => "zero_bandwidth",
            AcdError::ZeroGradientMatrix => "zero_gradient_matrix",
            AcdError::Anchor { source, .. } | AcdError::Stage { source, .. } => source.kind(),
            AcdError::DegenerateTrim { .. } => "degenerate_trim",
            AcdError::Csv { .. } => "csv",
            AcdError::Io(_) => "io",
        }
    }
}
