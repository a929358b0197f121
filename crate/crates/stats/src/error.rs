use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse { line: usize, column: String, value: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{column}` has {got} rows, expected {expected}")]
    RaggedColumn { column: String, got: usize, expected: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid learner: {0}")]
    InvalidLearner(String),
    #[error("fold {fold}: no training rows in {cell}")]
    EmptyTrainingCell { fold: usize, cell: String },
    #[error("invalid folds: {0}")]
    InvalidFolds(String),
    #[error("estimation: {0}")]
    Estimation(String),
    #[error("test: {0}")]
    Test(String),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error(transparent)]
    Graph(#[from] mswig_core::GraphError),
}

impl StatsError {
    /// True for errors caused by the inputs rather than by a numerical procedure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, StatsError::Estimation(_) | StatsError::EmptyTrainingCell { .. } | StatsError::Simulation(_))
    }
}

pub type Result<T> = std::result::Result<T, StatsError>;
