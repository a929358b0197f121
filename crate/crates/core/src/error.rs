use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("invalid node name `{0}`: names must match [A-Za-z][A-Za-z0-9_]*")]
    InvalidName(String),

    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("self-loop on `{0}`")]
    SelfLoop(String),

    #[error("duplicate edge {0}")]
    DuplicateEdge(String),

    #[error("directed cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("dangling proxy: partially missing `{0}` has no selection node")]
    DanglingProxy(String),

    #[error("invalid selection declaration: {0}")]
    InvalidSelection(String),

    #[error("proxy invariant violated: {0}")]
    ProxyEdge(String),

    #[error("term `{0}` refers to a fixed intervention node")]
    FixedTerm(String),

    #[error("term `{term}` does not match node labels; expected `{expected}`")]
    LabelMismatch { term: String, expected: String },

    #[error("term `{0}` appears in more than one of the left, right and conditioning sets")]
    OverlappingSets(String),

    #[error("invalid statement: {0}")]
    InvalidStatement(String),

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("invalid estimand: {0}")]
    InvalidEstimand(String),

    #[error("empty graph")]
    EmptyGraph,

    #[error("ambiguous design: {0}")]
    AmbiguousDesign(String),
}
