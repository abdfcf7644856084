use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // taxonomy
    #[error("taxonomy contains a directed cycle through: {}", .0.join(", "))]
    CycleDetected(Vec<String>),
    #[error("edge references unknown node(s): {}", .0.join(", "))]
    UnknownNodeInEdge(Vec<String>),
    #[error("taxonomy has more than one root (declared {declared:?}, parentless: {})", .parentless.join(", "))]
    MultipleRoots { declared: String, parentless: Vec<String> },
    #[error("duplicate label(s): {}", .0.join(", "))]
    DuplicateLabel(Vec<String>),
    #[error("duplicate edge(s): {}", .0.iter().map(|(p, c)| format!("{p} -> {c}")).collect::<Vec<_>>().join(", "))]
    DuplicateEdge(Vec<(String, String)>),
    #[error("declared root {0:?} is not a node")]
    UnknownRoot(String),
    #[error("invalid leaf_index: {0}")]
    BadLeafIndex(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    // geometry
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("point with norm {0} lies outside the unit ball")]
    OutsideBall(f64),
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("point with norm {norm} lies inside the cone inner radius {inner}")]
    InsideInnerRadius { norm: f64, inner: f64 },
    #[error("cone aperture constant must lie in (0, 1), got {0}")]
    BadK(f64),

    // training
    #[error("label tree is empty")]
    EmptyTree,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("non-finite activation in forward pass")]
    NonFiniteActivation,
    #[error("no definition feature for label(s): {}", .0.join(", "))]
    MissingDefinitionFeature(Vec<String>),
    #[error("gold label set is empty")]
    GoldEmpty,
    #[error("degenerate class balance: {positives} positives out of {total}")]
    DegenerateClassBalance { total: usize, positives: usize },
    #[error("probability {0} outside (0, 1)")]
    ProbOutOfRange(f64),
    #[error("invalid configuration: {0}")]
    BadConfig(String),

    // evaluation
    #[error("sample ids do not match; symmetric difference: {}", .0.join(", "))]
    IdMismatch(Vec<String>),
    #[error("gold data contains no labels")]
    EmptyGold,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    // io
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{path}:{line}: {source}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
