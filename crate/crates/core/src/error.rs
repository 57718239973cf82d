use std::io;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("edge {src}->{dst}: weight {weight} outside [0, 1]")]
    WeightOutOfRange { src: u64, dst: u64, weight: f64 },

    #[error("self-loop on node {0}")]
    SelfLoop(u64),

    #[error("duplicate edge {src}->{dst}")]
    DuplicateEdge { src: u64, dst: u64 },

    #[error("node {node} out of range for graph with {n} nodes")]
    InvalidNode { node: usize, n: usize },

    #[error("graph is empty")]
    EmptyGraph,

    #[error("graph has no edges")]
    NoEdges,

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("invalid sample spec: {0}")]
    InvalidSampleSpec(String),

    #[error("sample of {target} nodes requested from a graph that can yield at most {available}")]
    SampleTooSmall { target: usize, available: usize },

    #[error("node {0} is already a seed")]
    AlreadySeed(NodeId),

    #[error("no candidate nodes left")]
    NoCandidates,

    #[error("budget k={k} exceeds node count n={n}")]
    BudgetTooLarge { k: usize, n: usize },

    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),

    #[error("linear threshold: incoming weights of node {node} sum to {sum} > 1")]
    LtWeightsExceedOne { node: NodeId, sum: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite parameter in {tensor} at episode {episode}, update {update}")]
    NonFinite {
        tensor: &'static str,
        episode: usize,
        update: usize,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
