//! Information-theoretic redundancy analysis of multi-task neural network
//! graphs, and construction of redundancy-disentangled merged topologies.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod format;
pub mod graph;
pub mod info;
pub mod merge;
pub mod redundancy;

pub use graph::{GraphBuilder, GraphError, Layering, NeuralGraph, TaskId, TaskPartition, TaskSet, VertexId, VertexKind};
pub use info::{ActivationDataset, DiscreteJoint, Estimator, EstimatorConfig, InfoError, Var};
