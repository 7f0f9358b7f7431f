//! Differentiation engines.
//!
//! [`expr`] is a scalar expression graph whose derivatives are themselves
//! expressions, so input derivatives can sit inside a loss that is later
//! differentiated with respect to parameters. [`tape`] is the batched
//! counterpart used for training: dense matrices, second-order input jets
//! carried forward, parameter adjoints pulled backward.

pub mod expr;
pub mod tape;

pub use expr::{Bindings, Expr, FrozenGraph, Gradient, Graph, NodeId};
pub use tape::{Adjoints, Tape, TensorId, JET_BLOCKS};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("node {node} is not a variable and cannot be differentiated against")]
    NotAVariable { node: usize },
}
