//! Reverse-mode differentiation over dense `f64` tensors, plus Adam.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

use std::fmt;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use gradcheck::{grad_check, grad_check_many};
pub use tape::{softmax, Gradients, Tape, Var};
pub use tensor::{argmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Concat,
    Slice,
    Sigmoid,
    Tanh,
    Softmax,
    LogSoftmax,
    Log,
    LogSigmoid,
    Sum,
    SumCols,
    GatherRows,
    Min,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpKind::Leaf => "leaf",
            OpKind::Constant => "constant",
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Softmax => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Log => "log",
            OpKind::LogSigmoid => "log_sigmoid",
            OpKind::Sum => "sum",
            OpKind::SumCols => "sum_cols",
            OpKind::GatherRows => "gather_rows",
            OpKind::Min => "min",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("tensor shape {shape:?} cannot hold {len} values")]
    BadTensor { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible input shapes {shapes:?}")]
    Shape { op: OpKind, shapes: Vec<Vec<usize>> },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: OpKind },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward: non-finite gradient")]
    NonFiniteGradient,
    #[error("adam: {0}")]
    Optimizer(String),
}
