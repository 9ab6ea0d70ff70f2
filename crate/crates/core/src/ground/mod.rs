//! Lowering of sort-checked formulas to differentiable truth degrees.
//!
//! Every subformula of a formula with `R` quantifiers becomes a rank-`R`
//! tensor whose axis `i` ranges over the domain of variable `i` when that
//! variable is free in the subformula and has size 1 otherwise.
//! Connectives broadcast, quantifiers reduce their axis.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::learners::LearnerError;
use crate::tensor::{Graph, NodeId, Tensor, TensorError};

mod compile;
pub mod tnorm;

pub use compile::{apply_binding, compile_formula, CompileStats, Evaluation, GroundedConstraint, Grounder};
pub use tnorm::{TNormConfig, TNormFamily};

#[derive(Debug, Error)]
pub enum GroundError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("{op}: truth value {value} is outside [0, 1]")]
    OutOfRange { op: &'static str, value: f64 },
    #[error("grounding needs {tuples} tuples, more than the cap of {cap}")]
    CapExceeded { tuples: u128, cap: u128 },
    #[error("`{0}` is not bound")]
    Unbound(String),
    #[error("{0}")]
    Unsupported(String),
}

/// Default bound on the number of tuples a formula may ground.
pub const DEFAULT_CAP: u128 = 10_000_000;

/// Floor applied to ψ before taking its logarithm.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum LossMode {
    Linear,
    #[default]
    Log,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Linear => "linear",
            LossMode::Log => "log",
        })
    }
}

impl FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(LossMode::Linear),
            "log" => Ok(LossMode::Log),
            _ => Err(format!("unknown loss `{s}` (linear, log)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompileOptions {
    pub tnorm: TNormConfig,
    pub cap: u128,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            tnorm: TNormConfig::default(),
            cap: DEFAULT_CAP,
        }
    }
}

/// `1 - ψ` or `-log(max(ψ, 1e-12))`.
pub fn loss_transform(g: &mut Graph, psi: NodeId, mode: LossMode) -> Result<NodeId, TensorError> {
    match mode {
        LossMode::Linear => g.rsub_scalar(1.0, psi),
        LossMode::Log => {
            let safe = g.clamp(psi, LOG_EPSILON, f64::INFINITY)?;
            let l = g.log(safe)?;
            g.mul_scalar(l, -1.0)
        }
    }
}

fn empty_axis(g: &mut Graph, x: NodeId, axis: usize, value: f64) -> NodeId {
    let mut shape = g.shape(x).to_vec();
    shape[axis] = 1;
    g.constant(Tensor::full(&shape, value))
}

/// Mean over `axis`, kept with size 1. An empty axis is vacuously true.
pub fn forall(g: &mut Graph, x: NodeId, axis: usize) -> Result<NodeId, TensorError> {
    if g.shape(x).get(axis) == Some(&0) {
        return Ok(empty_axis(g, x, axis, 1.0));
    }
    g.reduce_mean(x, axis, true)
}

/// Max over `axis`, kept with size 1. An empty axis is false.
pub fn exists(g: &mut Graph, x: NodeId, axis: usize) -> Result<NodeId, TensorError> {
    if g.shape(x).get(axis) == Some(&0) {
        return Ok(empty_axis(g, x, axis, 0.0));
    }
    g.reduce_max(x, axis, true)
}
