//! Objective assembly, optimisers, the training loop, collective
//! inference and model checking.

mod check;
mod collective;
mod gradcheck;
mod objective;
mod optim;
mod trainer;

use thiserror::Error;

use crate::ground::GroundError;
use crate::kb::KbError;
use crate::learners::LearnerError;
use crate::tensor::TensorError;

pub use check::{dnf_candidates, enumerate_dnf, evaluate_formula, model_check, DnfCandidate, DNF_LIMIT};
pub use collective::{collective_infer, CollectiveConfig, CollectiveResult, PRIOR_CLAMP};
pub use gradcheck::{check_constraint, check_objective};
pub use objective::{
    constraint_term, evaluate, pointwise_loss, target_output, ObjectiveConfig, ObjectiveValue, PROB_EPSILON,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use trainer::{train, EpochMetrics, TrainConfig, TrainReport, MONOTONE_WINDOW};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("constraint \"{constraint}\": {error}")]
    Constraint { constraint: String, error: String },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("the knowledge base has no parameters to train")]
    NoParameters,
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Invalid(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;
