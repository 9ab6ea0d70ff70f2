//! Implementations that predicates and functions can be bound to.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::tensor::{ParamId, Tensor, TensorError};

pub mod given;
pub mod mlp;

pub use given::{GivenFn, GivenRegistry};
pub use mlp::{Activation, Mlp, MlpSpec};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid network: {0}")]
    Spec(String),
    #[error("input has shape {actual:?}, expected width {expected}")]
    Width { expected: usize, actual: Vec<usize> },
    #[error("cannot bind `{symbol}`: {msg}")]
    Bind { symbol: String, msg: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// What a predicate or function symbol evaluates to.
#[derive(Clone)]
pub enum Binding {
    /// Every output of a named network.
    Model(String),
    /// One output column of a network shared with other symbols.
    Slice { model: String, index: usize },
    /// A fixed host computation.
    Given(Arc<dyn GivenFn>),
    /// A constant truth value per tuple of the input domains.
    Table(Tensor),
    /// A learnable logit per tuple of the input domains, squashed into
    /// [0, 1] with a sigmoid.
    Free(ParamId),
}

impl fmt::Debug for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Model(m) => write!(f, "Model({m})"),
            Binding::Slice { model, index } => write!(f, "Slice({model}, {index})"),
            Binding::Given(g) => write!(f, "Given({g:?})"),
            Binding::Table(t) => write!(f, "Table({:?})", t.shape()),
            Binding::Free(p) => write!(f, "Free({p:?})"),
        }
    }
}

impl Binding {
    /// Whether the binding owns parameters of its own.
    pub fn is_learnable(&self) -> bool {
        matches!(self, Binding::Model(_) | Binding::Slice { .. } | Binding::Free(_))
    }
}

/// Checks that `binding` can implement a symbol whose arguments have the
/// given total width. Returns the output width. Predicates additionally
/// need a single [0, 1]-valued output.
pub fn check_binding(
    symbol: &str,
    binding: &Binding,
    in_width: usize,
    predicate: bool,
    model: impl Fn(&str) -> Option<MlpSpec>,
) -> Result<usize, LearnerError> {
    let fail = |msg: String| LearnerError::Bind {
        symbol: symbol.to_string(),
        msg,
    };
    let (out, truth) = match binding {
        Binding::Model(name) | Binding::Slice { model: name, .. } => {
            let spec = model(name).ok_or_else(|| fail(format!("unknown model `{name}`")))?;
            if spec.in_width() != in_width {
                return Err(fail(format!(
                    "model `{name}` takes width {}, the arguments have width {in_width}",
                    spec.in_width()
                )));
            }
            let truth = spec.output.is_truth_valued();
            match binding {
                Binding::Slice { index, .. } => {
                    if *index >= spec.out_width() {
                        return Err(fail(format!(
                            "slice {index} out of range for `{name}` with {} outputs",
                            spec.out_width()
                        )));
                    }
                    (1, truth)
                }
                _ => (spec.out_width(), truth),
            }
        }
        Binding::Given(g) => (g.out_width(in_width).map_err(fail)?, g.truth_valued()),
        Binding::Table(_) | Binding::Free(_) => {
            if !predicate {
                return Err(fail("tables can only implement predicates".into()));
            }
            (1, true)
        }
    };
    if predicate {
        if out != 1 {
            return Err(fail(format!("a predicate needs one output, the binding has {out}")));
        }
        if !truth {
            return Err(fail("a predicate binding must produce values in [0, 1]".into()));
        }
    }
    Ok(out)
}

/// Starting row for a learnable individual: the mean of the domain's
/// constant rows, or zeros when there are none.
pub fn individual_init(rows: &Tensor, width: usize) -> Vec<f64> {
    let n = if rows.rank() == 2 { rows.rows() } else { 0 };
    if n == 0 {
        return vec![0.0; width];
    }
    let mut mean = vec![0.0; width];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(rows.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(widths: Vec<usize>, output: Activation) -> MlpSpec {
        MlpSpec {
            output,
            ..MlpSpec::new(widths)
        }
    }

    #[test]
    fn predicate_bindings_need_truth_values() {
        let lookup = |name: &str| match name {
            "nn" => Some(spec(vec![2, 3, 1], Activation::Sigmoid)),
            "soft" => Some(spec(vec![2, 6], Activation::Softmax)),
            "lin" => Some(spec(vec![2, 1], Activation::Identity)),
            _ => None,
        };
        assert_eq!(check_binding("A", &Binding::Model("nn".into()), 2, true, lookup).unwrap(), 1);
        let sliced = Binding::Slice {
            model: "soft".into(),
            index: 5,
        };
        assert_eq!(check_binding("A", &sliced, 2, true, lookup).unwrap(), 1);
        let bad_slice = Binding::Slice {
            model: "soft".into(),
            index: 6,
        };
        assert!(check_binding("A", &bad_slice, 2, true, lookup).is_err());
        // six outputs cannot be one truth value
        assert!(check_binding("A", &Binding::Model("soft".into()), 2, true, lookup).is_err());
        assert!(check_binding("A", &Binding::Model("lin".into()), 2, true, lookup).is_err());
        // but a function may have an unbounded range
        assert_eq!(check_binding("f", &Binding::Model("lin".into()), 2, false, lookup).unwrap(), 1);
        assert!(check_binding("A", &Binding::Model("nn".into()), 4, true, lookup).is_err());
    }

    #[test]
    fn individual_starts_at_domain_mean() {
        let rows = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(individual_init(&rows, 2), vec![2.0, 4.0]);
        assert_eq!(individual_init(&Tensor::zeros(&[0, 3]), 3), vec![0.0; 3]);
    }
}
