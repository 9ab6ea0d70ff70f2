use crate::ground::{apply_binding, loss_transform, CompileOptions, Grounder, LossMode};
use crate::kb::{KnowledgeBase, Pointwise};
use crate::learners::{Activation, Binding};
use crate::logic::program::PointwiseLoss;
use crate::tensor::{GradientTape, Graph, NodeId, Tensor};

use super::{Result, TrainError};

/// Floor for probabilities inside cross-entropy logarithms.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ObjectiveConfig {
    pub compile: CompileOptions,
    pub loss: LossMode,
}

/// Value of the objective at the current parameters.
#[derive(Clone, Debug, Default)]
pub struct ObjectiveValue {
    pub total: f64,
    /// ψ of every constraint that is not test-only, in declaration order.
    pub psi: Vec<f64>,
    pub pointwise: Vec<f64>,
    pub grads: GradientTape,
}

fn is_softmax(kb: &KnowledgeBase, target: &str) -> bool {
    let model = match kb.model(target) {
        Ok(m) => Some(m),
        Err(_) => match kb.symbol(target).map(|s| &s.binding) {
            Ok(Binding::Model(m)) => kb.model(m).ok(),
            _ => None,
        },
    };
    model.is_some_and(|m| m.spec().output == Activation::Softmax)
}

/// Output node of a pointwise target on constant input rows.
pub fn target_output(g: &mut Graph, kb: &KnowledgeBase, target: &str, inputs: &Tensor) -> Result<NodeId> {
    let x = g.constant(inputs.clone());
    if let Ok(m) = kb.model(target) {
        return Ok(m.forward(g, kb.params(), x)?);
    }
    let sym = kb.symbol(target)?;
    Ok(apply_binding(g, kb, &sym.binding, x)?)
}

/// Cross-entropy (categorical for softmax outputs, binary otherwise) or
/// squared error, averaged over rows.
pub fn pointwise_loss(
    g: &mut Graph,
    pred: NodeId,
    labels: &Tensor,
    loss: PointwiseLoss,
    categorical: bool,
) -> Result<NodeId> {
    let y = g.constant(labels.clone());
    let rows = labels.shape().first().copied().unwrap_or(0).max(1) as f64;
    Ok(match loss {
        PointwiseLoss::SquaredError => {
            let d = g.sub(pred, y)?;
            let sq = g.mul(d, d)?;
            g.mean_all(sq)?
        }
        PointwiseLoss::CrossEntropy if categorical => {
            let p = g.clamp(pred, PROB_EPSILON, 1.0)?;
            let lp = g.log(p)?;
            let t = g.mul(y, lp)?;
            let s = g.sum_all(t)?;
            g.mul_scalar(s, -1.0 / rows)?
        }
        PointwiseLoss::CrossEntropy => {
            let p = g.clamp(pred, PROB_EPSILON, 1.0 - PROB_EPSILON)?;
            let lp = g.log(p)?;
            let a = g.mul(y, lp)?;
            let q = g.rsub_scalar(1.0, p)?;
            let lq = g.log(q)?;
            let ny = g.rsub_scalar(1.0, y)?;
            let b = g.mul(ny, lq)?;
            let s = g.add(a, b)?;
            let m = g.mean_all(s)?;
            g.mul_scalar(m, -1.0)?
        }
    })
}

fn pointwise_term(kb: &KnowledgeBase, p: &Pointwise, grad: bool) -> Result<(f64, Option<GradientTape>)> {
    let mut g = Graph::new();
    let out = target_output(&mut g, kb, &p.target, &p.inputs)?;
    let categorical = is_softmax(kb, &p.target) && p.labels.cols() > 1;
    let l = pointwise_loss(&mut g, out, &p.labels, p.loss, categorical)?;
    let l = g.mul_scalar(l, p.weight)?;
    let value = g.value(l).item().unwrap();
    let tape = if grad { Some(g.backward(l)?) } else { None };
    Ok((value, tape))
}

/// Truth degree of one constraint and, when it carries weight,
/// `λ·L(ψ)` with its gradients. Each term gets its own graph so memory is
/// released as soon as its gradients are taken.
pub fn constraint_term(
    kb: &KnowledgeBase,
    index: usize,
    cfg: &ObjectiveConfig,
    grad: bool,
) -> Result<(f64, Option<(f64, GradientTape)>)> {
    let c = &kb.constraints()[index];
    let mut gr = Grounder::new(kb, cfg.compile);
    let grounded = gr.compile(&c.formula).map_err(|e| TrainError::Constraint {
        constraint: c.source.clone(),
        error: e.to_string(),
    })?;
    let g = gr.graph_mut();
    let psi = g.value(grounded.psi).item().unwrap();
    if !psi.is_finite() {
        return Err(TrainError::NonFinite {
            what: format!("constraint \"{}\"", c.source),
        });
    }
    if c.weight == 0.0 {
        return Ok((psi, None));
    }
    let l = loss_transform(g, grounded.psi, cfg.loss)?;
    let l = g.mul_scalar(l, c.weight)?;
    let value = g.value(l).item().unwrap();
    let tape = if grad { g.backward(l)? } else { GradientTape::new() };
    Ok((psi, Some((value, tape))))
}

/// `Σ λ_j L(ψ_j) + Σ w_k pointwise_k` over the constraints that are not
/// test-only. Constraints with λ = 0 are evaluated for reporting but
/// contribute nothing.
pub fn evaluate(kb: &KnowledgeBase, cfg: &ObjectiveConfig, grad: bool) -> Result<ObjectiveValue> {
    let mut out = ObjectiveValue::default();
    for (i, c) in kb.constraints().iter().enumerate() {
        if c.test_only {
            continue;
        }
        let (psi, term) = constraint_term(kb, i, cfg, grad)?;
        out.psi.push(psi);
        if let Some((value, tape)) = term {
            if !value.is_finite() || !tape.is_finite() {
                return Err(TrainError::NonFinite {
                    what: format!("constraint \"{}\"", c.source),
                });
            }
            out.total += value;
            out.grads.add_scaled(&tape, 1.0);
        }
    }
    for p in kb.pointwise() {
        let (value, tape) = pointwise_term(kb, p, grad)?;
        let finite = value.is_finite() && tape.as_ref().is_none_or(|t| t.is_finite());
        if !finite {
            return Err(TrainError::NonFinite {
                what: format!("pointwise loss on `{}`", p.target),
            });
        }
        out.pointwise.push(value);
        out.total += value;
        if let Some(t) = tape {
            out.grads.add_scaled(&t, 1.0);
        }
    }
    Ok(out)
}
