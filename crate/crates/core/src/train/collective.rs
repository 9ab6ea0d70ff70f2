use std::collections::BTreeSet;

use crate::ground::Grounder;
use crate::kb::KnowledgeBase;
use crate::learners::Binding;
use crate::logic::program::PointwiseLoss;
use crate::tensor::{Graph, ParamId, ParamKind, Tensor};

use super::objective::{constraint_term, pointwise_loss, ObjectiveConfig};
use super::optim::{Optimizer, OptimizerConfig};
use super::{Result, TrainError};

/// Priors are kept this far away from 0 and 1 so their logits are finite.
pub const PRIOR_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveConfig {
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub steps: usize,
    /// Weight of the cross-entropy pulling each value back to its prior.
    pub prior_weight: f64,
    /// Predicates to re-estimate; by default every predicate bound to a
    /// model.
    pub predicates: Option<Vec<String>>,
}

impl Default for CollectiveConfig {
    fn default() -> Self {
        CollectiveConfig {
            objective: ObjectiveConfig::default(),
            optimizer: OptimizerConfig::adam(0.05),
            steps: 500,
            prior_weight: 1.0,
            predicates: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CollectiveResult {
    pub predicates: Vec<String>,
    /// Model outputs over each predicate's domain grid.
    pub priors: Vec<Tensor>,
    /// Adjusted truth values, same shapes as the priors.
    pub posteriors: Vec<Tensor>,
    /// ψ of the non-test constraints at the priors and after adjustment.
    pub psi_before: Vec<f64>,
    pub psi_after: Vec<f64>,
}

impl CollectiveResult {
    pub fn posterior(&self, name: &str) -> Option<&Tensor> {
        self.predicates.iter().position(|p| p == name).map(|i| &self.posteriors[i])
    }

    pub fn prior(&self, name: &str) -> Option<&Tensor> {
        self.predicates.iter().position(|p| p == name).map(|i| &self.priors[i])
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn constraint_psi(kb: &KnowledgeBase, cfg: &ObjectiveConfig) -> Result<Vec<f64>> {
    let mut out = vec![];
    for (i, c) in kb.constraints().iter().enumerate() {
        if !c.test_only {
            out.push(constraint_term(kb, i, cfg, false)?.0);
        }
    }
    Ok(out)
}

/// Re-estimates the truth values of predicates on their domains so that
/// the constraints hold while staying close to what the frozen models
/// predict. Each value is a fresh logit squashed by a sigmoid; nothing
/// else is updated.
pub fn collective_infer(kb: &KnowledgeBase, cfg: &CollectiveConfig) -> Result<CollectiveResult> {
    let names: Vec<String> = match &cfg.predicates {
        Some(p) => p.clone(),
        None => kb
            .symbols()
            .filter(|s| s.is_predicate() && matches!(s.binding, Binding::Model(_) | Binding::Slice { .. }))
            .map(|s| s.name.clone())
            .collect(),
    };
    if names.is_empty() {
        return Err(TrainError::Empty("no predicates to re-estimate".into()));
    }
    let mut priors = vec![];
    {
        let mut gr = Grounder::new(kb, cfg.objective.compile);
        for name in &names {
            let node = gr.predicate_grid(name)?;
            let t = gr.graph().value(node).map(|v| v.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP));
            if t.numel() == 0 {
                return Err(TrainError::Empty(format!("`{name}` has no rows to infer")));
            }
            priors.push(t);
        }
    }

    let mut work = kb.clone();
    work.pointwise_mut().clear();
    let mut free: Vec<ParamId> = vec![];
    for (name, prior) in names.iter().zip(&priors) {
        let id = work
            .params_mut()
            .add(format!("collective.{name}"), ParamKind::Free, prior.map(logit))?;
        work.rebind(name, Binding::Free(id))?;
        free.push(id);
    }
    let only: BTreeSet<ParamId> = free.iter().copied().collect();
    let psi_before = constraint_psi(&work, &cfg.objective)?;

    let mut opt = Optimizer::new(cfg.optimizer);
    for _ in 0..cfg.steps {
        let mut grads = crate::tensor::GradientTape::new();
        for (i, c) in work.constraints().iter().enumerate() {
            if c.test_only || c.weight == 0.0 {
                continue;
            }
            if let (_, Some((value, tape))) = constraint_term(&work, i, &cfg.objective, true)? {
                if !value.is_finite() || !tape.is_finite() {
                    return Err(TrainError::NonFinite {
                        what: format!("constraint \"{}\"", c.source),
                    });
                }
                grads.add_scaled(&tape, 1.0);
            }
        }
        if cfg.prior_weight > 0.0 {
            for (&id, prior) in free.iter().zip(&priors) {
                let mut g = Graph::new();
                let l = g.param(id, work.params().get(id));
                let p = g.sigmoid(l)?;
                let loss = pointwise_loss(&mut g, p, prior, PointwiseLoss::CrossEntropy, false)?;
                let loss = g.mul_scalar(loss, cfg.prior_weight)?;
                grads.add_scaled(&g.backward(loss)?, 1.0);
            }
        }
        opt.step(work.params_mut(), &grads, Some(&only));
    }

    for id in kb.params().ids() {
        if work.params().get(id) != kb.params().get(id) {
            return Err(TrainError::Internal(format!(
                "collective inference changed `{}`",
                kb.params().entry(id).name
            )));
        }
    }
    let posteriors = free
        .iter()
        .map(|&id| work.params().get(id).map(sigmoid))
        .collect();
    let psi_after = constraint_psi(&work, &cfg.objective)?;
    Ok(CollectiveResult {
        predicates: names,
        priors,
        posteriors,
        psi_before,
        psi_after,
    })
}
