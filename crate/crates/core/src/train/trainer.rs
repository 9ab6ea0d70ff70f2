use std::fmt::Write as _;
use std::io;

use crate::kb::KnowledgeBase;

use super::objective::{evaluate, ObjectiveConfig};
use super::optim::{Optimizer, OptimizerConfig};
use super::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: ObjectiveConfig::default(),
            optimizer: OptimizerConfig::default(),
            epochs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub psi: Vec<f64>,
    pub pointwise: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Sources of the logged constraints.
    pub constraints: Vec<String>,
    /// Targets of the pointwise terms.
    pub pointwise: Vec<String>,
    pub epochs: Vec<EpochMetrics>,
    pub warnings: Vec<String>,
}

/// Epochs over which the objective is expected not to grow.
pub const MONOTONE_WINDOW: usize = 50;
const MONOTONE_SLACK: f64 = 1e-3;

impl TrainReport {
    /// `epoch,total_loss,psi_0,..,pointwise_0,..` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,total_loss");
        for j in 0..self.constraints.len() {
            write!(s, ",psi_{j}").unwrap();
        }
        for k in 0..self.pointwise.len() {
            write!(s, ",pointwise_{k}").unwrap();
        }
        s.push('\n');
        for e in &self.epochs {
            write!(s, "{},{}", e.epoch, e.total).unwrap();
            for v in e.psi.iter().chain(&e.pointwise) {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, mut w: impl io::Write) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// Full-batch gradient descent on the objective. Row `e` of the report
/// holds the objective before the `e`-th update.
pub fn train(kb: &mut KnowledgeBase, cfg: &TrainConfig) -> Result<TrainReport> {
    if kb.params().is_empty() {
        return Err(TrainError::NoParameters);
    }
    let mut report = TrainReport {
        constraints: kb
            .constraints()
            .iter()
            .filter(|c| !c.test_only)
            .map(|c| c.source.clone())
            .collect(),
        pointwise: kb.pointwise().iter().map(|p| p.target.clone()).collect(),
        ..Default::default()
    };
    let mut opt = Optimizer::new(cfg.optimizer);
    for epoch in 1..=cfg.epochs {
        let value = evaluate(kb, &cfg.objective, true)?;
        report.epochs.push(EpochMetrics {
            epoch,
            total: value.total,
            psi: value.psi,
            pointwise: value.pointwise,
        });
        if epoch > MONOTONE_WINDOW {
            let before = report.epochs[epoch - 1 - MONOTONE_WINDOW].total;
            if value.total > before + MONOTONE_SLACK {
                let msg = format!(
                    "objective rose from {before} to {} over the {MONOTONE_WINDOW} epochs before epoch {epoch}",
                    value.total
                );
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
        }
        opt.step(kb.params_mut(), &value.grads, None);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Pointwise;
    use crate::learners::{Binding, MlpSpec};
    use crate::logic::program::PointwiseLoss;
    use crate::tensor::Tensor;

    fn separable() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(1);
        let xs = Tensor::matrix(2, 1, vec![-1.0, 1.0]).unwrap();
        kb.add_domain("X", xs.clone(), vec![]).unwrap();
        kb.add_model("N", MlpSpec::new(vec![1, 4, 1])).unwrap();
        kb.add_predicate("P", &["X"], Binding::Model("N".into())).unwrap();
        kb.add_pointwise(Pointwise {
            target: "P".into(),
            inputs: xs,
            labels: Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap(),
            loss: PointwiseLoss::CrossEntropy,
            weight: 1.0,
        })
        .unwrap();
        kb
    }

    fn accuracy(kb: &KnowledgeBase) -> f64 {
        let mut gr = crate::ground::Grounder::new(kb, Default::default());
        let n = gr.predicate_grid("P").unwrap();
        let v = gr.graph().value(n).data().to_vec();
        let ok = (v[0] < 0.5) as u8 + (v[1] >= 0.5) as u8;
        ok as f64 / 2.0
    }

    #[test]
    fn separable_pair_is_learned_within_200_epochs() {
        let mut kb = separable();
        let cfg = TrainConfig {
            epochs: 200,
            ..Default::default()
        };
        let r = train(&mut kb, &cfg).unwrap();
        assert_eq!(accuracy(&kb), 1.0);
        assert!(r.warnings.is_empty());
        assert!(r.last().unwrap().total < r.epochs[0].total);
    }

    #[test]
    fn constraint_alone_drives_predicate_up() {
        let mut kb = KnowledgeBase::new(2);
        let xs = Tensor::matrix(5, 1, vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        kb.add_domain("X", xs, vec![]).unwrap();
        kb.add_model("N", MlpSpec::new(vec![1, 4, 1])).unwrap();
        kb.add_predicate("A", &["X"], Binding::Model("N".into())).unwrap();
        kb.add_constraint("forall x: A(x)", 1.0, false).unwrap();
        let r = train(&mut kb, &TrainConfig { epochs: 300, ..Default::default() }).unwrap();
        let psi = evaluate(&kb, &ObjectiveConfig::default(), false).unwrap().psi[0];
        assert!(psi >= 0.99, "{psi}");
        assert!(r.epochs[0].psi[0] < psi);
    }

    #[test]
    fn zero_weight_constraints_leave_training_bit_identical() {
        let mut plain = separable();
        let mut logged = separable();
        logged.add_constraint("forall x: P(x)", 0.0, false).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            ..Default::default()
        };
        let a = train(&mut plain, &cfg).unwrap();
        let b = train(&mut logged, &cfg).unwrap();
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert_eq!(x.total.to_bits(), y.total.to_bits());
            assert_eq!(x.pointwise, y.pointwise);
        }
        for id in plain.params().ids() {
            assert_eq!(plain.params().get(id), logged.params().get(id));
        }
        assert_eq!(b.epochs[0].psi.len(), 1);
    }

    #[test]
    fn non_finite_loss_names_the_constraint() {
        let mut kb = separable();
        kb.add_constraint("forall x: P(x)", 1.0, false).unwrap();
        let id = kb.params().find("N.w0").unwrap();
        kb.params_mut().get_mut(id).data_mut()[0] = f64::NAN;
        let err = train(&mut kb, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("forall x: P(x)"), "{err}");
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let mut kb = separable();
        kb.add_constraint("forall x: P(x)", 0.5, false).unwrap();
        let r = train(&mut kb, &TrainConfig { epochs: 3, ..Default::default() }).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,total_loss,psi_0,pointwise_0");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn empty_store_is_rejected() {
        let mut kb = KnowledgeBase::new(0);
        assert!(matches!(train(&mut kb, &TrainConfig::default()), Err(TrainError::NoParameters)));
    }
}
