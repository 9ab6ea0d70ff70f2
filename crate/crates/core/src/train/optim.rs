use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::tensor::{GradientTape, ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(format!("unknown optimizer `{s}` (sgd, adam)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            ..Default::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            lr,
            ..Default::default()
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    moments: BTreeMap<ParamId, (Tensor, Tensor)>,
    step: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Optimizer {
            cfg,
            moments: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: ParamId) -> Option<(&Tensor, &Tensor)> {
        self.moments.get(&id).map(|(m, v)| (m, v))
    }

    /// Applies one descent step. Parameters outside `only` (when given) are
    /// left untouched even if they have gradients.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradientTape, only: Option<&BTreeSet<ParamId>>) {
        self.step += 1;
        let t = self.step as i32;
        let OptimizerConfig {
            kind,
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        for (id, g) in grads.iter() {
            if only.is_some_and(|s| !s.contains(&id)) {
                continue;
            }
            let p = params.get_mut(id);
            match kind {
                OptimizerKind::Sgd => {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = self
                        .moments
                        .entry(id)
                        .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(m.data_mut().iter_mut())
                        .zip(v.data_mut().iter_mut())
                        .zip(g.data());
                    for (((w, m), v), d) in it {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, ParamKind};

    fn quadratic(store: &ParamStore, id: ParamId) -> GradientTape {
        // (w - 3)^2
        let mut g = Graph::new();
        let w = g.param(id, store.get(id));
        let d = g.add_scalar(w, -3.0).unwrap();
        let sq = g.mul(d, d).unwrap();
        let s = g.sum_all(sq).unwrap();
        g.backward(s).unwrap()
    }

    #[test]
    fn both_optimizers_descend() {
        for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::adam(0.1)] {
            let mut store = ParamStore::new();
            let id = store.add("w", ParamKind::Free, Tensor::vector(vec![0.0, 10.0])).unwrap();
            let mut opt = Optimizer::new(cfg);
            for _ in 0..500 {
                let tape = quadratic(&store, id);
                opt.step(&mut store, &tape, None);
            }
            for v in store.get(id).data() {
                assert!((v - 3.0).abs() < 1e-3, "{:?}: {v}", cfg.kind);
            }
            if cfg.kind == OptimizerKind::Adam {
                let (m, v) = opt.moments(id).unwrap();
                assert_eq!(m.shape(), store.get(id).shape());
                assert_eq!(v.shape(), store.get(id).shape());
            }
        }
    }

    #[test]
    fn first_adam_step_has_size_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamKind::Free, Tensor::vector(vec![0.0])).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::default());
        let tape = quadratic(&store, id);
        opt.step(&mut store, &tape, None);
        assert!((store.get(id).data()[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn restricted_update() {
        let mut store = ParamStore::new();
        let a = store.add("a", ParamKind::Free, Tensor::vector(vec![0.0])).unwrap();
        let b = store.add("b", ParamKind::Free, Tensor::vector(vec![0.0])).unwrap();
        let mut tape = quadratic(&store, a);
        tape.add_scaled(&quadratic(&store, b), 1.0);
        let only: BTreeSet<_> = [b].into();
        Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut store, &tape, Some(&only));
        assert_eq!(store.get(a).data(), &[0.0]);
        assert!(store.get(b).data()[0] > 0.0);
    }
}
