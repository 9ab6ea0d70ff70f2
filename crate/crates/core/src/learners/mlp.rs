use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Graph, NodeId, ParamId, ParamKind, ParamStore, Tensor, TensorError};

use super::LearnerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    /// Applies the activation row-wise to a `[n, k]` node.
    pub fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Softmax => g.softmax(x, 1),
            Activation::Identity => Ok(x),
        }
    }

    /// Whether every output lies in [0, 1].
    pub fn is_truth_valued(self) -> bool {
        matches!(self, Activation::Sigmoid | Activation::Softmax)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            "identity" | "linear" => Activation::Identity,
            _ => return Err(format!("unknown activation `{s}`")),
        })
    }
}

/// Architecture of a fully connected network: `widths[0]` inputs,
/// `widths.last()` outputs, hidden layers in between.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        MlpSpec {
            widths,
            hidden: Activation::Tanh,
            output: Activation::Sigmoid,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.widths.len() < 2 {
            return Err("an mlp needs at least an input and an output width".into());
        }
        if self.widths.contains(&0) {
            return Err("layer widths must be positive".into());
        }
        if !matches!(self.hidden, Activation::Tanh | Activation::Relu | Activation::Sigmoid) {
            return Err(format!("`{}` is not a hidden activation", self.hidden));
        }
        if !matches!(
            self.output,
            Activation::Sigmoid | Activation::Softmax | Activation::Identity
        ) {
            return Err(format!("`{}` is not an output activation", self.output));
        }
        Ok(())
    }

    pub fn in_width(&self) -> usize {
        self.widths[0]
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Clone, Debug)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// A multilayer perceptron whose weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Registers `{name}.w{i}` / `{name}.b{i}` parameters. Weights are
    /// uniform in ±sqrt(6 / (fan_in + fan_out)), biases start at zero. The
    /// stream depends on the run seed, the spec seed and the name, so two
    /// models with the same spec start apart.
    pub fn init(
        name: &str,
        spec: MlpSpec,
        kind: ParamKind,
        store: &mut ParamStore,
        run_seed: u64,
    ) -> Result<Self, LearnerError> {
        spec.validate().map_err(LearnerError::Spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed ^ spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ name_hash(name));
        let mut layers = Vec::new();
        for (i, pair) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            let weight = store.add(
                format!("{name}.w{i}"),
                kind,
                Tensor::matrix(fan_in, fan_out, w)?,
            )?;
            let bias = store.add(format!("{name}.b{i}"), kind, Tensor::zeros(&[fan_out]))?;
            layers.push(Layer { weight, bias });
        }
        Ok(Mlp { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// `[n, in] -> [n, out]`, recorded on `g` so gradients reach the
    /// weights.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId, LearnerError> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.spec.in_width() {
            return Err(LearnerError::Width {
                expected: self.spec.in_width(),
                actual: shape.to_vec(),
            });
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(layer.weight, store.get(layer.weight));
            let b = g.param(layer.bias, store.get(layer.bias));
            let z = g.matmul(h, w)?;
            let z = g.add(z, b)?;
            let act = if i == last { self.spec.output } else { self.spec.hidden };
            h = act.apply(g, z)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(spec: MlpSpec) -> (Mlp, ParamStore) {
        let mut store = ParamStore::new();
        let mlp = Mlp::init("nn", spec, ParamKind::Predicate, &mut store, 1).unwrap();
        (mlp, store)
    }

    #[test]
    fn zero_network_outputs_half() {
        let (mlp, mut store) = store_with(MlpSpec::new(vec![3, 4, 2]));
        for id in mlp.params() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let y = mlp.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(y), &[2, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut spec = MlpSpec::new(vec![2, 5, 6]);
        spec.output = Activation::Softmax;
        let (mlp, store) = store_with(spec);
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(3, 2, vec![0.1, 0.2, -1.0, 4.0, 2.0, 2.0]).unwrap());
        let y = mlp.forward(&mut g, &store, x).unwrap();
        for r in 0..3 {
            let s: f64 = g.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_layer() {
        let mut spec = MlpSpec::new(vec![2, 2]);
        spec.output = Activation::Identity;
        let (mlp, mut store) = store_with(spec);
        let [w, b] = mlp.params()[..] else { panic!() };
        *store.get_mut(w) = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        store.get_mut(b).data_mut().fill(0.0);
        let mut g = Graph::new();
        let input = Tensor::matrix(2, 2, vec![0.3, -7.0, 2.5, 1.0]).unwrap();
        let x = g.constant(input.clone());
        let y = mlp.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y), &input);
    }

    #[test]
    fn width_mismatch_is_reported() {
        let (mlp, store) = store_with(MlpSpec::new(vec![3, 1]));
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[4, 2]));
        assert!(matches!(
            mlp.forward(&mut g, &store, x),
            Err(LearnerError::Width { expected: 3, .. })
        ));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let (a, sa) = store_with(MlpSpec::new(vec![4, 8, 1]));
        let (b, sb) = store_with(MlpSpec::new(vec![4, 8, 1]));
        let bound = (6.0f64 / 12.0).sqrt();
        assert_eq!(sa.get(a.params()[0]), sb.get(b.params()[0]));
        assert!(sa.get(a.params()[0]).data().iter().all(|v| v.abs() <= bound));
        let mut other = MlpSpec::new(vec![4, 8, 1]);
        other.seed = 5;
        let (c, sc) = store_with(other);
        assert_ne!(sa.get(a.params()[0]), sc.get(c.params()[0]));
        let mut store = ParamStore::new();
        let spec = MlpSpec::new(vec![4, 8, 1]);
        let p = Mlp::init("p", spec.clone(), ParamKind::Predicate, &mut store, 1).unwrap();
        let q = Mlp::init("q", spec, ParamKind::Predicate, &mut store, 1).unwrap();
        assert_ne!(store.get(p.params()[0]), store.get(q.params()[0]));
    }

    #[test]
    fn validation() {
        let mut spec = MlpSpec::new(vec![2, 1]);
        spec.hidden = Activation::Softmax;
        assert!(spec.validate().is_err());
        spec.hidden = Activation::Relu;
        spec.output = Activation::Tanh;
        assert!(spec.validate().is_err());
        assert!(MlpSpec::new(vec![2]).validate().is_err());
        assert_eq!("relu".parse::<Activation>(), Ok(Activation::Relu));
    }
}
