use super::{Graph, NodeId, ParamId, ParamKind, ParamStore, Result, Tensor, TensorError};

/// Step used for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps gradients that are
/// zero up to rounding from producing huge ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    /// Number of scalar entries compared.
    pub checked: usize,
    pub max_rel_error: f64,
    /// Input and flat element index of the largest error.
    pub worst: Option<(usize, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradcheckReport {
    pub fn record(&mut self, input: usize, elem: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if self.worst.is_none() || e > self.max_rel_error {
            self.max_rel_error = e;
            self.worst = Some((input, elem));
            self.worst_analytic = analytic;
            self.worst_numeric = numeric;
        }
    }
}

fn scalar_of(g: &Graph, out: NodeId) -> Result<f64> {
    g.value(out).item().ok_or_else(|| TensorError::NonScalarOutput {
        node: out.index(),
        shape: g.shape(out).to_vec(),
    })
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences with step `h`, for every entry of every input.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("x{i}"), ParamKind::Free, t.clone()))
        .collect::<Result<_>>()?;
    let run = |store: &ParamStore| -> Result<(Graph, NodeId)> {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = ids.iter().map(|&id| g.param(id, store.get(id))).collect();
        let out = f(&mut g, &nodes)?;
        Ok((g, out))
    };
    let (g, out) = run(&store)?;
    scalar_of(&g, out)?;
    let tape = g.backward(out)?;
    let mut report = GradcheckReport::default();
    for (i, &id) in ids.iter().enumerate() {
        for k in 0..inputs[i].numel() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + h;
            let (g, o) = run(&store)?;
            let plus = scalar_of(&g, o)?;
            store.get_mut(id).data_mut()[k] = orig - h;
            let (g, o) = run(&store)?;
            let minus = scalar_of(&g, o)?;
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = tape.get(id).map_or(0.0, |t| t.data()[k]);
            report.record(i, k, analytic, numeric);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    type Build = fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

    /// Smooth compositions of every differentiable op, each reduced to a
    /// scalar with a weighted sum so no entry's gradient is trivially 1.
    fn cases() -> Vec<(&'static str, Vec<Vec<usize>>, f64, f64, Build)> {
        fn weigh(g: &mut Graph, x: NodeId) -> Result<NodeId> {
            let shape = g.shape(x).to_vec();
            let n: usize = shape.iter().product();
            let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.1 * i as f64).collect())?;
            let w = g.constant(w);
            let p = g.mul(x, w)?;
            g.sum_all(p)
        }
        vec![
            ("add_sub", vec![vec![2, 3], vec![1, 3]], -1.0, 1.0, |g, x| {
                let a = g.add(x[0], x[1])?;
                let b = g.sub(a, x[1])?;
                let c = g.sub(b, x[1])?;
                weigh(g, c)
            }),
            ("mul_div", vec![vec![2, 3], vec![2, 1]], 0.5, 2.0, |g, x| {
                let a = g.mul(x[0], x[1])?;
                let b = g.div(a, x[1])?;
                let c = g.div(x[1], b)?;
                weigh(g, c)
            }),
            ("matmul", vec![vec![3, 4], vec![4, 2]], -1.0, 1.0, |g, x| {
                let m = g.matmul(x[0], x[1])?;
                weigh(g, m)
            }),
            ("unary", vec![vec![5]], 0.2, 1.5, |g, x| {
                let a = g.sigmoid(x[0])?;
                let b = g.tanh(a)?;
                let c = g.exp(b)?;
                let d = g.log(c)?;
                let e = g.add_scalar(d, 0.1)?;
                let f = g.mul_scalar(e, 2.0)?;
                let h = g.rsub_scalar(3.0, f)?;
                weigh(g, h)
            }),
            ("softmax", vec![vec![3, 4]], -2.0, 2.0, |g, x| {
                let s = g.softmax(x[0], 1)?;
                let t = g.softmax(s, 0)?;
                weigh(g, t)
            }),
            ("reductions", vec![vec![2, 3, 4]], -1.0, 1.0, |g, x| {
                let a = g.reduce_sum(x[0], 1, true)?;
                let b = g.reduce_mean(x[0], 2, false)?;
                let c = g.reduce_max(x[0], 0, true)?;
                let a = weigh(g, a)?;
                let b = weigh(g, b)?;
                let c = weigh(g, c)?;
                let m = g.mean_all(x[0])?;
                let s = g.add(a, b)?;
                let s = g.add(s, c)?;
                g.add(s, m)
            }),
            ("shape_ops", vec![vec![2, 3], vec![2, 2]], -1.0, 1.0, |g, x| {
                let c = g.concat(&[x[0], x[1]], 1)?;
                let s = g.slice(c, 1, 1, 3)?;
                let p = g.permute(s, &[1, 0])?;
                let r = g.reshape(p, &[6, 1])?;
                let b = g.broadcast_to(r, &[6, 2])?;
                let gr = g.gather_rows(b, vec![0, 5, 5, 2])?;
                weigh(g, gr)
            }),
            ("min_max_clamp", vec![vec![6], vec![6]], 0.0, 1.0, |g, x| {
                let a = g.minimum(x[0], x[1])?;
                let b = g.maximum(x[0], x[1])?;
                let c = g.clamp(x[0], 0.2, 0.8)?;
                let r = g.relu(b)?;
                let s = g.add(a, r)?;
                let s = g.add(s, c)?;
                weigh(g, s)
            }),
        ]
    }

    /// True when a non-smooth op sits within `h` of a kink, where central
    /// differences are meaningless.
    fn near_kink(inputs: &[Tensor], name: &str) -> bool {
        let margin = 1e-3;
        match name {
            "min_max_clamp" => {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                a.iter().zip(b).any(|(x, y)| (x - y).abs() < margin)
                    || a.iter().any(|x| (x - 0.2).abs() < margin || (x - 0.8).abs() < margin)
            }
            "reductions" => {
                let d = inputs[0].data();
                (0..12).any(|j| (d[j] - d[12 + j]).abs() < margin)
            }
            _ => false,
        }
    }

    #[test]
    fn every_op_matches_central_differences_over_many_seeds() {
        for (name, shapes, lo, hi, build) in cases() {
            let mut checked = 0;
            for seed in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inputs: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s, lo, hi)).collect();
                if near_kink(&inputs, name) {
                    continue;
                }
                let r = check_gradients(&inputs, DEFAULT_STEP, build).unwrap();
                assert!(r.max_rel_error < 1e-4, "{name} seed {seed}: {r:?}");
                checked += 1;
            }
            assert!(checked >= 90, "{name}: only {checked} seeds away from kinks");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // less_equal has no gradient, so a function that varies through it
        // must be flagged.
        let x = Tensor::vector(vec![0.5]);
        let r = check_gradients(&[x], 1e-5, |g, x| {
            let t = g.scalar(0.5);
            let le = g.less_equal(x[0], t)?;
            let s = g.sum_all(le)?;
            let y = g.sum_all(x[0])?;
            g.add(s, y)
        })
        .unwrap();
        assert!(r.max_rel_error > 1.0);
    }

    proptest! {
        #[test]
        fn relative_error_is_symmetric_and_zero_on_equal(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            prop_assert_eq!(relative_error(a, b), relative_error(b, a));
            prop_assert_eq!(relative_error(a, a), 0.0);
        }
    }
}
