//! Fixed host computations that can be bound to functions and predicates.
//! They register no parameters, but gradients still flow through them to
//! whatever produced their inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::tensor::{Graph, NodeId, Tensor, TensorError};

pub trait GivenFn: Send + Sync + fmt::Debug {
    /// Output width for an input of total width `in_width`.
    fn out_width(&self, in_width: usize) -> Result<usize, String>;

    /// Whether outputs are guaranteed to lie in [0, 1].
    fn truth_valued(&self) -> bool;

    /// `[n, in] -> [n, out]` on the graph.
    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError>;

    /// The same computation on one row, without a graph.
    fn eval_row(&self, row: &[f64]) -> Vec<f64>;
}

pub type GivenMaker = Box<dyn Fn(&[(String, f64)]) -> Result<Arc<dyn GivenFn>, String> + Send + Sync>;

/// Named constructors for given callables, keyed by the name used in
/// `given name(key = value, ...)` bindings.
pub struct GivenRegistry {
    makers: BTreeMap<String, GivenMaker>,
}

impl fmt::Debug for GivenRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.makers.keys()).finish()
    }
}

impl Default for GivenRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

struct Args<'a> {
    fn_name: &'a str,
    args: &'a [(String, f64)],
}

impl Args<'_> {
    fn check(&self, allowed: &[&str]) -> Result<(), String> {
        for (k, _) in self.args {
            if !allowed.contains(&k.as_str()) {
                return Err(format!("`{}` takes no argument `{k}`", self.fn_name));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: Option<f64>) -> Result<f64, String> {
        self.args
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .or(default)
            .ok_or_else(|| format!("`{}` needs argument `{key}`", self.fn_name))
    }
}

impl GivenRegistry {
    pub fn empty() -> Self {
        GivenRegistry {
            makers: BTreeMap::new(),
        }
    }

    /// `gaussian(sigma)`, `close(sigma, threshold)`, `rotate90(side)`,
    /// `constant(value)` and `identity`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("gaussian", |a| {
            let a = Args { fn_name: "gaussian", args: a };
            a.check(&["sigma"])?;
            Ok(Arc::new(Gaussian::new(a.get("sigma", Some(1.0))?)?))
        });
        r.register("close", |a| {
            let a = Args { fn_name: "close", args: a };
            a.check(&["sigma", "threshold"])?;
            Ok(Arc::new(Close {
                kernel: Gaussian::new(a.get("sigma", Some(1.0))?)?,
                threshold: a.get("threshold", Some(0.5))?,
            }))
        });
        r.register("rotate90", |a| {
            let a = Args { fn_name: "rotate90", args: a };
            a.check(&["side"])?;
            let side = a.get("side", None)?;
            if side < 1.0 || side.fract() != 0.0 {
                return Err("`rotate90` needs a positive integer side".into());
            }
            Ok(Arc::new(Rotate90 { side: side as usize }))
        });
        r.register("constant", |a| {
            let a = Args { fn_name: "constant", args: a };
            a.check(&["value"])?;
            Ok(Arc::new(Constant(a.get("value", Some(1.0))?)))
        });
        r.register("identity", |a| {
            Args { fn_name: "identity", args: a }.check(&[])?;
            Ok(Arc::new(Identity))
        });
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        maker: impl Fn(&[(String, f64)]) -> Result<Arc<dyn GivenFn>, String> + Send + Sync + 'static,
    ) {
        self.makers.insert(name.to_string(), Box::new(maker));
    }

    pub fn make(&self, name: &str, args: &[(String, f64)]) -> Result<Arc<dyn GivenFn>, String> {
        let maker = self
            .makers
            .get(name)
            .ok_or_else(|| format!("no given function named `{name}`"))?;
        maker(args)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.makers.keys().map(String::as_str)
    }
}

/// exp(-|a - b|^2 / sigma^2) for an input row `a ++ b`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    sigma: f64,
}

impl Gaussian {
    pub fn new(sigma: f64) -> Result<Self, String> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(format!("sigma must be positive, got {sigma}"));
        }
        Ok(Gaussian { sigma })
    }
}

fn split_width(w: usize) -> Result<usize, String> {
    if w == 0 || !w.is_multiple_of(2) {
        return Err(format!("expected two arguments of equal width, got total width {w}"));
    }
    Ok(w / 2)
}

impl GivenFn for Gaussian {
    fn out_width(&self, in_width: usize) -> Result<usize, String> {
        split_width(in_width).map(|_| 1)
    }

    fn truth_valued(&self) -> bool {
        true
    }

    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        let half = g.shape(x)[1] / 2;
        let a = g.slice(x, 1, 0, half)?;
        let b = g.slice(x, 1, half, half)?;
        let d = g.sub(a, b)?;
        let sq = g.mul(d, d)?;
        let dist = g.reduce_sum(sq, 1, true)?;
        let z = g.mul_scalar(dist, -1.0 / (self.sigma * self.sigma))?;
        g.exp(z)
    }

    fn eval_row(&self, row: &[f64]) -> Vec<f64> {
        let half = row.len() / 2;
        let dist: f64 = (0..half).map(|i| (row[i] - row[half + i]).powi(2)).sum();
        vec![(-dist / (self.sigma * self.sigma)).exp()]
    }
}

/// 1 where the gaussian similarity reaches `threshold`, else 0.
#[derive(Debug, Clone)]
pub struct Close {
    kernel: Gaussian,
    threshold: f64,
}

impl GivenFn for Close {
    fn out_width(&self, in_width: usize) -> Result<usize, String> {
        self.kernel.out_width(in_width)
    }

    fn truth_valued(&self) -> bool {
        true
    }

    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        let k = self.kernel.apply(g, x)?;
        let t = g.scalar(self.threshold);
        g.less_equal(t, k)
    }

    fn eval_row(&self, row: &[f64]) -> Vec<f64> {
        let k = self.kernel.eval_row(row)[0];
        vec![if self.threshold <= k { 1.0 } else { 0.0 }]
    }
}

/// Clockwise quarter turn of a flattened `side x side` image.
#[derive(Debug, Clone)]
pub struct Rotate90 {
    side: usize,
}

impl Rotate90 {
    fn source(&self, dst: usize) -> usize {
        let s = self.side;
        let (i, j) = (dst / s, dst % s);
        (s - 1 - j) * s + i
    }
}

impl GivenFn for Rotate90 {
    fn out_width(&self, in_width: usize) -> Result<usize, String> {
        let n = self.side * self.side;
        if in_width != n {
            return Err(format!("rotate90 with side {} needs width {n}, got {in_width}", self.side));
        }
        Ok(n)
    }

    fn truth_valued(&self) -> bool {
        false
    }

    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        let n = self.side * self.side;
        let mut p = vec![0.0; n * n];
        for dst in 0..n {
            p[self.source(dst) * n + dst] = 1.0;
        }
        let p = g.constant(Tensor::matrix(n, n, p)?);
        g.matmul(x, p)
    }

    fn eval_row(&self, row: &[f64]) -> Vec<f64> {
        (0..row.len()).map(|d| row[self.source(d)]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Constant(pub f64);

impl GivenFn for Constant {
    fn out_width(&self, _: usize) -> Result<usize, String> {
        Ok(1)
    }

    fn truth_valued(&self) -> bool {
        (0.0..=1.0).contains(&self.0)
    }

    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        let n = g.shape(x)[0];
        Ok(g.constant(Tensor::full(&[n, 1], self.0)))
    }

    fn eval_row(&self, _: &[f64]) -> Vec<f64> {
        vec![self.0]
    }
}

#[derive(Debug, Clone)]
pub struct Identity;

impl GivenFn for Identity {
    fn out_width(&self, in_width: usize) -> Result<usize, String> {
        Ok(in_width)
    }

    fn truth_valued(&self) -> bool {
        false
    }

    fn apply(&self, _: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        Ok(x)
    }

    fn eval_row(&self, row: &[f64]) -> Vec<f64> {
        row.to_vec()
    }
}
