use std::fmt;
use std::str::FromStr;

use crate::tensor::{Graph, NodeId, Tensor};

use super::GroundError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum TNormFamily {
    #[default]
    Product,
    Lukasiewicz,
    Goedel,
}

impl TNormFamily {
    pub const ALL: [TNormFamily; 3] = [TNormFamily::Product, TNormFamily::Lukasiewicz, TNormFamily::Goedel];

    pub fn name(self) -> &'static str {
        match self {
            TNormFamily::Product => "product",
            TNormFamily::Lukasiewicz => "lukasiewicz",
            TNormFamily::Goedel => "goedel",
        }
    }
}

impl fmt::Display for TNormFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TNormFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "product" => Ok(TNormFamily::Product),
            "lukasiewicz" => Ok(TNormFamily::Lukasiewicz),
            "goedel" | "godel" => Ok(TNormFamily::Goedel),
            _ => Err(format!("unknown t-norm `{s}` (product, lukasiewicz, goedel)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TNormConfig {
    pub family: TNormFamily,
    /// Lower bound on the antecedent in the product residuum.
    pub epsilon: f64,
}

impl Default for TNormConfig {
    fn default() -> Self {
        TNormConfig {
            family: TNormFamily::Product,
            epsilon: 1e-7,
        }
    }
}

impl TNormConfig {
    pub fn new(family: TNormFamily) -> Self {
        TNormConfig {
            family,
            ..Default::default()
        }
    }
}

const RANGE_TOLERANCE: f64 = 1e-9;

fn check_range(g: &Graph, op: &'static str, x: NodeId) -> Result<(), GroundError> {
    if let Some(&v) = g
        .value(x)
        .data()
        .iter()
        .find(|v| !(**v >= -RANGE_TOLERANCE && **v <= 1.0 + RANGE_TOLERANCE))
    {
        return Err(GroundError::OutOfRange { op, value: v });
    }
    Ok(())
}

fn ones_like_scalar(g: &mut Graph) -> NodeId {
    g.constant(Tensor::scalar(1.0))
}

pub fn and(g: &mut Graph, cfg: &TNormConfig, x: NodeId, y: NodeId) -> Result<NodeId, GroundError> {
    check_range(g, "and", x)?;
    check_range(g, "and", y)?;
    Ok(match cfg.family {
        TNormFamily::Product => g.mul(x, y)?,
        TNormFamily::Lukasiewicz => {
            let s = g.add(x, y)?;
            let s = g.add_scalar(s, -1.0)?;
            let zero = g.scalar(0.0);
            g.maximum(zero, s)?
        }
        TNormFamily::Goedel => g.minimum(x, y)?,
    })
}

pub fn or(g: &mut Graph, cfg: &TNormConfig, x: NodeId, y: NodeId) -> Result<NodeId, GroundError> {
    check_range(g, "or", x)?;
    check_range(g, "or", y)?;
    Ok(match cfg.family {
        TNormFamily::Product => {
            let s = g.add(x, y)?;
            let p = g.mul(x, y)?;
            g.sub(s, p)?
        }
        TNormFamily::Lukasiewicz => {
            let s = g.add(x, y)?;
            let one = ones_like_scalar(g);
            g.minimum(one, s)?
        }
        TNormFamily::Goedel => g.maximum(x, y)?,
    })
}

pub fn not(g: &mut Graph, _cfg: &TNormConfig, x: NodeId) -> Result<NodeId, GroundError> {
    check_range(g, "not", x)?;
    Ok(g.rsub_scalar(1.0, x)?)
}

/// Residuum of the t-norm. The `x <= y` indicator makes every family
/// exactly 1 whenever the antecedent does not exceed the consequent.
pub fn implies(g: &mut Graph, cfg: &TNormConfig, x: NodeId, y: NodeId) -> Result<NodeId, GroundError> {
    check_range(g, "implies", x)?;
    check_range(g, "implies", y)?;
    Ok(match cfg.family {
        TNormFamily::Product => {
            let le = g.less_equal(x, y)?;
            let safe = g.clamp(x, cfg.epsilon, f64::INFINITY)?;
            let ratio = g.div(y, safe)?;
            let one = ones_like_scalar(g);
            let capped = g.minimum(one, ratio)?;
            g.maximum(le, capped)?
        }
        TNormFamily::Lukasiewicz => {
            let d = g.sub(y, x)?;
            let d = g.add_scalar(d, 1.0)?;
            let one = ones_like_scalar(g);
            g.minimum(one, d)?
        }
        TNormFamily::Goedel => {
            let le = g.less_equal(x, y)?;
            g.maximum(le, y)?
        }
    })
}

pub fn iff(g: &mut Graph, cfg: &TNormConfig, x: NodeId, y: NodeId) -> Result<NodeId, GroundError> {
    let a = implies(g, cfg, x, y)?;
    let b = implies(g, cfg, y, x)?;
    and(g, cfg, a, b)
}
