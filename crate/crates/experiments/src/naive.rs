//! A reference evaluator: explicit nested loops over every grounding,
//! scalar connectives written out case by case, no graph for the logic
//! and no sharing between atoms. Slow on purpose; it exists to be
//! compared against the compiled groundings.

use groundlog_core::ground::{GroundError, TNormConfig, TNormFamily};
use groundlog_core::kb::KnowledgeBase;
use groundlog_core::learners::Binding;
use groundlog_core::logic::{CheckedFormula, Connective, Quantifier, TypedFormula, TypedTerm, VarId};
use groundlog_core::tensor::{Graph, Tensor};
use thiserror::Error;

/// Largest number of groundings the interpreter will enumerate.
pub const NAIVE_CAP: u128 = 100_000;

const RANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NaiveError {
    #[error("{tuples} groundings exceed the interpreter cap of {cap}")]
    CapExceeded { tuples: u128, cap: u128 },
    #[error("`{op}` got {value}, outside [0, 1]")]
    OutOfRange { op: &'static str, value: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] GroundError),
}

type Result<T> = std::result::Result<T, NaiveError>;

fn in_range(op: &'static str, v: f64) -> Result<f64> {
    if (-RANGE_TOLERANCE..=1.0 + RANGE_TOLERANCE).contains(&v) {
        Ok(v)
    } else {
        Err(NaiveError::OutOfRange { op, value: v })
    }
}

pub fn t_and(cfg: &TNormConfig, x: f64, y: f64) -> Result<f64> {
    let (x, y) = (in_range("and", x)?, in_range("and", y)?);
    Ok(match cfg.family {
        TNormFamily::Product => x * y,
        TNormFamily::Lukasiewicz => {
            if x + y > 1.0 {
                x + y - 1.0
            } else {
                0.0
            }
        }
        TNormFamily::Goedel => {
            if x <= y {
                x
            } else {
                y
            }
        }
    })
}

pub fn t_or(cfg: &TNormConfig, x: f64, y: f64) -> Result<f64> {
    let (x, y) = (in_range("or", x)?, in_range("or", y)?);
    Ok(match cfg.family {
        TNormFamily::Product => x + y - x * y,
        TNormFamily::Lukasiewicz => {
            if x + y < 1.0 {
                x + y
            } else {
                1.0
            }
        }
        TNormFamily::Goedel => {
            if x >= y {
                x
            } else {
                y
            }
        }
    })
}

pub fn t_not(x: f64) -> Result<f64> {
    Ok(1.0 - in_range("not", x)?)
}

pub fn t_implies(cfg: &TNormConfig, x: f64, y: f64) -> Result<f64> {
    let (x, y) = (in_range("implies", x)?, in_range("implies", y)?);
    if x <= y {
        return Ok(1.0);
    }
    Ok(match cfg.family {
        TNormFamily::Product => {
            let d = if x < cfg.epsilon { cfg.epsilon } else { x };
            if y / d < 1.0 {
                y / d
            } else {
                1.0
            }
        }
        TNormFamily::Lukasiewicz => 1.0 - x + y,
        TNormFamily::Goedel => y,
    })
}

pub fn t_iff(cfg: &TNormConfig, x: f64, y: f64) -> Result<f64> {
    let a = t_implies(cfg, x, y)?;
    let b = t_implies(cfg, y, x)?;
    t_and(cfg, a, b)
}

/// A ground term: its feature row and, when it names a row of a domain,
/// that row's index.
struct Value {
    index: Option<usize>,
    row: Vec<f64>,
}

pub struct NaiveInterpreter<'a> {
    kb: &'a KnowledgeBase,
    tnorm: TNormConfig,
    cap: u128,
}

impl<'a> NaiveInterpreter<'a> {
    pub fn new(kb: &'a KnowledgeBase, tnorm: TNormConfig) -> Self {
        NaiveInterpreter {
            kb,
            tnorm,
            cap: NAIVE_CAP,
        }
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    fn domain_len(&self, name: &str) -> Result<usize> {
        Ok(self.kb.domain(name).map_err(|e| NaiveError::Unsupported(e.to_string()))?.len())
    }

    fn domain_row(&self, name: &str, i: usize) -> Result<Vec<f64>> {
        let d = self.kb.domain(name).map_err(|e| NaiveError::Unsupported(e.to_string()))?;
        let c = d.constant_rows();
        if i < c.rows() {
            Ok(c.row(i).to_vec())
        } else {
            Ok(self.kb.params().get(d.learnable()[i - c.rows()]).data().to_vec())
        }
    }

    /// Truth degree of a closed formula.
    pub fn eval(&self, f: &CheckedFormula) -> Result<f64> {
        let mut tuples: u128 = 1;
        for v in &f.vars {
            tuples = tuples.saturating_mul(self.domain_len(&v.sort)? as u128);
        }
        if tuples > self.cap {
            return Err(NaiveError::CapExceeded { tuples, cap: self.cap });
        }
        let mut env = vec![None; f.vars.len()];
        let v = self.formula(f, &f.root, &mut env)?;
        Ok(v.clamp(0.0, 1.0))
    }

    fn formula(&self, f: &CheckedFormula, node: &TypedFormula, env: &mut Vec<Option<usize>>) -> Result<f64> {
        match node {
            TypedFormula::Quant { q, var, body } => {
                let n = self.domain_len(&f.var(*var).sort)?;
                let mut acc = 0.0;
                for i in 0..n {
                    env[var.0] = Some(i);
                    let v = self.formula(f, body, env)?;
                    match q {
                        Quantifier::Forall => acc += v,
                        Quantifier::Exists => {
                            if v > acc {
                                acc = v;
                            }
                        }
                    }
                }
                env[var.0] = None;
                Ok(match q {
                    Quantifier::Forall if n == 0 => 1.0,
                    Quantifier::Forall => acc / n as f64,
                    Quantifier::Exists => acc,
                })
            }
            TypedFormula::Binary { op, lhs, rhs } => {
                let x = self.formula(f, lhs, env)?;
                let y = self.formula(f, rhs, env)?;
                match op {
                    Connective::And => t_and(&self.tnorm, x, y),
                    Connective::Or => t_or(&self.tnorm, x, y),
                    Connective::Implies => t_implies(&self.tnorm, x, y),
                    Connective::Iff => t_iff(&self.tnorm, x, y),
                }
            }
            TypedFormula::Not(inner) => t_not(self.formula(f, inner, env)?),
            TypedFormula::Atom { pred, args } => {
                let vals = args
                    .iter()
                    .map(|a| self.term(f, a, env))
                    .collect::<Result<Vec<_>>>()?;
                let out = self.apply(pred, &vals)?;
                Ok(out[0])
            }
        }
    }

    fn term(&self, f: &CheckedFormula, t: &TypedTerm, env: &[Option<usize>]) -> Result<Value> {
        match t {
            TypedTerm::Var(VarId(v)) => {
                let i = env[*v].ok_or_else(|| NaiveError::Unsupported("unbound variable".into()))?;
                Ok(Value {
                    index: Some(i),
                    row: self.domain_row(&f.vars[*v].sort, i)?,
                })
            }
            TypedTerm::Const(name) => {
                let dom = self
                    .kb
                    .signature()
                    .individual_domain(name)
                    .ok_or_else(|| NaiveError::Unsupported(format!("unknown individual `{name}`")))?
                    .to_string();
                let i = self
                    .kb
                    .domain(&dom)
                    .ok()
                    .and_then(|d| d.row_of(name))
                    .ok_or_else(|| NaiveError::Unsupported(format!("`{name}` has no row")))?;
                Ok(Value {
                    index: Some(i),
                    row: self.domain_row(&dom, i)?,
                })
            }
            TypedTerm::App { func, args } => {
                let vals = args
                    .iter()
                    .map(|a| self.term(f, a, env))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Value {
                    index: None,
                    row: self.apply(func, &vals)?,
                })
            }
        }
    }

    fn run_model(&self, model: &str, input: Vec<f64>) -> Result<Vec<f64>> {
        let m = self.kb.model(model).map_err(|e| NaiveError::Unsupported(e.to_string()))?;
        let mut g = Graph::new();
        let n = input.len();
        let x = g.constant(Tensor::matrix(1, n, input).map_err(GroundError::from)?);
        let y = m.forward(&mut g, self.kb.params(), x).map_err(GroundError::from)?;
        Ok(g.value(y).data().to_vec())
    }

    fn apply(&self, symbol: &str, args: &[Value]) -> Result<Vec<f64>> {
        let sym = self.kb.symbol(symbol).map_err(|e| NaiveError::Unsupported(e.to_string()))?;
        let concat = || args.iter().flat_map(|a| a.row.iter().copied()).collect::<Vec<f64>>();
        let indices = || {
            args.iter()
                .map(|a| a.index)
                .collect::<Option<Vec<usize>>>()
                .ok_or_else(|| NaiveError::Unsupported(format!("`{symbol}` is a table and needs row arguments")))
        };
        match &sym.binding {
            Binding::Model(m) => self.run_model(m, concat()),
            Binding::Slice { model, index } => Ok(vec![self.run_model(model, concat())?[*index]]),
            Binding::Given(g) => Ok(g.eval_row(&concat())),
            Binding::Table(t) => Ok(vec![t.get(&indices()?).expect("indices lie inside the table")]),
            Binding::Free(p) => {
                let z = self.kb.params().get(*p).get(&indices()?).expect("indices lie inside the table");
                Ok(vec![1.0 / (1.0 + (-z).exp())])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use groundlog_core::ground::{compile_formula, CompileOptions};

    fn column(v: &[f64]) -> Binding {
        Binding::Table(Tensor::vector(v.to_vec()))
    }

    fn dogs() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(0);
        kb.add_domain("Animals", Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap(), vec![])
            .unwrap();
        kb.add_predicate("dog", &["Animals"], column(&[1.0, 0.0])).unwrap();
        kb.add_predicate("mammal", &["Animals"], column(&[1.0, 1.0])).unwrap();
        kb.add_predicate("P", &["Animals"], column(&[0.3, 0.7])).unwrap();
        kb
    }

    fn naive(kb: &KnowledgeBase, src: &str) -> f64 {
        let f = kb.check_formula(src).unwrap();
        NaiveInterpreter::new(kb, TNormConfig::default()).eval(&f).unwrap()
    }

    #[test]
    fn dogs_are_mammals() {
        assert_eq!(naive(&dogs(), "forall x: dog(x) -> mammal(x)"), 1.0);
    }

    #[test]
    fn exists_is_max() {
        assert_eq!(naive(&dogs(), "exists x: P(x)"), 0.7);
    }

    #[test]
    fn connectives_match_reference_values() {
        let cfg = TNormConfig::default();
        assert!((t_and(&cfg, 0.6, 0.5).unwrap() - 0.3).abs() < 1e-15);
        assert!((t_implies(&cfg, 0.8, 0.4).unwrap() - 0.5).abs() < 1e-15);
        let l = TNormConfig::new(TNormFamily::Lukasiewicz);
        assert!((t_implies(&l, 0.7, 0.6).unwrap() - 0.9).abs() < 1e-15);
        assert!(t_or(&cfg, 1.5, 0.0).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let kb = dogs();
        let f = kb.check_formula("forall x: forall y: dog(x) -> mammal(y)").unwrap();
        let r = NaiveInterpreter::new(&kb, TNormConfig::default()).with_cap(3).eval(&f);
        assert!(matches!(r, Err(NaiveError::CapExceeded { tuples: 4, cap: 3 })));
    }

    #[test]
    fn agrees_with_compiled_models_and_givens() {
        use groundlog_core::learners::{GivenRegistry, MlpSpec};
        let mut kb = KnowledgeBase::new(5);
        let xs = Tensor::matrix(3, 2, vec![0.1, 0.2, -0.5, 0.7, 1.0, -1.0]).unwrap();
        kb.add_domain("P", xs, vec![]).unwrap();
        kb.add_individual("origin", "P", vec![0.0, 0.0]).unwrap();
        kb.add_model("N", MlpSpec::new(vec![2, 4, 1])).unwrap();
        kb.add_model("F", MlpSpec::new(vec![2, 3, 2])).unwrap();
        kb.add_predicate("A", &["P"], Binding::Model("N".into())).unwrap();
        kb.add_function("f", &["P"], "P", Binding::Model("F".into())).unwrap();
        let close = GivenRegistry::builtin().make("gaussian", &[("sigma".into(), 0.8)]).unwrap();
        kb.add_predicate("Near", &["P", "P"], Binding::Given(close)).unwrap();
        for src in [
            "forall x: exists y: Near(x, y) and A(f(y))",
            "forall x: A(x) <-> Near(x, origin)",
            "exists x: not A(f(f(x))) or A(origin)",
        ] {
            let f = kb.check_formula(src).unwrap();
            let (g, c) = compile_formula(&kb, &f, CompileOptions::default()).unwrap();
            let compiled = g.value(c.psi).item().unwrap();
            let n = NaiveInterpreter::new(&kb, TNormConfig::default()).eval(&f).unwrap();
            assert!((compiled - n).abs() < 1e-9, "{src}: {compiled} vs {n}");
        }
    }
}
