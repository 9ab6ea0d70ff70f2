use std::collections::HashMap;
use std::sync::Arc;

use crate::kb::KnowledgeBase;
use crate::learners::Binding;
use crate::logic::{CheckedFormula, Connective, Quantifier, TypedFormula, TypedTerm, VarId, VarInfo};
use crate::tensor::{Graph, NodeId};

use super::{exists, forall, tnorm, CompileOptions, GroundError};

type Result<T> = std::result::Result<T, GroundError>;

/// One evaluation of a learner or given callable over a block of rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub callee: String,
    pub rows: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompileStats {
    /// Product of the domain sizes of every quantified variable.
    pub tuples: u128,
    pub evaluations: Vec<Evaluation>,
}

#[derive(Clone, Debug)]
pub struct GroundedConstraint {
    /// Scalar truth degree in [0, 1].
    pub psi: NodeId,
    pub stats: CompileStats,
}

/// Builds groundings onto a graph it owns. Evaluations of symbols on the
/// same arguments (up to variable renaming) are shared between atoms and
/// between formulas compiled by the same grounder.
pub struct Grounder<'a> {
    kb: &'a KnowledgeBase,
    opts: CompileOptions,
    graph: Graph,
    domains: HashMap<String, NodeId>,
    cache: HashMap<String, NodeId>,
    vars: Vec<VarInfo>,
    stats: CompileStats,
}

/// Applies a model, slice or given binding to `[n, w]` input rows.
pub fn apply_binding(g: &mut Graph, kb: &KnowledgeBase, binding: &Binding, x: NodeId) -> Result<NodeId> {
    match binding {
        Binding::Model(m) => Ok(kb.model(m).map_err(|_| GroundError::Unbound(m.clone()))?.forward(g, kb.params(), x)?),
        Binding::Slice { model, index } => {
            let full = apply_binding(g, kb, &Binding::Model(model.clone()), x)?;
            Ok(g.slice(full, 1, *index, 1)?)
        }
        Binding::Given(f) => Ok(f.apply(g, x)?),
        Binding::Table(_) | Binding::Free(_) => Err(GroundError::Unsupported(
            "tables are only defined on their domains' rows".into(),
        )),
    }
}

fn grid_len(sizes: &[usize]) -> usize {
    sizes.iter().product()
}

/// For every point of the grid over `sizes` (row-major), `f` of its
/// coordinates.
fn grid_map(sizes: &[usize], mut f: impl FnMut(&[usize]) -> usize) -> Vec<usize> {
    let n = grid_len(sizes);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut coord = vec![0; sizes.len()];
    for _ in 0..n {
        out.push(f(&coord));
        for k in (0..sizes.len()).rev() {
            coord[k] += 1;
            if coord[k] < sizes[k] {
                break;
            }
            coord[k] = 0;
        }
    }
    out
}

fn term_vars(args: &[TypedTerm]) -> Vec<VarId> {
    let mut out = vec![];
    for a in args {
        a.vars_into(&mut out);
    }
    out
}

impl<'a> Grounder<'a> {
    pub fn new(kb: &'a KnowledgeBase, opts: CompileOptions) -> Self {
        Grounder {
            kb,
            opts,
            graph: Graph::new(),
            domains: HashMap::new(),
            cache: HashMap::new(),
            vars: vec![],
            stats: CompileStats::default(),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    /// Compiles a closed formula to its truth degree ψ.
    pub fn compile(&mut self, formula: &CheckedFormula) -> Result<GroundedConstraint> {
        self.vars = formula.vars.clone();
        self.stats = CompileStats::default();
        let mut tuples: u128 = 1;
        for v in &self.vars {
            tuples = tuples.saturating_mul(self.domain_len(&v.sort)? as u128);
        }
        if tuples > self.opts.cap {
            return Err(GroundError::CapExceeded {
                tuples,
                cap: self.opts.cap,
            });
        }
        self.stats.tuples = tuples;
        let root = self.formula(&formula.root)?;
        let g = &mut self.graph;
        let scalar = g.reshape(root, &[])?;
        let psi = g.clamp(scalar, 0.0, 1.0)?;
        Ok(GroundedConstraint {
            psi,
            stats: std::mem::take(&mut self.stats),
        })
    }

    /// Truth values of a predicate on every tuple of its input domains,
    /// shaped `[|D1|, ..., |Dn|]`.
    pub fn predicate_grid(&mut self, name: &str) -> Result<NodeId> {
        let sym = self.kb.symbol(name).map_err(|_| GroundError::Unbound(name.into()))?;
        if !sym.is_predicate() {
            return Err(GroundError::Unsupported(format!("`{name}` is a function")));
        }
        self.vars = sym
            .inputs
            .iter()
            .enumerate()
            .map(|(i, d)| VarInfo {
                name: format!("_{i}"),
                sort: d.clone(),
                quantifier: Quantifier::Forall,
            })
            .collect();
        let args: Vec<TypedTerm> = (0..sym.inputs.len()).map(|i| TypedTerm::Var(VarId(i))).collect();
        let local = term_vars(&args);
        let col = self.atom_column(name, &args, &local)?;
        let sizes = self.sizes(&local)?;
        Ok(self.graph.reshape(col, &sizes)?)
    }

    /// All rows of a domain: constant rows followed by learnable
    /// individuals.
    pub fn domain_node(&mut self, name: &str) -> Result<NodeId> {
        if let Some(&n) = self.domains.get(name) {
            return Ok(n);
        }
        let d = self.kb.domain(name).map_err(|_| GroundError::Unbound(name.into()))?;
        let g = &mut self.graph;
        let mut parts = vec![];
        if d.constant_rows().rows() > 0 || d.learnable().is_empty() {
            parts.push(g.constant(d.constant_rows().clone()));
        }
        for &p in d.learnable() {
            parts.push(g.param(p, self.kb.params().get(p)));
        }
        let node = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 0)? };
        self.domains.insert(name.into(), node);
        Ok(node)
    }

    fn domain_len(&self, name: &str) -> Result<usize> {
        Ok(self.kb.domain(name).map_err(|_| GroundError::Unbound(name.into()))?.len())
    }

    fn sizes(&self, local: &[VarId]) -> Result<Vec<usize>> {
        local.iter().map(|v| self.domain_len(&self.vars[v.0].sort)).collect()
    }

    fn formula(&mut self, f: &TypedFormula) -> Result<NodeId> {
        let cfg = self.opts.tnorm;
        match f {
            TypedFormula::Quant { q, var, body } => {
                let b = self.formula(body)?;
                Ok(match q {
                    Quantifier::Forall => forall(&mut self.graph, b, var.0)?,
                    Quantifier::Exists => exists(&mut self.graph, b, var.0)?,
                })
            }
            TypedFormula::Binary { op, lhs, rhs } => {
                let l = self.formula(lhs)?;
                let r = self.formula(rhs)?;
                let g = &mut self.graph;
                match op {
                    Connective::And => tnorm::and(g, &cfg, l, r),
                    Connective::Or => tnorm::or(g, &cfg, l, r),
                    Connective::Implies => tnorm::implies(g, &cfg, l, r),
                    Connective::Iff => tnorm::iff(g, &cfg, l, r),
                }
            }
            TypedFormula::Not(inner) => {
                let x = self.formula(inner)?;
                tnorm::not(&mut self.graph, &cfg, x)
            }
            TypedFormula::Atom { pred, args } => {
                let local = term_vars(args);
                let col = self.atom_column(pred, args, &local)?;
                self.place(col, &local)
            }
        }
    }

    /// Moves a `[M, 1]` column over the grid of `local` onto the formula's
    /// axes.
    fn place(&mut self, col: NodeId, local: &[VarId]) -> Result<NodeId> {
        let sizes = self.sizes(local)?;
        let g = &mut self.graph;
        let mut node = col;
        let mut order: Vec<usize> = (0..local.len()).collect();
        order.sort_by_key(|&i| local[i]);
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            node = g.reshape(node, &sizes)?;
            node = g.permute(node, &order)?;
        }
        let mut shape = vec![1; self.vars.len()];
        for (v, s) in local.iter().zip(&sizes) {
            shape[v.0] = *s;
        }
        Ok(g.reshape(node, &shape)?)
    }

    fn canon(&self, t: &TypedTerm, local: &[VarId]) -> String {
        match t {
            TypedTerm::Var(v) => {
                let pos = local.iter().position(|x| x == v).unwrap();
                format!("v{pos}:{}", self.vars[v.0].sort)
            }
            TypedTerm::Const(c) => c.clone(),
            TypedTerm::App { func, args } => {
                let inner: Vec<String> = args.iter().map(|a| self.canon(a, local)).collect();
                format!("{func}({})", inner.join(","))
            }
        }
    }

    fn atom_column(&mut self, pred: &str, args: &[TypedTerm], local: &[VarId]) -> Result<NodeId> {
        let sym = self.kb.symbol(pred).map_err(|_| GroundError::Unbound(pred.into()))?;
        match &sym.binding {
            Binding::Table(_) | Binding::Free(_) => self.table_column(pred, args, local),
            _ => self.call(pred, args, local),
        }
    }

    /// Rows of `t` for every point of the grid over `local`, `[M, w]`.
    fn term(&mut self, t: &TypedTerm, local: &[VarId]) -> Result<NodeId> {
        let sizes = self.sizes(local)?;
        match t {
            TypedTerm::Var(v) => {
                let d = self.domain_node(&self.vars[v.0].sort.clone())?;
                if local.len() == 1 {
                    return Ok(d);
                }
                let k = local.iter().position(|x| x == v).unwrap();
                let idx = grid_map(&sizes, |c| c[k]);
                Ok(self.graph.gather_rows(d, idx)?)
            }
            TypedTerm::Const(c) => {
                let (dom, row) = self.individual(c)?;
                let d = self.domain_node(&dom)?;
                let idx = vec![row; grid_len(&sizes)];
                Ok(self.graph.gather_rows(d, idx)?)
            }
            TypedTerm::App { func, args } => {
                let own = term_vars(args);
                let node = self.call(func, args, &own)?;
                if own == local {
                    return Ok(node);
                }
                let own_sizes = self.sizes(&own)?;
                let pos: Vec<usize> = own.iter().map(|v| local.iter().position(|x| x == v).unwrap()).collect();
                let idx = grid_map(&sizes, |c| pos.iter().zip(&own_sizes).fold(0, |acc, (&p, &s)| acc * s + c[p]));
                Ok(self.graph.gather_rows(node, idx)?)
            }
        }
    }

    fn individual(&self, name: &str) -> Result<(String, usize)> {
        let dom = self
            .kb
            .signature()
            .individual_domain(name)
            .ok_or_else(|| GroundError::Unbound(name.into()))?
            .to_string();
        let row = self
            .kb
            .domain(&dom)
            .ok()
            .and_then(|d| d.row_of(name))
            .ok_or_else(|| GroundError::Unbound(name.into()))?;
        Ok((dom, row))
    }

    /// Output of a model, slice or given symbol over the grid of `local`,
    /// which must list the argument variables in order of first
    /// occurrence.
    fn call(&mut self, name: &str, args: &[TypedTerm], local: &[VarId]) -> Result<NodeId> {
        let sym = self.kb.symbol(name).map_err(|_| GroundError::Unbound(name.into()))?;
        let binding = sym.binding.clone();
        let canon: Vec<String> = args.iter().map(|a| self.canon(a, local)).collect();
        let canon = canon.join(",");
        let (callee, key) = match &binding {
            Binding::Model(m) | Binding::Slice { model: m, .. } => (m.clone(), format!("model {m}({canon})")),
            Binding::Given(_) => (name.to_string(), format!("given {name}({canon})")),
            Binding::Table(_) | Binding::Free(_) => {
                return Err(GroundError::Unsupported(format!(
                    "`{name}` is a table and cannot be applied to function values"
                )))
            }
        };
        let full = match self.cache.get(&key) {
            Some(&n) => n,
            None => {
                let mut inputs = vec![];
                for a in args {
                    inputs.push(self.term(a, local)?);
                }
                let g = &mut self.graph;
                let x = if inputs.len() == 1 { inputs[0] } else { g.concat(&inputs, 1)? };
                let rows = g.shape(x)[0];
                let out = match &binding {
                    Binding::Slice { model, .. } => apply_binding(g, self.kb, &Binding::Model(model.clone()), x)?,
                    b => apply_binding(g, self.kb, b, x)?,
                };
                self.stats.evaluations.push(Evaluation { callee, rows });
                self.cache.insert(key.clone(), out);
                out
            }
        };
        match binding {
            Binding::Slice { index, .. } => {
                let skey = format!("{key}[{index}]");
                if let Some(&n) = self.cache.get(&skey) {
                    return Ok(n);
                }
                let n = self.graph.slice(full, 1, index, 1)?;
                self.cache.insert(skey, n);
                Ok(n)
            }
            _ => Ok(full),
        }
    }

    fn table_column(&mut self, name: &str, args: &[TypedTerm], local: &[VarId]) -> Result<NodeId> {
        let sym = self.kb.symbol(name).map_err(|_| GroundError::Unbound(name.into()))?;
        let key = format!("table {name}");
        let base = match self.cache.get(&key) {
            Some(&n) => n,
            None => {
                let n = match &sym.binding {
                    Binding::Table(t) => self.graph.constant(t.clone()),
                    Binding::Free(p) => {
                        let logits = self.graph.param(*p, self.kb.params().get(*p));
                        self.graph.sigmoid(logits)?
                    }
                    _ => unreachable!(),
                };
                self.cache.insert(key, n);
                n
            }
        };
        let dims = self.graph.shape(base).to_vec();
        let expected: Vec<usize> = sym
            .inputs
            .iter()
            .map(|d| self.domain_len(d))
            .collect::<Result<_>>()?;
        if dims != expected {
            return Err(GroundError::Unsupported(format!(
                "table for `{name}` has shape {dims:?} but its domains have sizes {expected:?}"
            )));
        }
        let total = grid_len(&dims);
        let flat = self.graph.reshape(base, &[total, 1])?;
        let distinct_vars = args.len() == local.len() && args.iter().all(|a| matches!(a, TypedTerm::Var(_)));
        if distinct_vars {
            return Ok(flat);
        }
        enum Pick {
            Local(usize),
            Row(usize),
        }
        let mut picks = vec![];
        for a in args {
            picks.push(match a {
                TypedTerm::Var(v) => Pick::Local(local.iter().position(|x| x == v).unwrap()),
                TypedTerm::Const(c) => Pick::Row(self.individual(c)?.1),
                TypedTerm::App { .. } => {
                    return Err(GroundError::Unsupported(format!(
                        "table predicate `{name}` takes variables or individuals, not function values"
                    )))
                }
            });
        }
        let sizes = self.sizes(local)?;
        let idx = grid_map(&sizes, |c| {
            picks.iter().zip(&dims).fold(0, |acc, (p, &d)| {
                acc * d
                    + match p {
                        Pick::Local(k) => c[*k],
                        Pick::Row(r) => *r,
                    }
            })
        });
        Ok(self.graph.gather_rows(flat, Arc::<[usize]>::from(idx))?)
    }
}

/// Compiles one formula onto a fresh graph.
pub fn compile_formula(
    kb: &KnowledgeBase,
    formula: &CheckedFormula,
    opts: CompileOptions,
) -> Result<(Graph, GroundedConstraint)> {
    let mut gr = Grounder::new(kb, opts);
    let c = gr.compile(formula)?;
    Ok((gr.into_graph(), c))
}
