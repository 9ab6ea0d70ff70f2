//! A knowledge base: domains with their rows, bound symbols, learners,
//! constraints and supervision, plus the parameters they own.

use std::collections::HashMap;

use indexmap::IndexMap;
use thiserror::Error;

use crate::learners::{check_binding, individual_init, Binding, GivenRegistry, LearnerError, Mlp, MlpSpec};
use crate::logic::program::{BindingDecl, DataRef, Declaration, IndividualValue, PointwiseLoss, Program};
use crate::logic::{parse_formula, sort_check, CheckedFormula, Formula, LogicError, Signature};
use crate::tensor::{ParamId, ParamKind, ParamStore, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum KbError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("data `{name}`: {msg}")]
    Data { name: String, msg: String },
    #[error("`{0}` is already defined")]
    Duplicate(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = KbError> = std::result::Result<T, E>;

/// Rows of a domain as delivered by a [`DataResolver`]. `labels` is either
/// empty or names every row; named rows become individuals.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainData {
    pub rows: Tensor,
    pub labels: Vec<String>,
}

/// Supplies the data sources named in a program.
pub trait DataResolver {
    fn domain(&self, source: &str) -> Result<DomainData, String>;

    /// A plain matrix, e.g. pointwise inputs or labels.
    fn matrix(&self, source: &str) -> Result<Tensor, String>;

    /// A truth table over the product of the given domains. `labels` holds
    /// each input domain's row names (possibly empty).
    fn table(&self, source: &str, shape: &[usize], labels: &[&[String]]) -> Result<Tensor, String>;
}

/// Resolver over values held in memory.
#[derive(Clone, Debug, Default)]
pub struct MemoryData {
    pub domains: HashMap<String, DomainData>,
    pub matrices: HashMap<String, Tensor>,
    pub tables: HashMap<String, Tensor>,
}

impl MemoryData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_domain(mut self, name: &str, rows: Tensor) -> Self {
        self.domains.insert(name.into(), DomainData { rows, labels: vec![] });
        self
    }

    pub fn with_matrix(mut self, name: &str, m: Tensor) -> Self {
        self.matrices.insert(name.into(), m);
        self
    }

    pub fn with_table(mut self, name: &str, t: Tensor) -> Self {
        self.tables.insert(name.into(), t);
        self
    }
}

impl DataResolver for MemoryData {
    fn domain(&self, source: &str) -> Result<DomainData, String> {
        self.domains.get(source).cloned().ok_or_else(|| "not found".into())
    }

    fn matrix(&self, source: &str) -> Result<Tensor, String> {
        self.matrices.get(source).cloned().ok_or_else(|| "not found".into())
    }

    fn table(&self, source: &str, shape: &[usize], _: &[&[String]]) -> Result<Tensor, String> {
        let t = self.tables.get(source).ok_or("not found")?;
        if t.shape() != shape {
            return Err(format!("table has shape {:?}, expected {shape:?}", t.shape()));
        }
        Ok(t.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Constant(usize),
    Learnable(usize),
}

/// Rows of one sort. Constant rows come first, learnable individuals are
/// appended after them.
#[derive(Clone, Debug)]
pub struct Domain {
    width: usize,
    constant: Tensor,
    learnable: Vec<ParamId>,
    individuals: IndexMap<String, Slot>,
    labels: Vec<String>,
}

impl Domain {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.constant.rows() + self.learnable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant_rows(&self) -> &Tensor {
        &self.constant
    }

    pub fn learnable(&self) -> &[ParamId] {
        &self.learnable
    }

    /// Row index of a named individual.
    pub fn row_of(&self, individual: &str) -> Option<usize> {
        self.individuals.get(individual).map(|s| match *s {
            Slot::Constant(i) => i,
            Slot::Learnable(k) => self.constant.rows() + k,
        })
    }

    /// Row names, empty strings for unnamed rows.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Clone, Debug)]
pub struct Symbol {
    pub name: String,
    pub inputs: Vec<String>,
    /// Output domain; `None` for predicates.
    pub output: Option<String>,
    pub binding: Binding,
}

impl Symbol {
    pub fn is_predicate(&self) -> bool {
        self.output.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub source: String,
    pub formula: CheckedFormula,
    pub weight: f64,
    pub test_only: bool,
}

/// Supervision on a model or symbol: `target(inputs) ≈ labels`.
#[derive(Clone, Debug)]
pub struct Pointwise {
    pub target: String,
    pub inputs: Tensor,
    pub labels: Tensor,
    pub loss: PointwiseLoss,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    domains: IndexMap<String, Domain>,
    models: IndexMap<String, Mlp>,
    symbols: IndexMap<String, Symbol>,
    constraints: Vec<Constraint>,
    pointwise: Vec<Pointwise>,
    params: ParamStore,
    signature: Signature,
    seed: u64,
}

impl KnowledgeBase {
    /// `seed` drives parameter initialization.
    pub fn new(seed: u64) -> Self {
        KnowledgeBase {
            domains: IndexMap::new(),
            models: IndexMap::new(),
            symbols: IndexMap::new(),
            constraints: vec![],
            pointwise: vec![],
            params: ParamStore::new(),
            signature: Signature::new(),
            seed,
        }
    }

    pub fn from_program(
        program: &Program,
        data: &dyn DataResolver,
        given: &GivenRegistry,
        seed: u64,
    ) -> Result<Self> {
        let mut kb = KnowledgeBase::new(seed);
        let fetch_err = |source: &str| {
            let source = source.to_string();
            move |msg: String| KbError::Data { name: source.clone(), msg }
        };
        for decl in &program.declarations {
            match decl {
                Declaration::Domain(d) => {
                    let data = match &d.source {
                        Some(src) => data.domain(src).map_err(fetch_err(src))?,
                        None => DomainData {
                            rows: Tensor::zeros(&[0, d.width.unwrap_or(0)]),
                            labels: vec![],
                        },
                    };
                    if let Some(w) = d.width {
                        if data.rows.rank() == 2 && data.rows.cols() != w {
                            return Err(KbError::Invalid(format!(
                                "domain `{}` is declared with width {w} but its rows have width {}",
                                d.name.name,
                                data.rows.cols()
                            )));
                        }
                    }
                    kb.add_domain(&d.name.name, data.rows, data.labels)?;
                }
                Declaration::Individual(ind) => match &ind.value {
                    IndividualValue::Row(row) => kb.add_individual(&ind.name.name, &ind.domain.name, row.clone())?,
                    IndividualValue::Learnable => {
                        kb.add_learnable_individual(&ind.name.name, &ind.domain.name)?;
                    }
                },
                Declaration::Model(m) => kb.add_model(&m.name.name, m.spec.clone())?,
                Declaration::Function(s) | Declaration::Predicate(s) => {
                    let inputs: Vec<&str> = s.inputs.iter().map(|i| i.name.as_str()).collect();
                    let binding = match &s.binding {
                        BindingDecl::Model(m) => Binding::Model(m.name.clone()),
                        BindingDecl::Slice { model, index } => Binding::Slice {
                            model: model.name.clone(),
                            index: *index,
                        },
                        BindingDecl::Given { name, args } => {
                            Binding::Given(given.make(&name.name, args).map_err(|msg| LearnerError::Bind {
                                symbol: s.name.name.clone(),
                                msg,
                            })?)
                        }
                        BindingDecl::Table(src) => {
                            let shape = kb.grid_shape(&inputs)?;
                            let labels: Vec<&[String]> =
                                inputs.iter().map(|d| kb.domains[*d].labels.as_slice()).collect();
                            Binding::Table(data.table(src, &shape, &labels).map_err(fetch_err(src))?)
                        }
                    };
                    match &s.output {
                        Some(out) => kb.add_function(&s.name.name, &inputs, &out.name, binding)?,
                        None => kb.add_predicate(&s.name.name, &inputs, binding)?,
                    }
                }
            }
        }
        for c in &program.constraints {
            kb.add_formula(&c.formula, &c.source, c.weight, c.test_only)?;
        }
        for p in &program.pointwise {
            let inputs = match &p.inputs {
                DataRef::Domain(d) => kb.domain(&d.name)?.constant.clone(),
                DataRef::Source(src) => data.matrix(src).map_err(fetch_err(src))?,
            };
            let labels = data.matrix(&p.labels).map_err(fetch_err(&p.labels))?;
            kb.add_pointwise(Pointwise {
                target: p.target.name.clone(),
                inputs,
                labels,
                loss: p.loss,
                weight: p.weight,
            })?;
        }
        Ok(kb)
    }

    fn is_defined(&self, name: &str) -> bool {
        self.domains.contains_key(name)
            || self.models.contains_key(name)
            || self.symbols.contains_key(name)
            || self.signature.individual_domain(name).is_some()
    }

    fn fresh(&self, name: &str) -> Result<()> {
        if self.is_defined(name) {
            Err(KbError::Duplicate(name.into()))
        } else {
            Ok(())
        }
    }

    /// Adds a domain with constant `rows` (`d x r`). Non-empty `labels`
    /// name the rows and register each as an individual.
    pub fn add_domain(&mut self, name: &str, rows: Tensor, labels: Vec<String>) -> Result<()> {
        self.fresh(name)?;
        if rows.rank() != 2 {
            return Err(KbError::Invalid(format!(
                "domain `{name}` needs a matrix of rows, got shape {:?}",
                rows.shape()
            )));
        }
        let n = rows.rows();
        if !labels.is_empty() && labels.len() != n {
            return Err(KbError::Invalid(format!(
                "domain `{name}` has {n} rows but {} labels",
                labels.len()
            )));
        }
        let mut individuals = IndexMap::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                continue;
            }
            if individuals.contains_key(l) || self.is_defined(l) || l == name {
                return Err(KbError::Duplicate(l.clone()));
            }
            individuals.insert(l.clone(), Slot::Constant(i));
        }
        self.signature.add_domain(name);
        for l in individuals.keys() {
            self.signature.add_individual(l, name);
        }
        let labels = if labels.is_empty() { vec![String::new(); n] } else { labels };
        self.domains.insert(
            name.into(),
            Domain {
                width: rows.cols(),
                constant: rows,
                learnable: vec![],
                individuals,
                labels,
            },
        );
        Ok(())
    }

    pub fn add_individual(&mut self, name: &str, domain: &str, row: Vec<f64>) -> Result<()> {
        self.fresh(name)?;
        let d = self.domain_mut(domain)?;
        if row.len() != d.width {
            return Err(KbError::Invalid(format!(
                "individual `{name}` has width {}, domain `{domain}` has width {}",
                row.len(),
                d.width
            )));
        }
        let i = d.constant.rows();
        let mut data = std::mem::replace(&mut d.constant, Tensor::zeros(&[0, 0])).into_data();
        data.extend_from_slice(&row);
        d.constant = Tensor::matrix(i + 1, d.width, data)?;
        d.individuals.insert(name.into(), Slot::Constant(i));
        d.labels.insert(i, name.into());
        self.signature.add_individual(name, domain);
        Ok(())
    }

    /// Adds an individual whose row is a trainable variable.
    pub fn add_learnable_individual(&mut self, name: &str, domain: &str) -> Result<ParamId> {
        self.fresh(name)?;
        let d = self.domain(domain)?;
        let init = individual_init(&d.constant, d.width);
        let width = d.width;
        let id = self
            .params
            .add(format!("individual.{name}"), ParamKind::Individual, Tensor::matrix(1, width, init)?)?;
        let d = self.domain_mut(domain)?;
        d.individuals.insert(name.into(), Slot::Learnable(d.learnable.len()));
        d.learnable.push(id);
        d.labels.push(name.into());
        self.signature.add_individual(name, domain);
        Ok(id)
    }

    pub fn add_model(&mut self, name: &str, spec: MlpSpec) -> Result<()> {
        self.fresh(name)?;
        let mlp = Mlp::init(name, spec, ParamKind::Free, &mut self.params, self.seed)?;
        self.models.insert(name.into(), mlp);
        Ok(())
    }

    fn grid_shape(&self, inputs: &[&str]) -> Result<Vec<usize>> {
        inputs.iter().map(|d| Ok(self.domain(d)?.len())).collect()
    }

    fn in_width(&self, inputs: &[&str]) -> Result<usize> {
        inputs.iter().map(|d| Ok(self.domain(d)?.width)).sum()
    }

    fn validate_binding(&self, name: &str, inputs: &[&str], binding: &Binding, predicate: bool) -> Result<usize> {
        let out = check_binding(name, binding, self.in_width(inputs)?, predicate, |m| {
            self.models.get(m).map(|mlp| mlp.spec().clone())
        })?;
        match binding {
            Binding::Table(t) => {
                let shape = self.grid_shape(inputs)?;
                if t.shape() != shape.as_slice() {
                    return Err(KbError::Invalid(format!(
                        "table for `{name}` has shape {:?}, the input domains give {shape:?}",
                        t.shape()
                    )));
                }
                if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(KbError::Invalid(format!("table for `{name}` has values outside [0, 1]")));
                }
            }
            Binding::Free(p) => {
                let shape = self.grid_shape(inputs)?;
                if self.params.get(*p).shape() != shape.as_slice() {
                    return Err(KbError::Invalid(format!(
                        "logits for `{name}` have shape {:?}, the input domains give {shape:?}",
                        self.params.get(*p).shape()
                    )));
                }
            }
            _ => {}
        }
        Ok(out)
    }

    fn claim_model(&mut self, binding: &Binding, kind: ParamKind) {
        if let Binding::Model(m) | Binding::Slice { model: m, .. } = binding {
            for id in self.models[m.as_str()].params() {
                if self.params.entry(id).kind == ParamKind::Free {
                    self.params.set_kind(id, kind);
                }
            }
        }
    }

    pub fn add_predicate(&mut self, name: &str, inputs: &[&str], binding: Binding) -> Result<()> {
        self.fresh(name)?;
        if inputs.is_empty() {
            return Err(KbError::Invalid(format!("predicate `{name}` needs at least one input")));
        }
        self.validate_binding(name, inputs, &binding, true)?;
        self.claim_model(&binding, ParamKind::Predicate);
        self.signature.add_predicate(name, inputs);
        self.symbols.insert(
            name.into(),
            Symbol {
                name: name.into(),
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
                output: None,
                binding,
            },
        );
        Ok(())
    }

    pub fn add_function(&mut self, name: &str, inputs: &[&str], output: &str, binding: Binding) -> Result<()> {
        self.fresh(name)?;
        if inputs.is_empty() {
            return Err(KbError::Invalid(format!("function `{name}` needs at least one input")));
        }
        let out = self.validate_binding(name, inputs, &binding, false)?;
        let width = self.domain(output)?.width;
        if out != width {
            return Err(LearnerError::Bind {
                symbol: name.into(),
                msg: format!("the binding produces width {out}, domain `{output}` has width {width}"),
            }
            .into());
        }
        self.claim_model(&binding, ParamKind::Function);
        self.signature.add_function(name, inputs, output);
        self.symbols.insert(
            name.into(),
            Symbol {
                name: name.into(),
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
                output: Some(output.into()),
                binding,
            },
        );
        Ok(())
    }

    /// Replaces the implementation of an existing symbol.
    pub fn rebind(&mut self, name: &str, binding: Binding) -> Result<()> {
        let sym = self.symbol(name)?.clone();
        let inputs: Vec<&str> = sym.inputs.iter().map(String::as_str).collect();
        self.validate_binding(name, &inputs, &binding, sym.is_predicate())?;
        self.symbols[name].binding = binding;
        Ok(())
    }

    /// Parses and sort-checks a formula against the current symbols.
    pub fn check_formula(&self, source: &str) -> Result<CheckedFormula> {
        Ok(sort_check(&parse_formula(source)?, &self.signature)?)
    }

    pub fn add_constraint(&mut self, source: &str, weight: f64, test_only: bool) -> Result<usize> {
        let formula = parse_formula(source)?;
        self.add_formula(&formula, source, weight, test_only)
    }

    fn add_formula(&mut self, formula: &Formula, source: &str, weight: f64, test_only: bool) -> Result<usize> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(KbError::Invalid(format!("constraint weight must be non-negative, got {weight}")));
        }
        let formula = sort_check(formula, &self.signature)?;
        self.constraints.push(Constraint {
            source: source.into(),
            formula,
            weight,
            test_only,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Input and output width of a pointwise target.
    pub fn target_widths(&self, target: &str) -> Result<(usize, usize)> {
        if let Some(m) = self.models.get(target) {
            return Ok((m.spec().in_width(), m.spec().out_width()));
        }
        let sym = self.symbol(target)?;
        let inputs: Vec<&str> = sym.inputs.iter().map(String::as_str).collect();
        let out = self.validate_binding(target, &inputs, &sym.binding, sym.is_predicate())?;
        Ok((self.in_width(&inputs)?, out))
    }

    pub fn add_pointwise(&mut self, p: Pointwise) -> Result<()> {
        let (inw, outw) = self.target_widths(&p.target)?;
        let bad = |msg: String| KbError::Invalid(format!("pointwise `{}`: {msg}", p.target));
        if p.inputs.rank() != 2 || p.inputs.cols() != inw {
            return Err(bad(format!("inputs have shape {:?}, expected width {inw}", p.inputs.shape())));
        }
        if p.labels.rank() != 2 || p.labels.cols() != outw {
            return Err(bad(format!("labels have shape {:?}, expected width {outw}", p.labels.shape())));
        }
        if p.inputs.rows() != p.labels.rows() {
            return Err(bad(format!(
                "{} input rows but {} label rows",
                p.inputs.rows(),
                p.labels.rows()
            )));
        }
        if p.loss == PointwiseLoss::CrossEntropy && p.labels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(bad("cross-entropy targets must lie in [0, 1]".into()));
        }
        if let Some(sym) = self.symbols.get(&p.target) {
            if matches!(sym.binding, Binding::Table(_) | Binding::Free(_)) {
                return Err(bad("tables cannot be supervised on arbitrary rows".into()));
            }
        }
        self.pointwise.push(p);
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Result<&Domain> {
        self.domains.get(name).ok_or_else(|| KbError::Unknown {
            kind: "domain",
            name: name.into(),
        })
    }

    fn domain_mut(&mut self, name: &str) -> Result<&mut Domain> {
        self.domains.get_mut(name).ok_or_else(|| KbError::Unknown {
            kind: "domain",
            name: name.into(),
        })
    }

    pub fn domains(&self) -> impl Iterator<Item = (&str, &Domain)> {
        self.domains.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn model(&self, name: &str) -> Result<&Mlp> {
        self.models.get(name).ok_or_else(|| KbError::Unknown {
            kind: "model",
            name: name.into(),
        })
    }

    pub fn models(&self) -> impl Iterator<Item = (&str, &Mlp)> {
        self.models.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn symbol(&self, name: &str) -> Result<&Symbol> {
        self.symbols.get(name).ok_or_else(|| KbError::Unknown {
            kind: "symbol",
            name: name.into(),
        })
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.symbols.values()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraints_mut(&mut self) -> &mut [Constraint] {
        &mut self.constraints
    }

    pub fn pointwise(&self) -> &[Pointwise] {
        &self.pointwise
    }

    pub fn pointwise_mut(&mut self) -> &mut Vec<Pointwise> {
        &mut self.pointwise
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Parameters reachable from the symbols, models and individuals.
    pub fn learnable_params(&self) -> Vec<ParamId> {
        self.params.ids().collect()
    }
}
