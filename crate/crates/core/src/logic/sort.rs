//! Many-sorted checking. Quantified variables carry no annotation; each
//! one gets the unique sort forced by the argument positions it occupies.

use std::fmt;

use indexmap::IndexMap;

use super::ast::{Connective, Formula, FormulaKind, Ident, Quantifier, Term};
use super::{LogicError, Span};

/// Symbol table used by sort checking.
#[derive(Clone, Debug, Default)]
pub struct Signature {
    domains: IndexMap<String, ()>,
    individuals: IndexMap<String, String>,
    predicates: IndexMap<String, Vec<String>>,
    functions: IndexMap<String, (Vec<String>, String)>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_domain(&mut self, name: &str) -> &mut Self {
        self.domains.insert(name.to_string(), ());
        self
    }

    pub fn add_individual(&mut self, name: &str, domain: &str) -> &mut Self {
        self.individuals.insert(name.to_string(), domain.to_string());
        self
    }

    pub fn add_predicate(&mut self, name: &str, inputs: &[&str]) -> &mut Self {
        self.predicates
            .insert(name.to_string(), inputs.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn add_function(&mut self, name: &str, inputs: &[&str], output: &str) -> &mut Self {
        self.functions.insert(
            name.to_string(),
            (inputs.iter().map(|s| s.to_string()).collect(), output.to_string()),
        );
        self
    }

    pub fn has_domain(&self, name: &str) -> bool {
        self.domains.contains_key(name)
    }

    pub fn individual_domain(&self, name: &str) -> Option<&str> {
        self.individuals.get(name).map(String::as_str)
    }

    pub fn predicate(&self, name: &str) -> Option<&[String]> {
        self.predicates.get(name).map(Vec::as_slice)
    }

    pub fn function(&self, name: &str) -> Option<(&[String], &str)> {
        self.functions.get(name).map(|(i, o)| (i.as_slice(), o.as_str()))
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.predicates.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Position of a quantified variable; also its grounding axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub sort: String,
    pub quantifier: Quantifier,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypedTerm {
    Var(VarId),
    /// A named individual.
    Const(String),
    App { func: String, args: Vec<TypedTerm> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum TypedFormula {
    Quant {
        q: Quantifier,
        var: VarId,
        body: Box<TypedFormula>,
    },
    Binary {
        op: Connective,
        lhs: Box<TypedFormula>,
        rhs: Box<TypedFormula>,
    },
    Not(Box<TypedFormula>),
    Atom { pred: String, args: Vec<TypedTerm> },
}

/// A sort-checked closed formula. Variables are numbered in pre-order of
/// their quantifiers, so outer quantifiers get smaller ids.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckedFormula {
    pub root: TypedFormula,
    pub vars: Vec<VarInfo>,
}

impl CheckedFormula {
    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.0]
    }
}

struct Checker<'a> {
    sig: &'a Signature,
    scope: Vec<(String, VarId)>,
    vars: Vec<VarInfo>,
    sorts: Vec<Option<(String, Span)>>,
    binders: Vec<Span>,
}

/// Resolves names, infers one sort per variable and checks every atom and
/// function application against its signature.
pub fn sort_check(formula: &Formula, sig: &Signature) -> Result<CheckedFormula, LogicError> {
    let mut c = Checker {
        sig,
        scope: vec![],
        vars: vec![],
        sorts: vec![],
        binders: vec![],
    };
    let root = c.formula(formula)?;
    for (i, sort) in c.sorts.iter().enumerate() {
        match sort {
            Some((s, _)) => c.vars[i].sort = s.clone(),
            None => {
                return Err(LogicError::UnresolvedSort {
                    var: c.vars[i].name.clone(),
                    span: c.binders[i],
                })
            }
        }
    }
    Ok(CheckedFormula { root, vars: c.vars })
}

impl Checker<'_> {
    fn formula(&mut self, f: &Formula) -> Result<TypedFormula, LogicError> {
        Ok(match &f.kind {
            FormulaKind::Quant { q, var, body } => {
                if self.scope.iter().any(|(n, _)| *n == var.name) {
                    return Err(LogicError::Shadowing {
                        name: var.name.clone(),
                        span: var.span,
                    });
                }
                let id = VarId(self.vars.len());
                self.vars.push(VarInfo {
                    name: var.name.clone(),
                    sort: String::new(),
                    quantifier: *q,
                });
                self.sorts.push(None);
                self.binders.push(var.span);
                self.scope.push((var.name.clone(), id));
                let body = self.formula(body)?;
                self.scope.pop();
                TypedFormula::Quant {
                    q: *q,
                    var: id,
                    body: Box::new(body),
                }
            }
            FormulaKind::Binary { op, lhs, rhs } => TypedFormula::Binary {
                op: *op,
                lhs: Box::new(self.formula(lhs)?),
                rhs: Box::new(self.formula(rhs)?),
            },
            FormulaKind::Not(inner) => TypedFormula::Not(Box::new(self.formula(inner)?)),
            FormulaKind::Atom { pred, args } => {
                let Some(sorts) = self.sig.predicate(&pred.name) else {
                    return Err(self.unknown_callee(pred, "predicate"));
                };
                let sorts = sorts.to_vec();
                let args = self.arguments(pred, &sorts, args)?;
                TypedFormula::Atom {
                    pred: pred.name.clone(),
                    args,
                }
            }
        })
    }

    fn unknown_callee(&self, id: &Ident, expected: &'static str) -> LogicError {
        let actual = if self.sig.predicate(&id.name).is_some() {
            Some("predicate")
        } else if self.sig.function(&id.name).is_some() {
            Some("function")
        } else if self.sig.individual_domain(&id.name).is_some() {
            Some("individual")
        } else if self.sig.has_domain(&id.name) {
            Some("domain")
        } else {
            None
        };
        match actual {
            Some(actual) => LogicError::WrongKind {
                name: id.name.clone(),
                actual,
                expected,
                span: id.span,
            },
            None => LogicError::UnknownSymbol {
                kind: expected,
                name: id.name.clone(),
                span: id.span,
            },
        }
    }

    fn arguments(
        &mut self,
        callee: &Ident,
        sorts: &[String],
        args: &[Term],
    ) -> Result<Vec<TypedTerm>, LogicError> {
        if sorts.len() != args.len() {
            return Err(LogicError::Arity {
                name: callee.name.clone(),
                expected: sorts.len(),
                found: args.len(),
                span: callee.span,
            });
        }
        args.iter()
            .zip(sorts)
            .map(|(t, s)| self.term(t, s))
            .collect()
    }

    fn term(&mut self, t: &Term, expected: &str) -> Result<TypedTerm, LogicError> {
        match t {
            Term::Name(id) => {
                if let Some(&(_, var)) = self.scope.iter().rev().find(|(n, _)| *n == id.name) {
                    match &self.sorts[var.0] {
                        Some((s, first)) if s != expected => {
                            return Err(LogicError::SortConflict {
                                var: id.name.clone(),
                                first: s.clone(),
                                first_span: *first,
                                second: expected.to_string(),
                                span: id.span,
                            })
                        }
                        Some(_) => {}
                        None => self.sorts[var.0] = Some((expected.to_string(), id.span)),
                    }
                    return Ok(TypedTerm::Var(var));
                }
                match self.sig.individual_domain(&id.name) {
                    Some(d) if d == expected => Ok(TypedTerm::Const(id.name.clone())),
                    Some(d) => Err(LogicError::SortMismatch {
                        what: id.name.clone(),
                        expected: expected.to_string(),
                        found: d.to_string(),
                        span: id.span,
                    }),
                    None => Err(LogicError::UnknownSymbol {
                        kind: "variable or individual",
                        name: id.name.clone(),
                        span: id.span,
                    }),
                }
            }
            Term::App { func, args } => {
                let Some((inputs, output)) = self.sig.function(&func.name) else {
                    return Err(self.unknown_callee(func, "function"));
                };
                let (inputs, output) = (inputs.to_vec(), output.to_string());
                if output != expected {
                    return Err(LogicError::SortMismatch {
                        what: format!("{}(..)", func.name),
                        expected: expected.to_string(),
                        found: output,
                        span: func.span,
                    });
                }
                let args = self.arguments(func, &inputs, args)?;
                Ok(TypedTerm::App {
                    func: func.name.clone(),
                    args,
                })
            }
        }
    }
}

impl TypedTerm {
    /// Variables occurring in the term, in order of first occurrence.
    pub fn vars_into(&self, out: &mut Vec<VarId>) {
        match self {
            TypedTerm::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            TypedTerm::Const(_) => {}
            TypedTerm::App { args, .. } => args.iter().for_each(|a| a.vars_into(out)),
        }
    }
}

struct Show<'a, T>(&'a T, &'a [VarInfo]);

impl fmt::Display for Show<'_, TypedTerm> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            TypedTerm::Var(v) => write!(f, "{}", self.1[v.0].name),
            TypedTerm::Const(c) => write!(f, "{c}"),
            TypedTerm::App { func, args } => {
                write!(f, "{func}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", Show(a, self.1))?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for CheckedFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_typed(f, &self.root, &self.vars, 0)
    }
}

fn level(f: &TypedFormula) -> u8 {
    match f {
        TypedFormula::Quant { .. } => 0,
        TypedFormula::Binary { op, .. } => match op {
            Connective::Iff => 1,
            Connective::Implies => 2,
            Connective::Or => 3,
            Connective::And => 4,
        },
        TypedFormula::Not(_) => 5,
        TypedFormula::Atom { .. } => 6,
    }
}

fn write_typed(
    f: &mut fmt::Formatter<'_>,
    node: &TypedFormula,
    vars: &[VarInfo],
    min: u8,
) -> fmt::Result {
    if level(node) < min {
        write!(f, "(")?;
        write_typed(f, node, vars, 0)?;
        return write!(f, ")");
    }
    match node {
        TypedFormula::Quant { q, var, body } => {
            write!(f, "{} {}: ", q.keyword(), vars[var.0].name)?;
            write_typed(f, body, vars, 0)
        }
        TypedFormula::Binary { op, lhs, rhs } => {
            let own = level(node);
            let (l, r) = match op {
                Connective::Implies => (own + 1, own),
                _ => (own, own + 1),
            };
            write_typed(f, lhs, vars, l)?;
            write!(f, " {} ", op.symbol())?;
            write_typed(f, rhs, vars, r)
        }
        TypedFormula::Not(inner) => {
            write!(f, "not ")?;
            write_typed(f, inner, vars, 5)
        }
        TypedFormula::Atom { pred, args } => {
            write!(f, "{pred}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", Show(a, vars))?;
            }
            write!(f, ")")
        }
    }
}
