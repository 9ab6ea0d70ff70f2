use std::fmt;

use super::Span;

/// A name together with where it was written.
#[derive(Clone, Debug)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Ident {
            name: name.into(),
            span,
        }
    }
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// An untyped term. Bare identifiers are resolved to variables or
/// individuals during sort checking.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Name(Ident),
    App { func: Ident, args: Vec<Term> },
}

impl Term {
    pub fn span(&self) -> Span {
        match self {
            Term::Name(id) => id.span,
            Term::App { func, .. } => func.span,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Forall,
    Exists,
}

impl Quantifier {
    pub fn keyword(self) -> &'static str {
        match self {
            Quantifier::Forall => "forall",
            Quantifier::Exists => "exists",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Connective {
    And,
    Or,
    Implies,
    Iff,
}

impl Connective {
    pub fn symbol(self) -> &'static str {
        match self {
            Connective::And => "and",
            Connective::Or => "or",
            Connective::Implies => "->",
            Connective::Iff => "<->",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FormulaKind {
    Quant {
        q: Quantifier,
        var: Ident,
        body: Box<Formula>,
    },
    Binary {
        op: Connective,
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Not(Box<Formula>),
    Atom {
        pred: Ident,
        args: Vec<Term>,
    },
}

/// A parsed formula. Equality ignores source spans.
#[derive(Clone, Debug)]
pub struct Formula {
    pub kind: FormulaKind,
    pub span: Span,
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Formula {
    pub fn quant(q: Quantifier, var: Ident, body: Formula, span: Span) -> Self {
        Formula {
            kind: FormulaKind::Quant {
                q,
                var,
                body: Box::new(body),
            },
            span,
        }
    }

    pub fn binary(op: Connective, lhs: Formula, rhs: Formula) -> Self {
        let span = lhs.span;
        Formula {
            kind: FormulaKind::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        }
    }

    pub fn not(inner: Formula, span: Span) -> Self {
        Formula {
            kind: FormulaKind::Not(Box::new(inner)),
            span,
        }
    }

    pub fn atom(pred: Ident, args: Vec<Term>) -> Self {
        let span = pred.span;
        Formula {
            kind: FormulaKind::Atom { pred, args },
            span,
        }
    }

    /// Binding strength used by the printer; higher binds tighter.
    fn level(&self) -> u8 {
        match &self.kind {
            FormulaKind::Quant { .. } => 0,
            FormulaKind::Binary { op, .. } => match op {
                Connective::Iff => 1,
                Connective::Implies => 2,
                Connective::Or => 3,
                Connective::And => 4,
            },
            FormulaKind::Not(_) => 5,
            FormulaKind::Atom { .. } => 6,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_level: u8) -> fmt::Result {
        if self.level() < min_level {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match &self.kind {
            FormulaKind::Quant { q, var, body } => {
                write!(f, "{} {}: ", q.keyword(), var.name)?;
                body.write_at(f, 0)
            }
            FormulaKind::Binary { op, lhs, rhs } => {
                let own = self.level();
                // implies is right-associative, the rest associate left
                let (l, r) = match op {
                    Connective::Implies => (own + 1, own),
                    _ => (own, own + 1),
                };
                lhs.write_at(f, l)?;
                write!(f, " {} ", op.symbol())?;
                rhs.write_at(f, r)
            }
            FormulaKind::Not(inner) => {
                write!(f, "not ")?;
                inner.write_at(f, 5)
            }
            FormulaKind::Atom { pred, args } => {
                write!(f, "{}(", pred.name)?;
                write_terms(f, args)?;
                write!(f, ")")
            }
        }
    }
}

fn write_terms(f: &mut fmt::Formatter<'_>, terms: &[Term]) -> fmt::Result {
    for (i, t) in terms.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{t}")?;
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Name(id) => write!(f, "{}", id.name),
            Term::App { func, args } => {
                write!(f, "{}(", func.name)?;
                write_terms(f, args)?;
                write!(f, ")")
            }
        }
    }
}

/// Prints with the minimum parentheses needed to parse back to the same
/// tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}
