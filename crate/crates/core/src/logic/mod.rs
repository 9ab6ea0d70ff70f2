//! Formula syntax, knowledge-base programs and sort checking.

use std::fmt;

use thiserror::Error;

pub mod ast;
pub(crate) mod lexer;
pub mod parser;
pub mod program;
pub mod sort;

pub use ast::{Connective, Formula, FormulaKind, Ident, Quantifier, Term};
pub use parser::{parse_formula, parse_formula_at};
pub use program::{parse_program, Program};
pub use sort::{sort_check, CheckedFormula, Signature, TypedFormula, TypedTerm, VarId, VarInfo};

/// One-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl Span {
    pub const START: Span = Span { line: 1, col: 1 };
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("{span}: {msg}")]
    Syntax { span: Span, msg: String },
    #[error("{span}: `{name}` is already defined")]
    Redefinition { name: String, span: Span },
    #[error("{span}: unknown {kind} `{name}`")]
    UnknownSymbol {
        kind: &'static str,
        name: String,
        span: Span,
    },
    #[error("{span}: `{name}` is a {actual}, expected a {expected}")]
    WrongKind {
        name: String,
        actual: &'static str,
        expected: &'static str,
        span: Span,
    },
    #[error("{span}: variable `{var}` is used as {first} (at {first_span}) and as {second}")]
    SortConflict {
        var: String,
        first: String,
        first_span: Span,
        second: String,
        span: Span,
    },
    #[error("{span}: `{name}` takes {expected} argument(s), found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        span: Span,
    },
    #[error("{span}: variable `{var}` does not occur in any atom, its sort is unknown")]
    UnresolvedSort { var: String, span: Span },
    #[error("{span}: variable `{name}` shadows an enclosing quantifier")]
    Shadowing { name: String, span: Span },
    #[error("{span}: `{what}` has sort {found}, expected {expected}")]
    SortMismatch {
        what: String,
        expected: String,
        found: String,
        span: Span,
    },
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn arb_formula() -> impl Strategy<Value = String> {
        let vars = prop::sample::select(vec!["x", "y", "c"]);
        let atom = (prop::sample::select(vec!["A", "B", "R"]), vars.clone(), vars.clone())
            .prop_map(|(p, a, b)| {
                if p == "R" {
                    format!("R({a}, f({b}))")
                } else {
                    format!("{p}({a})")
                }
            });
        atom.prop_recursive(5, 32, 2, move |inner| {
            prop_oneof![
                inner.clone().prop_map(|f| format!("not {f}")),
                (inner.clone(), inner.clone(), 0..4usize).prop_map(|(a, b, op)| {
                    let op = ["and", "or", "->", "<->"][op];
                    format!("({a}) {op} ({b})")
                }),
                (prop::sample::select(vec!["forall", "exists"]), prop::sample::select(vec!["x", "y"]), inner)
                    .prop_map(|(q, v, f)| format!("{q} {v}: ({f})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_identity(src in arb_formula()) {
            let f = parse_formula(&src).unwrap();
            let printed = f.to_string();
            let again = parse_formula(&printed).unwrap();
            prop_assert_eq!(&again, &f);
            prop_assert_eq!(again.to_string(), printed);
        }
    }
}
