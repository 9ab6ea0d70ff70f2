//! The `.lyr` program format: one stanza per line.
//!
//! ```text
//! domain Points from "points.csv"
//! domain Shapes width 2
//! individual Tweety : Shapes = [0.5, 1.0]
//! individual Ghost : Shapes learnable
//! model NN = mlp(2, 16, 1) hidden tanh output sigmoid seed 3
//! function rotate(Images) -> Images = given rotate90(side = 4)
//! predicate A(Points) = NN
//! predicate Agents(Papers) = slice(NN, 0)
//! predicate Close(Points, Points) = given close(sigma = 0.5, threshold = 0.5)
//! predicate Cite(Papers, Papers) = table "cites"
//! constraint "forall x: A(x) or B(x)" weight 0.5
//! constraint "forall x: B(x) -> A(x)" test
//! pointwise A inputs "xs" labels "ys" loss cross_entropy weight 1
//! pointwise NN inputs Points labels "ys"
//! ```
//!
//! Lines starting with `#` are comments. Every name must be declared before
//! it is referenced and no name may be declared twice.

use std::collections::HashMap;

use super::ast::{Formula, Ident};
use super::lexer::{lex, Tok};
use super::parser::{parse_formula_at, Parser};
use super::{LogicError, Span};
use crate::learners::{Activation, MlpSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub declarations: Vec<Declaration>,
    pub constraints: Vec<ConstraintDecl>,
    pub pointwise: Vec<PointwiseDecl>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Declaration {
    Domain(DomainDecl),
    Individual(IndividualDecl),
    Model(ModelDecl),
    Function(SymbolDecl),
    Predicate(SymbolDecl),
}

impl Declaration {
    pub fn name(&self) -> &Ident {
        match self {
            Declaration::Domain(d) => &d.name,
            Declaration::Individual(d) => &d.name,
            Declaration::Model(d) => &d.name,
            Declaration::Function(d) | Declaration::Predicate(d) => &d.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainDecl {
    pub name: Ident,
    /// Data source holding the domain rows, resolved by a data resolver.
    pub source: Option<String>,
    pub width: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IndividualValue {
    Row(Vec<f64>),
    Learnable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndividualDecl {
    pub name: Ident,
    pub domain: Ident,
    pub value: IndividualValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDecl {
    pub name: Ident,
    pub spec: MlpSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BindingDecl {
    Model(Ident),
    Slice { model: Ident, index: usize },
    Given { name: Ident, args: Vec<(String, f64)> },
    Table(String),
}

/// A function (with `output`) or predicate (without).
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDecl {
    pub name: Ident,
    pub inputs: Vec<Ident>,
    pub output: Option<Ident>,
    pub binding: BindingDecl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintDecl {
    pub formula: Formula,
    pub source: String,
    pub weight: f64,
    /// Only evaluated, never optimized.
    pub test_only: bool,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PointwiseLoss {
    #[default]
    CrossEntropy,
    SquaredError,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataRef {
    /// Every row of a declared domain.
    Domain(Ident),
    Source(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseDecl {
    pub target: Ident,
    pub inputs: DataRef,
    pub labels: String,
    pub loss: PointwiseLoss,
    pub weight: f64,
    pub span: Span,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum SymbolClass {
    Domain,
    Individual,
    Model,
    Function,
    Predicate,
}

impl SymbolClass {
    fn label(self) -> &'static str {
        match self {
            SymbolClass::Domain => "domain",
            SymbolClass::Individual => "individual",
            SymbolClass::Model => "model",
            SymbolClass::Function => "function",
            SymbolClass::Predicate => "predicate",
        }
    }
}

struct ProgramParser {
    p: Parser,
    names: HashMap<String, SymbolClass>,
    program: Program,
}

/// Parses a whole `.lyr` program.
pub fn parse_program(src: &str) -> Result<Program, LogicError> {
    let toks = lex(src, Span::START)?;
    let mut pp = ProgramParser {
        p: Parser::new(toks),
        names: HashMap::new(),
        program: Program {
            declarations: vec![],
            constraints: vec![],
            pointwise: vec![],
        },
    };
    loop {
        while pp.p.eat(&Tok::Newline) {}
        if *pp.p.peek() == Tok::Eof {
            break;
        }
        pp.stanza()?;
        if !pp.p.eat(&Tok::Newline) && *pp.p.peek() != Tok::Eof {
            return pp.p.error("end of line");
        }
    }
    Ok(pp.program)
}

impl ProgramParser {
    fn declare(&mut self, name: &Ident, class: SymbolClass) -> Result<(), LogicError> {
        if self.names.contains_key(&name.name) {
            return Err(LogicError::Redefinition {
                name: name.name.clone(),
                span: name.span,
            });
        }
        self.names.insert(name.name.clone(), class);
        Ok(())
    }

    fn require(&self, name: &Ident, allowed: &[SymbolClass]) -> Result<(), LogicError> {
        match self.names.get(&name.name) {
            Some(c) if allowed.contains(c) => Ok(()),
            Some(c) => Err(LogicError::WrongKind {
                name: name.name.clone(),
                actual: c.label(),
                expected: allowed[0].label(),
                span: name.span,
            }),
            None => Err(LogicError::UnknownSymbol {
                kind: allowed[0].label(),
                name: name.name.clone(),
                span: name.span,
            }),
        }
    }

    fn stanza(&mut self) -> Result<(), LogicError> {
        let kw = match self.p.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.p.error("a stanza keyword"),
        };
        match kw.as_str() {
            "domain" => self.domain(),
            "individual" => self.individual(),
            "model" => self.model(),
            "function" => self.symbol(SymbolClass::Function),
            "predicate" => self.symbol(SymbolClass::Predicate),
            "constraint" => self.constraint(),
            "pointwise" => self.pointwise(),
            _ => self.p.error("one of domain, individual, model, function, predicate, constraint, pointwise"),
        }
    }

    fn domain(&mut self) -> Result<(), LogicError> {
        self.p.expect_keyword("domain")?;
        let name = self.p.ident()?;
        self.declare(&name, SymbolClass::Domain)?;
        let mut decl = DomainDecl {
            name,
            source: None,
            width: None,
        };
        loop {
            if self.p.eat_keyword("from") {
                decl.source = Some(self.p.string()?.0);
            } else if self.p.eat_keyword("width") {
                decl.width = Some(self.count()?);
            } else {
                break;
            }
        }
        if decl.source.is_none() && decl.width.is_none() {
            return self.p.error("`from` or `width`");
        }
        self.program.declarations.push(Declaration::Domain(decl));
        Ok(())
    }

    fn count(&mut self) -> Result<usize, LogicError> {
        let span = self.p.span();
        let n = self.p.number()?;
        if n < 0.0 || n.fract() != 0.0 {
            return Err(LogicError::Syntax {
                span,
                msg: format!("expected a non-negative integer, found {n}"),
            });
        }
        Ok(n as usize)
    }

    fn individual(&mut self) -> Result<(), LogicError> {
        self.p.expect_keyword("individual")?;
        let name = self.p.ident()?;
        self.p.expect(&Tok::Colon)?;
        let domain = self.p.ident()?;
        self.require(&domain, &[SymbolClass::Domain])?;
        self.declare(&name, SymbolClass::Individual)?;
        let value = if self.p.eat_keyword("learnable") {
            IndividualValue::Learnable
        } else {
            self.p.expect(&Tok::Eq)?;
            self.p.expect(&Tok::LBracket)?;
            let mut row = vec![];
            if *self.p.peek() != Tok::RBracket {
                row.push(self.p.number()?);
                while self.p.eat(&Tok::Comma) {
                    row.push(self.p.number()?);
                }
            }
            self.p.expect(&Tok::RBracket)?;
            IndividualValue::Row(row)
        };
        self.program
            .declarations
            .push(Declaration::Individual(IndividualDecl { name, domain, value }));
        Ok(())
    }

    fn model(&mut self) -> Result<(), LogicError> {
        self.p.expect_keyword("model")?;
        let name = self.p.ident()?;
        self.declare(&name, SymbolClass::Model)?;
        self.p.expect(&Tok::Eq)?;
        self.p.expect_keyword("mlp")?;
        self.p.expect(&Tok::LParen)?;
        let mut widths = vec![self.count()?];
        while self.p.eat(&Tok::Comma) {
            widths.push(self.count()?);
        }
        self.p.expect(&Tok::RParen)?;
        let mut spec = MlpSpec::new(widths);
        loop {
            if self.p.eat_keyword("hidden") {
                spec.hidden = self.activation()?;
            } else if self.p.eat_keyword("output") {
                spec.output = self.activation()?;
            } else if self.p.eat_keyword("seed") {
                spec.seed = self.count()? as u64;
            } else {
                break;
            }
        }
        let span = name.span;
        spec.validate().map_err(|msg| LogicError::Syntax { span, msg })?;
        self.program
            .declarations
            .push(Declaration::Model(ModelDecl { name, spec }));
        Ok(())
    }

    fn activation(&mut self) -> Result<Activation, LogicError> {
        let id = self.p.ident()?;
        id.name.parse().map_err(|_| LogicError::Syntax {
            span: id.span,
            msg: format!("unknown activation `{}`", id.name),
        })
    }

    fn symbol(&mut self, class: SymbolClass) -> Result<(), LogicError> {
        self.p.expect_keyword(class.label())?;
        let name = self.p.ident()?;
        self.p.expect(&Tok::LParen)?;
        let mut inputs = vec![self.p.ident()?];
        while self.p.eat(&Tok::Comma) {
            inputs.push(self.p.ident()?);
        }
        self.p.expect(&Tok::RParen)?;
        for d in &inputs {
            self.require(d, &[SymbolClass::Domain])?;
        }
        let output = if class == SymbolClass::Function {
            self.p.expect(&Tok::Arrow)?;
            let out = self.p.ident()?;
            self.require(&out, &[SymbolClass::Domain])?;
            Some(out)
        } else {
            None
        };
        self.declare(&name, class)?;
        self.p.expect(&Tok::Eq)?;
        let binding = self.binding()?;
        let decl = SymbolDecl {
            name,
            inputs,
            output,
            binding,
        };
        self.program.declarations.push(match class {
            SymbolClass::Function => Declaration::Function(decl),
            _ => Declaration::Predicate(decl),
        });
        Ok(())
    }

    fn binding(&mut self) -> Result<BindingDecl, LogicError> {
        if self.p.eat_keyword("table") {
            return Ok(BindingDecl::Table(self.p.string()?.0));
        }
        if self.p.eat_keyword("given") {
            let name = self.p.ident()?;
            let mut args = vec![];
            if self.p.eat(&Tok::LParen) {
                if *self.p.peek() != Tok::RParen {
                    loop {
                        let key = self.p.ident()?;
                        self.p.expect(&Tok::Eq)?;
                        args.push((key.name, self.p.number()?));
                        if !self.p.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.p.expect(&Tok::RParen)?;
            }
            return Ok(BindingDecl::Given { name, args });
        }
        if self.p.eat_keyword("slice") {
            self.p.expect(&Tok::LParen)?;
            let model = self.p.ident()?;
            self.require(&model, &[SymbolClass::Model])?;
            self.p.expect(&Tok::Comma)?;
            let index = self.count()?;
            self.p.expect(&Tok::RParen)?;
            return Ok(BindingDecl::Slice { model, index });
        }
        let model = self.p.ident()?;
        self.require(&model, &[SymbolClass::Model])?;
        Ok(BindingDecl::Model(model))
    }

    fn constraint(&mut self) -> Result<(), LogicError> {
        let span = self.p.expect_keyword("constraint")?;
        let (source, at) = self.p.string()?;
        let origin = Span {
            line: at.line,
            col: at.col + 1,
        };
        let formula = parse_formula_at(&source, origin)?;
        let mut decl = ConstraintDecl {
            formula,
            source,
            weight: 1.0,
            test_only: false,
            span,
        };
        loop {
            if self.p.eat_keyword("weight") {
                decl.weight = self.weight()?;
            } else if self.p.eat_keyword("test") {
                decl.test_only = true;
            } else {
                break;
            }
        }
        self.program.constraints.push(decl);
        Ok(())
    }

    fn weight(&mut self) -> Result<f64, LogicError> {
        let span = self.p.span();
        let w = self.p.number()?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(LogicError::Syntax {
                span,
                msg: format!("weights must be finite and non-negative, found {w}"),
            });
        }
        Ok(w)
    }

    fn pointwise(&mut self) -> Result<(), LogicError> {
        let span = self.p.expect_keyword("pointwise")?;
        let target = self.p.ident()?;
        self.require(
            &target,
            &[SymbolClass::Predicate, SymbolClass::Model, SymbolClass::Function],
        )?;
        self.p.expect_keyword("inputs")?;
        let inputs = if matches!(self.p.peek(), Tok::Str(_)) {
            DataRef::Source(self.p.string()?.0)
        } else {
            let d = self.p.ident()?;
            self.require(&d, &[SymbolClass::Domain])?;
            DataRef::Domain(d)
        };
        self.p.expect_keyword("labels")?;
        let labels = self.p.string()?.0;
        let mut decl = PointwiseDecl {
            target,
            inputs,
            labels,
            loss: PointwiseLoss::CrossEntropy,
            weight: 1.0,
            span,
        };
        loop {
            if self.p.eat_keyword("loss") {
                let id = self.p.ident()?;
                decl.loss = match id.name.as_str() {
                    "cross_entropy" => PointwiseLoss::CrossEntropy,
                    "squared_error" => PointwiseLoss::SquaredError,
                    other => {
                        return Err(LogicError::Syntax {
                            span: id.span,
                            msg: format!("unknown loss `{other}`"),
                        })
                    }
                };
            } else if self.p.eat_keyword("weight") {
                decl.weight = self.weight()?;
            } else {
                break;
            }
        }
        self.program.pointwise.push(decl);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CITESEER: &str = r#"
domain Papers from "content"
model NN = mlp(3703, 200, 6) hidden relu output softmax seed 1
predicate Agents(Papers) = slice(NN, 0)
predicate AI(Papers) = slice(NN, 1)
predicate Cite(Papers, Papers) = table "cites"
constraint "forall x: forall y: Agents(x) and Cite(x, y) -> Agents(y)" weight 0.1
pointwise NN inputs "train_x" labels "train_y"
"#;

    #[test]
    fn parses_stanzas() {
        let p = parse_program(CITESEER).unwrap();
        assert_eq!(p.declarations.len(), 5);
        assert_eq!(p.constraints.len(), 1);
        assert_eq!(p.constraints[0].weight, 0.1);
        assert_eq!(p.pointwise[0].loss, PointwiseLoss::CrossEntropy);
        match &p.declarations[2] {
            Declaration::Predicate(SymbolDecl {
                binding: BindingDecl::Slice { index, .. },
                ..
            }) => assert_eq!(*index, 0),
            other => panic!("{other:?}"),
        }
        let Declaration::Model(m) = &p.declarations[1] else { panic!() };
        assert_eq!(m.spec.widths, vec![3703, 200, 6]);
        assert_eq!(m.spec.output, Activation::Softmax);
    }

    #[test]
    fn redefinition_is_rejected() {
        let err = parse_program("domain D width 2\ndomain D width 3\n").unwrap_err();
        assert_eq!(err.to_string(), "2:8: `D` is already defined");
    }

    #[test]
    fn use_before_declaration_is_rejected() {
        let err = parse_program("predicate A(Points) = given one\n").unwrap_err();
        assert!(matches!(err, LogicError::UnknownSymbol { .. }), "{err}");
        let err = parse_program("domain P width 1\npredicate A(P) = NN\n").unwrap_err();
        assert!(err.to_string().contains("unknown model `NN`"), "{err}");
    }

    #[test]
    fn formula_errors_point_into_the_file() {
        let err = parse_program("domain P width 1\nconstraint \"forall x A(x)\"\n").unwrap_err();
        assert_eq!(err.to_string(), "2:22: expected `:`, found `A`");
    }

    #[test]
    fn individuals_and_flags() {
        let src = "domain S width 2\nindividual T : S = [0.5, -1]\nindividual G : S learnable\n\
                   predicate P(S) = given one\nconstraint \"P(T)\" test weight 2\n";
        let p = parse_program(src).unwrap();
        let Declaration::Individual(t) = &p.declarations[1] else { panic!() };
        assert_eq!(t.value, IndividualValue::Row(vec![0.5, -1.0]));
        let Declaration::Individual(g) = &p.declarations[2] else { panic!() };
        assert_eq!(g.value, IndividualValue::Learnable);
        assert!(p.constraints[0].test_only);
        assert_eq!(p.constraints[0].weight, 2.0);
    }
}
