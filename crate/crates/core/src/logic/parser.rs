use super::ast::{Connective, Formula, Ident, Quantifier, Term};
use super::lexer::{lex, Tok, Token};
use super::{LogicError, Span};

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

const RESERVED: [&str; 5] = ["forall", "exists", "and", "or", "not"];

impl Parser {
    pub(crate) fn new(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0 }
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub(crate) fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    pub(crate) fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn error<T>(&self, what: &str) -> Result<T, LogicError> {
        Err(LogicError::Syntax {
            span: self.span(),
            msg: format!("expected {what}, found {}", self.peek().describe()),
        })
    }

    pub(crate) fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, tok: &Tok) -> Result<Span, LogicError> {
        if self.peek() == tok {
            Ok(self.bump().span)
        } else {
            self.error(&tok.describe())
        }
    }

    pub(crate) fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_keyword(&mut self, kw: &str) -> Result<Span, LogicError> {
        if self.at_keyword(kw) {
            Ok(self.bump().span)
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    /// An identifier that is not one of the formula keywords.
    pub(crate) fn ident(&mut self) -> Result<Ident, LogicError> {
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let t = self.bump();
                let Tok::Ident(name) = t.tok else { unreachable!() };
                Ok(Ident::new(name, t.span))
            }
            _ => self.error("an identifier"),
        }
    }

    pub(crate) fn number(&mut self) -> Result<f64, LogicError> {
        match *self.peek() {
            Tok::Number(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.error("a number"),
        }
    }

    pub(crate) fn string(&mut self) -> Result<(String, Span), LogicError> {
        match self.peek() {
            Tok::Str(_) => {
                let t = self.bump();
                let Tok::Str(s) = t.tok else { unreachable!() };
                Ok((s, t.span))
            }
            _ => self.error("a string"),
        }
    }

    // formula := iff
    // iff     := implies { "<->" implies }
    // implies := or [ "->" implies ]
    // or      := and { "or" and }
    // and     := unary { "and" unary }
    // unary   := "not" unary | quant | "(" formula ")" | atom
    // quant   := ("forall" | "exists") IDENT ":" formula
    pub(crate) fn formula(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.implies()?;
        while self.eat(&Tok::DArrow) {
            let rhs = self.implies()?;
            lhs = Formula::binary(Connective::Iff, lhs, rhs);
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.or()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.implies()?;
            return Ok(Formula::binary(Connective::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.and()?;
        while self.eat_keyword("or") {
            let rhs = self.and()?;
            lhs = Formula::binary(Connective::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.unary()?;
        while self.eat_keyword("and") {
            let rhs = self.unary()?;
            lhs = Formula::binary(Connective::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        let span = self.span();
        if self.eat_keyword("not") {
            let inner = self.unary()?;
            return Ok(Formula::not(inner, span));
        }
        for q in [Quantifier::Forall, Quantifier::Exists] {
            if self.eat_keyword(q.keyword()) {
                let var = self.ident()?;
                self.expect(&Tok::Colon)?;
                // the scope runs to the end of the enclosing group
                let body = self.formula()?;
                return Ok(Formula::quant(q, var, body, span));
            }
        }
        if self.eat(&Tok::LParen) {
            let inner = self.formula()?;
            self.expect(&Tok::RParen)?;
            return Ok(inner);
        }
        let pred = match self.ident() {
            Ok(id) => id,
            Err(_) => return self.error("a formula"),
        };
        let args = self.arguments()?;
        Ok(Formula::atom(pred, args))
    }

    fn arguments(&mut self) -> Result<Vec<Term>, LogicError> {
        self.expect(&Tok::LParen)?;
        let mut args = vec![self.term()?];
        while self.eat(&Tok::Comma) {
            args.push(self.term()?);
        }
        self.expect(&Tok::RParen)?;
        Ok(args)
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        let name = self.ident()?;
        if *self.peek() == Tok::LParen {
            let args = self.arguments()?;
            return Ok(Term::App { func: name, args });
        }
        Ok(Term::Name(name))
    }
}

/// Parses a formula from text. `origin` is the source position of the
/// first character, used for error reporting.
pub fn parse_formula_at(src: &str, origin: Span) -> Result<Formula, LogicError> {
    let toks = lex(src, origin)?;
    let mut p = Parser::new(toks);
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return p.error("end of formula");
    }
    Ok(f)
}

pub fn parse_formula(src: &str) -> Result<Formula, LogicError> {
    parse_formula_at(src, Span::START)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::ast::FormulaKind;

    fn id(s: &str) -> Ident {
        Ident::new(s, Span::START)
    }

    fn atom(p: &str, args: &[&str]) -> Formula {
        Formula::atom(id(p), args.iter().map(|a| Term::Name(id(a))).collect())
    }

    fn forall(v: &str, body: Formula) -> Formula {
        Formula::quant(Quantifier::Forall, id(v), body, Span::START)
    }

    fn bin(op: Connective, l: Formula, r: Formula) -> Formula {
        Formula::binary(op, l, r)
    }

    #[test]
    fn disjunction_under_forall() {
        let f = parse_formula("forall x: A(x) or B(x)").unwrap();
        let expected = forall("x", bin(Connective::Or, atom("A", &["x"]), atom("B", &["x"])));
        assert_eq!(f, expected);
    }

    #[test]
    fn nested_manifold_rule() {
        let f = parse_formula("forall p: forall q: Close(p,q) -> (A(p) <-> A(q))").unwrap();
        let expected = forall(
            "p",
            forall(
                "q",
                bin(
                    Connective::Implies,
                    atom("Close", &["p", "q"]),
                    bin(Connective::Iff, atom("A", &["p"]), atom("A", &["q"])),
                ),
            ),
        );
        assert_eq!(f, expected);
        // the same rule without spaces, as written in listings
        let compact = parse_formula("forall p:forall q: Close(p,q)->(A(p)<->A(q))").unwrap();
        assert_eq!(compact, expected);
    }

    #[test]
    fn function_inside_atom() {
        let f = parse_formula("forall x: bird(x) -> bird(rotate(x))").unwrap();
        let rotated = Formula::atom(
            id("bird"),
            vec![Term::App {
                func: id("rotate"),
                args: vec![Term::Name(id("x"))],
            }],
        );
        let expected = forall("x", bin(Connective::Implies, atom("bird", &["x"]), rotated));
        assert_eq!(f, expected);
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse_formula("A(a) and B(b) or C(c)").unwrap();
        let expected = bin(
            Connective::Or,
            bin(Connective::And, atom("A", &["a"]), atom("B", &["b"])),
            atom("C", &["c"]),
        );
        assert_eq!(f, expected);

        let f = parse_formula("A(a) -> B(b) -> C(c)").unwrap();
        let expected = bin(
            Connective::Implies,
            atom("A", &["a"]),
            bin(Connective::Implies, atom("B", &["b"]), atom("C", &["c"])),
        );
        assert_eq!(f, expected);

        let f = parse_formula("not A(a) and B(b) <-> C(c) -> D(d)").unwrap();
        let expected = bin(
            Connective::Iff,
            bin(
                Connective::And,
                Formula::not(atom("A", &["a"]), Span::START),
                atom("B", &["b"]),
            ),
            bin(Connective::Implies, atom("C", &["c"]), atom("D", &["d"])),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn quantifier_scope_stops_at_paren() {
        let f = parse_formula("(forall x: A(x)) and B(b)").unwrap();
        assert!(matches!(f.kind, FormulaKind::Binary { op: Connective::And, .. }));
        let f = parse_formula("B(b) and forall x: A(x) or C(x)").unwrap();
        let FormulaKind::Binary { rhs, .. } = f.kind else { panic!() };
        assert!(matches!(rhs.kind, FormulaKind::Quant { .. }));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_formula("forall x A(x)").unwrap_err();
        assert_eq!(err.to_string(), "1:10: expected `:`, found `A`");
        let err = parse_formula("forall x: A(x) or").unwrap_err();
        assert!(err.to_string().starts_with("1:18:"), "{err}");
        let err = parse_formula("forall x: A(x))").unwrap_err();
        assert!(err.to_string().contains("end of formula"), "{err}");
    }

    #[test]
    fn printing_round_trips() {
        for src in [
            "forall x: A(x) or B(x)",
            "forall p: forall q: Close(p,q) -> (A(p) <-> A(q))",
            "forall x: bird(x) -> bird(rotate(x))",
            "(forall x: A(x)) and not (exists y: B(y) and C(y, y))",
            "((A(a) -> B(b)) -> C(c)) <-> (D(d) <-> E(e))",
        ] {
            let f = parse_formula(src).unwrap();
            let printed = f.to_string();
            assert_eq!(parse_formula(&printed).unwrap(), f, "{src} printed as {printed}");
        }
    }
}
