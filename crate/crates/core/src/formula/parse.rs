//! Parsers for the s-expression formula grammar and for REDLOG infix formulas.
//!
//! S-expression grammar (a superset of what [`emit_sexpr`](super::emit_sexpr) writes):
//!
//! ```text
//! formula := true | false
//!          | (= t t) | (< t t) | (<= t t) | (> t t) | (>= t t) | (distinct t t)
//!          | (and f f ...) | (or f f ...) | (not f) | (=> f f)
//!          | (forall (binder ...) f) | (exists (binder ...) f)
//! binder  := name | (name Real)
//! term    := numeral | decimal | name | (+ t ...) | (- t) | (- t t ...) | (* t ...)
//!          | (/ t c) | (^ t n)
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{Formula, Poly};
use crate::error::{Error, Result};

fn perr(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse { offset, msg: msg.into() }
}

#[derive(Debug, Clone)]
enum Sexp {
    Sym(String, usize),
    List(Vec<Sexp>, usize),
}

impl Sexp {
    fn offset(&self) -> usize {
        match self {
            Sexp::Sym(_, o) | Sexp::List(_, o) => *o,
        }
    }
}

fn read_sexps(src: &str) -> Result<Vec<Sexp>> {
    let bytes = src.as_bytes();
    let mut stack: Vec<(Vec<Sexp>, usize)> = vec![(Vec::new(), 0)];
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == ';' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '(' {
            stack.push((Vec::new(), i));
            i += 1;
            continue;
        }
        if c == ')' {
            let (items, start) = stack.pop().ok_or_else(|| perr(i, "unbalanced `)`"))?;
            let top = stack.last_mut().ok_or_else(|| perr(i, "unbalanced `)`"))?;
            top.0.push(Sexp::List(items, start));
            i += 1;
            continue;
        }
        if c == '|' {
            let start = i;
            let end = src[i + 1..].find('|').ok_or_else(|| perr(i, "unterminated `|` symbol"))?;
            let name = &src[i + 1..i + 1 + end];
            stack.last_mut().ok_or_else(|| perr(i, "unbalanced input"))?.0.push(Sexp::Sym(name.to_string(), start));
            i += end + 2;
            continue;
        }
        let start = i;
        while i < bytes.len() {
            let d = bytes[i] as char;
            if d.is_whitespace() || d == '(' || d == ')' || d == ';' {
                break;
            }
            i += 1;
        }
        stack
            .last_mut()
            .ok_or_else(|| perr(i, "unbalanced input"))?
            .0
            .push(Sexp::Sym(src[start..i].to_string(), start));
    }
    if stack.len() != 1 {
        return Err(perr(src.len(), "unclosed `(`"));
    }
    Ok(stack.pop().map(|s| s.0).unwrap_or_default())
}

fn parse_number(s: &str) -> Option<BigRational> {
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if !s.chars().next()?.is_ascii_digit() {
        return None;
    }
    match s.split_once('.') {
        None => Some(BigRational::from_integer(s.parse::<BigInt>().ok()?)),
        Some((int, frac)) => {
            let digits = format!("{int}{frac}");
            let num: BigInt = digits.parse().ok()?;
            let den = num_traits::pow(BigInt::from(10), frac.len());
            Some(BigRational::new(num, den))
        }
    }
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_' || c == '\'' || c == '.')
}

fn term_of(e: &Sexp) -> Result<Poly> {
    match e {
        Sexp::Sym(s, o) => {
            if let Some(r) = parse_number(s) {
                Ok(Poly::constant(r))
            } else if valid_name(s) {
                Ok(Poly::var(s))
            } else {
                Err(perr(*o, format!("bad term `{s}`")))
            }
        }
        Sexp::List(items, o) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Sym(h, _), rest)) => (h.as_str(), rest),
                _ => return Err(perr(*o, "expected operator")),
            };
            let ts = args.iter().map(term_of).collect::<Result<Vec<_>>>()?;
            match head {
                "+" => Ok(ts.iter().fold(Poly::zero(), |a, b| &a + b)),
                "*" => Ok(ts.iter().fold(Poly::int(1), |a, b| &a * b)),
                "-" => match ts.split_first() {
                    None => Err(perr(*o, "`-` needs arguments")),
                    Some((first, [])) => Ok(-first),
                    Some((first, rest)) => Ok(rest.iter().fold(first.clone(), |a, b| &a - b)),
                },
                "/" => {
                    let (first, rest) = ts.split_first().ok_or_else(|| perr(*o, "`/` needs arguments"))?;
                    let mut acc = first.clone();
                    for d in rest {
                        let c = d.as_constant().ok_or_else(|| perr(*o, "division by a non-constant"))?;
                        if c.is_zero() {
                            return Err(perr(*o, "division by zero"));
                        }
                        acc = acc.scale(&(BigRational::one() / c));
                    }
                    Ok(acc)
                }
                "^" => {
                    if ts.len() != 2 {
                        return Err(perr(*o, "`^` takes two arguments"));
                    }
                    let e = ts[1]
                        .as_constant()
                        .filter(|c| c.is_integer() && *c >= BigRational::zero())
                        .and_then(|c| num_traits::ToPrimitive::to_u32(c.numer()))
                        .ok_or_else(|| perr(*o, "exponent must be a natural number"))?;
                    Ok(ts[0].pow(e))
                }
                other => Err(perr(*o, format!("unknown term operator `{other}`"))),
            }
        }
    }
}

fn binders_of(e: &Sexp) -> Result<Vec<String>> {
    let items = match e {
        Sexp::List(items, _) => items,
        Sexp::Sym(_, o) => return Err(perr(*o, "expected binder list")),
    };
    items
        .iter()
        .map(|b| match b {
            Sexp::Sym(s, _) if valid_name(s) => Ok(s.clone()),
            Sexp::List(pair, o) => match pair.first() {
                Some(Sexp::Sym(s, _)) if valid_name(s) => Ok(s.clone()),
                _ => Err(perr(*o, "bad binder")),
            },
            other => Err(perr(other.offset(), "bad binder")),
        })
        .collect()
}

fn formula_of(e: &Sexp) -> Result<Formula> {
    match e {
        Sexp::Sym(s, o) => match s.as_str() {
            "true" => Ok(Formula::tt()),
            "false" => Ok(Formula::ff()),
            _ => Err(perr(*o, format!("expected formula, found `{s}`"))),
        },
        Sexp::List(items, o) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Sym(h, _), rest)) => (h.as_str(), rest),
                _ => return Err(perr(*o, "expected connective")),
            };
            let rel2 = |f: fn(Poly, Poly) -> Formula| -> Result<Formula> {
                if args.len() != 2 {
                    return Err(perr(*o, format!("`{head}` takes two terms")));
                }
                Ok(f(term_of(&args[0])?, term_of(&args[1])?))
            };
            match head {
                "=" => rel2(Formula::eq),
                "<" => rel2(Formula::lt),
                "<=" => rel2(Formula::le),
                ">" => rel2(Formula::gt),
                ">=" => rel2(Formula::ge),
                "distinct" => rel2(Formula::ne),
                "and" | "or" => {
                    let fs = args.iter().map(formula_of).collect::<Result<Vec<_>>>()?;
                    if fs.is_empty() {
                        return Err(perr(*o, format!("`{head}` needs operands")));
                    }
                    Ok(if head == "and" { Formula::and_all(fs) } else { Formula::or_all(fs) })
                }
                "not" => match args {
                    [a] => Ok(Formula::not(formula_of(a)?)),
                    _ => Err(perr(*o, "`not` takes one operand")),
                },
                "=>" => match args {
                    [a, b] => Ok(Formula::implies(formula_of(a)?, formula_of(b)?)),
                    _ => Err(perr(*o, "`=>` takes two operands")),
                },
                "forall" | "exists" => match args {
                    [bs, body] => {
                        let vars = binders_of(bs)?;
                        let body = formula_of(body)?;
                        Ok(if head == "forall" {
                            Formula::forall_many(&vars, body)
                        } else {
                            Formula::exists_many(&vars, body)
                        })
                    }
                    _ => Err(perr(*o, "quantifier takes a binder list and a body")),
                },
                other => Err(perr(*o, format!("unknown connective `{other}`"))),
            }
        }
    }
}

/// Parse a single formula in s-expression syntax.
pub fn parse_sexpr(src: &str) -> Result<Formula> {
    let items = read_sexps(src)?;
    match items.as_slice() {
        [one] => formula_of(one),
        [] => Err(perr(0, "empty input")),
        [_, second, ..] => Err(perr(second.offset(), "trailing input after formula")),
    }
}

/// Parse a formula out of any emitted script: an SMT-LIB script (the conjunction of its
/// assertions), a REDLOG script (`phi := ...$`) or a bare s-expression.
pub fn parse_script(src: &str) -> Result<Formula> {
    if let Some(pos) = src.find("phi :=") {
        let rest = &src[pos + "phi :=".len()..];
        let end = rest.find('$').ok_or_else(|| perr(pos, "missing `$` after REDLOG formula"))?;
        return parse_redlog(&rest[..end]);
    }
    let items = read_sexps(src)?;
    let asserts: Vec<&Sexp> = items
        .iter()
        .filter_map(|e| match e {
            Sexp::List(v, _) if matches!(v.first(), Some(Sexp::Sym(h, _)) if h == "assert") => v.get(1),
            _ => None,
        })
        .collect();
    if asserts.is_empty() {
        return parse_sexpr(src);
    }
    Ok(Formula::and_all(asserts.into_iter().map(formula_of).collect::<Result<Vec<_>>>()?))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(&'static str),
}

fn lex_infix(src: &str) -> Result<Vec<(Tok, usize)>> {
    const OPS: [&str; 14] = ["<>", "<=", ">=", "(", ")", ",", "+", "-", "*", "/", "^", "=", "<", ">"];
    let mut out = Vec::new();
    let mut i = 0;
    let b = src.as_bytes();
    'outer: while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        for op in OPS {
            if src[i..].starts_with(op) {
                out.push((Tok::Op(op), i));
                i += op.len();
                continue 'outer;
            }
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            let n = parse_number(&src[start..i]).ok_or_else(|| perr(start, "bad number"))?;
            out.push((Tok::Num(n), start));
        } else if c.is_alphabetic() || c == '_' {
            while i < b.len() && ((b[i] as char).is_alphanumeric() || b[i] == b'_' || b[i] == b'\'') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            return Err(perr(i, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Infix {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Infix {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(usize::MAX)
    }
    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(i)) if i == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect_op(&mut self, op: &str) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(perr(self.offset(), format!("expected `{op}`")))
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.disj()?;
        if self.eat_kw("impl") {
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }
    fn disj(&mut self) -> Result<Formula> {
        let mut parts = vec![self.conj()?];
        while self.eat_kw("or") {
            parts.push(self.conj()?);
        }
        Ok(Formula::or_all(parts))
    }
    fn conj(&mut self) -> Result<Formula> {
        let mut parts = vec![self.unary()?];
        while self.eat_kw("and") {
            parts.push(self.unary()?);
        }
        Ok(Formula::and_all(parts))
    }
    fn unary(&mut self) -> Result<Formula> {
        if self.eat_kw("not") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat_kw("true") {
            return Ok(Formula::tt());
        }
        if self.eat_kw("false") {
            return Ok(Formula::ff());
        }
        for (kw, univ) in [("ex", false), ("all", true)] {
            let save = self.pos;
            if self.eat_kw(kw) && self.eat_op("(") {
                let v = match self.peek() {
                    Some(Tok::Ident(v)) => v.clone(),
                    _ => return Err(perr(self.offset(), "expected bound variable")),
                };
                self.pos += 1;
                self.expect_op(",")?;
                let body = self.formula()?;
                self.expect_op(")")?;
                return Ok(if univ { Formula::forall(&v, body) } else { Formula::exists(&v, body) });
            }
            self.pos = save;
        }
        if matches!(self.peek(), Some(Tok::Op("("))) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(f) = self.formula() {
                if self.eat_op(")") && !self.at_term_continuation() {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        self.relation()
    }
    fn at_term_continuation(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Op("=" | "<" | ">" | "<=" | ">=" | "<>" | "+" | "-" | "*" | "/" | "^"))
        )
    }
    fn relation(&mut self) -> Result<Formula> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Op(o)) => *o,
            _ => return Err(perr(self.offset(), "expected relation")),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(match op {
            "=" => Formula::eq(lhs, rhs),
            "<" => Formula::lt(lhs, rhs),
            ">" => Formula::gt(lhs, rhs),
            "<=" => Formula::le(lhs, rhs),
            ">=" => Formula::ge(lhs, rhs),
            "<>" => Formula::ne(lhs, rhs),
            other => return Err(perr(self.offset(), format!("`{other}` is not a relation"))),
        })
    }
    fn sum(&mut self) -> Result<Poly> {
        let mut acc = self.product()?;
        loop {
            if self.eat_op("+") {
                acc = &acc + &self.product()?;
            } else if self.eat_op("-") {
                acc = &acc - &self.product()?;
            } else {
                return Ok(acc);
            }
        }
    }
    fn product(&mut self) -> Result<Poly> {
        let mut acc = self.power()?;
        loop {
            if self.eat_op("*") {
                acc = &acc * &self.power()?;
            } else if self.eat_op("/") {
                let off = self.offset();
                let d = self.power()?.as_constant().ok_or_else(|| perr(off, "division by a non-constant"))?;
                if d.is_zero() {
                    return Err(perr(off, "division by zero"));
                }
                acc = acc.scale(&(BigRational::one() / d));
            } else {
                return Ok(acc);
            }
        }
    }
    fn power(&mut self) -> Result<Poly> {
        let base = self.atom_term()?;
        if self.eat_op("^") {
            let off = self.offset();
            match self.peek().cloned() {
                Some(Tok::Num(n)) if n.is_integer() => {
                    self.pos += 1;
                    let e = num_traits::ToPrimitive::to_u32(n.numer()).ok_or_else(|| perr(off, "bad exponent"))?;
                    return Ok(base.pow(e));
                }
                _ => return Err(perr(off, "exponent must be a natural number")),
            }
        }
        Ok(base)
    }
    fn atom_term(&mut self) -> Result<Poly> {
        let off = self.offset();
        match self.peek().cloned() {
            Some(Tok::Op("-")) => {
                self.pos += 1;
                Ok(-self.power()?)
            }
            Some(Tok::Op("(")) => {
                self.pos += 1;
                let t = self.sum()?;
                self.expect_op(")")?;
                Ok(t)
            }
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Poly::constant(n))
            }
            Some(Tok::Ident(v)) => {
                self.pos += 1;
                Ok(Poly::var(&v))
            }
            _ => Err(perr(off, "expected term")),
        }
    }
}

/// Parse a REDLOG infix formula (the right-hand side of `phi := ...`).
pub fn parse_redlog(src: &str) -> Result<Formula> {
    let mut p = Infix { toks: lex_infix(src)?, pos: 0 };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(perr(p.offset(), "trailing input after formula"));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::super::{emit, emit_sexpr, Dialect};
    use super::*;

    #[test]
    fn parses_core_and_sugar() {
        let f = parse_sexpr("(forall (x) (=> (<= 0 x) (>= (* x x) 0)))").unwrap();
        assert!(f.free_vars().is_empty());
        let g = parse_sexpr("(exists ((t Real)) (and (> t 0) (= x (* 2 t)) (< x 4)))").unwrap();
        assert_eq!(g.free_vars().into_iter().collect::<Vec<_>>(), vec!["x".to_string()]);
    }

    #[test]
    fn parses_rationals_and_decimals() {
        let f = parse_sexpr("(< x (/ 1 2))").unwrap();
        let g = parse_sexpr("(< x 0.5)").unwrap();
        assert_eq!(f, g);
        let h = parse_sexpr("(< x (- (/ 1 3)))").unwrap();
        assert_eq!(emit_sexpr(&h), "(< x (- (/ 1 3)))");
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_sexpr("(< x").is_err());
        assert!(parse_sexpr("(frob x y)").is_err());
        assert!(parse_sexpr("(< x (/ 1 y))").is_err());
        assert!(parse_sexpr("(< x 1) (< y 2)").is_err());
    }

    #[test]
    fn redlog_roundtrip() {
        let f = parse_sexpr("(exists (x) (and (= (* x x) 2) (not (< x (- (/ 1 2))))))").unwrap();
        let script = emit(&f, Dialect::Redlog);
        let g = parse_script(&script).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn redlog_parenthesized_terms() {
        let f = parse_redlog("(1/2)*y + 3 < x and (x = 1 or y > 0)").unwrap();
        assert_eq!(f.free_vars().len(), 2);
    }

    #[test]
    fn smt_roundtrip() {
        let f = parse_sexpr("(or (< (+ x (* 3 y y)) 1) (forall (z) (= z z)))").unwrap();
        let g = parse_script(&emit(&f, Dialect::Smtlib2Nra)).unwrap();
        assert_eq!(f, g);
    }
}
