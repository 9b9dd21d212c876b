//! Text emission: s-expressions, SMT-LIB 2 (QF-free NRA) scripts and REDLOG scripts.

use num_rational::BigRational;
use num_traits::{One, Signed};

use super::{Formula, Poly, Rel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// Plain s-expression formula, no script wrapper.
    Sexpr,
    Smtlib2Nra,
    Redlog,
}

impl std::str::FromStr for Dialect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sexpr" => Ok(Dialect::Sexpr),
            "smtlib2-nra" | "smt2" | "smtlib" => Ok(Dialect::Smtlib2Nra),
            "redlog" | "red" => Ok(Dialect::Redlog),
            other => Err(format!("unknown dialect `{other}`")),
        }
    }
}

/// Emit `f` as a complete script in `dialect`.
///
/// SMT-LIB scripts declare every free variable as `Real`, assert the formula and
/// ask `check-sat`. REDLOG scripts bind the formula to `phi` and call `rlqe`.
pub fn emit(f: &Formula, dialect: Dialect) -> String {
    match dialect {
        Dialect::Sexpr => emit_sexpr(f),
        Dialect::Smtlib2Nra => {
            let mut out = String::from("(set-logic NRA)\n");
            for v in f.free_vars() {
                out.push_str(&format!("(declare-fun {} () Real)\n", smt_sym(&v)));
            }
            out.push_str(&format!("(assert {})\n(check-sat)\n(exit)\n", emit_sexpr(f)));
            out
        }
        Dialect::Redlog => {
            format!(
                "load_package redlog$\nrlset r$\noff rlverbose$\nphi := {}$\nrlqe phi;\nend;\n",
                redlog_formula(f)
            )
        }
    }
}

/// SMT-LIB symbol, quoted with `|..|` when it is not a simple symbol.
pub fn smt_sym(v: &str) -> String {
    let simple = v.chars().next().is_some_and(|c| !c.is_ascii_digit())
        && v.chars().all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        v.to_string()
    } else {
        format!("|{v}|")
    }
}

fn rat_sexpr(c: &BigRational) -> String {
    let body = if c.denom().is_one() {
        c.numer().abs().to_string()
    } else {
        format!("(/ {} {})", c.numer().abs(), c.denom())
    };
    if c.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

pub fn poly_sexpr(p: &Poly) -> String {
    let mut parts: Vec<String> = Vec::new();
    for (m, c) in p.terms() {
        let mut factors: Vec<String> = Vec::new();
        if m.is_empty() || !c.is_one() {
            factors.push(rat_sexpr(c));
        }
        for (v, e) in m {
            for _ in 0..*e {
                factors.push(smt_sym(v));
            }
        }
        parts.push(if factors.len() == 1 {
            factors.pop().unwrap_or_default()
        } else {
            format!("(* {})", factors.join(" "))
        });
    }
    match parts.len() {
        0 => "0".into(),
        1 => parts.pop().unwrap_or_default(),
        _ => format!("(+ {})", parts.join(" ")),
    }
}

pub fn emit_sexpr(f: &Formula) -> String {
    match f {
        Formula::Atom(a) => {
            let op = match a.rel {
                Rel::Eq => "=",
                Rel::Lt => "<",
            };
            format!("({op} {} {})", poly_sexpr(&a.lhs), poly_sexpr(&a.rhs))
        }
        Formula::And(a, b) => format!("(and {} {})", emit_sexpr(a), emit_sexpr(b)),
        Formula::Or(a, b) => format!("(or {} {})", emit_sexpr(a), emit_sexpr(b)),
        Formula::Not(a) => format!("(not {})", emit_sexpr(a)),
        Formula::Forall(v, a) => format!("(forall (({} Real)) {})", smt_sym(v), emit_sexpr(a)),
        Formula::Exists(v, a) => format!("(exists (({} Real)) {})", smt_sym(v), emit_sexpr(a)),
    }
}

/// Infix rendering, e.g. `3*x^2 - 1/2*y + 1`.
pub fn poly_infix(p: &Poly) -> String {
    let mut out = String::new();
    for (i, (m, c)) in p.terms().enumerate() {
        let neg = c.is_negative();
        let mag = c.abs();
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let mut factors: Vec<String> = Vec::new();
        if m.is_empty() || !mag.is_one() {
            factors.push(if mag.denom().is_one() {
                mag.numer().to_string()
            } else {
                format!("({}/{})", mag.numer(), mag.denom())
            });
        }
        for (v, e) in m {
            factors.push(if *e == 1 { v.clone() } else { format!("{v}^{e}") });
        }
        out.push_str(&factors.join("*"));
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn redlog_formula(f: &Formula) -> String {
    match f {
        Formula::Atom(a) => {
            let op = match a.rel {
                Rel::Eq => "=",
                Rel::Lt => "<",
            };
            format!("{} {op} {}", poly_infix(&a.lhs), poly_infix(&a.rhs))
        }
        Formula::And(a, b) => format!("({}) and ({})", redlog_formula(a), redlog_formula(b)),
        Formula::Or(a, b) => format!("({}) or ({})", redlog_formula(a), redlog_formula(b)),
        Formula::Not(a) => format!("not ({})", redlog_formula(a)),
        Formula::Forall(v, a) => format!("all({v}, {})", redlog_formula(a)),
        Formula::Exists(v, a) => format!("ex({v}, {})", redlog_formula(a)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smtlib_declares_and_asserts() {
        let f = Formula::lt(Poly::var("x"), Poly::int(1));
        let s = emit(&f, Dialect::Smtlib2Nra);
        assert!(s.contains("(declare-fun x () Real)"));
        assert!(s.contains("(assert (< x 1))"));
        assert!(s.contains("(check-sat)"));
    }

    #[test]
    fn redlog_uses_ex_binder() {
        let x = Poly::var("x");
        let f = Formula::exists("x", Formula::eq(&x * &x, Poly::int(2)));
        let s = emit(&f, Dialect::Redlog);
        assert!(s.contains("ex(x, x^2 = 2)"), "{s}");
        assert!(s.contains("rlqe phi;"));
    }

    #[test]
    fn primed_names_are_quoted() {
        let f = Formula::eq(Poly::var("x'"), Poly::int(2));
        let s = emit(&f, Dialect::Smtlib2Nra);
        assert!(s.contains("(declare-fun |x'| () Real)"), "{s}");
        assert!(s.contains("|x'|"));
        assert_eq!(super::super::parse_sexpr(&emit_sexpr(&f)).unwrap(), f);
    }

    #[test]
    fn negative_rationals_render() {
        let p = Poly::ratio(-1, 3);
        assert_eq!(poly_sexpr(&p), "(- (/ 1 3))");
        assert_eq!(poly_infix(&(&Poly::var("y").scale(&super::super::rat(-1, 2)) + &Poly::int(1))), "1 - (1/2)*y");
    }
}
