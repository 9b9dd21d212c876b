//! First-order formulas over real polynomial arithmetic.
//!
//! The core connectives are `=`, `<`, `and`, `or`, `not`, `forall` and `exists`.
//! Every other relation or connective (`<=`, `>=`, `>`, `!=`, `=>`) is desugared
//! by its constructor, so downstream passes only ever see the core.

mod emit;
mod parse;
mod poly;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

pub use emit::{emit, emit_sexpr, poly_infix, Dialect};
pub use parse::{parse_redlog, parse_script, parse_sexpr};
pub use poly::{rat, rat_approx, rat_to_f64, CompiledPoly, Monomial, Poly};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Eq,
    Lt,
}

/// `lhs rel rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub lhs: Poly,
    pub rel: Rel,
    pub rhs: Poly,
}

impl Atom {
    /// `lhs - rhs`; the atom reads `diff = 0` or `diff < 0`.
    pub fn diff(&self) -> Poly {
        &self.lhs - &self.rhs
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut v = self.lhs.vars();
        v.extend(self.rhs.vars());
        v
    }

    fn map_polys(&self, f: impl Fn(&Poly) -> Poly) -> Atom {
        Atom { lhs: f(&self.lhs), rel: self.rel, rhs: f(&self.rhs) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(Atom),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
}

impl Formula {
    pub fn atom(lhs: Poly, rel: Rel, rhs: Poly) -> Formula {
        Formula::Atom(Atom { lhs, rel, rhs })
    }

    pub fn eq(lhs: Poly, rhs: Poly) -> Formula {
        Formula::atom(lhs, Rel::Eq, rhs)
    }

    pub fn lt(lhs: Poly, rhs: Poly) -> Formula {
        Formula::atom(lhs, Rel::Lt, rhs)
    }

    pub fn gt(lhs: Poly, rhs: Poly) -> Formula {
        Formula::lt(rhs, lhs)
    }

    /// `a <= b` as `not (b < a)`.
    pub fn le(lhs: Poly, rhs: Poly) -> Formula {
        Formula::not(Formula::lt(rhs, lhs))
    }

    pub fn ge(lhs: Poly, rhs: Poly) -> Formula {
        Formula::not(Formula::lt(lhs, rhs))
    }

    pub fn ne(lhs: Poly, rhs: Poly) -> Formula {
        Formula::not(Formula::eq(lhs, rhs))
    }

    /// `0 = 0`.
    pub fn tt() -> Formula {
        Formula::eq(Poly::zero(), Poly::zero())
    }

    /// `0 < 0`.
    pub fn ff() -> Formula {
        Formula::lt(Poly::zero(), Poly::zero())
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::or(Formula::not(a), b)
    }

    pub fn forall(v: &str, body: Formula) -> Formula {
        Formula::Forall(v.to_string(), Box::new(body))
    }

    pub fn exists(v: &str, body: Formula) -> Formula {
        Formula::Exists(v.to_string(), Box::new(body))
    }

    pub fn exists_many<S: AsRef<str>>(vars: &[S], body: Formula) -> Formula {
        vars.iter().rev().fold(body, |acc, v| Formula::exists(v.as_ref(), acc))
    }

    pub fn forall_many<S: AsRef<str>>(vars: &[S], body: Formula) -> Formula {
        vars.iter().rev().fold(body, |acc, v| Formula::forall(v.as_ref(), acc))
    }

    /// Right-nested conjunction; the empty conjunction is `0 = 0`.
    pub fn and_all(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut v: Vec<Formula> = parts.into_iter().collect();
        match v.pop() {
            None => Formula::tt(),
            Some(last) => v.into_iter().rev().fold(last, |acc, f| Formula::and(f, acc)),
        }
    }

    /// Right-nested disjunction; the empty disjunction is `0 < 0`.
    pub fn or_all(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut v: Vec<Formula> = parts.into_iter().collect();
        match v.pop() {
            None => Formula::ff(),
            Some(last) => v.into_iter().rev().fold(last, |acc, f| Formula::or(f, acc)),
        }
    }

    /// Component-wise comparison of two tuples, e.g. `<7, x> = <2, 3>` is `7 = 2 and x = 3`.
    pub fn tuple_rel(lhs: &[Poly], rel: Rel, rhs: &[Poly]) -> Result<Formula> {
        if lhs.len() != rhs.len() {
            return Err(Error::Malformed(format!(
                "tuple arity mismatch: {} vs {}",
                lhs.len(),
                rhs.len()
            )));
        }
        Ok(Formula::and_all(
            lhs.iter().zip(rhs).map(|(a, b)| Formula::atom(a.clone(), rel, b.clone())),
        ))
    }

    /// Squared-Euclidean distance atom `sum (a_i - b_i)^2 < eps^2`.
    pub fn dist_lt(a: &[Poly], b: &[Poly], eps: &BigRational) -> Formula {
        Formula::lt(sq_dist(a, b), Poly::constant(eps * eps))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(a) => {
                for v in a.vars() {
                    if !bound.contains(&v) {
                        out.insert(v);
                    }
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Not(a) => a.collect_free(bound, out),
            Formula::Forall(v, a) | Formula::Exists(v, a) => {
                bound.push(v.clone());
                a.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Forall(v, _) | Formula::Exists(v, _) = f {
                out.insert(v.clone());
            }
        });
        out
    }

    /// Every variable name occurring anywhere, bound or free.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = self.bound_vars();
        self.visit(&mut |f| {
            if let Formula::Atom(a) = f {
                out.extend(a.vars());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Atom(_) => {}
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.visit(f),
        }
    }

    /// True when no variable occurs both bound and free.
    pub fn is_well_formed(&self) -> bool {
        self.free_vars().is_disjoint(&self.bound_vars())
    }

    pub fn is_quantifier_free(&self) -> bool {
        let mut qf = true;
        self.visit(&mut |f| {
            if matches!(f, Formula::Forall(..) | Formula::Exists(..)) {
                qf = false;
            }
        });
        qf
    }

    /// Maximum nesting of quantifiers along any path.
    pub fn quantifier_depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::And(a, b) | Formula::Or(a, b) => a.quantifier_depth().max(b.quantifier_depth()),
            Formula::Not(a) => a.quantifier_depth(),
            Formula::Forall(_, a) | Formula::Exists(_, a) => 1 + a.quantifier_depth(),
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        fn go<'a>(f: &'a Formula, out: &mut Vec<&'a Atom>) {
            match f {
                Formula::Atom(a) => out.push(a),
                Formula::And(a, b) | Formula::Or(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => go(a, out),
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    fn map_atoms(&self, f: &dyn Fn(&Atom) -> Atom) -> Formula {
        match self {
            Formula::Atom(a) => Formula::Atom(f(a)),
            Formula::And(a, b) => Formula::and(a.map_atoms(f), b.map_atoms(f)),
            Formula::Or(a, b) => Formula::or(a.map_atoms(f), b.map_atoms(f)),
            Formula::Not(a) => Formula::not(a.map_atoms(f)),
            Formula::Forall(v, a) => Formula::Forall(v.clone(), Box::new(a.map_atoms(f))),
            Formula::Exists(v, a) => Formula::Exists(v.clone(), Box::new(a.map_atoms(f))),
        }
    }

    /// Rename every occurrence (free and bound) of `from` to `to`. `to` must be unused.
    pub fn rename_everywhere(&self, from: &str, to: &str) -> Formula {
        let renamed = self.map_atoms(&|a| a.map_polys(|p| p.rename(from, to)));
        renamed.rename_binders(from, to)
    }

    fn rename_binders(&self, from: &str, to: &str) -> Formula {
        let r = |n: &String| if n == from { to.to_string() } else { n.clone() };
        match self {
            Formula::Atom(_) => self.clone(),
            Formula::And(a, b) => Formula::and(a.rename_binders(from, to), b.rename_binders(from, to)),
            Formula::Or(a, b) => Formula::or(a.rename_binders(from, to), b.rename_binders(from, to)),
            Formula::Not(a) => Formula::not(a.rename_binders(from, to)),
            Formula::Forall(v, a) => Formula::Forall(r(v), Box::new(a.rename_binders(from, to))),
            Formula::Exists(v, a) => Formula::Exists(r(v), Box::new(a.rename_binders(from, to))),
        }
    }

    /// `self[x / s]`: capture-avoiding substitution of the free variable `x`.
    ///
    /// Bound variables of `self` that clash with the variables of `s` are renamed
    /// to fresh names first.
    pub fn substitute(&self, x: &str, s: &Poly) -> Result<Formula> {
        let mut map = BTreeMap::new();
        map.insert(x.to_string(), s.clone());
        self.substitute_all(&map)
    }

    /// Simultaneous substitution of several free variables.
    pub fn substitute_all(&self, map: &BTreeMap<String, Poly>) -> Result<Formula> {
        let free = self.free_vars();
        let map: BTreeMap<String, Poly> = map.iter().filter(|(k, _)| free.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect();
        if map.is_empty() {
            return Ok(self.clone());
        }
        let map = &map;
        let incoming: BTreeSet<String> = map.values().flat_map(|p| p.vars()).collect();
        let mut fresh = FreshNames::for_formula(self);
        fresh.reserve(incoming.iter().cloned());
        fresh.reserve(map.keys().cloned());
        let mut f = self.clone();
        for b in self.bound_vars() {
            if incoming.contains(&b) || map.contains_key(&b) {
                let nb = fresh.fresh(&b)?;
                f = f.rename_bound(&b, &nb);
            }
        }
        Ok(f.subst_free(map))
    }

    /// Rename a bound variable (all binders and their bound occurrences).
    fn rename_bound(&self, from: &str, to: &str) -> Formula {
        match self {
            Formula::Atom(_) => self.clone(),
            Formula::And(a, b) => Formula::and(a.rename_bound(from, to), b.rename_bound(from, to)),
            Formula::Or(a, b) => Formula::or(a.rename_bound(from, to), b.rename_bound(from, to)),
            Formula::Not(a) => Formula::not(a.rename_bound(from, to)),
            Formula::Forall(v, a) | Formula::Exists(v, a) => {
                let body = if v == from { a.rename_everywhere(from, to) } else { a.rename_bound(from, to) };
                let name = if v == from { to.to_string() } else { v.clone() };
                if matches!(self, Formula::Forall(..)) {
                    Formula::Forall(name, Box::new(body))
                } else {
                    Formula::Exists(name, Box::new(body))
                }
            }
        }
    }

    fn subst_free(&self, map: &BTreeMap<String, Poly>) -> Formula {
        match self {
            Formula::Atom(a) => Formula::Atom(a.map_polys(|p| p.substitute_all(map))),
            Formula::And(a, b) => Formula::and(a.subst_free(map), b.subst_free(map)),
            Formula::Or(a, b) => Formula::or(a.subst_free(map), b.subst_free(map)),
            Formula::Not(a) => Formula::not(a.subst_free(map)),
            Formula::Forall(v, a) | Formula::Exists(v, a) => {
                let body = if map.contains_key(v) {
                    let mut m = map.clone();
                    m.remove(v);
                    a.subst_free(&m)
                } else {
                    a.subst_free(map)
                };
                if matches!(self, Formula::Forall(..)) {
                    Formula::Forall(v.clone(), Box::new(body))
                } else {
                    Formula::Exists(v.clone(), Box::new(body))
                }
            }
        }
    }

    /// Exact Tarskian evaluation of a quantifier-free formula.
    pub fn eval_qf(&self, env: &BTreeMap<String, BigRational>) -> Result<bool> {
        match self {
            Formula::Atom(a) => {
                let d = a.diff().eval_rational(env).ok_or_else(|| {
                    let missing: Vec<_> = a.vars().into_iter().filter(|v| !env.contains_key(v)).collect();
                    Error::Malformed(format!("no value for variable(s) {}", missing.join(", ")))
                })?;
                Ok(match a.rel {
                    Rel::Eq => d.is_zero(),
                    Rel::Lt => d.is_negative(),
                })
            }
            Formula::And(a, b) => Ok(a.eval_qf(env)? && b.eval_qf(env)?),
            Formula::Or(a, b) => Ok(a.eval_qf(env)? || b.eval_qf(env)?),
            Formula::Not(a) => Ok(!a.eval_qf(env)?),
            Formula::Forall(..) | Formula::Exists(..) => {
                Err(Error::Malformed("eval_qf called on a quantified formula".into()))
            }
        }
    }

    /// Floating-point evaluation where every denoted set is enlarged by `tol`
    /// in atom-value terms: `p = 0` holds when `|p| <= tol`, `p < 0` when `p < tol`,
    /// and negations flip to the strict reading so that `not` also loosens.
    pub fn eval_relaxed(&self, lookup: &dyn Fn(&str) -> Option<f64>, tol: f64) -> Result<bool> {
        self.eval_polar(lookup, tol, true)
    }

    fn eval_polar(&self, lookup: &dyn Fn(&str) -> Option<f64>, tol: f64, loose: bool) -> Result<bool> {
        match self {
            Formula::Atom(a) => {
                let d = a
                    .diff()
                    .eval_f64(lookup)
                    .ok_or_else(|| Error::Malformed(format!("unassigned variable in {}", emit_sexpr(self))))?;
                Ok(match (a.rel, loose) {
                    (Rel::Eq, true) => d.abs() <= tol,
                    (Rel::Eq, false) => d == 0.0,
                    (Rel::Lt, true) => d < tol,
                    (Rel::Lt, false) => d < -tol,
                })
            }
            Formula::And(a, b) => Ok(a.eval_polar(lookup, tol, loose)? && b.eval_polar(lookup, tol, loose)?),
            Formula::Or(a, b) => Ok(a.eval_polar(lookup, tol, loose)? || b.eval_polar(lookup, tol, loose)?),
            Formula::Not(a) => Ok(!a.eval_polar(lookup, tol, !loose)?),
            Formula::Forall(..) | Formula::Exists(..) => {
                Err(Error::Unsupported("numeric evaluation of a quantified formula".into()))
            }
        }
    }

    /// Flattened conjuncts of a right- or left-nested conjunction.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(a, b) => {
                let mut v = a.conjuncts();
                v.extend(b.conjuncts());
                v
            }
            _ => vec![self],
        }
    }

    /// Negation normal form over the core: negations pushed to atoms, quantifiers dualized.
    pub fn nnf(&self) -> Formula {
        self.nnf_polar(true)
    }

    fn nnf_polar(&self, pos: bool) -> Formula {
        match (self, pos) {
            (Formula::Atom(_), true) => self.clone(),
            (Formula::Atom(_), false) => Formula::not(self.clone()),
            (Formula::Not(a), p) => a.nnf_polar(!p),
            (Formula::And(a, b), true) => Formula::and(a.nnf_polar(true), b.nnf_polar(true)),
            (Formula::And(a, b), false) => Formula::or(a.nnf_polar(false), b.nnf_polar(false)),
            (Formula::Or(a, b), true) => Formula::or(a.nnf_polar(true), b.nnf_polar(true)),
            (Formula::Or(a, b), false) => Formula::and(a.nnf_polar(false), b.nnf_polar(false)),
            (Formula::Forall(v, a), true) => Formula::forall(v, a.nnf_polar(true)),
            (Formula::Forall(v, a), false) => Formula::exists(v, a.nnf_polar(false)),
            (Formula::Exists(v, a), true) => Formula::exists(v, a.nnf_polar(true)),
            (Formula::Exists(v, a), false) => Formula::forall(v, a.nnf_polar(false)),
        }
    }

    /// One-point rule: `exists v (... and v = t and ...)` with `t` free of `v`
    /// becomes the remaining conjuncts with `v` replaced by `t`. Applied bottom-up
    /// until no more rewrites fire. Also folds ground atoms and constant connectives.
    pub fn one_point(&self) -> Formula {
        match self {
            Formula::Atom(a) => match a.diff().as_constant() {
                Some(c) => {
                    let truth = match a.rel {
                        Rel::Eq => c.is_zero(),
                        Rel::Lt => c.is_negative(),
                    };
                    if truth {
                        Formula::tt()
                    } else {
                        Formula::ff()
                    }
                }
                None => self.clone(),
            },
            Formula::And(a, b) => {
                let (a, b) = (a.one_point(), b.one_point());
                match (a.const_truth(), b.const_truth()) {
                    (Some(false), _) | (_, Some(false)) => Formula::ff(),
                    (Some(true), _) => b,
                    (_, Some(true)) => a,
                    _ => Formula::and(a, b),
                }
            }
            Formula::Or(a, b) => {
                let (a, b) = (a.one_point(), b.one_point());
                match (a.const_truth(), b.const_truth()) {
                    (Some(true), _) | (_, Some(true)) => Formula::tt(),
                    (Some(false), _) => b,
                    (_, Some(false)) => a,
                    _ => Formula::or(a, b),
                }
            }
            Formula::Not(a) => {
                let a = a.one_point();
                match a.const_truth() {
                    Some(t) => {
                        if t {
                            Formula::ff()
                        } else {
                            Formula::tt()
                        }
                    }
                    None => Formula::not(a),
                }
            }
            Formula::Forall(v, a) => {
                let a = a.one_point();
                if a.const_truth().is_some() || !a.free_vars().contains(v) {
                    a
                } else {
                    Formula::forall(v, a)
                }
            }
            Formula::Exists(v, a) => {
                let a = a.one_point();
                if a.const_truth().is_some() || !a.free_vars().contains(v) {
                    return a;
                }
                let parts = a.conjuncts();
                let mut solved = None;
                for (i, c) in parts.iter().enumerate() {
                    if let Formula::Atom(at) = c {
                        if at.rel == Rel::Eq {
                            if let Some(t) = solve_linear_for(&at.diff(), v) {
                                solved = Some((i, t));
                                break;
                            }
                        }
                    }
                }
                match solved {
                    Some((i, t)) => {
                        let rest = Formula::and_all(
                            parts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| (*c).clone()),
                        );
                        match rest.substitute(v, &t) {
                            Ok(r) => r.one_point(),
                            Err(_) => Formula::exists(v, a),
                        }
                    }
                    None => Formula::exists(v, a),
                }
            }
        }
    }

    /// Equality up to renaming of bound variables.
    pub fn alpha_eq(&self, other: &Formula) -> bool {
        self.canonical(&mut 0) == other.canonical(&mut 0)
    }

    fn canonical(&self, next: &mut usize) -> Formula {
        match self {
            Formula::Atom(_) => self.clone(),
            Formula::And(a, b) => Formula::and(a.canonical(next), b.canonical(next)),
            Formula::Or(a, b) => Formula::or(a.canonical(next), b.canonical(next)),
            Formula::Not(a) => Formula::not(a.canonical(next)),
            Formula::Forall(v, a) | Formula::Exists(v, a) => {
                // '#' never occurs in parsed names
                let name = format!("#{next}");
                *next += 1;
                let body = a.rename_everywhere(v, &name).canonical(next);
                if matches!(self, Formula::Forall(..)) {
                    Formula::forall(&name, body)
                } else {
                    Formula::exists(&name, body)
                }
            }
        }
    }

    /// `Some(b)` when the formula is the literal `0 = 0` / `0 < 0` produced by folding.
    pub fn const_truth(&self) -> Option<bool> {
        if *self == Formula::tt() {
            Some(true)
        } else if *self == Formula::ff() {
            Some(false)
        } else {
            None
        }
    }
}

/// `sum (a_i - b_i)^2`.
pub fn sq_dist(a: &[Poly], b: &[Poly]) -> Poly {
    a.iter().zip(b).fold(Poly::zero(), |acc, (x, y)| {
        let d = x - y;
        &acc + &(&d * &d)
    })
}

/// Solve `p = 0` for `v` when `p` is `c*v + rest` with a nonzero constant `c`
/// and `rest` free of `v`.
pub fn solve_linear_for(p: &Poly, v: &str) -> Option<Poly> {
    if p.degree_in(v) != 1 {
        return None;
    }
    let mut m = Monomial::new();
    m.insert(v.to_string(), 1);
    let c = p.coefficient(&m);
    if c.is_zero() {
        return None;
    }
    // every other monomial must be free of v
    let rest = Poly::from_terms(p.terms().filter(|(mm, _)| !mm.contains_key(v)).map(|(a, b)| (a.clone(), b.clone())));
    if &rest + &Poly::var(v).scale(&c) != *p {
        return None;
    }
    Some((-&rest).scale(&(BigRational::from_integer(1.into()) / c)))
}

/// Generator of names that collide with nothing already in use.
#[derive(Clone, Debug, Default)]
pub struct FreshNames {
    used: HashSet<String>,
    budget: usize,
}

/// Strip trailing `_<digits>` groups, so `x_3_1` and `x` share the stem `x`.
pub fn fresh_stem(name: &str) -> &str {
    let mut s = name;
    while let Some((head, tail)) = s.rsplit_once('_') {
        if head.is_empty() || tail.is_empty() || !tail.bytes().all(|b| b.is_ascii_digit()) {
            break;
        }
        s = head;
    }
    s
}

impl FreshNames {
    const DEFAULT_BUDGET: usize = 100_000;

    pub fn new() -> Self {
        FreshNames { used: HashSet::new(), budget: Self::DEFAULT_BUDGET }
    }

    pub fn for_formula(f: &Formula) -> Self {
        let mut n = FreshNames::new();
        n.reserve(f.all_vars());
        n
    }

    pub fn reserve(&mut self, names: impl IntoIterator<Item = String>) {
        self.used.extend(names);
    }

    pub fn fresh(&mut self, base: &str) -> Result<String> {
        let stem = fresh_stem(base);
        let stem = if stem.is_empty() { "v" } else { stem };
        for i in 0..self.budget {
            let cand = format!("{stem}_{i}");
            if !self.used.contains(&cand) {
                self.used.insert(cand.clone());
                return Ok(cand);
            }
        }
        Err(Error::Malformed(format!("fresh-name budget exhausted for `{base}`")))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_sexpr(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Poly {
        Poly::var("x")
    }
    fn y() -> Poly {
        Poly::var("y")
    }
    fn env(pairs: &[(&str, i64)]) -> BTreeMap<String, BigRational> {
        pairs.iter().map(|(k, v)| (k.to_string(), rat(*v, 1))).collect()
    }
    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn free_vars_of_atoms_and_binders() {
        assert_eq!(Formula::lt(x(), y()).free_vars(), set(&["x", "y"]));
        assert_eq!(Formula::forall("x", Formula::lt(x(), y())).free_vars(), set(&["y"]));
        // exists X (a X^2 + b X + c = 0)
        let (a, b, c) = (Poly::var("a"), Poly::var("b"), Poly::var("c"));
        let quad = &(&(&a * &(&x() * &x())) + &(&b * &x())) + &c;
        let f = Formula::exists("x", Formula::eq(quad, Poly::zero()));
        assert_eq!(f.free_vars(), set(&["a", "b", "c"]));
    }

    #[test]
    fn substitution_examples() {
        let f = Formula::lt(x(), y()).substitute("x", &Poly::int(3)).unwrap();
        assert_eq!(f, Formula::lt(Poly::int(3), y()));

        let g = Formula::and(Formula::eq(x(), Poly::zero()), Formula::eq(y(), x()));
        let g = g.substitute("x", &Poly::var("w0")).unwrap();
        assert_eq!(
            g,
            Formula::and(Formula::eq(Poly::var("w0"), Poly::zero()), Formula::eq(y(), Poly::var("w0")))
        );
    }

    #[test]
    fn tuple_equality_expands() {
        let f = Formula::tuple_rel(&[Poly::int(7), x()], Rel::Eq, &[Poly::int(2), Poly::int(3)]).unwrap();
        assert_eq!(
            f,
            Formula::and(Formula::eq(Poly::int(7), Poly::int(2)), Formula::eq(x(), Poly::int(3)))
        );
        assert!(Formula::tuple_rel(&[x()], Rel::Eq, &[]).is_err());
    }

    #[test]
    fn substitution_avoids_capture() {
        // (forall y. x < y)[x / y]  must not capture
        let f = Formula::forall("y", Formula::lt(x(), y()));
        let g = f.substitute("x", &y()).unwrap();
        assert_eq!(g.free_vars(), set(&["y"]));
        assert!(g.is_well_formed());
        match &g {
            Formula::Forall(v, _) => assert_ne!(v, "y"),
            _ => panic!("binder lost"),
        }
    }

    #[test]
    fn eval_qf_examples() {
        let sq = Formula::lt(&x() * &x(), Poly::int(2));
        assert!(sq.eval_qf(&env(&[("x", 1)])).unwrap());
        assert!(!sq.eval_qf(&env(&[("x", 2)])).unwrap());
        let (a, b, c) = (Poly::var("a"), Poly::var("b"), Poly::var("c"));
        let disc = &(&b * &b) - &(&Poly::int(4) * &(&a * &c));
        let f = Formula::ge(disc, Poly::zero());
        assert!(f.eval_qf(&env(&[("a", 1), ("b", 0), ("c", -1)])).unwrap());
        assert!(matches!(sq.eval_qf(&env(&[])), Err(Error::Malformed(_))));
    }

    #[test]
    fn desugaring_stays_in_core() {
        let f = Formula::implies(Formula::le(x(), y()), Formula::ne(x(), Poly::int(1)));
        let mut ok = true;
        f.visit(&mut |g| {
            if let Formula::Atom(a) = g {
                ok &= matches!(a.rel, Rel::Eq | Rel::Lt);
            }
        });
        assert!(ok);
    }

    #[test]
    fn one_point_eliminates_definitions() {
        // exists t (t = x + 1 and t < 3)  ~>  x + 1 < 3
        let t = Poly::var("t");
        let f = Formula::exists("t", Formula::and(Formula::eq(t.clone(), &x() + &Poly::int(1)), Formula::lt(t, Poly::int(3))));
        let g = f.one_point();
        assert_eq!(g, Formula::lt(&x() + &Poly::int(1), Poly::int(3)));
    }

    #[test]
    fn relaxed_eval_loosens_both_polarities() {
        let lookup = |v: &str| if v == "x" { Some(2.0 + 1e-12) } else { None };
        let le = Formula::le(x(), Poly::int(2));
        assert!(!le.eval_relaxed(&lookup, 0.0).unwrap());
        assert!(le.eval_relaxed(&lookup, 1e-9).unwrap());
        let eq = Formula::eq(x(), Poly::int(2));
        assert!(eq.eval_relaxed(&lookup, 1e-9).unwrap());
    }

    #[test]
    fn fresh_names_do_not_collide() {
        let f = Formula::lt(Poly::var("w_0"), Poly::var("w_1"));
        let mut fresh = FreshNames::for_formula(&f);
        let n = fresh.fresh("w").unwrap();
        assert!(n != "w_0" && n != "w_1");
        let m = fresh.fresh("w").unwrap();
        assert_ne!(n, m);
    }
}
