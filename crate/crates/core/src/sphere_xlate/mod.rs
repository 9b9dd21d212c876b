//! Compositional translation of the sphere semantics into the standard one.
//!
//! Variables of the input formula are split in two classes. The ambient vector
//! `W` holds the free variables that are inflated by the balls. Every other
//! variable (bound ones after renaming, and free parameters declared as such) is
//! auxiliary: it acts as a symbolic constant that the balls do not touch.
//!
//! `dist(A, B) < e` is always emitted as `sum (a_i - b_i)^2 < e^2`.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{Atom, Formula, FreshNames, Poly, Rel};

/// Role of a variable during translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarClass {
    /// Inflated by the ε-balls.
    Original,
    /// Symbolic constant for the sphere semantics.
    Auxiliary,
}

#[derive(Clone, Debug)]
pub struct TranslationContext {
    eps: BigRational,
    ambient: Vec<String>,
    classes: BTreeMap<String, VarClass>,
    fresh: FreshNames,
}

impl TranslationContext {
    /// `ambient` lists the inflated variables in the order used for ball vectors.
    pub fn new(eps: BigRational, ambient: &[&str]) -> Result<Self> {
        if !eps.is_positive() {
            return Err(Error::Malformed(format!("epsilon must be positive, got {eps}")));
        }
        let ambient: Vec<String> = ambient.iter().map(|s| s.to_string()).collect();
        let uniq: BTreeSet<&String> = ambient.iter().collect();
        if uniq.len() != ambient.len() {
            return Err(Error::Malformed("duplicate ambient variable".into()));
        }
        let classes = ambient.iter().map(|v| (v.clone(), VarClass::Original)).collect();
        let mut fresh = FreshNames::new();
        fresh.reserve(ambient.iter().cloned());
        Ok(TranslationContext { eps, ambient, classes, fresh })
    }

    /// Ambient vector made of the free variables of `f` that are not listed in `params`.
    pub fn for_formula(eps: BigRational, f: &Formula, params: &[&str]) -> Result<Self> {
        let w: Vec<String> = f.free_vars().into_iter().filter(|v| !params.contains(&v.as_str())).collect();
        let refs: Vec<&str> = w.iter().map(String::as_str).collect();
        let mut ctx = TranslationContext::new(eps, &refs)?;
        for p in params {
            ctx.classes.insert(p.to_string(), VarClass::Auxiliary);
            ctx.fresh.reserve([p.to_string()]);
        }
        Ok(ctx)
    }

    pub fn eps(&self) -> &BigRational {
        &self.eps
    }

    pub fn ambient(&self) -> &[String] {
        &self.ambient
    }

    pub fn class_of(&self, v: &str) -> Option<VarClass> {
        self.classes.get(v).copied()
    }

    pub fn classes(&self) -> &BTreeMap<String, VarClass> {
        &self.classes
    }

    fn fresh_vector(&mut self) -> Result<Vec<String>> {
        let w = self.ambient.clone();
        let out = w.iter().map(|v| self.fresh.fresh(v)).collect::<Result<Vec<_>>>()?;
        for v in &out {
            self.classes.insert(v.clone(), VarClass::Auxiliary);
        }
        Ok(out)
    }

    /// Name for the auxiliary copy of a bound variable: the name itself when it is
    /// not yet in use, a fresh one otherwise.
    fn auxiliary_for(&mut self, v: &str) -> Result<String> {
        let name = if self.classes.contains_key(v) { self.fresh.fresh(v)? } else { v.to_string() };
        self.fresh.reserve([name.clone()]);
        self.classes.insert(name.clone(), VarClass::Auxiliary);
        Ok(name)
    }

    fn dist(&self, a: &[String], b: &[String]) -> Formula {
        let pa: Vec<Poly> = a.iter().map(|v| Poly::var(v)).collect();
        let pb: Vec<Poly> = b.iter().map(|v| Poly::var(v)).collect();
        Formula::dist_lt(&pa, &pb, &self.eps)
    }

    fn to_vector(&self, f: &Formula, target: &[String]) -> Result<Formula> {
        let map: BTreeMap<String, Poly> =
            self.ambient.iter().zip(target).map(|(w, t)| (w.clone(), Poly::var(t))).collect();
        f.substitute_all(&map)
    }

    /// `exists W0 (forall W1 (dist(W0, W1) < e -> body[W1]) and dist(W0, W) < e)`:
    /// the union of the ε-balls contained in the set of `body`.
    fn interior_balls(&mut self, body: &Formula) -> Result<Formula> {
        let w0 = self.fresh_vector()?;
        let w1 = self.fresh_vector()?;
        let inner = Formula::forall_many(&w1, Formula::implies(self.dist(&w0, &w1), self.to_vector(body, &w1)?));
        let w = self.ambient.clone();
        Ok(Formula::exists_many(&w0, Formula::and(inner, self.dist(&w0, &w))))
    }
}

/// Translate `f` so that its standard semantics is the sphere semantics of `f`.
pub fn translate(f: &Formula, ctx: &mut TranslationContext) -> Result<Formula> {
    if !f.is_well_formed() {
        return Err(Error::Malformed("formula is not well formed".into()));
    }
    let all = f.all_vars();
    ctx.fresh.reserve(all.iter().cloned());
    for v in f.free_vars() {
        ctx.classes.entry(v).or_insert(VarClass::Auxiliary);
    }
    tr(f, ctx)
}

fn tr(f: &Formula, ctx: &mut TranslationContext) -> Result<Formula> {
    match f {
        Formula::Atom(a) => {
            let w0 = ctx.fresh_vector()?;
            let atom0 = ctx.to_vector(&Formula::Atom(a.clone()), &w0)?;
            let w = ctx.ambient.clone();
            Ok(Formula::exists_many(&w0, Formula::and(atom0, ctx.dist(&w0, &w))))
        }
        Formula::Or(a, b) => Ok(Formula::or(tr(a, ctx)?, tr(b, ctx)?)),
        Formula::And(a, b) => {
            let body = Formula::and(tr(a, ctx)?, tr(b, ctx)?);
            ctx.interior_balls(&body)
        }
        Formula::Not(a) => {
            let body = Formula::not(tr(a, ctx)?);
            ctx.interior_balls(&body)
        }
        Formula::Forall(v, a) => {
            let y = ctx.auxiliary_for(v)?;
            let inner = tr(&a.substitute(v, &Poly::var(&y))?, ctx)?;
            ctx.interior_balls(&Formula::forall(&y, inner))
        }
        Formula::Exists(v, a) => {
            let y = ctx.auxiliary_for(v)?;
            let inner = tr(&a.substitute(v, &Poly::var(&y))?, ctx)?;
            Ok(Formula::exists(&y, inner))
        }
    }
}

/// Why an atom is accepted as denoting a closed convex set of the ambient space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    /// `p = 0` with `p` of degree at most one in the ambient variables (other
    /// variables are held fixed): a hyperplane, the whole space, or empty.
    AffineEquality,
}

impl Certificate {
    pub fn check(self, atom: &Atom, ambient: &[String]) -> bool {
        match self {
            Certificate::AffineEquality => {
                let diff = atom.diff();
                atom.rel == Rel::Eq
                    && diff.terms().all(|(m, _)| m.iter().filter(|(v, _)| ambient.contains(v)).map(|(_, e)| e).sum::<u32>() <= 1)
            }
        }
    }
}

/// Caller-supplied convexity facts, stated over the ambient variables.
#[derive(Clone, Debug, Default)]
pub struct Certificates {
    entries: Vec<(Atom, Certificate)>,
}

impl Certificates {
    pub fn new() -> Self {
        Certificates::default()
    }

    pub fn certify(&mut self, f: &Formula, c: Certificate) -> Result<&mut Self> {
        let Formula::Atom(a) = f else {
            return Err(Error::Malformed("certificates are attached to atoms".into()));
        };
        self.entries.push((a.clone(), c));
        Ok(self)
    }

    fn covers(&self, atom: &Atom, ambient: &[String]) -> bool {
        self.entries.iter().any(|(a, c)| a == atom && c.check(a, ambient))
    }
}

#[derive(Clone, Debug)]
pub struct Simplified {
    pub formula: Formula,
    /// Number of ball patterns flattened.
    pub rewrites: usize,
    /// Patterns left in place, with the reason.
    pub refused: Vec<String>,
}

impl Simplified {
    pub fn flagged(&self) -> bool {
        !self.refused.is_empty()
    }
}

/// Flatten interior-ball patterns whose body is a conjunction of dilations of
/// certified closed convex atoms (and conjuncts free of the ambient variables):
/// `exists W0 (forall W1 (dist(W0,W1) < e -> D1[W1] and ... ) and dist(W0,W) < e)`
/// with `Di[W1] = exists V (A_i[V] and dist(V, W1) < e)` becomes
/// `C and exists W0 (A_1[W0] and ... and dist(W0, W) < e)`.
///
/// A body with a single dilation needs no certificate: the balls inside a union
/// of ε-balls are that union.
pub fn convex_simplify(f: &Formula, ctx: &TranslationContext, certs: &Certificates) -> Simplified {
    let mut s = Simplified { formula: Formula::tt(), rewrites: 0, refused: Vec::new() };
    s.formula = simplify_node(f, ctx, certs, &mut s);
    s
}

fn simplify_node(f: &Formula, ctx: &TranslationContext, certs: &Certificates, log: &mut Simplified) -> Formula {
    let f = match f {
        Formula::Atom(_) => return f.clone(),
        Formula::And(a, b) => Formula::and(simplify_node(a, ctx, certs, log), simplify_node(b, ctx, certs, log)),
        Formula::Or(a, b) => Formula::or(simplify_node(a, ctx, certs, log), simplify_node(b, ctx, certs, log)),
        Formula::Not(a) => Formula::not(simplify_node(a, ctx, certs, log)),
        Formula::Forall(v, a) => Formula::forall(v, simplify_node(a, ctx, certs, log)),
        Formula::Exists(v, a) => Formula::exists(v, simplify_node(a, ctx, certs, log)),
    };
    match flatten_interior(&f, ctx, certs) {
        Ok(Some(g)) => {
            log.rewrites += 1;
            g
        }
        Ok(None) => f,
        Err(reason) => {
            log.refused.push(reason);
            f
        }
    }
}

fn chain(f: &Formula, universal: bool, n: usize) -> Option<(Vec<String>, &Formula)> {
    let mut vars = Vec::new();
    let mut cur = f;
    while vars.len() < n {
        match (cur, universal) {
            (Formula::Exists(v, b), false) | (Formula::Forall(v, b), true) => {
                vars.push(v.clone());
                cur = b;
            }
            _ => return None,
        }
    }
    Some((vars, cur))
}

fn conjuncts(f: &Formula) -> Vec<&Formula> {
    match f {
        Formula::And(a, b) => {
            let mut v = conjuncts(a);
            v.extend(conjuncts(b));
            v
        }
        _ => vec![f],
    }
}

/// `exists V (A and dist(V, target) < e)`: returns the conjuncts of `A` stated over `target`.
fn as_dilation(f: &Formula, target: &[String], ctx: &TranslationContext) -> Option<Vec<Formula>> {
    let (vs, body) = chain(f, false, target.len())?;
    let parts = conjuncts(body);
    let (last, atoms) = parts.split_last()?;
    if **last != ctx.dist(&vs, target) {
        return None;
    }
    let map: BTreeMap<String, Poly> = vs.iter().zip(target).map(|(v, t)| (v.clone(), Poly::var(t))).collect();
    atoms
        .iter()
        .map(|a| {
            if a.free_vars().iter().any(|v| target.contains(v)) {
                return None;
            }
            a.substitute_all(&map).ok()
        })
        .collect()
}

/// The vector `t` with `f == dist(w0, t) < e`, among the other free variables of `f`.
fn dist_partner(ctx: &TranslationContext, f: &Formula, w0: &[String]) -> Option<Vec<String>> {
    if *f == ctx.dist(w0, &ctx.ambient) {
        return Some(ctx.ambient.clone());
    }
    let others: Vec<String> = f.free_vars().into_iter().filter(|v| !w0.contains(v)).collect();
    if others.len() != w0.len() {
        return None;
    }
    permutations(&others).into_iter().find(|p| ctx.dist(w0, p) == *f)
}

fn permutations(v: &[String]) -> Vec<Vec<String>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

fn flatten_interior(f: &Formula, ctx: &TranslationContext, certs: &Certificates) -> std::result::Result<Option<Formula>, String> {
    let n = ctx.ambient.len();
    if n == 0 {
        return Ok(None);
    }
    let Some((w0, body)) = chain(f, false, n) else { return Ok(None) };
    let Formula::And(inner, outer_dist) = body else { return Ok(None) };
    // the ball is centred on the ambient vector, or on the ball vector of an
    // enclosing pattern when nested
    let Some(target) = dist_partner(ctx, outer_dist, &w0) else { return Ok(None) };
    let Some((w1, imp)) = chain(inner, true, n) else { return Ok(None) };
    let Formula::Or(neg, payload) = imp else { return Ok(None) };
    if **neg != Formula::not(ctx.dist(&w0, &w1)) {
        return Ok(None);
    }
    let mut hoisted = Vec::new();
    let mut dilations = Vec::new();
    for c in conjuncts(payload) {
        let fv = c.free_vars();
        if fv.iter().any(|v| w0.contains(v)) {
            return Ok(None);
        }
        if !fv.iter().any(|v| w1.contains(v)) {
            hoisted.push(c.clone());
            continue;
        }
        match as_dilation(c, &w1, ctx) {
            // the dilation of a set that ignores the ball variables is that set
            Some(atoms) if atoms.iter().all(|a| !a.free_vars().iter().any(|v| w1.contains(v))) => hoisted.extend(atoms),
            Some(atoms) => dilations.push(atoms),
            None => return Ok(None),
        }
    }
    // back to the ambient names for the certificate lookup
    let to_ambient: BTreeMap<String, Poly> = w1.iter().zip(&ctx.ambient).map(|(a, b)| (a.clone(), Poly::var(b))).collect();
    let mut atoms = Vec::new();
    for d in &dilations {
        for a in d {
            atoms.push(a.substitute_all(&to_ambient).map_err(|e| e.to_string())?);
        }
    }
    if dilations.len() > 1 {
        for a in &atoms {
            let ok = matches!(a, Formula::Atom(at) if certs.covers(at, &ctx.ambient));
            if !ok {
                return Err(format!("no convexity certificate for `{a}`"));
            }
        }
    }
    let mut fresh = FreshNames::for_formula(f);
    fresh.reserve(ctx.classes.keys().cloned());
    let v: Vec<String> = ctx.ambient.iter().map(|w| fresh.fresh(w)).collect::<Result<_>>().map_err(|e| e.to_string())?;
    let to_v: BTreeMap<String, Poly> = ctx.ambient.iter().zip(&v).map(|(a, b)| (a.clone(), Poly::var(b))).collect();
    let mut body = Vec::new();
    for a in &atoms {
        body.push(a.substitute_all(&to_v).map_err(|e| e.to_string())?);
    }
    body.push(ctx.dist(&v, &target));
    let flat = if dilations.is_empty() {
        // only ambient-free conjuncts: the ball around W always fits
        Formula::tt()
    } else {
        Formula::exists_many(&v, Formula::and_all(body))
    };
    hoisted.push(flat);
    Ok(Some(drop_true(Formula::and_all(hoisted))))
}

/// Drop literal `0 = 0` conjuncts left by the rewrite.
fn drop_true(f: Formula) -> Formula {
    let parts: Vec<Formula> = conjuncts(&f).into_iter().filter(|c| c.const_truth() != Some(true)).cloned().collect();
    Formula::and_all(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;

    fn x() -> Poly {
        Poly::var("x")
    }

    #[test]
    fn atom_rule_shape() {
        let f = Formula::eq(x(), Poly::zero());
        let mut ctx = TranslationContext::new(rat(1, 1), &["x"]).unwrap();
        let t = translate(&f, &mut ctx).unwrap();
        let w = Poly::var("w");
        let expected = Formula::exists(
            "w",
            Formula::and(Formula::eq(w.clone(), Poly::zero()), Formula::dist_lt(&[w], &[x()], &rat(1, 1))),
        );
        assert!(t.alpha_eq(&expected), "{t}");
    }

    #[test]
    fn disjunction_distributes() {
        let a = Formula::eq(x(), Poly::zero());
        let b = Formula::lt(x(), Poly::int(-2));
        let mut c1 = TranslationContext::new(rat(1, 2), &["x"]).unwrap();
        let t = translate(&Formula::or(a.clone(), b.clone()), &mut c1).unwrap();
        let Formula::Or(l, r) = &t else { panic!("{t}") };
        let mut c2 = TranslationContext::new(rat(1, 2), &["x"]).unwrap();
        assert!(l.alpha_eq(&translate(&a, &mut c2).unwrap()));
        assert!(r.alpha_eq(&translate(&b, &mut c2).unwrap()));
    }

    #[test]
    fn free_variables_are_preserved() {
        let f = Formula::and(
            Formula::lt(x(), Poly::var("y")),
            Formula::not(Formula::exists("z", Formula::eq(Poly::var("z"), &x() * &Poly::var("y")))),
        );
        let mut ctx = TranslationContext::for_formula(rat(1, 4), &f, &[]).unwrap();
        let t = translate(&f, &mut ctx).unwrap();
        assert_eq!(t.free_vars(), f.free_vars());
    }

    #[test]
    fn refuses_without_certificates() {
        let f = Formula::and(Formula::eq(x(), Poly::zero()), Formula::eq(x(), Poly::int(1)));
        let mut ctx = TranslationContext::new(rat(2, 5), &["x"]).unwrap();
        let t = translate(&f, &mut ctx).unwrap();
        let s = convex_simplify(&t, &ctx, &Certificates::new());
        assert!(s.flagged());
        assert_eq!(s.formula, t);
        let mut certs = Certificates::new();
        certs.certify(&Formula::eq(x(), Poly::zero()), Certificate::AffineEquality).unwrap();
        certs.certify(&Formula::eq(x(), Poly::int(1)), Certificate::AffineEquality).unwrap();
        let s = convex_simplify(&t, &ctx, &certs);
        assert!(!s.flagged());
        assert_eq!(s.rewrites, 1);
        assert_eq!(s.formula.quantifier_depth(), 1);
    }

    #[test]
    fn non_affine_certificate_is_rejected() {
        let c = Formula::eq(&x() * &x(), Poly::int(1));
        let Formula::Atom(a) = &c else { unreachable!() };
        assert!(!Certificate::AffineEquality.check(a, &["x".into()]));
        // affine in the ambient variable even though a parameter multiplies it
        let d = Formula::eq(&x() * &Poly::var("t"), Poly::int(1));
        let Formula::Atom(b) = &d else { unreachable!() };
        assert!(Certificate::AffineEquality.check(b, &["x".into()]));
    }
}
