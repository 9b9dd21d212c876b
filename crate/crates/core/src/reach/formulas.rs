use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{sq_dist, Formula, Poly, Rel};
use crate::hybrid::{primed, FlowSpec, HybridAutomaton};
use crate::sphere_xlate::{convex_simplify, translate, Certificate, Certificates, TranslationContext};

fn flows_of(h: &HybridAutomaton, x0: &[Poly], t: &Poly) -> Result<Vec<Vec<Poly>>> {
    h.locations()
        .iter()
        .map(|l| match &l.flow {
            FlowSpec::Nonlinear { .. } => {
                Err(Error::Unsupported(format!("location `{}` has a nonlinear flow", l.name)))
            }
            f => f.flow_poly(x0, t).ok_or_else(|| {
                Error::Unsupported(format!("affine flow of location `{}` has no polynomial parameterization", l.name))
            }),
        })
        .collect()
}

fn bind(vars: &[String], vals: &[Poly]) -> BTreeMap<String, Poly> {
    vars.iter().cloned().zip(vals.iter().cloned()).collect()
}

/// Whether `lit` holding at both ends of `[0, t]` implies it holds in between,
/// where `q` is its left-minus-right side as a polynomial in `u`.
fn convex_in(lit: &Formula, u: &str) -> bool {
    let (rel, negated, q) = match lit {
        Formula::Atom(a) => (a.rel, false, a.diff()),
        Formula::Not(inner) => match inner.as_ref() {
            Formula::Atom(a) => (a.rel, true, a.diff()),
            _ => return false,
        },
        _ => return false,
    };
    match q.degree_in(u) {
        0 | 1 => !(rel == Rel::Eq && negated),
        2 => {
            let Some(c) = q.derivative(u).derivative(u).as_constant() else { return false };
            match (rel, negated) {
                (Rel::Lt, false) => c.is_positive(),
                (Rel::Lt, true) => c.is_negative(),
                _ => false,
            }
        }
        _ => false,
    }
}

/// `Inv(x(u))` for every `u` in `[0, t]`, where `x(u)` is the flow from `xs`.
/// Literals whose satisfying times form an interval are only checked at both
/// ends; the rest is quantified over `u`.
fn invariant_along(inv: &Formula, vars: &[String], along: &[Poly], end: &[Poly], t: &str, u: &str) -> Result<Formula> {
    let nnf = inv.nnf();
    let lits: Vec<&Formula> = nnf.conjuncts();
    let at_u = bind(vars, along);
    let mut parts = Vec::new();
    let mut rest = Vec::new();
    let start: Vec<Poly> = along.iter().map(|p| p.substitute(u, &Poly::zero())).collect();
    for lit in lits {
        let moved = lit.substitute_all(&at_u)?;
        if lit.is_quantifier_free() && convex_in(&moved, u) {
            parts.push(lit.substitute_all(&bind(vars, &start))?);
            parts.push(lit.substitute_all(&bind(vars, end))?);
        } else {
            rest.push(moved);
        }
    }
    if !rest.is_empty() {
        let uv = Poly::var(u);
        let range = Formula::and(Formula::ge(uv.clone(), Poly::zero()), Formula::le(uv, Poly::var(t)));
        parts.push(Formula::forall(u, Formula::implies(range, Formula::and_all(rest))));
    }
    Ok(Formula::and_all(parts))
}

/// Existential sentence stating that some trace with at most `k` jumps leads
/// from a state satisfying `source` to one satisfying `target` (both over the
/// automaton variables). Each path of edges contributes one disjunct; the flow
/// is written through its polynomial parameterization.
pub fn bounded_reach_formula(h: &HybridAutomaton, source: &Formula, target: &Formula, k: usize) -> Result<Formula> {
    let vars = h.vars().to_vec();
    let mut used: BTreeSet<String> = source.all_vars();
    used.extend(target.all_vars());
    used.extend(vars.iter().cloned());
    let name = |s: String| -> Result<String> {
        if used.contains(&s) {
            Err(Error::Malformed(format!("name `{s}` of the encoding is already in use")))
        } else {
            Ok(s)
        }
    };
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    let mut us = Vec::new();
    for j in 0..=k {
        xs.push(vars.iter().map(|v| name(format!("{v}_s{j}"))).collect::<Result<Vec<_>>>()?);
        ts.push(name(format!("t_{j}"))?);
        us.push(name(format!("u_{j}"))?);
    }
    // flows per segment and location
    let mut seg = Vec::new();
    for j in 0..=k {
        let x: Vec<Poly> = xs[j].iter().map(|v| Poly::var(v)).collect();
        let end = flows_of(h, &x, &Poly::var(&ts[j]))?;
        let along = flows_of(h, &x, &Poly::var(&us[j]))?;
        seg.push((end, along));
    }
    let segment = |j: usize, l: usize| -> Result<Formula> {
        let (end, along) = (&seg[j].0[l], &seg[j].1[l]);
        let t = Poly::var(&ts[j]);
        Ok(Formula::and(
            Formula::ge(t, Poly::zero()),
            invariant_along(&h.locations()[l].invariant, &vars, along, end, &ts[j], &us[j])?,
        ))
    };
    let primes: Vec<String> = vars.iter().map(|v| primed(v)).collect();
    let mut disjuncts = Vec::new();
    // depth-first over edge paths: (locations, edges)
    let mut paths: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut estack: Vec<(Vec<usize>, Vec<usize>)> = (0..h.locations().len()).map(|l| (vec![l], Vec::new())).collect();
    while let Some((locs, edges)) = estack.pop() {
        paths.push((locs.clone(), edges.clone()));
        if edges.len() == k {
            continue;
        }
        let last = *locs.last().expect("nonempty path");
        for (e, edge) in h.outgoing(last) {
            let mut l2 = locs.clone();
            l2.push(edge.target);
            let mut e2 = edges.clone();
            e2.push(e);
            estack.push((l2, e2));
        }
    }
    paths.sort();
    for (locs, edges) in paths {
        let m = edges.len();
        let mut parts = vec![source.substitute_all(&bind(&vars, &xs[0].iter().map(|v| Poly::var(v)).collect::<Vec<_>>()))?];
        for j in 0..=m {
            parts.push(segment(j, locs[j])?);
            if j < m {
                let e = &h.edges()[edges[j]];
                let end = &seg[j].0[locs[j]];
                parts.push(e.activation.substitute_all(&bind(&vars, end))?);
                let mut map = bind(&vars, end);
                for (p, x) in primes.iter().zip(&xs[j + 1]) {
                    map.insert(p.clone(), Poly::var(x));
                }
                parts.push(e.reset.substitute_all(&map)?);
            }
        }
        parts.push(target.substitute_all(&bind(&vars, &seg[m].0[locs[m]]))?);
        let mut bound: Vec<String> = Vec::new();
        for j in 0..=m {
            bound.extend(xs[j].iter().cloned());
            bound.push(ts[j].clone());
        }
        disjuncts.push(Formula::exists_many(&bound, Formula::and_all(parts)));
    }
    Ok(Formula::or_all(disjuncts))
}

/// Straight line `x[axis] = value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub axis: usize,
    #[serde(with = "rat_text")]
    pub value: BigRational,
}

/// Open half-plane `x[axis] > 0` (or `< 0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub axis: usize,
    pub positive: bool,
}

impl HalfPlane {
    fn formula(&self, x: &[Poly]) -> Formula {
        if self.positive {
            Formula::gt(x[self.axis].clone(), Poly::zero())
        } else {
            Formula::lt(x[self.axis].clone(), Poly::zero())
        }
    }

    fn holds(&self, x: &[BigRational]) -> bool {
        if self.positive {
            x[self.axis].is_positive()
        } else {
            x[self.axis].is_negative()
        }
    }
}

mod rat_text {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        crate::hybrid::parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// Inputs of the convergence sentence: the arc of the cycle that runs inside
/// `location` from line `r` to line `s`, and its crossings `q0` and `q1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSpec {
    pub location: String,
    pub r: Line,
    pub s: Line,
    /// Side of `r` the start point lies on.
    pub start_side: HalfPlane,
    /// Side of `s` the end point lies on.
    pub end_side: HalfPlane,
    pub q0: Vec<BigRational>,
    pub q1: Vec<BigRational>,
    pub eps: BigRational,
}

impl ConvergenceSpec {
    /// Arc of the oscillator cycle from `xi = a` (with `xe > 0`) to `xe = a`
    /// (with `xi > 0`) in the location `location`, `a = alpha / lambda`.
    pub fn oscillator_arc(location: &str, a: BigRational, q0_xe: BigRational, q1_xi: BigRational, eps: BigRational) -> Self {
        ConvergenceSpec {
            location: location.to_string(),
            r: Line { axis: 1, value: a.clone() },
            s: Line { axis: 0, value: a.clone() },
            start_side: HalfPlane { axis: 0, positive: true },
            end_side: HalfPlane { axis: 1, positive: true },
            q0: vec![q0_xe, a.clone()],
            q1: vec![a, q1_xi],
            eps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceFormula {
    /// The closed sentence handed to a backend.
    pub sentence: Formula,
    /// The frozen-flow equations, one per variable, in `start`, `end` and `t`.
    pub pi: Vec<Formula>,
    /// Sphere-semantics transition before simplification.
    pub transition: Formula,
    /// Transition after flattening the ball patterns.
    pub simplified: Formula,
    /// Whether every ball pattern was flattened.
    pub fully_simplified: bool,
    pub start: Vec<String>,
    pub end: Vec<String>,
    pub time: String,
}

fn lcm_of_row(row: &[BigRational], b: &BigRational) -> BigInt {
    row.iter().chain(std::iter::once(b)).fold(BigInt::one(), |acc, c| acc.lcm(c.denom()))
}

/// Sentence stating that every start point on `r` at least `2 eps` away from
/// `q0` whose sphere-semantics frozen flow in the location reaches `s` ends
/// closer to `q1` than it started to `q0`.
///
/// The transition is `exists t (t > 0 and Pi_1 and ... and Pi_n)` over the end
/// point, translated to standard semantics and flattened with affine-equality
/// certificates for the `Pi_i`.
pub fn build_convergence_formula(h: &HybridAutomaton, spec: &ConvergenceSpec) -> Result<ConvergenceFormula> {
    let n = h.dim();
    let loc = h
        .location_index(&spec.location)
        .ok_or_else(|| Error::Malformed(format!("unknown location `{}`", spec.location)))?;
    let FlowSpec::FrozenTaylor { a, b } = &h.locations()[loc].flow else {
        return Err(Error::Unsupported(format!("location `{}` does not have a frozen flow", spec.location)));
    };
    for (what, q) in [("q0", &spec.q0), ("q1", &spec.q1)] {
        if q.len() != n {
            return Err(Error::Malformed(format!("{what} has {} coordinates, expected {n}", q.len())));
        }
    }
    for l in [&spec.r, &spec.s] {
        if l.axis >= n {
            return Err(Error::Malformed(format!("line axis {} out of range", l.axis)));
        }
    }
    if spec.q0[spec.r.axis] != spec.r.value || !spec.start_side.holds(&spec.q0) {
        return Err(Error::Malformed("q0 does not lie on r on the start side".into()));
    }
    if spec.q1[spec.s.axis] != spec.s.value || !spec.end_side.holds(&spec.q1) {
        return Err(Error::Malformed("q1 does not lie on s on the end side".into()));
    }
    if !spec.eps.is_positive() {
        return Err(Error::Malformed("epsilon must be positive".into()));
    }
    let vars = h.vars();
    let start: Vec<String> = vars.iter().map(|v| format!("{v}0")).collect();
    let end: Vec<String> = vars.iter().map(|v| format!("{v}1")).collect();
    let time = "t".to_string();
    if vars.iter().any(|v| start.contains(v) || end.contains(v) || *v == time) {
        return Err(Error::Malformed("automaton variable names clash with the encoding".into()));
    }
    let p0: Vec<Poly> = start.iter().map(|v| Poly::var(v)).collect();
    let p1: Vec<Poly> = end.iter().map(|v| Poly::var(v)).collect();
    let t = Poly::var(&time);
    // D x1 = D x0 + (D (A x0 + b)) t, with D clearing the row denominators
    let mut pi = Vec::new();
    for i in 0..n {
        let d = BigRational::from_integer(lcm_of_row(&a[i], &b[i]));
        let dir = a[i].iter().zip(&p0).fold(Poly::constant(b[i].clone()), |acc, (c, x)| &acc + &x.scale(c));
        pi.push(Formula::eq(p1[i].scale(&d), &p0[i].scale(&d) + &(&dir.scale(&d) * &t)));
    }
    let body = Formula::exists(&time, Formula::and(Formula::gt(t.clone(), Poly::zero()), Formula::and_all(pi.clone())));
    let end_refs: Vec<&str> = end.iter().map(String::as_str).collect();
    let mut ctx = TranslationContext::new(spec.eps.clone(), &end_refs)?;
    let transition = translate(&body, &mut ctx)?;
    let mut certs = Certificates::new();
    for p in &pi {
        certs.certify(p, Certificate::AffineEquality)?;
    }
    let simp = convex_simplify(&transition, &ctx, &certs);
    let q0: Vec<Poly> = spec.q0.iter().map(|c| Poly::constant(c.clone())).collect();
    let q1: Vec<Poly> = spec.q1.iter().map(|c| Poly::constant(c.clone())).collect();
    let d0 = sq_dist(&q0, &p0);
    let d1 = sq_dist(&q1, &p1);
    let four_eps2 = Poly::constant(&spec.eps * &spec.eps * BigRational::from_integer(4.into()));
    let premise = Formula::and_all([
        Formula::eq(p0[spec.r.axis].clone(), Poly::constant(spec.r.value.clone())),
        spec.start_side.formula(&p0),
        Formula::eq(p1[spec.s.axis].clone(), Poly::constant(spec.s.value.clone())),
        spec.end_side.formula(&p1),
        Formula::gt(d0.clone(), four_eps2),
        simp.formula.clone(),
    ]);
    let mut all: Vec<String> = start.clone();
    all.extend(end.iter().cloned());
    let sentence = Formula::forall_many(&all, Formula::implies(premise, Formula::lt(d1, d0)));
    if !sentence.free_vars().is_empty() || !sentence.is_well_formed() {
        return Err(Error::Malformed(format!("convergence sentence is not closed: {:?}", sentence.free_vars())));
    }
    Ok(ConvergenceFormula {
        sentence,
        pi,
        transition,
        fully_simplified: !simp.flagged(),
        simplified: simp.formula,
        start,
        end,
        time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;
    use crate::models::{bouncing_ball, taylor_automaton, OscillatorParams};

    #[test]
    fn central_location_equations() {
        let h = taylor_automaton(&OscillatorParams::default()).unwrap();
        let spec = ConvergenceSpec::oscillator_arc("zz", rat(2, 1), rat(7, 1), rat(5, 1), rat(1, 10));
        let c = build_convergence_formula(&h, &spec).unwrap();
        let (x0, y0, x1, t) = (Poly::var("xe0"), Poly::var("xi0"), Poly::var("xe1"), Poly::var("t"));
        let pi1 = Formula::eq(x1.scale(&rat(6, 1)), &x0.scale(&rat(6, 1)) + &(&(&x0 - &y0.scale(&rat(3, 1))) * &t));
        assert_eq!(c.pi[0], pi1);
        assert!(c.fully_simplified, "{}", c.simplified);
    }

    #[test]
    fn ball_encoding_is_existential() {
        let (h, _) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
        let src = Formula::and(Formula::eq(Poly::var("x1"), Poly::int(10)), Formula::eq(Poly::var("x2"), Poly::zero()));
        let f = bounded_reach_formula(&h, &src, &src, 1).unwrap();
        assert!(f.free_vars().is_empty());
        // the invariant is concave along the flow, so no universal quantifier
        let mut forall = false;
        f.visit(&mut |g| forall |= matches!(g, Formula::Forall(..)));
        assert!(!forall);
    }
}
