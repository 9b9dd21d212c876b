//! Hybrid automata: data model, transition relations, traces, disturbance and
//! trace-level approximate simulation.

mod flow;
pub mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{emit_sexpr, solve_linear_for, CompiledPoly, Formula, Poly, Rel};

pub use flow::{
    affine_flow_expm, expm, expm2, mat_vec_poly, parse_rational, rk4_step, CompiledFlow, FlowSpec, NamedField,
};

/// Slack on atom values used when no explicit tolerance is configured.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

/// Name of the post-reset copy of `x`.
pub fn primed(x: &str) -> String {
    format!("{x}'")
}

#[derive(Clone, Debug)]
pub struct Location {
    pub name: String,
    pub invariant: Formula,
    pub flow: FlowSpec,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub activation: Formula,
    /// Relation over `X` and `X'`; must be functional.
    pub reset: Formula,
}

impl Edge {
    /// Edge with activation `guard` and the reset `x' = x` on every variable.
    pub fn identity(source: usize, target: usize, guard: Formula, vars: &[String]) -> Edge {
        let reset = Formula::and_all(vars.iter().map(|v| Formula::eq(Poly::var(&primed(v)), Poly::var(v))));
        Edge { source, target, activation: guard, reset }
    }
}

/// Numeric form of a quantifier-free predicate.
#[derive(Clone, Debug)]
enum Pred {
    Atom { p: CompiledPoly, grad: Vec<CompiledPoly>, rel: Rel },
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
}

impl Pred {
    fn compile(f: &Formula, order: &[String]) -> Result<Pred> {
        Ok(match f {
            Formula::Atom(a) => {
                let d = a.diff();
                let c = |p: &Poly| {
                    p.compile(order).ok_or_else(|| {
                        Error::Malformed(format!("`{}` mentions a variable outside {:?}", emit_sexpr(f), order))
                    })
                };
                Pred::Atom { p: c(&d)?, grad: order.iter().map(|v| c(&d.derivative(v))).collect::<Result<_>>()?, rel: a.rel }
            }
            Formula::And(a, b) => Pred::And(Box::new(Pred::compile(a, order)?), Box::new(Pred::compile(b, order)?)),
            Formula::Or(a, b) => Pred::Or(Box::new(Pred::compile(a, order)?), Box::new(Pred::compile(b, order)?)),
            Formula::Not(a) => Pred::Not(Box::new(Pred::compile(a, order)?)),
            Formula::Forall(..) | Formula::Exists(..) => {
                return Err(Error::Unsupported(format!("quantified predicate `{}`", emit_sexpr(f))))
            }
        })
    }

    /// Evaluate with the set enlarged by `noise` in space plus `tol` in atom value
    /// (scaled by the gradient norm when that exceeds 1). `loose` tracks polarity.
    fn holds(&self, x: &[f64], noise: f64, tol: f64, loose: bool) -> bool {
        match self {
            Pred::Atom { p, grad, rel } => {
                let v = p.eval(x);
                let g = grad.iter().map(|d| d.eval(x).powi(2)).sum::<f64>().sqrt();
                let slack = noise * g + tol * g.max(1.0);
                match (rel, loose) {
                    (Rel::Eq, true) => v.abs() <= slack,
                    (Rel::Eq, false) => v == 0.0,
                    (Rel::Lt, true) => v < slack,
                    (Rel::Lt, false) => v < -slack,
                }
            }
            Pred::And(a, b) => a.holds(x, noise, tol, loose) && b.holds(x, noise, tol, loose),
            Pred::Or(a, b) => a.holds(x, noise, tol, loose) || b.holds(x, noise, tol, loose),
            Pred::Not(a) => !a.holds(x, noise, tol, !loose),
        }
    }

    /// Atoms with their value at `x` (used to report which boundary was crossed).
    fn atoms<'a>(&'a self, out: &mut Vec<&'a CompiledPoly>) {
        match self {
            Pred::Atom { p, .. } => out.push(p),
            Pred::And(a, b) | Pred::Or(a, b) => {
                a.atoms(out);
                b.atoms(out);
            }
            Pred::Not(a) => a.atoms(out),
        }
    }
}

#[derive(Clone, Debug)]
struct Compiled {
    invariants: Vec<Pred>,
    flows: Vec<CompiledFlow>,
    guards: Vec<Pred>,
    resets: Vec<Vec<CompiledPoly>>,
}

/// Hybrid automaton over the variable vector `vars`.
#[derive(Clone, Debug)]
pub struct HybridAutomaton {
    vars: Vec<String>,
    locations: Vec<Location>,
    edges: Vec<Edge>,
    noise: f64,
    tolerance: f64,
    compiled: Compiled,
}

/// A location index together with a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub location: usize,
    pub x: Vec<f64>,
}

impl HybridState {
    pub fn new(location: usize, x: Vec<f64>) -> Self {
        HybridState { location, x }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Transition {
    /// Time elapse.
    Continuous(f64),
    /// Edge index.
    Discrete(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub start: HybridState,
    pub steps: Vec<(Transition, HybridState)>,
}

impl Trace {
    pub fn new(start: HybridState) -> Self {
        Trace { start, steps: Vec::new() }
    }

    pub fn push(&mut self, t: Transition, s: HybridState) {
        self.steps.push((t, s));
    }

    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn states(&self) -> impl Iterator<Item = &HybridState> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(_, s)| s))
    }

    pub fn last(&self) -> &HybridState {
        self.steps.last().map(|(_, s)| s).unwrap_or(&self.start)
    }

    /// Total elapsed time.
    pub fn duration(&self) -> f64 {
        self.steps
            .iter()
            .map(|(t, _)| match t {
                Transition::Continuous(d) => *d,
                Transition::Discrete(_) => 0.0,
            })
            .sum()
    }

    /// `(time, state)` pairs, one per state.
    pub fn timed_states(&self) -> Vec<(f64, &HybridState)> {
        let mut t = 0.0;
        let mut out = vec![(0.0, &self.start)];
        for (tr, s) in &self.steps {
            if let Transition::Continuous(d) = tr {
                t += d;
            }
            out.push((t, s));
        }
        out
    }
}

/// Outcome of [`HybridAutomaton::validate_trace`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceReport {
    pub valid: bool,
    /// Index into `steps` (or `None` for the start state) and reason of the first failure.
    pub violation: Option<(Option<usize>, String)>,
}

impl TraceReport {
    fn ok() -> Self {
        TraceReport { valid: true, violation: None }
    }

    fn fail(at: Option<usize>, why: String) -> Self {
        TraceReport { valid: false, violation: Some((at, why)) }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl HybridAutomaton {
    pub fn new(vars: Vec<String>, locations: Vec<Location>, edges: Vec<Edge>) -> Result<Self> {
        let n = vars.len();
        if n == 0 {
            return Err(Error::Malformed("automaton without variables".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &vars {
            if !seen.insert(v.as_str()) || v.ends_with('\'') {
                return Err(Error::Malformed(format!("bad or duplicate variable `{v}`")));
            }
        }
        if locations.is_empty() {
            return Err(Error::Malformed("automaton without locations".into()));
        }
        let mut invariants = Vec::new();
        let mut flows = Vec::new();
        for l in &locations {
            l.flow.check(n)?;
            invariants.push(Pred::compile(&l.invariant, &vars)?);
            flows.push(l.flow.compile());
        }
        let primes: Vec<String> = vars.iter().map(|v| primed(v)).collect();
        let mut guards = Vec::new();
        let mut resets = Vec::new();
        for (i, e) in edges.iter().enumerate() {
            if e.source >= locations.len() || e.target >= locations.len() {
                return Err(Error::Malformed(format!("edge {i} references a missing location")));
            }
            guards.push(Pred::compile(&e.activation, &vars)?);
            resets.push(compile_reset(&e.reset, &vars, &primes).map_err(|err| match err {
                Error::Unsupported(m) => Error::Unsupported(format!("edge {i}: {m}")),
                other => other,
            })?);
        }
        Ok(HybridAutomaton {
            vars,
            locations,
            edges,
            noise: 0.0,
            tolerance: DEFAULT_TOLERANCE,
            compiled: Compiled { invariants, flows, guards, resets },
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    pub fn compiled_flow(&self, loc: usize) -> &CompiledFlow {
        &self.compiled.flows[loc]
    }

    /// Edges leaving `loc`, in index order.
    pub fn outgoing(&self, loc: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.source == loc)
    }

    /// `Inv_v(x)` including the disturbance widening.
    pub fn invariant_holds(&self, loc: usize, x: &[f64]) -> bool {
        self.compiled.invariants[loc].holds(x, self.noise, self.tolerance, true)
    }

    /// `Inv_v(x)` with an explicit atom-value slack and no disturbance widening.
    pub fn invariant_holds_with(&self, loc: usize, x: &[f64], tol: f64) -> bool {
        self.compiled.invariants[loc].holds(x, 0.0, tol, true)
    }

    /// `Inv_v(x)` with the configured tolerance taken away instead of added.
    pub fn invariant_holds_strictly(&self, loc: usize, x: &[f64]) -> bool {
        self.compiled.invariants[loc].holds(x, 0.0, self.tolerance, false)
    }

    pub fn guard_holds(&self, edge: usize, x: &[f64]) -> bool {
        self.compiled.guards[edge].holds(x, 0.0, self.tolerance, true)
    }

    /// Guard with an explicit atom-value slack.
    pub fn guard_holds_with(&self, edge: usize, x: &[f64], tol: f64) -> bool {
        self.compiled.guards[edge].holds(x, 0.0, tol, true)
    }

    /// Invariant atoms of `loc` as compiled polynomials (value `p(x)` for `p < 0` / `p = 0`).
    pub fn invariant_atom_values(&self, loc: usize, x: &[f64]) -> Vec<f64> {
        let mut atoms = Vec::new();
        self.compiled.invariants[loc].atoms(&mut atoms);
        atoms.iter().map(|p| p.eval(x)).collect()
    }

    /// Guard atom values of `edge` at `x`.
    pub fn guard_atom_values(&self, edge: usize, x: &[f64]) -> Vec<f64> {
        let mut atoms = Vec::new();
        self.compiled.guards[edge].atoms(&mut atoms);
        atoms.iter().map(|p| p.eval(x)).collect()
    }

    /// Image of `x` under the reset of `edge`, without any check.
    pub fn apply_reset(&self, edge: usize, x: &[f64]) -> Vec<f64> {
        self.compiled.resets[edge].iter().map(|p| p.eval(x)).collect()
    }

    pub fn is_admissible(&self, s: &HybridState) -> bool {
        s.location < self.locations.len() && s.x.len() == self.dim() && self.invariant_holds(s.location, &s.x)
    }

    fn check_state(&self, s: &HybridState) -> Result<()> {
        if s.location >= self.locations.len() {
            return Err(Error::Malformed(format!("no location {}", s.location)));
        }
        if s.x.len() != self.dim() {
            return Err(Error::Malformed(format!("state has dimension {}, expected {}", s.x.len(), self.dim())));
        }
        if !self.invariant_holds(s.location, &s.x) {
            return Err(Error::NotAdmissible(self.locations[s.location].name.clone()));
        }
        Ok(())
    }

    /// Default invariant sampling step for a duration `t`.
    pub fn default_step(t: f64) -> f64 {
        (t / 1000.0).min(1e-3)
    }

    /// `f_v(r)(t)` after checking the invariant at every multiple of `h` up to `t`.
    pub fn continuous_post(&self, s: &HybridState, t: f64, h: Option<f64>) -> Result<HybridState> {
        self.check_state(s)?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Malformed(format!("duration {t} must be finite and >= 0")));
        }
        if t == 0.0 {
            return Ok(s.clone());
        }
        let h = h.unwrap_or_else(|| Self::default_step(t));
        if !(h > 0.0) {
            return Err(Error::Malformed("sampling step must be positive".into()));
        }
        let flow = &self.compiled.flows[s.location];
        let n = (t / h).ceil() as usize;
        let incremental = matches!(flow, CompiledFlow::Nonlinear { .. });
        let mut cur = s.x.clone();
        let mut prev_t = 0.0;
        for k in 1..=n {
            let tk = if k == n { t } else { k as f64 * h };
            let x = if incremental { flow.flow(&cur, tk - prev_t) } else { flow.flow(&s.x, tk) };
            if !self.invariant_holds(s.location, &x) {
                return Err(Error::InvariantExit { location: self.locations[s.location].name.clone(), time: tk });
            }
            cur = x;
            prev_t = tk;
        }
        let end = if incremental { flow.flow(&s.x, t) } else { cur };
        if !self.invariant_holds(s.location, &end) {
            return Err(Error::InvariantExit { location: self.locations[s.location].name.clone(), time: t });
        }
        Ok(HybridState::new(s.location, end))
    }

    /// Whether `to` is a continuous successor of `from` after `t`: within the
    /// disturbance radius of the flow image (or the tolerance when undisturbed).
    pub fn continuous_related(&self, from: &HybridState, t: f64, to: &HybridState, h: Option<f64>) -> Result<bool> {
        if from.location != to.location || to.x.len() != self.dim() {
            return Ok(false);
        }
        let post = match self.continuous_post(from, t, h) {
            Ok(p) => p,
            Err(Error::InvariantExit { .. }) | Err(Error::NotAdmissible(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        let d = dist(&post.x, &to.x);
        let slack = self.tolerance * (1.0 + post.x.iter().map(|v| v.abs()).fold(0.0, f64::max));
        Ok((if self.noise > 0.0 { d < self.noise + slack } else { d <= slack }) && self.invariant_holds(to.location, &to.x))
    }

    /// Image of `s` under edge `e`.
    pub fn discrete_post(&self, s: &HybridState, e: usize) -> Result<HybridState> {
        self.check_state(s)?;
        let edge = self.edges.get(e).ok_or_else(|| Error::Malformed(format!("no edge {e}")))?;
        if edge.source != s.location || !self.guard_holds(e, &s.x) {
            return Err(Error::GuardNotEnabled { edge: e });
        }
        let x: Vec<f64> = self.compiled.resets[e].iter().map(|p| p.eval(&s.x)).collect();
        if !self.invariant_holds(edge.target, &x) {
            return Err(Error::TargetNotAdmissible { edge: e });
        }
        Ok(HybridState::new(edge.target, x))
    }

    /// Check a trace against the transition relations and the alternation rule.
    pub fn validate_trace(&self, tr: &Trace, h: Option<f64>) -> TraceReport {
        if !self.is_admissible(&tr.start) {
            return TraceReport::fail(None, "start state is not admissible".into());
        }
        let mut prev = &tr.start;
        let mut last_continuous = false;
        for (i, (t, s)) in tr.steps.iter().enumerate() {
            if !self.is_admissible(s) {
                return TraceReport::fail(Some(i), "state is not admissible".into());
            }
            match t {
                Transition::Continuous(d) => {
                    if last_continuous {
                        return TraceReport::fail(Some(i), "two consecutive continuous steps".into());
                    }
                    match self.continuous_related(prev, *d, s, h) {
                        Ok(true) => {}
                        Ok(false) => return TraceReport::fail(Some(i), format!("not a continuous successor after {d}")),
                        Err(e) => return TraceReport::fail(Some(i), e.to_string()),
                    }
                    last_continuous = true;
                }
                Transition::Discrete(e) => {
                    match self.discrete_post(prev, *e) {
                        Ok(post) => {
                            let slack = self.tolerance * (1.0 + post.x.iter().map(|v| v.abs()).fold(0.0, f64::max));
                            if post.location != s.location || dist(&post.x, &s.x) > slack {
                                return TraceReport::fail(Some(i), format!("state differs from the image under edge {e}"));
                            }
                        }
                        Err(err) => return TraceReport::fail(Some(i), err.to_string()),
                    }
                    last_continuous = false;
                }
            }
            prev = s;
        }
        TraceReport::ok()
    }

    /// Variant whose continuous relation admits every point within `eps` of an
    /// undisturbed successor, with invariants widened by `eps`. Noise adds up.
    pub fn disturb(&self, eps: f64) -> Result<HybridAutomaton> {
        if !(eps > 0.0) {
            return Err(Error::Malformed("noise level must be positive".into()));
        }
        let mut h = self.clone();
        h.noise += eps;
        Ok(h)
    }

    /// Points on the sphere of radius `0.99 * noise` around the flow image, all of which
    /// are continuous successors in the disturbed relation. Empty when undisturbed.
    pub fn disturbed_witnesses(&self, s: &HybridState, t: f64, count: usize) -> Result<Vec<HybridState>> {
        let post = self.continuous_post(s, t, None)?;
        if self.noise == 0.0 {
            return Ok(Vec::new());
        }
        let r = 0.99 * self.noise;
        let n = self.dim();
        let mut out = Vec::new();
        for k in 0..count {
            let mut x = post.x.clone();
            if n == 1 {
                x[0] += if k % 2 == 0 { r } else { -r };
            } else {
                let a = std::f64::consts::TAU * k as f64 / count.max(1) as f64;
                x[0] += r * a.cos();
                x[1] += r * a.sin();
            }
            if self.invariant_holds(s.location, &x) {
                out.push(HybridState::new(s.location, x));
            }
        }
        Ok(out)
    }

    fn same_structure(&self, other: &HybridAutomaton) -> bool {
        self.locations.len() == other.locations.len()
            && self.edges.len() == other.edges.len()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| a.source == b.source && a.target == b.target)
    }

    /// Replace the dynamics of every location (same discrete structure).
    pub fn with_flows(&self, flows: Vec<FlowSpec>) -> Result<HybridAutomaton> {
        if flows.len() != self.locations.len() {
            return Err(Error::Malformed("one flow per location expected".into()));
        }
        let locs = self.locations.iter().zip(flows).map(|(l, f)| Location { flow: f, ..l.clone() }).collect();
        let mut h = HybridAutomaton::new(self.vars.clone(), locs, self.edges.clone())?;
        h.noise = self.noise;
        h.tolerance = self.tolerance;
        Ok(h)
    }
}

fn compile_reset(reset: &Formula, vars: &[String], primes: &[String]) -> Result<Vec<CompiledPoly>> {
    let mut map: BTreeMap<&str, Poly> = BTreeMap::new();
    for c in reset.conjuncts() {
        let a = match c {
            Formula::Atom(a) if a.diff().is_zero() => continue,
            Formula::Atom(a) if a.rel == Rel::Eq => a,
            _ => return Err(Error::Unsupported(format!("relational reset conjunct `{}`", emit_sexpr(c)))),
        };
        let d = a.diff();
        let target = primes
            .iter()
            .find(|p| d.mentions(p))
            .ok_or_else(|| Error::Unsupported(format!("reset conjunct `{}` constrains no primed variable", emit_sexpr(c))))?;
        let rhs = solve_linear_for(&d, target)
            .ok_or_else(|| Error::Unsupported(format!("reset conjunct `{}` is not solved for {target}", emit_sexpr(c))))?;
        if primes.iter().any(|p| rhs.mentions(p)) {
            return Err(Error::Unsupported(format!("reset conjunct `{}` couples primed variables", emit_sexpr(c))));
        }
        if map.insert(target.as_str(), rhs).is_some() {
            return Err(Error::Unsupported(format!("{target} is reset twice")));
        }
    }
    primes
        .iter()
        .map(|p| {
            let rhs = map.get(p.as_str()).ok_or_else(|| Error::Unsupported(format!("reset leaves {p} unconstrained")))?;
            rhs.compile(vars).ok_or_else(|| Error::Malformed(format!("reset for {p} mentions an unknown variable")))
        })
        .collect()
}

/// Trace-level check of the approximate simulation conditions between paired
/// traces of two automata sharing their discrete structure.
pub fn check_eps_simulation_on_traces(
    h1: &HybridAutomaton,
    h2: &HybridAutomaton,
    obs1: &dyn Fn(&[f64]) -> Vec<f64>,
    obs2: &dyn Fn(&[f64]) -> Vec<f64>,
    pairs: &[(Trace, Trace)],
    eps: f64,
) -> Result<bool> {
    if !h1.same_structure(h2) {
        return Err(Error::Unsupported("automata do not share locations and edges".into()));
    }
    for (a, b) in pairs {
        if a.steps.len() != b.steps.len() {
            return Ok(false);
        }
        let states = a.states().zip(b.states());
        for (sa, sb) in states {
            if sa.location != sb.location || dist(&obs1(&sa.x), &obs2(&sb.x)) > eps {
                return Ok(false);
            }
        }
        for ((ta, _), (tb, _)) in a.steps.iter().zip(&b.steps) {
            let same = match (ta, tb) {
                (Transition::Continuous(x), Transition::Continuous(y)) => (x - y).abs() <= 1e-12 * (1.0 + x.abs()),
                (Transition::Discrete(x), Transition::Discrete(y)) => x == y,
                _ => false,
            };
            if !same {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;

    fn ball() -> HybridAutomaton {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        let x1 = Poly::var("x1");
        let flow = FlowSpec::Affine { a: vec![vec![rat(0, 1), rat(1, 1)], vec![rat(0, 1), rat(0, 1)]], b: vec![rat(0, 1), rat(-49, 5)] };
        let loc = Location { name: "fall".into(), invariant: Formula::ge(x1.clone(), Poly::zero()), flow };
        let reset = Formula::and(
            Formula::eq(Poly::var("x1'"), x1.clone()),
            Formula::eq(Poly::var("x2'"), Poly::var("x2").scale(&rat(-43, 50))),
        );
        let edge = Edge { source: 0, target: 0, activation: Formula::eq(x1, Poly::zero()), reset };
        HybridAutomaton::new(vars, vec![loc], vec![edge]).unwrap()
    }

    #[test]
    fn ball_falls_and_bounces() {
        let h = ball();
        let s = h.continuous_post(&HybridState::new(0, vec![10.0, 0.0]), 1.0, None).unwrap();
        assert!((s.x[0] - 5.1).abs() < 1e-12 && (s.x[1] + 9.8).abs() < 1e-12, "{s:?}");
        let b = h.discrete_post(&HybridState::new(0, vec![0.0, -14.0]), 0).unwrap();
        assert!((b.x[1] - 12.04).abs() < 1e-12);
        assert!(matches!(h.discrete_post(&HybridState::new(0, vec![1.0, 0.0]), 0), Err(Error::GuardNotEnabled { edge: 0 })));
        assert!(matches!(
            h.continuous_post(&HybridState::new(0, vec![1.0, 0.0]), 1.0, None),
            Err(Error::InvariantExit { .. })
        ));
    }

    #[test]
    fn alternation_rule() {
        let h = ball();
        let s0 = HybridState::new(0, vec![10.0, 0.0]);
        let s1 = h.continuous_post(&s0, 0.5, None).unwrap();
        let s2 = h.continuous_post(&s1, 0.5, None).unwrap();
        let mut tr = Trace::new(s0.clone());
        assert!(h.validate_trace(&tr, None).valid);
        tr.push(Transition::Continuous(0.5), s1);
        assert!(h.validate_trace(&tr, None).valid);
        tr.push(Transition::Continuous(0.5), s2);
        let r = h.validate_trace(&tr, None);
        assert!(!r.valid);
        assert_eq!(r.violation.unwrap().0, Some(1));
    }

    #[test]
    fn relational_resets_are_rejected() {
        let vars = vec!["x".to_string()];
        let loc = Location { name: "l".into(), invariant: Formula::tt(), flow: FlowSpec::affine_int([[0, 0], [0, 0]], [0, 0], 1) };
        // dimension mismatch first
        assert!(HybridAutomaton::new(vars.clone(), vec![loc], vec![]).is_err());
        let loc = Location {
            name: "l".into(),
            invariant: Formula::tt(),
            flow: FlowSpec::Affine { a: vec![vec![rat(0, 1)]], b: vec![rat(1, 1)] },
        };
        let edge = Edge { source: 0, target: 0, activation: Formula::tt(), reset: Formula::lt(Poly::var("x'"), Poly::var("x")) };
        assert!(matches!(HybridAutomaton::new(vars, vec![loc], vec![edge]), Err(Error::Unsupported(_))));
    }
}
