//! The neural-oscillator family (continuous, sign-switched, piecewise-linear and
//! frozen-direction variants) and the bouncing ball.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{rat_approx, Formula, Poly};
use crate::hybrid::{Edge, FlowSpec, HybridAutomaton, HybridState, Location, NamedField};

/// Largest denominator used when turning float parameters into rationals.
const PARAM_DEN: i64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorParams {
    pub tau: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams { tau: 3.0, lambda: 1.0, alpha: 2.0 }
    }
}

impl OscillatorParams {
    pub fn new(tau: f64, lambda: f64, alpha: f64) -> Result<Self> {
        let p = OscillatorParams { tau, lambda, alpha };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("lambda", self.lambda), ("alpha", self.alpha)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Malformed(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Band half-width `alpha / lambda`.
    pub fn offset(&self) -> f64 {
        self.alpha / self.lambda
    }

    fn exact(&self) -> (BigRational, BigRational, BigRational) {
        (rat_approx(self.tau, PARAM_DEN), rat_approx(self.lambda, PARAM_DEN), rat_approx(self.alpha, PARAM_DEN))
    }
}

/// The continuous tanh oscillator.
pub fn tanh_field(p: &OscillatorParams) -> FlowSpec {
    FlowSpec::Nonlinear { field: NamedField::Tanh { tau: p.tau, lambda: p.lambda }, step: 1e-3 }
}

/// Piecewise-linear saturation: `-1` below `-a`, `z / a` on `[-a, a)`, `1` from `a` on,
/// with `a = alpha / lambda`.
pub fn ath(p: &OscillatorParams, z: f64) -> f64 {
    let a = p.offset();
    if z < -a {
        -1.0
    } else if z < a {
        z / a
    } else {
        1.0
    }
}

/// Variable names of the oscillator models.
pub fn oscillator_vars() -> Vec<String> {
    vec!["xe".to_string(), "xi".to_string()]
}

/// One-location automaton for the tanh field.
pub fn oscillator_automaton(p: &OscillatorParams) -> Result<HybridAutomaton> {
    p.check()?;
    let loc = Location { name: "osc".into(), invariant: Formula::tt(), flow: tanh_field(p) };
    HybridAutomaton::new(oscillator_vars(), vec![loc], vec![])
}

/// Band of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    Neg,
    Mid,
    Pos,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Neg, Band::Mid, Band::Pos];

    pub fn tag(self) -> char {
        match self {
            Band::Neg => 'm',
            Band::Mid => 'z',
            Band::Pos => 'p',
        }
    }

    fn index(self) -> i32 {
        match self {
            Band::Neg => -1,
            Band::Mid => 0,
            Band::Pos => 1,
        }
    }
}

/// Location name for the band pair, e.g. `pz` for `xe >= a`, `-a <= xi <= a`.
pub fn band_name(e: Band, i: Band) -> String {
    format!("{}{}", e.tag(), i.tag())
}

/// Affine contribution `(slope, constant)` of `g(band, z)` with saturation level 1.
fn g_parts(b: Band, slope: &BigRational) -> (BigRational, BigRational) {
    match b {
        Band::Neg => (BigRational::zero(), -BigRational::one()),
        Band::Mid => (slope.clone(), BigRational::zero()),
        Band::Pos => (BigRational::zero(), BigRational::one()),
    }
}

/// `(A, b)` of `xe' = -xe/tau + g(e) - g(i)`, `xi' = -xi/tau + g(e) + g(i)`.
fn band_field(e: Band, i: Band, tau: &BigRational, slope: &BigRational) -> (Vec<Vec<BigRational>>, Vec<BigRational>) {
    let (se, ce) = g_parts(e, slope);
    let (si, ci) = g_parts(i, slope);
    let d = -(BigRational::one() / tau);
    let a = vec![vec![&d + &se, -si.clone()], vec![se.clone(), &d + &si]];
    let b = vec![&ce - &ci, &ce + &ci];
    (a, b)
}

fn band_constraint(v: &str, b: Band, a: &BigRational) -> Formula {
    let x = Poly::var(v);
    let c = Poly::constant(a.clone());
    match b {
        Band::Neg => Formula::le(x, -&c),
        Band::Mid => Formula::and(Formula::ge(x.clone(), -&c), Formula::le(x, c)),
        Band::Pos => Formula::ge(x, c),
    }
}

/// Shared boundary of two adjacent bands of one coordinate.
fn boundary(v: &str, from: Band, to: Band, a: &BigRational) -> Option<Formula> {
    let x = Poly::var(v);
    let c = Poly::constant(a.clone());
    match (from.index(), to.index()) {
        (f, t) if f == t => None,
        (f, t) if (f - t).abs() != 1 => None,
        (f, t) => Some(Formula::eq(x, if f + t > 0 { c } else { -&c })),
    }
}

fn grid_automaton(
    vars: &[String],
    cells: &[(Band, Band)],
    field: &dyn Fn(Band, Band) -> FlowSpec,
    invariant: &dyn Fn(Band, Band) -> Formula,
    guard: &dyn Fn((Band, Band), (Band, Band)) -> Option<Formula>,
) -> Result<HybridAutomaton> {
    let locs: Vec<Location> = cells
        .iter()
        .map(|&(e, i)| Location { name: band_name(e, i), invariant: invariant(e, i), flow: field(e, i) })
        .collect();
    let mut edges = Vec::new();
    for (s, &from) in cells.iter().enumerate() {
        for (t, &to) in cells.iter().enumerate() {
            if s == t {
                continue;
            }
            if let Some(g) = guard(from, to) {
                edges.push(Edge::identity(s, t, g, vars));
            }
        }
    }
    HybridAutomaton::new(vars.to_vec(), locs, edges)
}

fn pwl_with(p: &OscillatorParams, frozen: bool) -> Result<HybridAutomaton> {
    p.check()?;
    let (tau, lambda, alpha) = p.exact();
    let a = &alpha / &lambda;
    let slope = &lambda / &alpha;
    let vars = oscillator_vars();
    let cells: Vec<(Band, Band)> = Band::ALL.iter().flat_map(|e| Band::ALL.iter().map(move |i| (*e, *i))).collect();
    let field = |e: Band, i: Band| {
        let (m, b) = band_field(e, i, &tau, &slope);
        if frozen {
            FlowSpec::FrozenTaylor { a: m, b }
        } else {
            FlowSpec::Affine { a: m, b }
        }
    };
    let inv = |e: Band, i: Band| Formula::and(band_constraint("xe", e, &a), band_constraint("xi", i, &a));
    let guard = |(fe, fi): (Band, Band), (te, ti): (Band, Band)| {
        let ge = if fe == te { Some(None) } else { boundary("xe", fe, te, &a).map(Some) };
        let gi = if fi == ti { Some(None) } else { boundary("xi", fi, ti, &a).map(Some) };
        match (ge?, gi?) {
            (Some(x), Some(y)) => Some(Formula::and(x, y)),
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) => None,
        }
    };
    grid_automaton(&vars, &cells, &field, &inv, &guard)
}

/// Nine-location piecewise-affine automaton over the bands `|z| <= alpha/lambda`.
/// Edges join orthogonally and diagonally adjacent cells; resets are identities.
pub fn pwl_automaton(p: &OscillatorParams) -> Result<HybridAutomaton> {
    pwl_with(p, false)
}

/// Same partition as [`pwl_automaton`], with the direction frozen at location entry.
pub fn taylor_automaton(p: &OscillatorParams) -> Result<HybridAutomaton> {
    pwl_with(p, true)
}

/// Four-quadrant automaton of the sign-switched field.
pub fn sgn_automaton(tau: f64) -> Result<HybridAutomaton> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Malformed(format!("tau must be positive, got {tau}")));
    }
    let t = rat_approx(tau, PARAM_DEN);
    let zero = BigRational::zero();
    let vars = oscillator_vars();
    let cells = [(Band::Pos, Band::Pos), (Band::Neg, Band::Pos), (Band::Neg, Band::Neg), (Band::Pos, Band::Neg)];
    let field = |e: Band, i: Band| {
        let (a, b) = band_field(e, i, &t, &zero);
        FlowSpec::Affine { a, b }
    };
    let half = |v: &str, b: Band| {
        let x = Poly::var(v);
        if b == Band::Pos {
            Formula::ge(x, Poly::zero())
        } else {
            Formula::le(x, Poly::zero())
        }
    };
    let inv = |e: Band, i: Band| Formula::and(half("xe", e), half("xi", i));
    let axis = |v: &str| Formula::eq(Poly::var(v), Poly::zero());
    let guard = |(fe, fi): (Band, Band), (te, ti): (Band, Band)| match (fe == te, fi == ti) {
        (true, false) => Some(axis("xi")),
        (false, true) => Some(axis("xe")),
        (false, false) => Some(Formula::and(axis("xe"), axis("xi"))),
        (true, true) => None,
    };
    grid_automaton(&vars, &cells, &field, &inv, &guard)
}

/// The single-location bouncing ball (height `x1`, velocity `x2`) and its start state.
pub fn bouncing_ball(h0: f64, g: f64, gamma: f64) -> Result<(HybridAutomaton, HybridState)> {
    if !(h0 > 0.0) || !(g > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Malformed("bouncing ball needs h0 > 0, g > 0, 0 < gamma < 1".into()));
    }
    let (g, gamma) = (rat_approx(g, PARAM_DEN), rat_approx(gamma, PARAM_DEN));
    let x1 = Poly::var("x1");
    let flow = FlowSpec::Affine {
        a: vec![vec![BigRational::zero(), BigRational::one()], vec![BigRational::zero(), BigRational::zero()]],
        b: vec![BigRational::zero(), -g],
    };
    let loc = Location { name: "fall".into(), invariant: Formula::ge(x1.clone(), Poly::zero()), flow };
    let reset = Formula::and(
        Formula::eq(Poly::var("x1'"), x1.clone()),
        Formula::eq(Poly::var("x2'"), Poly::var("x2").scale(&-gamma)),
    );
    let edge = Edge { source: 0, target: 0, activation: Formula::eq(x1, Poly::zero()), reset };
    let h = HybridAutomaton::new(vec!["x1".into(), "x2".into()], vec![loc], vec![edge])?;
    Ok((h, HybridState::new(0, vec![h0, 0.0])))
}

/// Reference to a built-in model with its parameters, as accepted in JSON documents
/// (`{"builtin": "pwl", "params": {"tau": 3}}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", content = "params", rename_all = "kebab-case")]
pub enum ModelSpec {
    Oscillator(#[serde(default)] OscillatorParams),
    Sgn(#[serde(default)] SgnParams),
    Pwl(#[serde(default)] OscillatorParams),
    Taylor(#[serde(default)] OscillatorParams),
    BouncingBall(#[serde(default)] BallParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnParams {
    pub tau: f64,
}

impl Default for SgnParams {
    fn default() -> Self {
        SgnParams { tau: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BallParams {
    pub h0: f64,
    pub g: f64,
    pub gamma: f64,
}

impl Default for BallParams {
    fn default() -> Self {
        BallParams { h0: 10.0, g: 9.8, gamma: 0.86 }
    }
}

impl ModelSpec {
    /// Model by CLI name: `oscillator`, `sgn`, `pwl`, `taylor`, `bouncing-ball`.
    pub fn by_name(name: &str, p: OscillatorParams) -> Result<ModelSpec> {
        Ok(match name {
            "oscillator" | "tanh" => ModelSpec::Oscillator(p),
            "sgn" => ModelSpec::Sgn(SgnParams { tau: p.tau }),
            "pwl" | "ath" => ModelSpec::Pwl(p),
            "taylor" => ModelSpec::Taylor(p),
            "bouncing-ball" | "ball" => ModelSpec::BouncingBall(BallParams::default()),
            other => return Err(Error::Malformed(format!("unknown model `{other}`"))),
        })
    }

    pub fn build(&self) -> Result<HybridAutomaton> {
        match self {
            ModelSpec::Oscillator(p) => oscillator_automaton(p),
            ModelSpec::Sgn(s) => sgn_automaton(s.tau),
            ModelSpec::Pwl(p) => pwl_automaton(p),
            ModelSpec::Taylor(p) => taylor_automaton(p),
            ModelSpec::BouncingBall(b) => bouncing_ball(b.h0, b.g, b.gamma).map(|r| r.0),
        }
    }

    /// Conventional start point of the model.
    pub fn default_start(&self) -> Vec<f64> {
        match self {
            ModelSpec::BouncingBall(b) => vec![b.h0, 0.0],
            _ => vec![-0.5, -0.5],
        }
    }
}

/// Automaton from a JSON document: either a full automaton description or a
/// built-in model reference.
pub fn load_automaton(src: &str) -> Result<HybridAutomaton> {
    let mut v: serde_json::Value = serde_json::from_str(src)?;
    if v.get("builtin").is_some() {
        if let Some(obj) = v.as_object_mut() {
            obj.entry("params").or_insert_with(|| serde_json::json!({}));
        }
        serde_json::from_value::<ModelSpec>(v)?.build()
    } else {
        serde_json::from_value::<crate::hybrid::io::AutomatonDoc>(v)?.build()
    }
}

/// Locations whose invariant holds at `x`, preferring the one the flow enters
/// (invariant still holding a short time later). Ties go to the lowest index.
pub fn locate(h: &HybridAutomaton, x: &[f64]) -> Option<usize> {
    let holding: Vec<usize> = (0..h.locations().len()).filter(|&l| h.invariant_holds(l, x)).collect();
    let probe = 1e-6;
    holding
        .iter()
        .copied()
        .find(|&l| h.invariant_holds_strictly(l, &h.compiled_flow(l).flow(x, probe)))
        .or_else(|| holding.first().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;

    #[test]
    fn saturation_branches() {
        let p = OscillatorParams::default();
        assert_eq!(ath(&p, 5.0), 1.0);
        assert_eq!(ath(&p, 1.0), 0.5);
        assert_eq!(ath(&p, -3.0), -1.0);
        assert_eq!(ath(&p, -2.0), -1.0);
        assert_eq!(ath(&p, 2.0), 1.0);
    }

    #[test]
    fn central_and_saturated_fields() {
        let h = pwl_automaton(&OscillatorParams::default()).unwrap();
        let zz = h.location_index("zz").unwrap();
        let (a, b) = h.locations()[zz].flow.affine_parts().unwrap();
        assert_eq!(a, &vec![vec![rat(1, 6), rat(-1, 2)], vec![rat(1, 2), rat(1, 6)]]);
        assert!(b.iter().all(|c| c.is_zero()));
        let pp = h.location_index("pp").unwrap();
        let (a, b) = h.locations()[pp].flow.affine_parts().unwrap();
        assert_eq!(a, &vec![vec![rat(-1, 3), rat(0, 1)], vec![rat(0, 1), rat(-1, 3)]]);
        assert_eq!(b, &vec![rat(0, 1), rat(2, 1)]);
        // 4 corner cells with 3 neighbours, 4 side cells with 5, centre with 8
        assert_eq!(h.edges().len(), 4 * 3 + 4 * 5 + 8);
    }

    #[test]
    fn taylor_central_step() {
        let h = taylor_automaton(&OscillatorParams::default()).unwrap();
        let zz = h.location_index("zz").unwrap();
        let x = h.compiled_flow(zz).flow(&[6.0, 0.0], 1.0);
        assert_eq!(x, vec![7.0, 3.0]);
    }

    #[test]
    fn sgn_quadrants() {
        let h = sgn_automaton(3.0).unwrap();
        assert_eq!(h.locations().len(), 4);
        let pp = h.location_index("pp").unwrap();
        let f = h.compiled_flow(pp).field(&[1.0, 1.0]);
        assert!((f[0] + 1.0 / 3.0).abs() < 1e-15 && (f[1] - (2.0 - 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn builtin_reference_documents() {
        let h = load_automaton(r#"{"builtin": "pwl", "params": {"tau": 3, "lambda": 1, "alpha": 2}}"#).unwrap();
        assert_eq!(h.locations().len(), 9);
        let h = load_automaton(r#"{"builtin": "bouncing-ball"}"#).unwrap();
        assert_eq!(h.vars(), &["x1".to_string(), "x2".to_string()]);
        assert!(load_automaton(r#"{"builtin": "nope"}"#).is_err());
    }

    #[test]
    fn locate_prefers_entered_cell() {
        let h = pwl_automaton(&OscillatorParams::default()).unwrap();
        assert_eq!(h.locations()[locate(&h, &[-0.5, -0.5]).unwrap()].name, "zz");
        // on xi = 2 with xe = 7: flow points up into the pp cell
        assert_eq!(h.locations()[locate(&h, &[7.0, 2.0]).unwrap()].name, "pp");
    }
}
