//! Numerical simulation: guard-crossing detection, section crossings, return maps,
//! contraction scans and attractor classification.

mod plot;
mod poincare;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{CompiledFlow, HybridAutomaton, HybridState, Trace, Transition};

pub use plot::phase_portrait_svg;
pub use poincare::{
    classify_attractor, contraction_scan, cycle_crossings, fixed_point, Attractor, ContractionEntry, ContractionReport, PoincareMap,
};

/// How location flows are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Closed form for affine and frozen flows, RK4 for named fields.
    #[default]
    Auto,
    /// RK4 at the configured step everywhere.
    Rk4Fixed,
    /// Closed form only; named fields are rejected.
    ExactAffine,
    /// Direction frozen at segment entry everywhere.
    FrozenTaylor,
}

impl std::str::FromStr for Integrator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Integrator::Auto),
            "rk4-fixed" | "rk4" => Ok(Integrator::Rk4Fixed),
            "exact-affine" | "exact" => Ok(Integrator::ExactAffine),
            "frozen-taylor" | "frozen" => Ok(Integrator::FrozenTaylor),
            other => Err(format!("unknown integrator `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub integrator: Integrator,
    /// Marching step (also the RK4 step).
    pub step: f64,
    pub horizon: f64,
    /// Slack on invariant atom values at which an exit is declared; bounds the
    /// guard atom value at reported crossings.
    pub event_tol: f64,
    pub max_jumps: usize,
    /// Keep every marching point in [`SimResult::samples`].
    pub record_samples: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { integrator: Integrator::Auto, step: 1e-3, horizon: 50.0, event_tol: 1e-9, max_jumps: 10_000, record_samples: true }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.event_tol > 0.0) || !(self.horizon >= 0.0) {
            return Err(Error::Malformed("step and event tolerance must be positive, horizon non-negative".into()));
        }
        Ok(())
    }
}

/// Why a simulation stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SimStatus {
    Horizon,
    /// The discrete-jump budget ran out; the trace is truncated (Zeno suspect).
    JumpBudget { time: f64 },
    /// Invariant exit with no enabled edge leading to an admissible state.
    Stuck { location: String, x: Vec<f64>, time: f64 },
    Diverged { time: f64 },
    /// A watched section was crossed the requested number of times.
    SectionReached { time: f64 },
}

/// A discrete switch taken by the simulator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossingRecord {
    pub edge: usize,
    /// Activation formula of the edge, in s-expression form.
    pub guard: String,
    pub point: Vec<f64>,
    pub time: f64,
    pub from: String,
    pub to: String,
}

/// Line `x[axis] = value` restricted to `x[side] > 0` (or `< 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub axis: usize,
    pub value: f64,
    pub side: usize,
    pub side_positive: bool,
}

impl Section {
    pub fn new(axis: usize, value: f64, side: usize, side_positive: bool) -> Self {
        Section { axis, value, side, side_positive }
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        x[self.axis] - self.value
    }

    pub fn on_side(&self, x: &[f64]) -> bool {
        if self.side_positive {
            x[self.side] > 0.0
        } else {
            x[self.side] < 0.0
        }
    }

    /// Position along the section.
    pub fn coord(&self, x: &[f64]) -> f64 {
        x[self.side]
    }

    pub fn point(&self, s: f64, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        x[self.axis] = self.value;
        x[self.side] = s;
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectionCrossing {
    pub section: usize,
    pub time: f64,
    pub point: Vec<f64>,
    /// `+1` when `x[axis]` increases through the section.
    pub direction: i8,
}

/// Sections to watch during a simulation, optionally stopping after `stop.1`
/// crossings of section `stop.0` (in any direction, or the given one).
#[derive(Clone, Debug, Default)]
pub struct Watch {
    pub sections: Vec<Section>,
    pub stop: Option<(usize, usize, Option<i8>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub time: f64,
    pub location: usize,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    pub trace: Trace,
    pub status: SimStatus,
    pub crossings: Vec<CrossingRecord>,
    pub section_crossings: Vec<SectionCrossing>,
    pub samples: Vec<Sample>,
    pub jumps: usize,
    pub time: f64,
}

impl SimResult {
    pub fn truncated(&self) -> bool {
        matches!(self.status, SimStatus::JumpBudget { .. })
    }
}

/// Flow evaluation for one continuous segment.
struct Stepper<'a> {
    flow: &'a CompiledFlow,
    mode: Mode,
    x0: Vec<f64>,
    dir0: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Exact,
    Frozen,
    Rk4,
}

impl<'a> Stepper<'a> {
    fn new(flow: &'a CompiledFlow, integrator: Integrator, x0: &[f64]) -> Result<Self> {
        let mode = match (integrator, flow) {
            (Integrator::FrozenTaylor, _) | (_, CompiledFlow::Frozen { .. }) => Mode::Frozen,
            (Integrator::Rk4Fixed, _) | (Integrator::Auto, CompiledFlow::Nonlinear { .. }) => Mode::Rk4,
            (Integrator::ExactAffine, CompiledFlow::Nonlinear { .. }) => {
                return Err(Error::Unsupported("exact integration of a named field".into()))
            }
            _ => Mode::Exact,
        };
        Ok(Stepper { flow, mode, x0: x0.to_vec(), dir0: flow.field(x0) })
    }

    /// State at segment time `t + dt`, given the state `x` at segment time `t`.
    fn advance(&self, x: &[f64], t: f64, dt: f64) -> Vec<f64> {
        match self.mode {
            Mode::Exact => self.flow.flow(&self.x0, t + dt),
            Mode::Frozen => self.x0.iter().zip(&self.dir0).map(|(a, d)| a + d * (t + dt)).collect(),
            Mode::Rk4 => rk4(&|y: &[f64]| self.flow.field(y), x, dt),
        }
    }

    /// Segment end state as the automaton's own flow would report it.
    fn end_state(&self, marched: &[f64], t: f64) -> Vec<f64> {
        match (self.mode, self.flow) {
            (Mode::Rk4, CompiledFlow::Nonlinear { .. }) => self.flow.flow(&self.x0, t),
            _ => marched.to_vec(),
        }
    }
}

fn rk4(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, h / 2.0));
    let k3 = f(&add(x, &k2, h / 2.0));
    let k4 = f(&add(x, &k3, h));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

fn bisect_time(pred: &dyn Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    // pred(lo) is true, pred(hi) false
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

const DIVERGENCE_BOUND: f64 = 1e9;

/// Simulate `h` from `s0`.
pub fn simulate(h: &HybridAutomaton, s0: &HybridState, cfg: &SimConfig) -> Result<SimResult> {
    simulate_watch(h, s0, cfg, &Watch::default())
}

/// Simulate while recording crossings of the watched sections.
pub fn simulate_watch(h: &HybridAutomaton, s0: &HybridState, cfg: &SimConfig, watch: &Watch) -> Result<SimResult> {
    cfg.check()?;
    if !h.is_admissible(s0) {
        return Err(Error::NotAdmissible(h.locations().get(s0.location).map(|l| l.name.clone()).unwrap_or_default()));
    }
    let mut res = SimResult {
        trace: Trace::new(s0.clone()),
        status: SimStatus::Horizon,
        crossings: Vec::new(),
        section_crossings: Vec::new(),
        samples: Vec::new(),
        jumps: 0,
        time: 0.0,
    };
    let inside = |loc: usize, x: &[f64]| h.invariant_holds_with(loc, x, cfg.event_tol);
    let mut cur = s0.clone();
    let mut t = 0.0;
    let mut stop_count = 0usize;
    'run: loop {
        let loc = cur.location;
        let stepper = Stepper::new(h.compiled_flow(loc), cfg.integrator, &cur.x)?;
        let mut x = cur.x.clone();
        let mut el = 0.0;
        if cfg.record_samples {
            res.samples.push(Sample { time: t, location: loc, x: x.clone() });
        }
        let mut stop_now: Option<f64> = None;
        let mut exited = false;
        while t + el < cfg.horizon {
            let dt = cfg.step.min(cfg.horizon - t - el);
            let mut xn = stepper.advance(&x, el, dt);
            let mut dt_used = dt;
            if !inside(loc, &xn) {
                let lo = bisect_time(&|d| inside(loc, &stepper.advance(&x, el, d)), 0.0, dt);
                xn = stepper.advance(&x, el, lo);
                dt_used = lo;
                exited = true;
            }
            // watched sections over [el, el + dt_used]
            for (si, sec) in watch.sections.iter().enumerate() {
                let (g0, g1) = (sec.level(&x), sec.level(&xn));
                let crossed = (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0);
                if !crossed || dt_used <= 0.0 {
                    continue;
                }
                let dir: i8 = if g1 > g0 { 1 } else { -1 };
                let tc = if g1 == 0.0 {
                    dt_used
                } else {
                    let s0 = g0.signum();
                    bisect_time(&|d| sec.level(&stepper.advance(&x, el, d)).signum() == s0, 0.0, dt_used)
                };
                let pc = stepper.advance(&x, el, tc);
                if !sec.on_side(&pc) {
                    continue;
                }
                res.section_crossings.push(SectionCrossing { section: si, time: t + el + tc, point: pc, direction: dir });
                if let Some((target, count, want)) = watch.stop {
                    if target == si && want.is_none_or(|w| w == dir) {
                        stop_count += 1;
                        if stop_count >= count {
                            stop_now = Some(tc);
                        }
                    }
                }
            }
            if let Some(tc) = stop_now {
                let xe = stepper.advance(&x, el, tc);
                el += tc;
                x = xe;
                break;
            }
            el += dt_used;
            x = xn;
            if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
                res.status = SimStatus::Diverged { time: t + el };
                push_segment(&mut res, &stepper, loc, &x, el);
                res.time = t + el;
                break 'run;
            }
            if cfg.record_samples {
                res.samples.push(Sample { time: t + el, location: loc, x: x.clone() });
            }
            if exited {
                break;
            }
        }
        let end = push_segment(&mut res, &stepper, loc, &x, el);
        t += el;
        res.time = t;
        if stop_now.is_some() {
            res.status = SimStatus::SectionReached { time: t };
            break;
        }
        if !exited {
            res.status = SimStatus::Horizon;
            break;
        }
        if res.jumps >= cfg.max_jumps {
            res.status = SimStatus::JumpBudget { time: t };
            break;
        }
        let here = HybridState::new(loc, end);
        match choose_edge(h, &here, cfg, &inside) {
            Some((e, post)) => {
                let edge = &h.edges()[e];
                res.crossings.push(CrossingRecord {
                    edge: e,
                    guard: crate::formula::emit_sexpr(&edge.activation),
                    point: here.x.clone(),
                    time: t,
                    from: h.locations()[edge.source].name.clone(),
                    to: h.locations()[edge.target].name.clone(),
                });
                res.trace.push(Transition::Discrete(e), post.clone());
                res.jumps += 1;
                cur = post;
            }
            None => {
                res.status = SimStatus::Stuck { location: h.locations()[loc].name.clone(), x: here.x, time: t };
                break;
            }
        }
    }
    Ok(res)
}

/// Append the continuous step of a finished segment (if it has positive length)
/// and return the segment end point.
fn push_segment(res: &mut SimResult, stepper: &Stepper, loc: usize, x: &[f64], el: f64) -> Vec<f64> {
    if el <= 0.0 {
        return x.to_vec();
    }
    let end = stepper.end_state(x, el);
    res.trace.push(Transition::Continuous(el), HybridState::new(loc, end.clone()));
    end
}

/// Enabled edge whose image is admissible, preferring targets the flow enters;
/// ties go to the lowest edge id.
fn choose_edge(
    h: &HybridAutomaton,
    s: &HybridState,
    cfg: &SimConfig,
    inside: &dyn Fn(usize, &[f64]) -> bool,
) -> Option<(usize, HybridState)> {
    let mut fallback = None;
    for (e, edge) in h.outgoing(s.location) {
        let Ok(post) = h.discrete_post(s, e) else { continue };
        let probe = cfg.step.min(1e-6);
        let entering = match Stepper::new(h.compiled_flow(edge.target), cfg.integrator, &post.x) {
            Ok(st) => {
                let x = st.advance(&post.x, 0.0, probe);
                inside(edge.target, &x) && h.invariant_holds_strictly(edge.target, &x) || {
                    // tangential entry: still inside after a longer probe
                    let y = st.advance(&post.x, 0.0, probe * 100.0);
                    inside(edge.target, &y) && inside(edge.target, &x)
                }
            }
            Err(_) => false,
        };
        if entering {
            return Some((e, post));
        }
        if fallback.is_none() {
            fallback = Some((e, post));
        }
    }
    fallback
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bouncing_ball, locate, pwl_automaton, sgn_automaton, OscillatorParams};

    #[test]
    fn ball_is_zeno_within_budget() {
        let (h, s0) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
        let cfg = SimConfig { horizon: 100.0, max_jumps: 60, ..SimConfig::default() };
        let r = simulate(&h, &s0, &cfg).unwrap();
        assert!(r.truncated(), "{:?}", r.status);
        assert!(r.time < 20.0);
        assert!(h.validate_trace(&r.trace, None).valid, "{:?}", h.validate_trace(&r.trace, None));
        for c in &r.crossings {
            assert!(c.point[0].abs() <= cfg.event_tol);
        }
    }

    #[test]
    fn sgn_reaches_an_attractor() {
        let h = sgn_automaton(3.0).unwrap();
        let x0 = vec![-1.0, 6.0];
        let s0 = HybridState::new(locate(&h, &x0).unwrap(), x0);
        let r = simulate(&h, &s0, &SimConfig { horizon: 40.0, ..SimConfig::default() }).unwrap();
        let end = &r.trace.last().x;
        assert!((end[0] + 6.0).abs() < 1e-3 && end[1].abs() < 1e-3, "{end:?}");
        assert!(h.validate_trace(&r.trace, None).valid);
    }

    #[test]
    fn pwl_trace_validates() {
        let h = pwl_automaton(&OscillatorParams::default()).unwrap();
        let x0 = vec![-0.5, -0.5];
        let s0 = HybridState::new(locate(&h, &x0).unwrap(), x0);
        let cfg = SimConfig { horizon: 200.0, max_jumps: 50, ..SimConfig::default() };
        let r = simulate(&h, &s0, &cfg).unwrap();
        assert!(r.trace.steps.len() >= 50, "{}", r.trace.steps.len());
        let rep = h.validate_trace(&r.trace, None);
        assert!(rep.valid, "{rep:?}");
    }
}
