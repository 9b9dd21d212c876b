use rayon::prelude::*;
use serde::Serialize;

use super::{simulate, simulate_watch, Section, SimConfig, SimStatus, Watch};
use crate::error::{Error, Result};
use crate::hybrid::{HybridAutomaton, HybridState};
use crate::models::locate;

fn start_on(h: &HybridAutomaton, x: Vec<f64>) -> Result<HybridState> {
    let loc = locate(h, &x).ok_or_else(|| Error::NotAdmissible(format!("no location admits {x:?}")))?;
    Ok(HybridState::new(loc, x))
}

/// First-return map of a section along the flow.
pub struct PoincareMap<'a> {
    pub automaton: &'a HybridAutomaton,
    pub section: Section,
    pub cfg: SimConfig,
}

impl<'a> PoincareMap<'a> {
    pub fn new(automaton: &'a HybridAutomaton, section: Section, cfg: SimConfig) -> Self {
        PoincareMap { automaton, section, cfg: SimConfig { record_samples: false, ..cfg } }
    }

    /// Position of the next crossing of the section in the direction the flow
    /// leaves it from `s`, together with the return time.
    pub fn apply_timed(&self, s: f64) -> Result<(f64, f64)> {
        let h = self.automaton;
        let p = self.section.point(s, h.dim());
        let start = start_on(h, p.clone())?;
        let v = h.compiled_flow(start.location).field(&p)[self.section.axis];
        if v == 0.0 {
            return Err(Error::NoReturn(format!("flow is tangent to the section at {s}")));
        }
        let dir: i8 = if v > 0.0 { 1 } else { -1 };
        let watch = Watch { sections: vec![self.section], stop: Some((0, 1, Some(dir))) };
        let r = simulate_watch(h, &start, &self.cfg, &watch)?;
        match r.status {
            SimStatus::SectionReached { .. } => {
                let c = r.section_crossings.iter().rev().find(|c| c.direction == dir).ok_or_else(|| Error::NoReturn(format!("from {s}")))?;
                Ok((self.section.coord(&c.point), c.time))
            }
            other => Err(Error::NoReturn(format!("from {s}: {other:?}"))),
        }
    }

    pub fn apply(&self, s: f64) -> Result<f64> {
        self.apply_timed(s).map(|r| r.0)
    }
}

/// Fixed point of `map` in `window`: bisection on `map(s) - s` when it changes sign
/// over the window, plain iteration from the midpoint otherwise.
pub fn fixed_point(map: &dyn Fn(f64) -> Result<f64>, window: (f64, f64), tol: f64) -> Result<f64> {
    let (mut a, mut b) = window;
    let g = |s: f64| map(s).map(|v| v - s);
    let (ga, gb) = (g(a)?, g(b)?);
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if ga.signum() != gb.signum() {
        let sa = ga.signum();
        while b - a > tol {
            let m = 0.5 * (a + b);
            let gm = g(m)?;
            if gm == 0.0 {
                return Ok(m);
            }
            if gm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        return Ok(0.5 * (a + b));
    }
    let mut s = 0.5 * (a + b);
    for _ in 0..500 {
        let n = map(s)?;
        if (n - s).abs() <= tol {
            return Ok(n);
        }
        s = n;
    }
    Err(Error::NoReturn("fixed-point iteration did not settle".into()))
}

/// Crossings of a periodic orbit with two sections: the return-map fixed point on
/// `sec_a` searched in `window`, and the first point the flow from it reaches on `sec_b`.
pub fn cycle_crossings(
    h: &HybridAutomaton,
    sec_a: Section,
    sec_b: Section,
    window: (f64, f64),
    cfg: &SimConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let map = PoincareMap::new(h, sec_a, cfg.clone());
    let s = fixed_point(&|s| map.apply(s), window, 1e-10)?;
    let qa = sec_a.point(s, h.dim());
    let watch = Watch { sections: vec![sec_b], stop: Some((0, 1, None)) };
    let cfg = SimConfig { record_samples: false, ..cfg.clone() };
    let r = simulate_watch(h, &start_on(h, qa.clone())?, &cfg, &watch)?;
    match (&r.status, r.section_crossings.last()) {
        (SimStatus::SectionReached { .. }, Some(c)) => Ok((qa, c.point.clone())),
        (st, _) => Err(Error::NoReturn(format!("cycle never reaches the second section: {st:?}"))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionEntry {
    pub p0: Vec<f64>,
    pub d0: f64,
    pub p1: Vec<f64>,
    /// Largest distance to the reference point over the section points within
    /// `eps` of the reached point.
    pub d1: f64,
    pub contracts: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub eps: f64,
    pub qa: Vec<f64>,
    pub qb: Vec<f64>,
    pub entries: Vec<ContractionEntry>,
    /// Samples left out, with the reason.
    pub excluded: Vec<(Vec<f64>, String)>,
}

impl ContractionReport {
    pub fn all_contract(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.contracts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// For every sample position on `sec_a`, flow to `sec_b` and compare the distance
/// to the reference crossing before and after, with the reached point inflated
/// by an `eps`-ball along `sec_b`. Samples closer than `2 eps` to `qa` (or on it) are excluded.
#[allow(clippy::too_many_arguments)]
pub fn contraction_scan(
    h: &HybridAutomaton,
    sec_a: Section,
    sec_b: Section,
    qa: &[f64],
    qb: &[f64],
    eps: f64,
    samples: &[f64],
    cfg: &SimConfig,
) -> ContractionReport {
    let cfg = SimConfig { record_samples: false, ..cfg.clone() };
    let results: Vec<std::result::Result<ContractionEntry, (Vec<f64>, String)>> = samples
        .par_iter()
        .map(|&s| {
            let p0 = sec_a.point(s, h.dim());
            let d0 = dist(&p0, qa);
            if !(d0 > 2.0 * eps) || d0 == 0.0 {
                return Err((p0, format!("d0 = {d0} is not above 2 eps")));
            }
            let start = start_on(h, p0.clone()).map_err(|e| (p0.clone(), e.to_string()))?;
            let watch = Watch { sections: vec![sec_b], stop: Some((0, 1, None)) };
            let r = simulate_watch(h, &start, &cfg, &watch).map_err(|e| (p0.clone(), e.to_string()))?;
            let c = match (&r.status, r.section_crossings.last()) {
                (SimStatus::SectionReached { .. }, Some(c)) => c,
                (st, _) => return Err((p0, format!("never reached the target section: {st:?}"))),
            };
            let d1 = dist(&c.point, qb) + eps;
            Ok(ContractionEntry { p0, d0, p1: c.point.clone(), d1, contracts: d1 < d0 })
        })
        .collect();
    let mut report = ContractionReport { eps, qa: qa.to_vec(), qb: qb.to_vec(), entries: Vec::new(), excluded: Vec::new() };
    for r in results {
        match r {
            Ok(e) => report.entries.push(e),
            Err(x) => report.excluded.push(x),
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Attractor {
    FixedPoint { point: Vec<f64> },
    LimitCycle { period: f64, waypoints: Vec<Vec<f64>> },
    Divergent,
    Undecided,
}

/// Classify the long-run behaviour from `s0` by looking at the last half of
/// the trajectory: a fixed point if it stays within `tol` of its end point, a
/// limit cycle if two successive upward crossings of a mid-level line return
/// within `tol` of each other.
pub fn classify_attractor(h: &HybridAutomaton, s0: &HybridState, cfg: &SimConfig, tol: f64) -> Result<Attractor> {
    let cfg = SimConfig { record_samples: true, ..cfg.clone() };
    let r = simulate(h, s0, &cfg)?;
    if matches!(r.status, SimStatus::Diverged { .. }) {
        return Ok(Attractor::Divergent);
    }
    let samples = &r.samples;
    let Some(last) = samples.last() else { return Ok(Attractor::Undecided) };
    let t_cut = r.time * 0.5;
    let tail: Vec<&super::Sample> = samples.iter().filter(|s| s.time >= t_cut).collect();
    if tail.len() < 2 {
        return Ok(Attractor::Undecided);
    }
    if tail.iter().all(|s| dist(&s.x, &last.x) <= tol) {
        return Ok(Attractor::FixedPoint { point: last.x.clone() });
    }
    if h.dim() < 2 {
        return Ok(Attractor::Undecided);
    }
    let axis = 1;
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.x[axis]), b.max(s.x[axis])));
    let level = 0.5 * (lo + hi);
    let mut ups: Vec<(f64, Vec<f64>, usize)> = Vec::new();
    for (k, w) in tail.windows(2).enumerate() {
        let (g0, g1) = (w[0].x[axis] - level, w[1].x[axis] - level);
        if g0 < 0.0 && g1 >= 0.0 {
            let f = g0 / (g0 - g1);
            let p: Vec<f64> = w[0].x.iter().zip(&w[1].x).map(|(a, b)| a + f * (b - a)).collect();
            ups.push((w[0].time + f * (w[1].time - w[0].time), p, k));
        }
    }
    if ups.len() >= 2 {
        let (a, b) = (&ups[ups.len() - 2], &ups[ups.len() - 1]);
        let period = b.0 - a.0;
        if period > 0.0 && dist(&a.1, &b.1) < tol {
            let span = &tail[a.2..=b.2];
            let stride = (span.len() / 200).max(1);
            let waypoints = span.iter().step_by(stride).map(|s| s.x.clone()).collect();
            return Ok(Attractor::LimitCycle { period, waypoints });
        }
    }
    Ok(Attractor::Undecided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;
    use crate::hybrid::{FlowSpec, Location};
    use crate::formula::Formula;
    use crate::models::{taylor_automaton, OscillatorParams};

    #[test]
    fn rotation_return_map_is_identity() {
        let flow = FlowSpec::Affine { a: vec![vec![rat(0, 1), rat(-1, 1)], vec![rat(1, 1), rat(0, 1)]], b: vec![rat(0, 1), rat(0, 1)] };
        let loc = Location { name: "rot".into(), invariant: Formula::tt(), flow };
        let h = HybridAutomaton::new(vec!["x".into(), "y".into()], vec![loc], vec![]).unwrap();
        let map = PoincareMap::new(&h, Section::new(1, 0.0, 0, true), SimConfig { step: 1e-2, horizon: 20.0, ..SimConfig::default() });
        for s in [0.5, 1.0, 2.5] {
            let (v, t) = map.apply_timed(s).unwrap();
            assert!((v - s).abs() < 1e-9, "{s} -> {v}");
            assert!((t - std::f64::consts::TAU).abs() < 1e-9);
        }
    }

    #[test]
    fn taylor_quarter_crossing() {
        let h = taylor_automaton(&OscillatorParams::default()).unwrap();
        let q0 = 3.0 + 17f64.sqrt();
        let watch = Watch { sections: vec![Section::new(0, 2.0, 1, true)], stop: Some((0, 1, None)) };
        let s0 = start_on(&h, vec![q0, 2.0]).unwrap();
        let r = simulate_watch(&h, &s0, &SimConfig::default(), &watch).unwrap();
        let y = r.section_crossings[0].point[1];
        assert!((y - (6.0 - 8.0 / q0)).abs() < 1e-9, "{y}");
    }
}
