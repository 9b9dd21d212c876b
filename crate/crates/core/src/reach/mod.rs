//! Reachability under the ε-semantics on a grid, builders for the bounded
//! reachability and convergence sentences, and the bridge to external
//! quantifier-elimination tools.
//!
//! [`eps_reach`] works in sweeps. A sweep flows every pending start state until
//! its invariant is left (or the box, or the horizon), marks the visited cells,
//! and collects the images of the edges enabled along the way. The continuous
//! part is inflated by ε (plus the disturbance level) and clipped to the
//! sphere-evaluated invariant; the edge images become the next starts. For a
//! disturbed automaton the newly covered cells of the disturbance tube are
//! starts as well, since the disturbance may act at any instant.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomsem::{contains_ball, dilate_edt, sphere_eval, Axis, Grid, GridRegion};
use crate::hybrid::{CompiledFlow, HybridAutomaton, HybridState};

mod backend;
mod formulas;

pub use backend::{run_backend, BackendKind, QEBackend, Verdict};
pub use formulas::{bounded_reach_formula, build_convergence_formula, ConvergenceFormula, ConvergenceSpec, HalfPlane, Line};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachConfig {
    pub eps: f64,
    /// Longest time step of a sweep; steps shrink so that no cell is skipped.
    #[serde(default = "default_quantum")]
    pub quantum: f64,
    /// Longest continuous evolution of one sweep.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Maximum number of sweeps.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// `(lo, hi)` per variable.
    pub bounds: Vec<(f64, f64)>,
    /// Cells per axis.
    pub resolution: usize,
}

fn default_quantum() -> f64 {
    0.1
}

fn default_horizon() -> f64 {
    50.0
}

fn default_budget() -> usize {
    200
}

impl ReachConfig {
    pub fn new(eps: f64, bounds: Vec<(f64, f64)>, resolution: usize) -> Self {
        ReachConfig {
            eps,
            quantum: default_quantum(),
            horizon: default_horizon(),
            budget: default_budget(),
            bounds,
            resolution,
        }
    }

    pub fn grid(&self, names: &[String]) -> Result<Grid> {
        if names.len() != self.bounds.len() {
            return Err(Error::Malformed(format!("{} bounds for {} variables", self.bounds.len(), names.len())));
        }
        let axes = self.bounds.iter().map(|(lo, hi)| Axis::new(*lo, *hi, self.resolution)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Grid::new(&refs, axes)
    }

    fn check(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Malformed(format!("epsilon must be positive, got {}", self.eps)));
        }
        if !(self.quantum > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Malformed("quantum and horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// No new start state and nothing new reached.
    Fixpoint,
    /// The newly reached cells contain no ε-ball.
    NoBallGrowth,
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub starts: usize,
    pub new_cells: usize,
    pub reached_cells: usize,
    pub millis: f64,
}

#[derive(Clone, Debug)]
pub struct ReachState {
    /// Sweeps performed.
    pub iteration: usize,
    /// Accumulated region per location.
    pub regions: Vec<GridRegion>,
    /// Cells of the start states queued for the next sweep.
    pub frontier: GridRegion,
    pub reason: Option<Termination>,
    pub history: Vec<IterationStats>,
    pub location_names: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachReport {
    pub eps: f64,
    pub noise: f64,
    pub iterations: usize,
    pub reason: Option<Termination>,
    pub reached_cells: usize,
    pub cells_per_location: Vec<(String, usize)>,
    pub diameter: f64,
    pub history: Vec<IterationStats>,
}

impl ReachState {
    pub fn union(&self) -> GridRegion {
        let mut out = self.frontier.clone();
        out.bits.iter_mut().for_each(|b| *b = false);
        for r in &self.regions {
            for (o, b) in out.bits.iter_mut().zip(&r.bits) {
                *o |= *b;
            }
        }
        out
    }

    pub fn region_of(&self, name: &str) -> Option<&GridRegion> {
        self.location_names.iter().position(|n| n == name).map(|i| &self.regions[i])
    }

    pub fn report(&self, eps: f64, noise: f64) -> ReachReport {
        let u = self.union();
        ReachReport {
            eps,
            noise,
            iterations: self.iteration,
            reason: self.reason,
            reached_cells: u.count(),
            cells_per_location: self.location_names.iter().cloned().zip(self.regions.iter().map(GridRegion::count)).collect(),
            diameter: diameter(&u),
            history: self.history.clone(),
        }
    }
}

/// Largest distance between marked cell centers. Exact up to the cell size:
/// the candidates are the extreme cells along 180 directions (in 2-D; every
/// cell for other dimensions with at most 4096 cells marked).
pub fn diameter(region: &GridRegion) -> f64 {
    let pts: Vec<Vec<f64>> = region.marked_centers().collect();
    let cand: Vec<&Vec<f64>> = if pts.len() > 4096 && region.dim() == 2 {
        let mut keep = HashSet::new();
        for k in 0..180 {
            let a = k as f64 * std::f64::consts::PI / 180.0;
            let (c, s) = (a.cos(), a.sin());
            let proj = |p: &Vec<f64>| p[0] * c + p[1] * s;
            let (mut lo, mut hi) = (0, 0);
            for (i, p) in pts.iter().enumerate() {
                if proj(p) < proj(&pts[lo]) {
                    lo = i;
                }
                if proj(p) > proj(&pts[hi]) {
                    hi = i;
                }
            }
            keep.insert(lo);
            keep.insert(hi);
        }
        keep.into_iter().map(|i| &pts[i]).collect()
    } else {
        pts.iter().collect()
    };
    let mut best = 0.0f64;
    for (i, a) in cand.iter().enumerate() {
        for b in &cand[i + 1..] {
            best = best.max(a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
        }
    }
    best
}

/// Cells visited by one sweep and the edge images met along the way.
struct Sweep {
    location: usize,
    cells: Vec<usize>,
    images: Vec<HybridState>,
}

fn sweep(h: &HybridAutomaton, start: &HybridState, cfg: &ReachConfig, template: &GridRegion) -> Sweep {
    let loc = start.location;
    let flow = h.compiled_flow(loc);
    let cw = template.axes.iter().map(Axis::width).fold(f64::INFINITY, f64::min);
    let mut out = Sweep { location: loc, cells: Vec::new(), images: Vec::new() };
    let mut seen_images: HashSet<(usize, usize)> = HashSet::new();
    let mut visit = |x: &[f64], out: &mut Sweep| -> bool {
        let Some(c) = template.cell_of(x) else { return false };
        if out.cells.last() != Some(&c) {
            out.cells.push(c);
        }
        for (e, edge) in h.outgoing(loc) {
            if h.guard_holds(e, x) {
                let y = h.apply_reset(e, x);
                if let Some(cy) = template.cell_of(&y) {
                    if seen_images.insert((e, cy)) {
                        out.images.push(HybridState::new(edge.target, y));
                    }
                }
            }
        }
        true
    };
    // the sweep follows the undisturbed flow up to the undisturbed boundary, where
    // the guards are met; the widening is covered by the disturbance restarts
    let nominal = |x: &[f64]| h.invariant_holds_with(loc, x, h.tolerance());
    let x0 = start.x.clone();
    // incremental integration for nonlinear fields, closed form otherwise
    let advance = |x: &[f64], t: f64, dt: f64| match flow {
        CompiledFlow::Nonlinear { .. } => flow.flow(x, dt),
        _ => flow.flow(&x0, t + dt),
    };
    if !visit(&x0, &mut out) {
        return out;
    }
    let (mut t, mut x) = (0.0, x0.clone());
    let mut dt = cfg.quantum;
    while t < cfg.horizon {
        dt = dt.min(cfg.horizon - t);
        let mut xn = advance(&x, t, dt);
        while dist(&xn, &x) > 0.5 * cw && dt > 1e-9 {
            dt *= 0.5;
            xn = advance(&x, t, dt);
        }
        if dist(&xn, &x) < 1e-12 {
            break; // at rest
        }
        if !nominal(&xn) {
            let (mut lo, mut hi) = (0.0, dt);
            let mut xl = x.clone();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let xm = advance(&x, t, mid);
                if nominal(&xm) {
                    lo = mid;
                    xl = xm;
                } else {
                    hi = mid;
                }
            }
            visit(&xl, &mut out);
            break;
        }
        t += dt;
        x = xn;
        if !visit(&x, &mut out) {
            break;
        }
        if dist(&advance(&x, t, dt), &x) < 0.25 * cw {
            dt = (dt * 2.0).min(cfg.quantum);
        }
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Grid reachability under the sphere semantics from the start states `init`.
pub fn eps_reach(h: &HybridAutomaton, init: &[HybridState], cfg: &ReachConfig) -> Result<ReachState> {
    cfg.check()?;
    let grid = cfg.grid(h.vars())?;
    let empty = grid.empty_region();
    let noise = h.noise();
    let radius = cfg.eps + noise;
    let inv_eps = h
        .locations()
        .iter()
        .map(|l| sphere_eval(&l.invariant, radius, &grid))
        .collect::<Result<Vec<_>>>()?;
    let nloc = h.locations().len();
    let mut state = ReachState {
        iteration: 0,
        regions: vec![empty.clone(); nloc],
        frontier: empty.clone(),
        reason: None,
        history: Vec::new(),
        location_names: h.locations().iter().map(|l| l.name.clone()).collect(),
    };
    let mut pending: Vec<HybridState> = Vec::new();
    for s in init {
        if s.location >= nloc || s.x.len() != h.dim() {
            return Err(Error::Malformed(format!("start state {s:?} does not fit the automaton")));
        }
        if empty.cell_of(&s.x).is_none() {
            return Err(Error::Malformed(format!("start point {:?} lies outside the analysis box", s.x)));
        }
        pending.push(s.clone());
    }
    let mut swept: HashSet<(usize, usize)> = HashSet::new();
    loop {
        let batch: Vec<HybridState> = pending
            .drain(..)
            .filter(|s| swept.insert((s.location, empty.cell_of(&s.x).expect("start inside the box"))))
            .collect();
        state.frontier = empty.clone();
        if batch.is_empty() {
            state.reason = Some(Termination::Fixpoint);
            break;
        }
        if state.iteration >= cfg.budget {
            for s in &batch {
                state.frontier.mark(&s.x);
            }
            state.reason = Some(Termination::Budget);
            break;
        }
        let clock = Instant::now();
        let sweeps: Vec<Sweep> = batch.par_iter().map(|s| sweep(h, s, cfg, &empty)).collect();
        let mut tubes = vec![vec![false; empty.bits.len()]; nloc];
        for s in &sweeps {
            for &c in &s.cells {
                tubes[s.location][c] = true;
            }
        }
        let posts: Vec<(usize, Vec<bool>, Vec<bool>)> = (0..nloc)
            .into_par_iter()
            .filter(|l| tubes[*l].iter().any(|b| *b))
            .map(|l| {
                let post: Vec<bool> =
                    dilate_edt(&tubes[l], &empty.axes, radius).iter().zip(&inv_eps[l].bits).map(|(a, b)| *a && *b).collect();
                let disturbed = if noise > 0.0 { dilate_edt(&tubes[l], &empty.axes, noise) } else { Vec::new() };
                (l, post, disturbed)
            })
            .collect();
        let before = state.union();
        let mut next: Vec<HybridState> = sweeps.into_iter().flat_map(|s| s.images).collect();
        for s in &next {
            if let Some(c) = empty.cell_of(&s.x) {
                state.regions[s.location].bits[c] = true;
            }
        }
        for (l, post, disturbed) in posts {
            for (i, d) in disturbed.iter().enumerate() {
                if *d && !state.regions[l].bits[i] {
                    let x = empty.center_of(i);
                    if h.invariant_holds(l, &x) {
                        next.push(HybridState::new(l, x));
                    }
                }
            }
            for (o, p) in state.regions[l].bits.iter_mut().zip(&post) {
                *o |= *p;
            }
        }
        let after = state.union();
        let fresh = GridRegion {
            bits: after.bits.iter().zip(&before.bits).map(|(a, b)| *a && !*b).collect(),
            ..after.clone()
        };
        state.iteration += 1;
        state.history.push(IterationStats {
            iteration: state.iteration,
            starts: batch.len(),
            new_cells: fresh.count(),
            reached_cells: after.count(),
            millis: clock.elapsed().as_secs_f64() * 1e3,
        });
        pending = next;
        for s in &pending {
            state.frontier.mark(&s.x);
        }
        if fresh.is_empty() && pending.iter().all(|s| swept.contains(&(s.location, empty.cell_of(&s.x).unwrap_or(usize::MAX)))) {
            state.reason = Some(Termination::Fixpoint);
            break;
        }
        if contains_ball(&fresh, cfg.eps).is_none() {
            state.reason = Some(Termination::NoBallGrowth);
            break;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bouncing_ball, taylor_automaton, OscillatorParams};

    #[test]
    fn empty_start_is_a_fixpoint() {
        let (h, _) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
        let r = eps_reach(&h, &[], &ReachConfig::new(0.5, vec![(-1.0, 11.0), (-15.0, 15.0)], 60)).unwrap();
        assert_eq!(r.reason, Some(Termination::Fixpoint));
        assert_eq!(r.iteration, 0);
        assert!(r.union().is_empty());
    }

    #[test]
    fn ball_stops_growing() {
        let (h, s0) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
        let r = eps_reach(&h, &[s0], &ReachConfig::new(0.5, vec![(-1.0, 11.0), (-15.0, 15.0)], 120)).unwrap();
        assert_eq!(r.reason, Some(Termination::NoBallGrowth), "{:?}", r.history);
        assert!(r.iteration >= 2);
    }

    #[test]
    fn origin_grows_to_an_eps_disc() {
        let h = taylor_automaton(&OscillatorParams::default()).unwrap();
        let zz = h.location_index("zz").unwrap();
        let r = eps_reach(&h, &[HybridState::new(zz, vec![0.0, 0.0])], &ReachConfig::new(0.25, vec![(-10.0, 10.0); 2], 200))
            .unwrap();
        assert!(diameter(&r.union()) >= 0.25);
        assert_eq!(r.reason, Some(Termination::Fixpoint));
    }
}
