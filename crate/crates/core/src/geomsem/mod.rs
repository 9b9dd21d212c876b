//! Grid oracle for the standard and sphere semantics of low-dimensional formulas.
//!
//! Regions live on a uniform grid over a box. A cell stands for its center point
//! when a `<` atom or a ball membership is tested; `=` atoms use a sign-change test
//! over the cell corners so that curves and points stay visible.
//!
//! Quantified variables range over a bounded sampled interval. For a bound
//! variable the oracle uses, in order: an explicit entry of [`Grid::bound`], the
//! axis of a grid variable of the same name, or the axis of the grid variable whose
//! name is the stem of the bound name (`x_3` inherits from `x`). Ball patterns
//! `exists W0 (A(W0) and |W0 - W| < e)` and `forall W1 (not |W0 - W1| < e or B(W1))`
//! are evaluated as dilations and erosions instead of materialising the auxiliary
//! axes.

mod morph;
mod tensor;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{fresh_stem, rat_to_f64, sq_dist, Atom, Formula, Poly, Rel};

pub use morph::{dilate_edt, dilate_stencil, distance_sq, erode_edt, erode_stencil, hausdorff_cells, open_edt};
pub use tensor::{Tensor, MAX_CELLS};

/// Highest number of free variables a region may have.
pub const MAX_DIM: usize = 3;

/// Uniform partition of `[lo, hi]` into `cells` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Axis> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Malformed(format!("degenerate interval [{lo}, {hi}]")));
        }
        if cells == 0 {
            return Err(Error::Malformed("an axis needs at least one cell".into()));
        }
        Ok(Axis { lo, hi, cells })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    /// Lower edge of cell `i`; `edge(cells)` is `hi`.
    pub fn edge(&self, i: usize) -> f64 {
        if i >= self.cells {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    /// Cell containing `x`, if inside the half-open interval `[lo, hi)`.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if x < self.lo || x >= self.hi {
            return None;
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.cells - 1))
    }
}

/// Distance used for the balls of the sphere semantics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Max-norm; balls are axis-aligned cubes.
    Chebyshev,
}

impl Metric {
    fn dilate(self, data: &[bool], axes: &[Axis], r: f64) -> Vec<bool> {
        match self {
            Metric::Euclidean => dilate_edt(data, axes, r),
            Metric::Chebyshev => cube_dilate(data, axes, r),
        }
    }

    fn erode(self, data: &[bool], axes: &[Axis], r: f64) -> Vec<bool> {
        match self {
            Metric::Euclidean => erode_edt(data, axes, r),
            Metric::Chebyshev => {
                let comp: Vec<bool> = data.iter().map(|b| !b).collect();
                cube_dilate(&comp, axes, r).into_iter().map(|b| !b).collect()
            }
        }
    }

    fn open(self, data: &[bool], axes: &[Axis], r: f64) -> Vec<bool> {
        self.dilate(&self.erode(data, axes, r), axes, r)
    }
}

/// Separable window dilation: an open cube of half-width `r`.
fn cube_dilate(data: &[bool], axes: &[Axis], r: f64) -> Vec<bool> {
    let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
    let mut cur = data.to_vec();
    let mut stride = cur.len();
    for (d, ax) in axes.iter().enumerate() {
        let n = dims[d];
        stride /= n;
        let mut m = (r / ax.width()).floor() as usize;
        while m > 0 && m as f64 * ax.width() >= r {
            m -= 1;
        }
        let mut next = vec![false; cur.len()];
        for (flat, out) in next.iter_mut().enumerate() {
            let i = (flat / stride) % n;
            let base = flat - i * stride;
            let lo = i.saturating_sub(m);
            let hi = (i + m).min(n - 1);
            *out = (lo..=hi).any(|j| cur[base + j * stride]);
        }
        cur = next;
    }
    cur
}

/// The evaluation frame: named free variables with their axes, and the sampled
/// domains of quantified variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub names: Vec<String>,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub bound: BTreeMap<String, Axis>,
}

impl Grid {
    pub fn new(names: &[&str], axes: Vec<Axis>) -> Result<Grid> {
        if names.len() != axes.len() {
            return Err(Error::Malformed("one axis per grid variable".into()));
        }
        if names.is_empty() || names.len() > MAX_DIM {
            return Err(Error::Unsupported(format!(
                "grid dimension {} outside 1..={MAX_DIM}",
                names.len()
            )));
        }
        let uniq: BTreeSet<&&str> = names.iter().collect();
        if uniq.len() != names.len() {
            return Err(Error::Malformed("duplicate grid variable".into()));
        }
        Ok(Grid { names: names.iter().map(|s| s.to_string()).collect(), axes, bound: BTreeMap::new() })
    }

    /// Same interval and resolution on every axis.
    pub fn cube(names: &[&str], lo: f64, hi: f64, cells: usize) -> Result<Grid> {
        let ax = Axis::new(lo, hi, cells)?;
        Grid::new(names, vec![ax; names.len()])
    }

    pub fn with_bound(mut self, var: &str, axis: Axis) -> Grid {
        self.bound.insert(var.to_string(), axis);
        self
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn empty_region(&self) -> GridRegion {
        let n = self.axes.iter().map(|a| a.cells).product();
        GridRegion { names: self.names.clone(), axes: self.axes.clone(), bits: vec![false; n] }
    }

    fn axis_of(&self, name: &str) -> Option<&Axis> {
        self.names.iter().position(|n| n == name).map(|i| &self.axes[i])
    }

    fn default_domain(&self, v: &str) -> Result<Axis> {
        if let Some(a) = self.bound.get(v).or_else(|| self.axis_of(v)) {
            return Ok(a.clone());
        }
        let stem = fresh_stem(v);
        if let Some(a) = self.bound.get(stem).or_else(|| self.axis_of(stem)) {
            return Ok(a.clone());
        }
        Err(Error::Unsupported(format!("no bounded sampling interval for quantified variable `{v}`")))
    }

    fn check(&self, f: &Formula) -> Result<()> {
        if !f.is_well_formed() {
            return Err(Error::Malformed("formula is not well formed".into()));
        }
        let free = f.free_vars();
        if free.len() > MAX_DIM {
            return Err(Error::Unsupported(format!("{} free variables, at most {MAX_DIM} supported", free.len())));
        }
        for v in &free {
            if self.axis_of(v).is_none() {
                return Err(Error::Malformed(format!("free variable `{v}` is not a grid axis")));
            }
        }
        Ok(())
    }

    fn region_from(&self, t: &Tensor) -> Result<GridRegion> {
        let mut sorted = self.names.clone();
        sorted.sort();
        let axes: Vec<Axis> = sorted.iter().map(|n| self.axis_of(n).cloned().expect("grid axis")).collect();
        let full = t.broadcast(&sorted, &axes)?.permute(&self.names)?;
        Ok(GridRegion { names: self.names.clone(), axes: self.axes.clone(), bits: full.data })
    }
}

/// Occupancy bitmap over the grid cells, row-major with the first variable slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRegion {
    pub names: Vec<String>,
    pub axes: Vec<Axis>,
    pub bits: Vec<bool>,
}

/// Ball `B(center, radius)` in the metric of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl EpsilonBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<EpsilonBall> {
        if !(radius > 0.0) {
            return Err(Error::Malformed(format!("ball radius must be positive, got {radius}")));
        }
        Ok(EpsilonBall { center, radius })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.center.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < self.radius * self.radius
    }
}

impl GridRegion {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cells).collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::width).product()
    }

    /// Lebesgue measure of the union of marked cells.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.cell_volume()
    }

    fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.dims()).fold(0, |acc, (i, n)| acc * n + i)
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut idx = vec![0; dims.len()];
        for d in (0..dims.len()).rev() {
            idx[d] = flat % dims[d];
            flat /= dims[d];
        }
        idx
    }

    pub fn center_of(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat).iter().zip(&self.axes).map(|(i, a)| a.center(*i)).collect()
    }

    /// Whether the cell containing `p` is marked; `false` outside the box.
    pub fn contains_point(&self, p: &[f64]) -> bool {
        let idx: Option<Vec<usize>> = p.iter().zip(&self.axes).map(|(x, a)| a.index_of(*x)).collect();
        idx.map(|i| self.bits[self.index(&i)]).unwrap_or(false)
    }

    /// Flat index of the cell containing `p`, if inside the box.
    pub fn cell_of(&self, p: &[f64]) -> Option<usize> {
        let idx: Option<Vec<usize>> = p.iter().zip(&self.axes).map(|(x, a)| a.index_of(*x)).collect();
        idx.map(|i| self.index(&i))
    }

    /// Mark the cell containing `p`; `false` when `p` is outside the box.
    pub fn mark(&mut self, p: &[f64]) -> bool {
        match self.cell_of(p) {
            Some(i) => {
                self.bits[i] = true;
                true
            }
            None => false,
        }
    }

    pub fn marked_centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| self.center_of(i))
    }

    fn same_frame(&self, other: &GridRegion) -> Result<()> {
        if self.names != other.names || self.axes != other.axes {
            return Err(Error::Malformed("regions live on different grids".into()));
        }
        Ok(())
    }

    pub fn union(&self, other: &GridRegion) -> Result<GridRegion> {
        self.same_frame(other)?;
        Ok(self.with_bits(self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect()))
    }

    pub fn intersection(&self, other: &GridRegion) -> Result<GridRegion> {
        self.same_frame(other)?;
        Ok(self.with_bits(self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect()))
    }

    pub fn complement(&self) -> GridRegion {
        self.with_bits(self.bits.iter().map(|b| !b).collect())
    }

    pub fn is_subset(&self, other: &GridRegion) -> Result<bool> {
        self.same_frame(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b))
    }

    pub fn is_disjoint(&self, other: &GridRegion) -> Result<bool> {
        self.same_frame(other)?;
        Ok(!self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b))
    }

    fn with_bits(&self, bits: Vec<bool>) -> GridRegion {
        GridRegion { names: self.names.clone(), axes: self.axes.clone(), bits }
    }

    /// Symmetric Hausdorff distance between marked cell sets, in cells.
    pub fn hausdorff_cells(&self, other: &GridRegion) -> Result<f64> {
        self.same_frame(other)?;
        Ok(hausdorff_cells(&self.bits, &other.bits, &self.dims()))
    }

    /// Maximal runs of marked cells of a 1-D region, as `(lo, hi)` edge pairs.
    pub fn intervals(&self) -> Result<Vec<(f64, f64)>> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("intervals are only defined for 1-D regions".into()));
        }
        let ax = &self.axes[0];
        let mut out = Vec::new();
        let mut start = None;
        for i in 0..=ax.cells {
            let on = i < ax.cells && self.bits[i];
            match (on, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((ax.edge(s), ax.edge(i)));
                    start = None;
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// Binary PGM (P5), marked cells black. 2-D regions put the first variable on
    /// the horizontal axis with the second increasing upwards.
    pub fn to_pgm(&self) -> Result<Vec<u8>> {
        let (w, h) = match self.dims().as_slice() {
            [n] => (*n, 1),
            [n, m] => (*n, *m),
            _ => return Err(Error::Unsupported("PGM export needs a 1-D or 2-D region".into())),
        };
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for row in 0..h {
            let j = h - 1 - row;
            for i in 0..w {
                let on = if h == 1 { self.bits[i] } else { self.bits[i * h + j] };
                out.push(if on { 0 } else { 255 });
            }
        }
        Ok(out)
    }

    /// One line per marked cell center, with a header naming the variables.
    pub fn to_csv(&self) -> String {
        let mut s = self.names.join(",");
        s.push('\n');
        for c in self.marked_centers() {
            let row: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Squared-distance atom `sum (a_i - b_i)^2 < c` with the `a_i` drawn from `inner`:
/// returns the pairs `(a_i, b_i)` and the radius `sqrt(c)`.
fn ball_atom(f: &Formula, inner: &[String]) -> Option<(Vec<(String, String)>, f64)> {
    let Formula::Atom(atom) = f else { return None };
    if atom.rel != Rel::Lt {
        return None;
    }
    let diff = atom.diff();
    let c = -diff.constant_term();
    if !c.is_positive() {
        return None;
    }
    let mut pairs = Vec::new();
    for a in inner {
        // the partner is the other variable of the unique `a*b` cross term
        let mut partner = None;
        for (m, _) in diff.terms() {
            if m.len() == 2 && m.contains_key(a) {
                let b = m.keys().find(|k| *k != a)?;
                if partner.replace(b.clone()).is_some() {
                    return None;
                }
            }
        }
        let b = partner?;
        if inner.contains(&b) {
            return None;
        }
        pairs.push((a.clone(), b));
    }
    let bs: BTreeSet<&String> = pairs.iter().map(|(_, b)| b).collect();
    if bs.len() != pairs.len() {
        return None;
    }
    let pa: Vec<Poly> = pairs.iter().map(|(a, _)| Poly::var(a)).collect();
    let pb: Vec<Poly> = pairs.iter().map(|(_, b)| Poly::var(b)).collect();
    let expected = &sq_dist(&pa, &pb) - &Poly::constant(c.clone());
    (expected == diff).then(|| (pairs, rat_to_f64(&c).sqrt()))
}

fn quantifier_chain(f: &Formula, universal: bool) -> (Vec<String>, &Formula) {
    let mut vars = Vec::new();
    let mut cur = f;
    loop {
        match (cur, universal) {
            (Formula::Exists(v, b), false) | (Formula::Forall(v, b), true) if !vars.contains(v) => {
                vars.push(v.clone());
                cur = b;
            }
            _ => return (vars, cur),
        }
    }
}

fn flatten<'a>(f: &'a Formula, conj: bool, out: &mut Vec<&'a Formula>) {
    match (f, conj) {
        (Formula::And(a, b), true) | (Formula::Or(a, b), false) => {
            flatten(a, conj, out);
            flatten(b, conj, out);
        }
        _ => out.push(f),
    }
}

/// A recognised ball pattern: the remaining body, the `(bound, partner)` pairs and the radius.
struct BallPattern {
    rest: Formula,
    pairs: Vec<(String, String)>,
    radius: f64,
}

fn match_ball(f: &Formula, universal: bool) -> Option<BallPattern> {
    let (vars, body) = quantifier_chain(f, universal);
    if vars.is_empty() {
        return None;
    }
    let mut parts = Vec::new();
    flatten(body, !universal, &mut parts);
    for (k, p) in parts.iter().enumerate() {
        let cand = if universal {
            match p {
                Formula::Not(inner) => inner.as_ref(),
                _ => continue,
            }
        } else {
            p
        };
        let Some((pairs, radius)) = ball_atom(cand, &vars) else { continue };
        let others: Vec<Formula> = parts.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, f)| (*f).clone()).collect();
        let rest = if universal { Formula::or_all(others) } else { Formula::and_all(others) };
        let rest_free = rest.free_vars();
        if pairs.iter().any(|(_, b)| rest_free.contains(b)) {
            continue;
        }
        return Some(BallPattern { rest, pairs, radius });
    }
    None
}

struct Scope<'g> {
    grid: &'g Grid,
    local: Vec<(String, Axis)>,
}

impl Scope<'_> {
    fn domain(&self, v: &str) -> Result<Axis> {
        if let Some((_, a)) = self.local.iter().rev().find(|(n, _)| n == v) {
            return Ok(a.clone());
        }
        self.grid.default_domain(v)
    }

    fn atom(&self, a: &Atom) -> Result<Tensor> {
        Tensor::atom(a, &|v| self.domain(v))
    }

    fn with<T>(&mut self, binds: Vec<(String, Axis)>, body: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let n = binds.len();
        self.local.extend(binds);
        let out = body(self);
        self.local.truncate(self.local.len() - n);
        out
    }
}

fn std_tensor(f: &Formula, sc: &mut Scope) -> Result<Tensor> {
    if let Some(p) = match_ball(f, false).or_else(|| match_ball(f, true)) {
        let universal = matches!(f, Formula::Forall(..));
        let binds = p.pairs.iter().map(|(a, b)| Ok((a.clone(), sc.domain(b)?))).collect::<Result<Vec<_>>>()?;
        let inner = sc.with(binds, |sc| std_tensor(&p.rest, sc))?;
        // bound variables of the chain that `rest` does not mention are vacuous
        let map: BTreeMap<String, String> = p.pairs.iter().cloned().collect();
        let moved = inner.rename(&map)?;
        let sel: Vec<String> = p.pairs.iter().map(|(_, b)| b.clone()).filter(|b| moved.vars.contains(b)).collect();
        let r = p.radius;
        return if universal {
            moved.map_slices(&sel, &|d, ax| erode_stencil(d, ax, r))
        } else {
            moved.map_slices(&sel, &|d, ax| dilate_stencil(d, ax, r))
        };
    }
    match f {
        Formula::Atom(a) => sc.atom(a),
        Formula::And(a, b) => std_tensor(a, sc)?.and(&std_tensor(b, sc)?),
        Formula::Or(a, b) => std_tensor(a, sc)?.or(&std_tensor(b, sc)?),
        Formula::Not(a) => Ok(std_tensor(a, sc)?.not()),
        Formula::Exists(v, b) | Formula::Forall(v, b) => {
            let ax = sc.grid.default_domain(v)?;
            let t = sc.with(vec![(v.clone(), ax)], |sc| std_tensor(b, sc))?;
            Ok(t.reduce(v, matches!(f, Formula::Forall(..))))
        }
    }
}

/// Standard semantics on the grid.
pub fn std_eval(f: &Formula, grid: &Grid) -> Result<GridRegion> {
    grid.check(f)?;
    let mut sc = Scope { grid, local: Vec::new() };
    let t = std_tensor(f, &mut sc)?;
    grid.region_from(&t)
}

fn sphere_tensor(f: &Formula, w: &BTreeSet<String>, r: f64, metric: Metric, sc: &mut Scope) -> Result<Tensor> {
    let morph_axes = |t: &Tensor| -> Vec<String> { t.vars.iter().filter(|v| w.contains(*v)).cloned().collect() };
    match f {
        Formula::Atom(a) => {
            let t = sc.atom(a)?;
            let sel = morph_axes(&t);
            t.map_slices(&sel, &|d, ax| metric.dilate(d, ax, r))
        }
        Formula::Or(a, b) => sphere_tensor(a, w, r, metric, sc)?.or(&sphere_tensor(b, w, r, metric, sc)?),
        Formula::And(a, b) => {
            let t = sphere_tensor(a, w, r, metric, sc)?.and(&sphere_tensor(b, w, r, metric, sc)?)?;
            let sel = morph_axes(&t);
            t.map_slices(&sel, &|d, ax| metric.open(d, ax, r))
        }
        Formula::Not(a) => {
            let t = sphere_tensor(a, w, r, metric, sc)?.not();
            let sel = morph_axes(&t);
            t.map_slices(&sel, &|d, ax| metric.open(d, ax, r))
        }
        Formula::Exists(v, b) | Formula::Forall(v, b) => {
            // the bound variable is instantiated, so it is a constant for the body
            let universal = matches!(f, Formula::Forall(..));
            let mut inner_w = w.clone();
            inner_w.remove(v);
            let ax = sc.grid.default_domain(v)?;
            let t = sc.with(vec![(v.clone(), ax)], |sc| sphere_tensor(b, &inner_w, r, metric, sc))?;
            let t = t.reduce(v, universal);
            if universal {
                let sel = morph_axes(&t);
                t.map_slices(&sel, &|d, ax| metric.open(d, ax, r))
            } else {
                Ok(t)
            }
        }
    }
}

/// Sphere semantics on the grid, with Euclidean balls.
pub fn sphere_eval(f: &Formula, eps: f64, grid: &Grid) -> Result<GridRegion> {
    sphere_eval_with(f, eps, grid, Metric::Euclidean)
}

pub fn sphere_eval_with(f: &Formula, eps: f64, grid: &Grid, metric: Metric) -> Result<GridRegion> {
    sphere_eval_params(f, eps, grid, metric, &[])
}

/// Sphere semantics where the grid variables in `params` are symbolic constants:
/// the balls only extend along the other axes.
pub fn sphere_eval_params(f: &Formula, eps: f64, grid: &Grid, metric: Metric, params: &[&str]) -> Result<GridRegion> {
    grid.check(f)?;
    if !(eps > 0.0) {
        return Err(Error::Malformed(format!("epsilon must be positive, got {eps}")));
    }
    let w: BTreeSet<String> = grid.names.iter().filter(|n| !params.contains(&n.as_str())).cloned().collect();
    let mut sc = Scope { grid, local: Vec::new() };
    let t = sphere_tensor(f, &w, eps, metric, &mut sc)?;
    grid.region_from(&t)
}

/// A center whose `eps`-ball lies inside `region` (clipped to the grid box), if any.
pub fn contains_ball(region: &GridRegion, eps: f64) -> Option<Vec<f64>> {
    contains_ball_with(region, eps, Metric::Euclidean)
}

pub fn contains_ball_with(region: &GridRegion, eps: f64, metric: Metric) -> Option<Vec<f64>> {
    let core = metric.erode(&region.bits, &region.axes, eps);
    let dims = region.dims();
    let strides: Vec<usize> = (0..dims.len()).map(|d| dims[d + 1..].iter().product()).collect();
    // prefer the deepest point so the witness is stable under small grid changes
    let dist = distance_sq(&core.iter().map(|b| !b).collect::<Vec<_>>(), &region.axes);
    let best = core
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .max_by(|(i, _), (j, _)| dist[*i].total_cmp(&dist[*j]).then(j.cmp(i)))?
        .0;
    Some(
        (0..dims.len())
            .map(|d| region.axes[d].center((best / strides[d]) % dims[d]))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;

    fn x() -> Poly {
        Poly::var("x")
    }

    fn line() -> Grid {
        Grid::cube(&["x"], -5.0, 5.0, 1000).unwrap()
    }

    #[test]
    fn point_atom_occupies_one_cell() {
        let r = std_eval(&Formula::eq(x(), Poly::zero()), &line()).unwrap();
        assert_eq!(r.count(), 1);
        assert!(r.contains_point(&[0.0]));
    }

    #[test]
    fn disk_area() {
        let g = Grid::cube(&["x", "y"], -2.0, 2.0, 400).unwrap();
        let y = Poly::var("y");
        let f = Formula::lt(&(&x() * &x()) + &(&y * &y), Poly::int(1));
        let r = std_eval(&f, &g).unwrap();
        // one boundary layer: circumference times one cell width
        let layer = 2.0 * std::f64::consts::PI * g.axes[0].width();
        assert!((r.measure() - std::f64::consts::PI).abs() < layer);
    }

    #[test]
    fn eliminated_parameter() {
        let t = Poly::var("t");
        let f = Formula::exists(
            "t",
            Formula::and_all([
                Formula::gt(t.clone(), Poly::zero()),
                Formula::eq(x(), &Poly::int(2) * &t),
                Formula::lt(x(), Poly::int(4)),
            ]),
        );
        let g = line().with_bound("t", Axis::new(-5.0, 5.0, 1000).unwrap());
        let r = std_eval(&f, &g).unwrap();
        let iv = r.intervals().unwrap();
        assert_eq!(iv.len(), 1);
        let w = g.axes[0].width();
        assert!((iv[0].0 - 0.0).abs() <= w + 1e-9, "{iv:?}");
        assert!((iv[0].1 - 4.0).abs() <= w + 1e-9, "{iv:?}");
    }

    #[test]
    fn unbounded_quantifier_is_rejected() {
        let f = Formula::exists("s", Formula::eq(x(), Poly::var("s")));
        assert!(matches!(std_eval(&f, &line()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn too_many_dimensions() {
        assert!(Grid::cube(&["a", "b", "c", "d"], 0.0, 1.0, 2).is_err());
    }

    fn assert_interval(r: &GridRegion, lo: f64, hi: f64) {
        let iv = r.intervals().unwrap();
        let w = r.axes[0].width();
        assert_eq!(iv.len(), 1, "{iv:?}");
        assert!((iv[0].0 - lo).abs() <= w + 1e-9 && (iv[0].1 - hi).abs() <= w + 1e-9, "{iv:?}");
    }

    #[test]
    fn sphere_of_point_is_open_interval() {
        let r = sphere_eval(&Formula::eq(x(), Poly::zero()), 1.0, &line()).unwrap();
        assert_interval(&r, -1.0, 1.0);
    }

    #[test]
    fn sphere_conjunction_too_thin() {
        let f = Formula::and(Formula::eq(x(), Poly::zero()), Formula::eq(x(), Poly::ratio(1, 2)));
        assert!(sphere_eval(&f, 1.0, &line()).unwrap().is_empty());
    }

    #[test]
    fn sphere_negation_of_point() {
        let r = sphere_eval(&Formula::not(Formula::eq(x(), Poly::zero())), 1.0, &line()).unwrap();
        let iv = r.intervals().unwrap();
        let w = r.axes[0].width();
        assert_eq!(iv.len(), 2, "{iv:?}");
        assert!((iv[0].0 + 5.0).abs() <= w && (iv[0].1 + 1.0).abs() <= w, "{iv:?}");
        assert!((iv[1].0 - 1.0).abs() <= w && (iv[1].1 - 5.0).abs() <= w, "{iv:?}");
    }

    #[test]
    fn ball_patterns_match_brute_force() {
        // exists w (w = 0 and (w - x)^2 < 1), with w sampled explicitly
        let w = Poly::var("w_0");
        let f = Formula::exists(
            "w_0",
            Formula::and(Formula::eq(w.clone(), Poly::zero()), Formula::dist_lt(std::slice::from_ref(&w), &[x()], &rat(1, 1))),
        );
        let ax = Axis::new(-3.0, 3.0, 120).unwrap();
        let g = Grid::new(&["x"], vec![ax.clone()]).unwrap().with_bound("w_0", ax.clone()).with_bound("w_1", ax);
        let fast = std_eval(&f, &g).unwrap();
        // same formula with the pattern hidden behind a double negation
        let hidden = Formula::exists(
            "w_0",
            Formula::not(Formula::not(Formula::and(
                Formula::eq(w.clone(), Poly::zero()),
                Formula::dist_lt(std::slice::from_ref(&w), &[x()], &rat(1, 1)),
            ))),
        );
        let slow = std_eval(&hidden, &g).unwrap();
        assert_eq!(fast, slow);
        assert_interval(&fast, -1.0, 1.0);

        let u = Poly::var("w_1");
        let g2 = Formula::forall(
            "w_1",
            Formula::implies(Formula::dist_lt(&[x()], std::slice::from_ref(&u), &rat(1, 2)), Formula::lt(&u * &u, Poly::int(1))),
        );
        let hidden2 = Formula::forall(
            "w_1",
            Formula::not(Formula::not(Formula::implies(
                Formula::dist_lt(&[x()], std::slice::from_ref(&u), &rat(1, 2)),
                Formula::lt(&u * &u, Poly::int(1)),
            ))),
        );
        let a = std_eval(&g2, &g).unwrap();
        let b = std_eval(&hidden2, &g).unwrap();
        assert_eq!(a, b);
        assert_interval(&a, -0.5, 0.5);
    }

    #[test]
    fn witness_ball() {
        let g = Grid::cube(&["x"], -3.0, 3.0, 600).unwrap();
        let r = std_eval(&Formula::lt(&x() * &x(), Poly::int(1)), &g).unwrap();
        let c = contains_ball(&r, 0.5).unwrap();
        assert!(c[0].abs() < 0.5);
        assert!(contains_ball(&r, 1.5).is_none());
    }

    #[test]
    fn chebyshev_balls_are_squares() {
        let g = Grid::cube(&["x", "y"], -2.0, 2.0, 80).unwrap();
        let p = Formula::eq(&(&x() * &x()) + &(&Poly::var("y") * &Poly::var("y")), Poly::zero());
        let e = sphere_eval_with(&p, 1.0, &g, Metric::Euclidean).unwrap();
        let c = sphere_eval_with(&p, 1.0, &g, Metric::Chebyshev).unwrap();
        assert!(e.is_subset(&c).unwrap());
        assert!(c.contains_point(&[0.9, 0.9]) && !e.contains_point(&[0.9, 0.9]));
    }

    #[test]
    fn exports() {
        let g = Grid::cube(&["x", "y"], 0.0, 1.0, 4).unwrap();
        let r = std_eval(&Formula::lt(Poly::var("x"), Poly::ratio(1, 2)), &g).unwrap();
        let pgm = r.to_pgm().unwrap();
        assert!(pgm.starts_with(b"P5\n4 4\n255\n"));
        assert_eq!(pgm.len(), 11 + 16);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 8);
        assert!(csv.starts_with("x,y\n"));
    }
}
