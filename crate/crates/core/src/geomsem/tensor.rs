//! Boolean tensors indexed by named grid variables.

use std::collections::BTreeMap;

use super::Axis;
use crate::error::{Error, Result};
use crate::formula::{Atom, Rel};

/// Largest number of cells a single intermediate tensor may hold.
pub const MAX_CELLS: usize = 1 << 26;

/// A boolean array over the product grid of `vars` (sorted by name, row-major,
/// first variable slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub vars: Vec<String>,
    pub axes: Vec<Axis>,
    pub data: Vec<bool>,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

fn check_size(dims: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for d in dims {
        n = n
            .checked_mul(*d)
            .filter(|n| *n <= MAX_CELLS)
            .ok_or_else(|| Error::Unsupported(format!("grid of shape {dims:?} is too large for the oracle")))?;
    }
    Ok(n)
}

impl Tensor {
    pub fn constant(value: bool) -> Tensor {
        Tensor { vars: vec![], axes: vec![], data: vec![value] }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cells).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|b| *b)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Evaluate an atom over the grid of its variables.
    ///
    /// `<` atoms are tested at cell centers. `=` atoms hold on a half-open cell
    /// `[lo, hi)` when the polynomial changes sign strictly between two corners or
    /// vanishes at the lowest corner, so measure-zero sets stay visible on the grid.
    pub fn atom(atom: &Atom, domain: &dyn Fn(&str) -> Result<Axis>) -> Result<Tensor> {
        let vars: Vec<String> = atom.vars().into_iter().collect();
        let axes = vars.iter().map(|v| domain(v)).collect::<Result<Vec<_>>>()?;
        let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
        let n = check_size(&dims)?;
        let poly = atom
            .diff()
            .compile(&vars)
            .ok_or_else(|| Error::Malformed("atom variable ordering".into()))?;
        let st = strides(&dims);
        let k = vars.len();
        let mut data = vec![false; n];
        let mut pt = vec![0.0; k];
        let mut idx = vec![0usize; k];
        for (flat, cell) in data.iter_mut().enumerate() {
            for d in 0..k {
                idx[d] = (flat / st[d]) % dims[d];
            }
            *cell = match atom.rel {
                Rel::Lt => {
                    for d in 0..k {
                        pt[d] = axes[d].center(idx[d]);
                    }
                    poly.eval(&pt) < 0.0
                }
                Rel::Eq => {
                    let (mut neg, mut pos) = (false, false);
                    let mut lowest = 0.0;
                    for corner in 0..(1usize << k) {
                        for d in 0..k {
                            let up = (corner >> d) & 1;
                            pt[d] = axes[d].edge(idx[d] + up);
                        }
                        let v = poly.eval(&pt);
                        if corner == 0 {
                            lowest = v;
                        }
                        neg |= v < 0.0;
                        pos |= v > 0.0;
                    }
                    (neg && pos) || lowest == 0.0
                }
            };
        }
        Ok(Tensor { vars, axes, data })
    }

    /// Reindex onto a superset of variables (sorted), repeating along new axes.
    pub fn broadcast(&self, vars: &[String], axes: &[Axis]) -> Result<Tensor> {
        if vars == self.vars.as_slice() {
            return Ok(self.clone());
        }
        let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
        let n = check_size(&dims)?;
        let st_new = strides(&dims);
        let st_old = strides(&self.dims());
        let map: Vec<Option<usize>> = vars.iter().map(|v| self.vars.iter().position(|o| o == v)).collect();
        for v in &self.vars {
            if !vars.contains(v) {
                return Err(Error::Malformed(format!("broadcast drops variable `{v}`")));
            }
        }
        let mut data = vec![false; n];
        for (flat, cell) in data.iter_mut().enumerate() {
            let mut old = 0;
            for (d, m) in map.iter().enumerate() {
                if let Some(od) = m {
                    old += ((flat / st_new[d]) % dims[d]) * st_old[*od];
                }
            }
            *cell = self.data[old];
        }
        Ok(Tensor { vars: vars.to_vec(), axes: axes.to_vec(), data })
    }

    fn union_frame(a: &Tensor, b: &Tensor) -> Result<(Vec<String>, Vec<Axis>)> {
        let mut m: BTreeMap<String, Axis> = BTreeMap::new();
        for (v, ax) in a.vars.iter().zip(&a.axes).chain(b.vars.iter().zip(&b.axes)) {
            if let Some(prev) = m.get(v) {
                if prev != ax {
                    return Err(Error::Malformed(format!("variable `{v}` used with two different grids")));
                }
            }
            m.insert(v.clone(), ax.clone());
        }
        Ok(m.into_iter().unzip())
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(bool, bool) -> bool) -> Result<Tensor> {
        let (vars, axes) = Tensor::union_frame(self, other)?;
        let a = self.broadcast(&vars, &axes)?;
        let b = other.broadcast(&vars, &axes)?;
        let data = a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor { vars, axes, data })
    }

    pub fn and(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn not(&self) -> Tensor {
        Tensor { vars: self.vars.clone(), axes: self.axes.clone(), data: self.data.iter().map(|b| !b).collect() }
    }

    /// Existential (`any`) or universal (`all`) reduction along `var`.
    pub fn reduce(&self, var: &str, universal: bool) -> Tensor {
        let Some(pos) = self.vars.iter().position(|v| v == var) else {
            return self.clone();
        };
        let dims = self.dims();
        let outer: usize = dims[..pos].iter().product();
        let n = dims[pos];
        let inner: usize = dims[pos + 1..].iter().product();
        let mut data = vec![universal; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    let v = self.data[base + i];
                    let slot = &mut data[o * inner + i];
                    if universal {
                        *slot &= v;
                    } else {
                        *slot |= v;
                    }
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut axes = self.axes.clone();
        vars.remove(pos);
        axes.remove(pos);
        Tensor { vars, axes, data }
    }

    /// Reorder axes to `order` (a permutation of `self.vars`).
    pub fn permute(&self, order: &[String]) -> Result<Tensor> {
        if order == self.vars.as_slice() {
            return Ok(self.clone());
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|o| o == v)
                    .ok_or_else(|| Error::Malformed(format!("permute: unknown variable `{v}`")))
            })
            .collect::<Result<_>>()?;
        let old_dims = self.dims();
        let new_dims: Vec<usize> = perm.iter().map(|p| old_dims[*p]).collect();
        let st_old = strides(&old_dims);
        let st_new = strides(&new_dims);
        let mut data = vec![false; self.data.len()];
        for (flat, cell) in data.iter_mut().enumerate() {
            let mut old = 0;
            for (d, p) in perm.iter().enumerate() {
                old += ((flat / st_new[d]) % new_dims[d]) * st_old[*p];
            }
            *cell = self.data[old];
        }
        Ok(Tensor {
            vars: order.to_vec(),
            axes: perm.iter().map(|p| self.axes[*p].clone()).collect(),
            data,
        })
    }

    /// Rename variables and restore sorted order.
    pub fn rename(&self, map: &BTreeMap<String, String>) -> Result<Tensor> {
        let renamed: Vec<String> = self.vars.iter().map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone())).collect();
        let mut sorted = renamed.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != renamed.len() {
            return Err(Error::Malformed("rename merges two axes".into()));
        }
        let t = Tensor { vars: renamed, axes: self.axes.clone(), data: self.data.clone() };
        t.permute(&sorted)
    }

    /// Apply `op` to every slice spanned by `sel` (in that order), batching over the
    /// remaining axes. `op` receives the slice data, the slice axes, and writes in place.
    pub fn map_slices(&self, sel: &[String], op: &dyn Fn(&[bool], &[Axis]) -> Vec<bool>) -> Result<Tensor> {
        let mut order: Vec<String> = self.vars.iter().filter(|v| !sel.contains(v)).cloned().collect();
        let batch_len = order.len();
        order.extend(sel.iter().cloned());
        let t = self.permute(&order)?;
        let slice_axes: Vec<Axis> = t.axes[batch_len..].to_vec();
        let slice_len: usize = slice_axes.iter().map(|a| a.cells).product();
        let mut data = Vec::with_capacity(t.data.len());
        for chunk in t.data.chunks(slice_len.max(1)) {
            let out = op(chunk, &slice_axes);
            debug_assert_eq!(out.len(), chunk.len());
            data.extend(out);
        }
        let res = Tensor { vars: order, axes: t.axes, data };
        let mut sorted = self.vars.clone();
        sorted.sort();
        res.permute(&sorted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{Formula, Poly};

    fn ax(n: usize) -> Axis {
        Axis::new(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn reduce_and_broadcast() {
        let f = Formula::lt(Poly::var("x"), Poly::var("y"));
        let Formula::Atom(a) = f else { unreachable!() };
        let t = Tensor::atom(&a, &|_| Ok(ax(4))).unwrap();
        assert_eq!(t.vars, vec!["x".to_string(), "y".to_string()]);
        // exists y. x < y : true everywhere but the last x cell
        let e = t.reduce("y", false);
        assert_eq!(e.data, vec![true, true, true, false]);
        let a2 = t.reduce("y", true);
        assert_eq!(a2.data, vec![false; 4]);
        let b = e.broadcast(&["x".into(), "y".into()], &[ax(4), ax(4)]).unwrap();
        assert_eq!(b.count(), 12);
    }

    #[test]
    fn permute_roundtrip() {
        let f = Formula::lt(&Poly::var("x") * &Poly::int(2), Poly::var("y"));
        let Formula::Atom(a) = f else { unreachable!() };
        let t = Tensor::atom(&a, &|_| Ok(ax(5))).unwrap();
        let p = t.permute(&["y".into(), "x".into()]).unwrap();
        let back = p.permute(&["x".into(), "y".into()]).unwrap();
        assert_eq!(back, t);
    }
}
