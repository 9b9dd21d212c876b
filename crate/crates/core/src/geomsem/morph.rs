//! Euclidean ball morphology on k-dimensional grid slices.
//!
//! Two independent implementations are kept on purpose: a stencil/prefix-sum
//! dilation ([`dilate_stencil`]) and a separable squared distance transform
//! ([`distance_sq`], [`dilate_edt`], [`erode_edt`]). Cells are identified with their
//! centers, and a cell belongs to the ball `B(p, r)` when its center lies at
//! distance `< r` from `p`. Cells outside the slice count as absent for dilation
//! and as present for erosion.

use super::Axis;

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Ball dilation by enumerating offsets over all but the last axis and answering
/// the remaining 1-D window with prefix sums along the last axis.
pub fn dilate_stencil(data: &[bool], axes: &[Axis], radius: f64) -> Vec<bool> {
    let k = axes.len();
    if k == 0 {
        return data.to_vec();
    }
    let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
    let st = strides(&dims);
    let w: Vec<f64> = axes.iter().map(|a| a.width()).collect();
    let r2 = radius * radius;
    let last = k - 1;
    let n_last = dims[last];

    // prefix sums along the last axis per line
    let lines = data.len() / n_last;
    let mut prefix = vec![0u32; lines * (n_last + 1)];
    for l in 0..lines {
        let base = l * n_last;
        let pb = l * (n_last + 1);
        for j in 0..n_last {
            prefix[pb + j + 1] = prefix[pb + j] + data[base + j] as u32;
        }
    }

    // offsets over the leading axes with the remaining squared budget
    let max_off: Vec<isize> = (0..last).map(|d| (radius / w[d]).ceil() as isize).collect();
    let mut offsets: Vec<(Vec<isize>, usize)> = Vec::new();
    let mut cur: Vec<isize> = max_off.iter().map(|m| -m).collect();
    loop {
        let used: f64 = (0..last).map(|d| (cur[d] as f64 * w[d]).powi(2)).sum();
        if used < r2 {
            let rem = r2 - used;
            // largest m with (m w)^2 < rem
            let mut m = (rem.sqrt() / w[last]).floor() as isize;
            while m >= 0 && (m as f64 * w[last]).powi(2) >= rem {
                m -= 1;
            }
            while ((m + 1) as f64 * w[last]).powi(2) < rem {
                m += 1;
            }
            if m >= 0 {
                offsets.push((cur.clone(), m as usize));
            }
        }
        let mut d = 0;
        while d < last {
            cur[d] += 1;
            if cur[d] <= max_off[d] {
                break;
            }
            cur[d] = -max_off[d];
            d += 1;
        }
        if d == last {
            break;
        }
    }

    let mut out = vec![false; data.len()];
    let mut idx = vec![0usize; k];
    for (flat, cell) in out.iter_mut().enumerate() {
        for d in 0..k {
            idx[d] = (flat / st[d]) % dims[d];
        }
        let j = idx[last];
        'offs: for (off, m) in &offsets {
            let mut line = 0usize;
            for d in 0..last {
                let p = idx[d] as isize + off[d];
                if p < 0 || p >= dims[d] as isize {
                    continue 'offs;
                }
                line += p as usize * st[d];
            }
            let line = line / n_last;
            let lo = j.saturating_sub(*m);
            let hi = (j + m + 1).min(n_last);
            let pb = line * (n_last + 1);
            if prefix[pb + hi] > prefix[pb + lo] {
                *cell = true;
                break;
            }
        }
    }
    out
}

pub fn erode_stencil(data: &[bool], axes: &[Axis], radius: f64) -> Vec<bool> {
    let comp: Vec<bool> = data.iter().map(|b| !b).collect();
    dilate_stencil(&comp, axes, radius).into_iter().map(|b| !b).collect()
}

/// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher) at positions `i * w`.
fn edt_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let pos = |i: usize| i as f64 * w;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
                    if s <= *z.last().unwrap_or(&f64::NEG_INFINITY) {
                        v.pop();
                        z.pop();
                        continue;
                    }
                    v.push(q);
                    z.push(s);
                    break;
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from each cell center to the nearest marked cell center.
pub fn distance_sq(data: &[bool], axes: &[Axis]) -> Vec<f64> {
    let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
    let st = strides(&dims);
    let mut g: Vec<f64> = data.iter().map(|b| if *b { 0.0 } else { f64::INFINITY }).collect();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for (d, ax) in axes.iter().enumerate() {
        let n = dims[d];
        let stride = st[d];
        let mut line = vec![0.0; n];
        let mut res = vec![0.0; n];
        let total = g.len();
        for start in 0..total {
            // visit each line once: the start must have index 0 along axis d
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for i in 0..n {
                line[i] = g[start + i * stride];
            }
            edt_1d(&line, ax.width(), &mut res, &mut v, &mut z);
            for i in 0..n {
                g[start + i * stride] = res[i];
            }
        }
    }
    g
}

pub fn dilate_edt(data: &[bool], axes: &[Axis], radius: f64) -> Vec<bool> {
    let r2 = radius * radius;
    distance_sq(data, axes).into_iter().map(|d| d < r2).collect()
}

pub fn erode_edt(data: &[bool], axes: &[Axis], radius: f64) -> Vec<bool> {
    let comp: Vec<bool> = data.iter().map(|b| !b).collect();
    let r2 = radius * radius;
    distance_sq(&comp, axes).into_iter().map(|d| d >= r2).collect()
}

/// Union of all radius-balls contained in the set (erosion then dilation).
pub fn open_edt(data: &[bool], axes: &[Axis], radius: f64) -> Vec<bool> {
    dilate_edt(&erode_edt(data, axes, radius), axes, radius)
}

/// Symmetric Hausdorff distance in cell units (every axis scaled to width 1).
/// `0` when both sets are empty, infinity when exactly one is.
pub fn hausdorff_cells(a: &[bool], b: &[bool], dims: &[usize]) -> f64 {
    let unit: Vec<Axis> = dims.iter().map(|n| Axis::new(0.0, *n as f64, *n).expect("nonempty axis")).collect();
    let (ea, eb) = (a.iter().any(|x| *x), b.iter().any(|x| *x));
    match (ea, eb) {
        (false, false) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let da = distance_sq(a, &unit);
    let db = distance_sq(b, &unit);
    let ab = a.iter().zip(&db).filter(|(x, _)| **x).map(|(_, d)| *d).fold(0.0, f64::max);
    let ba = b.iter().zip(&da).filter(|(x, _)| **x).map(|(_, d)| *d).fold(0.0, f64::max);
    ab.max(ba).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_dilate(data: &[bool], axes: &[Axis], r: f64) -> Vec<bool> {
        let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
        let st = strides(&dims);
        let coords = |flat: usize| -> Vec<f64> {
            (0..dims.len()).map(|d| axes[d].center((flat / st[d]) % dims[d])).collect()
        };
        (0..data.len())
            .map(|i| {
                let p = coords(i);
                (0..data.len()).any(|j| {
                    data[j] && {
                        let q = coords(j);
                        p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r * r
                    }
                })
            })
            .collect()
    }

    proptest! {
        #[test]
        fn stencil_and_edt_agree_with_brute_force(
            bits in proptest::collection::vec(proptest::bool::weighted(0.08), 13 * 11),
            r in 0.05f64..0.9,
        ) {
            let axes = vec![Axis::new(-1.0, 1.0, 13).unwrap(), Axis::new(0.0, 1.5, 11).unwrap()];
            let brute = brute_dilate(&bits, &axes, r);
            prop_assert_eq!(&dilate_stencil(&bits, &axes, r), &brute);
            prop_assert_eq!(&dilate_edt(&bits, &axes, r), &brute);
        }

        #[test]
        fn one_dimensional_agreement(
            bits in proptest::collection::vec(proptest::bool::weighted(0.1), 40),
            r in 0.01f64..1.0,
        ) {
            let axes = vec![Axis::new(-2.0, 2.0, 40).unwrap()];
            let brute = brute_dilate(&bits, &axes, r);
            prop_assert_eq!(&dilate_stencil(&bits, &axes, r), &brute);
            prop_assert_eq!(&dilate_edt(&bits, &axes, r), &brute);
        }
    }

    #[test]
    fn three_dimensional_agreement() {
        let axes = vec![Axis::new(0.0, 1.0, 7).unwrap(), Axis::new(0.0, 1.0, 6).unwrap(), Axis::new(0.0, 1.0, 5).unwrap()];
        let mut bits = vec![false; 7 * 6 * 5];
        bits[3 * 30 + 2 * 5 + 1] = true;
        bits[0] = true;
        for r in [0.13, 0.27, 0.36, 0.52] {
            assert_eq!(dilate_stencil(&bits, &axes, r), brute_dilate(&bits, &axes, r));
            assert_eq!(dilate_edt(&bits, &axes, r), brute_dilate(&bits, &axes, r));
        }
    }

    #[test]
    fn hausdorff_of_shifted_blocks() {
        let mut a = vec![false; 20];
        let mut b = vec![false; 20];
        a[5..10].iter_mut().for_each(|x| *x = true);
        b[7..12].iter_mut().for_each(|x| *x = true);
        assert_eq!(hausdorff_cells(&a, &b, &[20]), 2.0);
        assert_eq!(hausdorff_cells(&a, &a, &[20]), 0.0);
        assert!(hausdorff_cells(&a, &[false; 20], &[20]).is_infinite());
    }
}
