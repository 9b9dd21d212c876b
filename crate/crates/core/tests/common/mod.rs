//! Shared formula corpus and generators for the integration suites.
#![allow(dead_code)]

use epsreach::formula::{Formula, Poly};
use epsreach::geomsem::{Axis, Grid};
use proptest::prelude::*;

pub const BOX: (f64, f64) = (-3.0, 3.0);
pub const CELLS: usize = 400;

pub fn x() -> Poly {
    Poly::var("x")
}

pub fn y() -> Poly {
    Poly::var("y")
}

pub fn c(n: i64) -> Poly {
    Poly::int(n)
}

pub fn sq(p: &Poly) -> Poly {
    p * p
}

pub struct Case {
    pub name: &'static str,
    pub formula: Formula,
}

/// The grid matching the free variables of `f`, with every other variable of
/// the corpus sampled on the same interval.
pub fn grid_for(f: &Formula, cells: usize) -> Grid {
    let ax = Axis::new(BOX.0, BOX.1, cells).unwrap();
    let free = f.free_vars();
    let names: Vec<&str> = if free.contains("y") && free.contains("x") {
        vec!["x", "y"]
    } else if free.contains("y") {
        vec!["y"]
    } else {
        vec!["x"]
    };
    let mut g = Grid::new(&names, vec![ax.clone(); names.len()]).unwrap();
    for v in ["x", "y"] {
        if !names.contains(&v) {
            g = g.with_bound(v, ax.clone());
        }
    }
    g
}

/// Formulas in one or two variables (free and bound together).
pub fn corpus() -> Vec<Case> {
    let unit_disk = Formula::lt(&sq(&x()) + &sq(&y()), c(1));
    let disk2 = Formula::lt(&sq(&x()) + &sq(&y()), c(4));
    vec![
        Case { name: "point", formula: Formula::eq(x(), Poly::zero()) },
        Case { name: "open interval", formula: Formula::lt(sq(&x()), c(1)) },
        Case { name: "two points", formula: Formula::or(Formula::eq(x(), Poly::zero()), Formula::eq(x(), c(2))) },
        Case {
            name: "interval as conjunction",
            formula: Formula::and(Formula::lt(x(), c(1)), Formula::gt(x(), c(-1))),
        },
        Case { name: "outside interval", formula: Formula::not(Formula::lt(sq(&x()), c(1))) },
        Case { name: "two roots", formula: Formula::eq(sq(&x()), c(1)) },
        Case {
            name: "half line with hole",
            formula: Formula::and(Formula::lt(x(), Poly::zero()), Formula::not(Formula::eq(x(), c(-1)))),
        },
        Case {
            name: "thin conjunction",
            formula: Formula::and(Formula::eq(x(), Poly::zero()), Formula::eq(x(), Poly::ratio(1, 2))),
        },
        Case {
            name: "scaled image",
            formula: Formula::exists("y", Formula::and(Formula::lt(sq(&y()), c(1)), Formula::eq(x(), &c(2) * &y()))),
        },
        Case {
            name: "above a band",
            formula: Formula::forall("y", Formula::implies(Formula::lt(sq(&y()), c(1)), Formula::gt(x(), y()))),
        },
        Case {
            name: "negated union",
            formula: Formula::not(Formula::or(Formula::lt(x(), Poly::zero()), Formula::gt(x(), c(1)))),
        },
        Case {
            name: "quadratic conjunction",
            formula: Formula::and(Formula::lt(&x() * &(&x() - &c(2)), Poly::zero()), Formula::lt(sq(&x()), c(2))),
        },
        Case {
            name: "square root image",
            formula: Formula::exists("y", Formula::and(Formula::eq(x(), sq(&y())), Formula::lt(y(), c(1)))),
        },
        Case { name: "disk", formula: disk2.clone() },
        Case { name: "diagonal", formula: Formula::eq(x(), y()) },
        Case {
            name: "crossing diagonals",
            formula: Formula::and(Formula::eq(x(), y()), Formula::eq(x(), -&y())),
        },
        Case { name: "half disk", formula: Formula::and(disk2.clone(), Formula::gt(y(), Poly::zero())) },
        Case { name: "off diagonal", formula: Formula::not(Formula::eq(x(), y())) },
        Case { name: "parabola", formula: Formula::eq(y(), &sq(&x()) - &c(1)) },
        Case {
            name: "L shape",
            formula: Formula::or(Formula::lt(x(), c(1)), Formula::lt(y(), c(-1))),
        },
        Case { name: "annulus", formula: Formula::and(Formula::not(unit_disk), disk2) },
        Case {
            name: "wedge",
            formula: Formula::and(Formula::lt(&x() + &y(), c(1)), Formula::gt(&x() - &y(), c(-1))),
        },
        Case {
            name: "two diagonals",
            formula: Formula::or(Formula::eq(y(), x()), Formula::eq(y(), -&x())),
        },
    ]
}

pub const EPSILONS: [(i64, i64); 3] = [(1, 4), (1, 2), (1, 1)];

fn atom_1d() -> impl Strategy<Value = Formula> {
    (-3i64..=3, 1i64..=3, 0usize..3).prop_map(|(a, d, kind)| {
        let k = Poly::ratio(a, d);
        match kind {
            0 => Formula::eq(x(), k),
            1 => Formula::lt(x(), k),
            _ => Formula::lt(sq(&(&x() - &k)), Poly::ratio(d, 2)),
        }
    })
}

/// Random quantifier-free formulas over `x`.
pub fn formula_1d() -> impl Strategy<Value = Formula> {
    atom_1d().prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            inner.prop_map(Formula::not),
        ]
    })
}

/// Random formulas over `x` and `y`, optionally with `y` bound.
pub fn formula_2d() -> impl Strategy<Value = Formula> {
    let atom = (-2i64..=2, -2i64..=2, -2i64..=2, 0usize..3).prop_map(|(a, b, k, kind)| {
        let lin = &(&x().scale(&epsreach::formula::rat(a, 1)) + &y().scale(&epsreach::formula::rat(b, 1))) - &c(k);
        match kind {
            0 => Formula::eq(lin, Poly::zero()),
            1 => Formula::lt(lin, Poly::zero()),
            _ => Formula::lt(&sq(&(&x() - &c(a))) + &sq(&(&y() - &c(b))), c(k.abs() + 1)),
        }
    });
    let qf = atom.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            inner.prop_map(Formula::not),
        ]
    });
    (qf, 0usize..3).prop_map(|(f, q)| match q {
        0 => f,
        1 => Formula::exists("y", f),
        _ => Formula::forall("y", f),
    })
}
