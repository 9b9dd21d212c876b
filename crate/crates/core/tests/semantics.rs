mod common;

use common::*;
use epsreach::formula::{rat, Formula, Poly};
use epsreach::geomsem::{
    contains_ball, open_edt, sphere_eval, sphere_eval_params, std_eval, Axis, Grid, GridRegion, Metric,
};
use epsreach::sphere_xlate::{convex_simplify, translate, Certificate, Certificates, TranslationContext};
use proptest::prelude::*;

fn line(cells: usize) -> Grid {
    Grid::cube(&["x"], BOX.0, BOX.1, cells).unwrap()
}

fn plane(cells: usize) -> Grid {
    Grid::cube(&["x", "y"], BOX.0, BOX.1, cells).unwrap()
}

fn strictly_inside(a: &GridRegion, b: &GridRegion) -> bool {
    a.is_subset(b).unwrap() && a != b
}

/// Project an `(x, y)` region onto `x`, with `any` or `all` over `y`.
fn project(r: &GridRegion, universal: bool) -> Vec<bool> {
    let (nx, ny) = (r.axes[0].cells, r.axes[1].cells);
    (0..nx)
        .map(|i| {
            let row = &r.bits[i * ny..(i + 1) * ny];
            if universal {
                row.iter().all(|b| *b)
            } else {
                row.iter().any(|b| *b)
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn negation_is_disjoint(f in formula_1d(), e in 0usize..3) {
        let eps = [0.25, 0.5, 1.0][e];
        let g = line(CELLS);
        let a = sphere_eval(&f, eps, &g).unwrap();
        let b = sphere_eval(&Formula::not(f), eps, &g).unwrap();
        prop_assert!(a.is_disjoint(&b).unwrap());
    }

    #[test]
    fn union_and_intersection(f in formula_1d(), h in formula_1d(), e in 0usize..3) {
        let eps = [0.25, 0.5, 1.0][e];
        let g = line(CELLS);
        let a = sphere_eval(&f, eps, &g).unwrap();
        let b = sphere_eval(&h, eps, &g).unwrap();
        let or = sphere_eval(&Formula::or(f.clone(), h.clone()), eps, &g).unwrap();
        prop_assert_eq!(or, a.union(&b).unwrap());
        let and = sphere_eval(&Formula::and(f, h), eps, &g).unwrap();
        prop_assert!(and.is_subset(&a.intersection(&b).unwrap()).unwrap());
    }

    #[test]
    fn nonempty_results_hold_a_ball(f in formula_1d(), e in 0usize..3) {
        let eps = [0.25, 0.5, 1.0][e];
        let r = sphere_eval(&f, eps, &line(CELLS)).unwrap();
        if !r.is_empty() {
            let c = contains_ball(&r, eps);
            prop_assert!(c.is_some());
        }
    }

    #[test]
    fn never_overapproximates_both_ways(f in formula_1d(), e in 0usize..3) {
        let eps = [0.25, 0.5, 1.0][e];
        let g = line(CELLS);
        let nf = Formula::not(f.clone());
        let both = strictly_inside(&std_eval(&f, &g).unwrap(), &sphere_eval(&f, eps, &g).unwrap())
            && strictly_inside(&std_eval(&nf, &g).unwrap(), &sphere_eval(&nf, eps, &g).unwrap());
        prop_assert!(!both);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantifiers_are_sampled_junctions(f in formula_2d(), e in 0usize..3) {
        let body = match &f {
            Formula::Exists(_, b) | Formula::Forall(_, b) => (**b).clone(),
            _ => f.clone(),
        };
        let eps = [0.25, 0.5, 1.0][e];
        let cells = 120;
        let inst = sphere_eval_params(&body, eps, &plane(cells), Metric::Euclidean, &["y"]).unwrap();
        let ax = Axis::new(BOX.0, BOX.1, cells).unwrap();
        let g1 = line(cells).with_bound("y", ax.clone());
        let ex = sphere_eval(&Formula::exists("y", body.clone()), eps, &g1).unwrap();
        prop_assert_eq!(&ex.bits, &project(&inst, false));
        let all = sphere_eval(&Formula::forall("y", body), eps, &g1).unwrap();
        let expected = open_edt(&project(&inst, true), &[ax], eps);
        prop_assert_eq!(&all.bits, &expected);
    }

    #[test]
    fn translation_keeps_free_variables(f in formula_2d(), e in 0usize..3) {
        let (n, d) = EPSILONS[e];
        let mut ctx = TranslationContext::for_formula(rat(n, d), &f, &[]).unwrap();
        let t = translate(&f, &mut ctx).unwrap();
        prop_assert_eq!(t.free_vars(), f.free_vars());
        for b in t.bound_vars() {
            prop_assert!(!t.free_vars().contains(&b));
        }
    }

    #[test]
    fn translation_depth_bound(f in formula_2d()) {
        let mut ctx = TranslationContext::for_formula(rat(1, 2), &f, &[]).unwrap();
        let t = translate(&f, &mut ctx).unwrap();
        let n = ctx.ambient().len().max(1);
        let mut k = 0;
        f.visit(&mut |g| {
            if matches!(g, Formula::And(..) | Formula::Not(..) | Formula::Forall(..)) {
                k += 1;
            }
        });
        // quantifier blocks over ambient copies count once
        let blocks = t.quantifier_depth().div_ceil(n);
        prop_assert!(blocks <= f.quantifier_depth() + 2 * k + 1, "{} > {} + 2*{} + 1", blocks, f.quantifier_depth(), k);
    }
}

#[test]
fn translation_matches_sphere_semantics_on_samples() {
    // a small slice of the corpus at a cheap resolution; the full check is in the acceptance suite
    for case in corpus().iter().filter(|c| c.formula.free_vars().len() == 1) {
        let g = grid_for(&case.formula, 200);
        let mut ctx = TranslationContext::for_formula(rat(1, 2), &case.formula, &[]).unwrap();
        let t = translate(&case.formula, &mut ctx).unwrap();
        let a = std_eval(&t, &g).unwrap();
        let b = sphere_eval(&case.formula, 0.5, &g).unwrap();
        let h = a.hausdorff_cells(&b).unwrap();
        assert!(h <= 2.0, "{}: hausdorff {h}", case.name);
    }
}

#[test]
fn convex_simplification_is_equivalent_on_the_oracle() {
    let lines = [
        (Formula::eq(x(), y()), Formula::eq(x(), -&y())),
        (Formula::eq(&x() + &y(), c(1)), Formula::eq(x(), c(0))),
        (Formula::eq(y(), c(1)), Formula::eq(y(), c(-1))),
    ];
    for (a, b) in lines {
        for (n, d) in EPSILONS {
            let f = Formula::and(a.clone(), b.clone());
            let mut ctx = TranslationContext::new(rat(n, d), &["x", "y"]).unwrap();
            let t = translate(&f, &mut ctx).unwrap();
            let mut certs = Certificates::new();
            certs.certify(&a, Certificate::AffineEquality).unwrap();
            certs.certify(&b, Certificate::AffineEquality).unwrap();
            let s = convex_simplify(&t, &ctx, &certs);
            assert!(!s.flagged(), "{:?}", s.refused);
            assert_eq!(s.rewrites, 1);
            let g = plane(160);
            let full = std_eval(&t, &g).unwrap();
            let flat = std_eval(&s.formula, &g).unwrap();
            let h = full.hausdorff_cells(&flat).unwrap();
            assert!(h <= 2.0, "{f} at {n}/{d}: hausdorff {h}");
        }
    }
}

#[test]
fn disjoint_points_stay_empty_after_simplification() {
    let (a, b) = (Formula::eq(x(), Poly::zero()), Formula::eq(x(), c(1)));
    let f = Formula::and(a.clone(), b.clone());
    let mut ctx = TranslationContext::new(rat(2, 5), &["x"]).unwrap();
    let t = translate(&f, &mut ctx).unwrap();
    let mut certs = Certificates::new();
    certs.certify(&a, Certificate::AffineEquality).unwrap();
    certs.certify(&b, Certificate::AffineEquality).unwrap();
    let s = convex_simplify(&t, &ctx, &certs);
    let g = line(CELLS);
    assert!(std_eval(&s.formula, &g).unwrap().is_empty());
    assert!(std_eval(&t, &g).unwrap().is_empty());
}
