use epsreach::formula::{rat, Formula, Poly};
use epsreach::hybrid::HybridState;
use epsreach::models::{bouncing_ball, locate, pwl_automaton, OscillatorParams};
use epsreach::reach::{bounded_reach_formula, eps_reach, run_backend, QEBackend, ReachConfig, Termination, Verdict};
use epsreach::sim::{simulate, SimConfig};

fn ball_cfg(eps: f64) -> ReachConfig {
    ReachConfig::new(eps, vec![(-1.0, 11.0), (-15.0, 15.0)], 200)
}

#[test]
fn sweeps_only_accumulate() {
    let (h, s0) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
    let r = eps_reach(&h, std::slice::from_ref(&s0), &ball_cfg(0.5)).unwrap();
    assert_eq!(r.reason, Some(Termination::NoBallGrowth));
    for w in r.history.windows(2) {
        assert!(w[1].reached_cells >= w[0].reached_cells, "{:?}", r.history);
        assert_eq!(w[1].reached_cells, w[0].reached_cells + w[1].new_cells);
    }
    assert!(r.union().contains_point(&s0.x));
    assert_eq!(r.history.last().unwrap().reached_cells, r.union().count());
}

#[test]
fn coarser_epsilon_stops_no_later() {
    let (h, s0) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
    let iters: Vec<usize> = [0.5, 1.0, 2.0].iter().map(|&e| eps_reach(&h, std::slice::from_ref(&s0), &ball_cfg(e)).unwrap().iteration).collect();
    assert!(iters.windows(2).all(|w| w[1] <= w[0]), "{iters:?}");
}

#[test]
fn disturbance_only_adds_states() {
    let h = pwl_automaton(&OscillatorParams::default()).unwrap();
    let x = vec![3.0, 0.0];
    let s = HybridState::new(locate(&h, &x).unwrap(), x);
    let mut cfg = ReachConfig::new(0.25, vec![(-10.0, 10.0); 2], 100);
    cfg.budget = 40;
    let plain = eps_reach(&h, std::slice::from_ref(&s), &cfg).unwrap();
    let noisy = eps_reach(&h.disturb(0.1).unwrap(), &[s], &cfg).unwrap();
    for (a, b) in plain.regions.iter().zip(&noisy.regions) {
        assert!(a.is_subset(b).unwrap());
    }
    assert!(noisy.union().count() >= plain.union().count());
}

#[test]
fn bad_configurations_are_rejected() {
    let (h, s0) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
    assert!(eps_reach(&h, std::slice::from_ref(&s0), &ball_cfg(0.0)).is_err());
    assert!(eps_reach(&h, &[s0], &ReachConfig::new(0.5, vec![(-1.0, 11.0)], 200)).is_err());
}

/// Fewest jumps after which the simulated ball shows a state in `target`.
fn jumps_to(target: &dyn Fn(&[f64]) -> bool) -> Option<usize> {
    let (h, s0) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
    let r = simulate(&h, &s0, &SimConfig { horizon: 6.0, ..SimConfig::default() }).unwrap();
    let mut jumps = 0;
    let mut last_t = 0.0;
    for c in &r.crossings {
        if r.samples.iter().any(|s| s.time >= last_t && s.time < c.time && target(&s.x)) {
            return Some(jumps);
        }
        jumps += 1;
        last_t = c.time;
        // the post-jump state itself
        if target(&[c.point[0], -0.86 * c.point[1]]) {
            return Some(jumps);
        }
    }
    None
}

#[test]
fn bounded_reach_agrees_with_simulation() {
    let b = QEBackend::smt().with_timeout(60.0);
    if !b.available() {
        println!("[skipped] bounded reachability: no SMT solver");
        return;
    }
    let (h, _) = bouncing_ball(10.0, 9.8, 0.86).unwrap();
    let (x1, x2) = (Poly::var("x1"), Poly::var("x2"));
    let source = Formula::and(Formula::eq(x1.clone(), Poly::int(10)), Formula::eq(x2.clone(), Poly::zero()));
    // upward speed just off the ground: 14 0.86 after one bounce, 14 0.86^2 after two
    let band = |lo: i64, hi: i64| {
        Formula::and_all(vec![
            Formula::lt(x1.clone(), Poly::ratio(1, 100)),
            Formula::gt(x2.clone(), Poly::int(lo)),
            Formula::lt(x2.clone(), Poly::int(hi)),
        ])
    };
    let cases = [((11, 13), 1), ((10, 11), 2)];
    for ((lo, hi), want) in cases {
        let sim = jumps_to(&|x: &[f64]| x[0] < 0.01 && x[1] > lo as f64 && x[1] < hi as f64);
        assert_eq!(sim, Some(want));
        for k in 0..=2 {
            let f = bounded_reach_formula(&h, &source, &band(lo, hi), k).unwrap();
            let v = run_backend(&f, &b);
            let expect = if k >= want { Verdict::True } else { Verdict::False };
            assert_eq!(v, expect, "band ({lo}, {hi}) with {k} jumps");
        }
    }
    // the start itself is reachable with no jump; a height above it never is
    let f = bounded_reach_formula(&h, &source, &Formula::gt(x1.clone(), Poly::constant(rat(101, 10))), 2).unwrap();
    assert_eq!(run_backend(&f, &b), Verdict::False);
    let f = bounded_reach_formula(&h, &source, &Formula::gt(x1, Poly::int(9)), 0).unwrap();
    assert_eq!(run_backend(&f, &b), Verdict::True);
}
