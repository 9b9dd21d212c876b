use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use epsreach::formula::{emit, parse_sexpr, rat_approx, rat_to_f64, Dialect};
use epsreach::hybrid::{io, HybridAutomaton, HybridState};
use epsreach::models::{locate, ModelSpec, OscillatorParams};
use epsreach::reach::{build_convergence_formula, eps_reach, run_backend, ConvergenceSpec, QEBackend, ReachConfig, Verdict};
use epsreach::sim::{contraction_scan, cycle_crossings, phase_portrait_svg, simulate as run_sim, Section, SimConfig, SimStatus};
use epsreach::sphere_xlate::{translate as xlate, TranslationContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::{BACKEND_UNAVAILABLE, OK, PROPERTY_FALSE};

/// Largest denominator used when turning configured floats into exact rationals.
const DEN: i64 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] epsreach::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn write_out(cfg: &RunConfig, name: &str, data: impl AsRef<[u8]>) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io { path: cfg.out.clone(), source })?;
    let path = cfg.out.join(name);
    std::fs::write(&path, data).map_err(|source| CliError::Io { path: path.clone(), source })?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn start_state(h: &HybridAutomaton, x: Vec<f64>) -> Result<HybridState> {
    if x.len() != h.dim() {
        return Err(CliError::Usage(format!("start point has {} coordinates, the model has {}", x.len(), h.dim())));
    }
    let loc = locate(h, &x).ok_or_else(|| CliError::Usage(format!("no location admits the start point {x:?}")))?;
    Ok(HybridState::new(loc, x))
}

pub fn build(cfg: &RunConfig) -> Result<u8> {
    let h = cfg.automaton()?;
    write_out(cfg, "automaton.json", io::to_json(&h)? + "\n")?;
    Ok(OK)
}

#[derive(Serialize)]
struct SimSummary<'a> {
    model: &'a str,
    start: &'a [f64],
    status: &'a SimStatus,
    jumps: usize,
    time: f64,
    final_location: &'a str,
    final_state: &'a [f64],
}

pub fn simulate(cfg: &RunConfig, start: Option<Vec<f64>>) -> Result<u8> {
    let h = cfg.automaton()?;
    let x = match start {
        Some(x) => x,
        None => cfg.default_start()?,
    };
    let s0 = start_state(&h, x.clone())?;
    let r = run_sim(&h, &s0, &SimConfig { record_samples: true, ..cfg.sim.clone() })?;
    write_out(cfg, "trace.csv", io::trace_csv(&h, &r.trace))?;
    let mut csv = String::from("time,location");
    for v in h.vars() {
        let _ = write!(csv, ",{v}");
    }
    csv.push('\n');
    for s in &r.samples {
        let _ = write!(csv, "{},{}", s.time, h.locations()[s.location].name);
        for c in &s.x {
            let _ = write!(csv, ",{c}");
        }
        csv.push('\n');
    }
    write_out(cfg, "samples.csv", csv)?;
    if h.dim() == 2 {
        let b = cfg.box_or_default(2)?;
        let stride = (r.samples.len() / 5000).max(1);
        let pts: Vec<Vec<f64>> = r.samples.iter().step_by(stride).map(|s| s.x.clone()).collect();
        write_out(cfg, "phase.svg", phase_portrait_svg(&h, &pts, [b[0].0, b[0].1, b[1].0, b[1].1], 20))?;
    }
    let last = r.trace.last();
    let summary = SimSummary {
        model: &cfg.model,
        start: &x,
        status: &r.status,
        jumps: r.jumps,
        time: r.time,
        final_location: &h.locations()[last.location].name,
        final_state: &last.x,
    };
    write_out(cfg, "simulate.json", json(&summary)?)?;
    Ok(OK)
}

pub fn translate(cfg: &RunConfig, input: &Path, dialect: Dialect, params: &[String]) -> Result<u8> {
    let src = std::fs::read_to_string(input).map_err(|source| CliError::Io { path: input.into(), source })?;
    let f = parse_sexpr(&src)?;
    let refs: Vec<&str> = params.iter().map(String::as_str).collect();
    let mut ctx = TranslationContext::for_formula(rat_approx(cfg.epsilon, DEN), &f, &refs)?;
    let g = xlate(&f, &mut ctx)?;
    let mut text = emit(&g, dialect);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    let ext = match dialect {
        Dialect::Sexpr => "sexpr",
        Dialect::Smtlib2Nra => "smt2",
        Dialect::Redlog => "red",
    };
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("formula");
    write_out(cfg, &format!("{stem}.eps.{ext}"), text)?;
    Ok(OK)
}

pub fn reach(cfg: &RunConfig, start: Option<Vec<f64>>, noise: f64, budget: usize) -> Result<u8> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(CliError::Usage(format!("noise must be non-negative, got {noise}")));
    }
    let mut h = cfg.automaton()?;
    if noise > 0.0 {
        h = h.disturb(noise)?;
    }
    let x = match start {
        Some(x) => x,
        None => cfg.default_start()?,
    };
    let s0 = start_state(&h, x)?;
    let mut rc = ReachConfig::new(cfg.epsilon, cfg.box_or_default(h.dim())?, cfg.resolution);
    rc.budget = budget;
    rc.horizon = cfg.sim.horizon;
    let t = Instant::now();
    let state = eps_reach(&h, &[s0], &rc)?;
    eprintln!("eps_reach: {} sweeps, {:?}, {:.1?}", state.iteration, state.reason, t.elapsed());
    let mut report = state.report(cfg.epsilon, noise);
    // timings vary between runs; keep the report reproducible
    report.history.iter_mut().for_each(|s| s.millis = 0.0);
    let region = state.union();
    write_out(cfg, "reach.json", json(&report)?)?;
    write_out(cfg, "reach.csv", region.to_csv())?;
    if h.dim() <= 2 {
        write_out(cfg, "reach.pgm", region.to_pgm()?)?;
    }
    Ok(OK)
}

#[derive(Serialize)]
struct ScanSummary {
    samples: usize,
    evaluated: usize,
    contracting: usize,
    excluded: usize,
    /// Largest d1 / d0 over the evaluated samples.
    worst_ratio: Option<f64>,
    vacuous: bool,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
enum Symbolic {
    Checked {
        backend: String,
        #[serde(flatten)]
        verdict: Verdict,
        fully_simplified: bool,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Serialize)]
struct ConvergenceReport {
    model: String,
    params: OscillatorParams,
    epsilon: f64,
    seed: u64,
    location: String,
    q0: Vec<f64>,
    q1: Vec<f64>,
    /// The exact rationals used in the sentence.
    q0_exact: Vec<String>,
    q1_exact: Vec<String>,
    displace_q1: f64,
    scan: ScanSummary,
    symbolic: Symbolic,
    holds: Option<bool>,
}

/// Distances to the reference crossing in `(0.2, 3]`, one per stratum, placed
/// at a seeded position inside it and alternating sides.
fn scan_offsets(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let u: f64 = rng.gen();
            let d = 3.0 - 2.8 * (k as f64 + u) / n as f64;
            if k % 2 == 0 {
                d
            } else {
                -d
            }
        })
        .collect()
}

pub fn check_convergence(cfg: &RunConfig, location: &str, samples: usize, displace_q1: f64, no_fallback: bool) -> Result<u8> {
    let p = match cfg.model_spec()? {
        Some(ModelSpec::Taylor(p)) => p,
        _ => return Err(CliError::Usage("check-convergence needs the taylor model".into())),
    };
    if samples == 0 {
        return Err(CliError::Usage("at least one sample is needed".into()));
    }
    let h = cfg.automaton()?;
    let a = p.offset();
    let sec_a = Section::new(1, a, 0, true);
    let sec_b = Section::new(0, a, 1, true);
    let (qa, mut qb) = cycle_crossings(&h, sec_a, sec_b, (1.25 * a, 8.0 * a), &cfg.sim)?;
    qb[1] += displace_q1;

    let a_r = rat_approx(a, DEN);
    let q0_r = rat_approx(qa[0], DEN);
    let q1_r = rat_approx(qb[1], DEN);
    let eps_r = rat_approx(cfg.epsilon, DEN);
    let q0 = [q0_r.clone(), a_r.clone()];
    let q1 = [a_r.clone(), q1_r.clone()];
    let q0f: Vec<f64> = q0.iter().map(rat_to_f64).collect();
    let q1f: Vec<f64> = q1.iter().map(rat_to_f64).collect();

    let positions: Vec<f64> = scan_offsets(samples, cfg.seed).iter().map(|d| q0f[0] + d).collect();
    let t = Instant::now();
    let scan = contraction_scan(&h, sec_a, sec_b, &q0f, &q1f, cfg.epsilon, &positions, &cfg.sim);
    eprintln!("contraction scan: {:.1?}", t.elapsed());
    write_out(cfg, "convergence_scan.json", scan.to_json()? + "\n")?;
    let summary = ScanSummary {
        samples,
        evaluated: scan.entries.len(),
        contracting: scan.entries.iter().filter(|e| e.contracts).count(),
        excluded: scan.excluded.len(),
        worst_ratio: scan.entries.iter().map(|e| e.d1 / e.d0).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r)))),
        vacuous: scan.entries.is_empty(),
    };

    let spec = ConvergenceSpec::oscillator_arc(location, a_r, q0_r, q1_r, eps_r);
    let conv = build_convergence_formula(&h, &spec)?;
    write_out(cfg, "convergence.smt2", QEBackend::smt().script(&conv.sentence))?;
    write_out(cfg, "convergence.red", QEBackend::redlog().script(&conv.sentence))?;
    let backend = cfg.backend.clone();
    let kind = serde_json::to_value(backend.kind)?.as_str().unwrap_or_default().to_string();
    let symbolic = if backend.available() {
        let t = Instant::now();
        let verdict = run_backend(&conv.sentence, &backend);
        eprintln!("symbolic check ({kind}): {verdict:?}, {:.1?}", t.elapsed());
        Symbolic::Checked { backend: kind.clone(), verdict, fully_simplified: conv.fully_simplified }
    } else {
        eprintln!("[skipped] symbolic check: backend `{kind}` is not available");
        Symbolic::Skipped { reason: format!("backend `{kind}` is not available") }
    };
    let verdict_false = matches!(&symbolic, Symbolic::Checked { verdict: Verdict::False, .. });
    let holds = if summary.vacuous {
        None
    } else {
        Some(!verdict_false && scan.all_contract())
    };
    let skipped = matches!(symbolic, Symbolic::Skipped { .. });
    let report = ConvergenceReport {
        model: cfg.model.clone(),
        params: p,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        location: location.to_string(),
        q0: q0f,
        q1: q1f,
        q0_exact: q0.iter().map(ToString::to_string).collect(),
        q1_exact: q1.iter().map(ToString::to_string).collect(),
        displace_q1,
        scan: summary,
        symbolic,
        holds,
    };
    write_out(cfg, "convergence.json", json(&report)?)?;
    match holds {
        None => println!("vacuous: no sample lies farther than 2 epsilon from the cycle"),
        Some(true) => println!("holds"),
        Some(false) => println!("does not hold"),
    }
    if skipped && no_fallback {
        return Ok(BACKEND_UNAVAILABLE);
    }
    Ok(if holds == Some(false) { PROPERTY_FALSE } else { OK })
}
