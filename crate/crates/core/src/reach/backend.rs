use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::formula::{emit, Dialect, Formula, FreshNames, Poly};
use crate::geomsem::{std_eval, Axis, Grid};

/// Environment variable naming the SMT solver executable (default `z3` on `PATH`).
pub const Z3_ENV: &str = "EPSREACH_Z3";
/// Environment variable naming the REDUCE executable (default `redcsl`, then `reduce`).
pub const REDUCE_ENV: &str = "EPSREACH_REDUCE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Redlog,
    Smt,
    GridOracle,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "redlog" => Ok(BackendKind::Redlog),
            "smt" | "z3" => Ok(BackendKind::Smt),
            "grid" | "grid-oracle" => Ok(BackendKind::GridOracle),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QEBackend {
    pub kind: BackendKind,
    /// Explicit executable; otherwise the environment variable, then `PATH`.
    #[serde(default)]
    pub executable: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Sampling interval of every variable for the grid oracle.
    #[serde(default = "default_bounds")]
    pub grid_bounds: (f64, f64),
    #[serde(default = "default_cells")]
    pub grid_cells: usize,
    #[serde(skip)]
    lock: Arc<Mutex<()>>,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_bounds() -> (f64, f64) {
    (-10.0, 10.0)
}

fn default_cells() -> usize {
    400
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "kebab-case")]
pub enum Verdict {
    True,
    False,
    Unknown(String),
}

impl Verdict {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Verdict::True => Some(true),
            Verdict::False => Some(false),
            Verdict::Unknown(_) => None,
        }
    }
}

impl QEBackend {
    pub fn new(kind: BackendKind) -> Self {
        QEBackend {
            kind,
            executable: None,
            timeout_secs: default_timeout(),
            grid_bounds: default_bounds(),
            grid_cells: default_cells(),
            lock: Arc::default(),
        }
    }

    pub fn smt() -> Self {
        QEBackend::new(BackendKind::Smt)
    }

    pub fn redlog() -> Self {
        QEBackend::new(BackendKind::Redlog)
    }

    pub fn grid_oracle(lo: f64, hi: f64, cells: usize) -> Self {
        QEBackend { grid_bounds: (lo, hi), grid_cells: cells, ..QEBackend::new(BackendKind::GridOracle) }
    }

    pub fn with_timeout(mut self, secs: f64) -> Self {
        self.timeout_secs = secs;
        self
    }

    /// Resolved executable, if one can be found.
    pub fn executable(&self) -> Option<PathBuf> {
        let (env, names): (&str, &[&str]) = match self.kind {
            BackendKind::Smt => (Z3_ENV, &["z3"]),
            BackendKind::Redlog => (REDUCE_ENV, &["redcsl", "reduce"]),
            BackendKind::GridOracle => return None,
        };
        if let Some(p) = &self.executable {
            return p.is_file().then(|| p.clone());
        }
        if let Some(p) = std::env::var_os(env) {
            let p = PathBuf::from(p);
            return p.is_file().then_some(p);
        }
        let path = std::env::var_os("PATH")?;
        std::env::split_paths(&path).flat_map(|d| names.iter().map(move |n| d.join(n))).find(|p| p.is_file())
    }

    pub fn available(&self) -> bool {
        self.kind == BackendKind::GridOracle || self.executable().is_some()
    }

    /// The script that would be sent for `f` (its existential closure).
    pub fn script(&self, f: &Formula) -> String {
        let closed = close(f);
        match self.kind {
            BackendKind::Redlog => emit(&closed, Dialect::Redlog),
            BackendKind::Smt => {
                let (_, body) = pull_exists(&closed.nnf());
                emit(&body, Dialect::Smtlib2Nra)
            }
            BackendKind::GridOracle => emit(&closed, Dialect::Sexpr),
        }
    }
}

/// Existential closure over the free variables.
fn close(f: &Formula) -> Formula {
    let free: Vec<String> = f.free_vars().into_iter().collect();
    Formula::exists_many(&free, f.clone())
}

/// Pull the existential quantifiers that sit under conjunctions and
/// disjunctions of a formula in negation normal form up to the front,
/// renaming apart where two of them share a name.
pub fn pull_exists(f: &Formula) -> (Vec<String>, Formula) {
    let mut fresh = FreshNames::for_formula(f);
    let mut taken = HashSet::new();
    let mut vars = Vec::new();
    let body = pull(f, &mut fresh, &mut taken, &mut vars);
    (vars, body)
}

fn pull(f: &Formula, fresh: &mut FreshNames, taken: &mut HashSet<String>, out: &mut Vec<String>) -> Formula {
    match f {
        Formula::Exists(v, b) => {
            let (name, body) = if taken.contains(v) {
                let n = fresh.fresh(v).unwrap_or_else(|_| format!("{v}_pulled"));
                let renamed = b.substitute(v, &Poly::var(&n)).unwrap_or_else(|_| b.as_ref().clone());
                (n, renamed)
            } else {
                (v.clone(), b.as_ref().clone())
            };
            taken.insert(name.clone());
            out.push(name);
            pull(&body, fresh, taken, out)
        }
        Formula::And(a, b) => {
            let a = pull(a, fresh, taken, out);
            Formula::and(a, pull(b, fresh, taken, out))
        }
        Formula::Or(a, b) => {
            let a = pull(a, fresh, taken, out);
            Formula::or(a, pull(b, fresh, taken, out))
        }
        other => other.clone(),
    }
}

fn has_quantifier(f: &Formula) -> bool {
    !f.is_quantifier_free()
}

static SCRIPT_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn run_tool(exe: &Path, args: &[String], stdin: Option<&str>, timeout: Duration) -> Result<String, String> {
    let mut child = Command::new(exe)
        .args(args)
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start {}: {e}", exe.display()))?;
    if let (Some(text), Some(mut pipe)) = (stdin, child.stdin.take()) {
        pipe.write_all(text.as_bytes()).map_err(|e| format!("writing to the tool: {e}"))?;
    }
    let start = Instant::now();
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if start.elapsed() > timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("timeout after {:.1} s", timeout.as_secs_f64()));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(e.to_string()),
        }
    }
    let mut out = String::new();
    if let Some(mut s) = child.stdout.take() {
        s.read_to_string(&mut out).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

enum Sat {
    Sat,
    Unsat,
    Unknown(String),
}

fn z3_check(b: &QEBackend, exe: &Path, body: &Formula) -> Sat {
    let script = emit(body, Dialect::Smtlib2Nra);
    let n = SCRIPT_COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = std::env::temp_dir().join(format!("epsreach-{}-{n}.smt2", std::process::id()));
    if let Err(e) = std::fs::write(&path, &script) {
        return Sat::Unknown(format!("cannot write the script: {e}"));
    }
    let secs = b.timeout_secs.max(1.0);
    let args = vec![format!("-T:{}", secs.ceil() as u64), path.display().to_string()];
    let res = run_tool(exe, &args, None, Duration::from_secs_f64(secs + 5.0));
    let _ = std::fs::remove_file(&path);
    match res {
        Err(e) => Sat::Unknown(e),
        Ok(out) => match out.lines().map(str::trim).find(|l| !l.is_empty()) {
            Some("sat") => Sat::Sat,
            Some("unsat") => Sat::Unsat,
            Some(other) => Sat::Unknown(format!("solver answered `{other}`")),
            None => Sat::Unknown("empty solver output".into()),
        },
    }
}

fn run_smt(b: &QEBackend, f: &Formula) -> Verdict {
    let Some(exe) = b.executable() else {
        return Verdict::Unknown("SMT solver executable not found".into());
    };
    let pos = pull_exists(&f.nnf());
    let neg = pull_exists(&Formula::not(f.clone()).nnf());
    // query the polarity that is purely existential first
    let mut order = vec![(true, pos), (false, neg)];
    order.sort_by_key(|(_, (_, body))| has_quantifier(body));
    let mut reasons = Vec::new();
    for (positive, (_, body)) in order {
        match (z3_check(b, &exe, &body), positive) {
            (Sat::Sat, true) | (Sat::Unsat, false) => return Verdict::True,
            (Sat::Unsat, true) | (Sat::Sat, false) => return Verdict::False,
            (Sat::Unknown(r), _) => reasons.push(r),
        }
    }
    Verdict::Unknown(reasons.join("; "))
}

fn run_redlog(b: &QEBackend, f: &Formula) -> Verdict {
    let Some(exe) = b.executable() else {
        return Verdict::Unknown("REDUCE executable not found".into());
    };
    let script = emit(f, Dialect::Redlog);
    match run_tool(&exe, &[], Some(&script), Duration::from_secs_f64(b.timeout_secs.max(1.0))) {
        Err(e) => Verdict::Unknown(e),
        Ok(out) => {
            // the answer of `rlqe` is the last bare truth value printed
            let last = out
                .split(|c: char| !c.is_ascii_alphanumeric()).rfind(|w| *w == "true" || *w == "false");
            match last {
                Some("true") => Verdict::True,
                Some("false") => Verdict::False,
                _ => Verdict::Unknown("no truth value in the REDUCE output".into()),
            }
        }
    }
}

/// Grid evaluation: free variables (at most three) are the grid axes and the
/// answer is whether some cell satisfies the formula; a closed formula is
/// opened at its leading block of like quantifiers. Every other variable is
/// sampled over the same interval. Two resolutions are tried and a
/// disagreement is reported as unknown.
fn run_grid(b: &QEBackend, f: &Formula) -> Verdict {
    let f = f.one_point();
    if let Some(v) = f.const_truth() {
        return if v { Verdict::True } else { Verdict::False };
    }
    let (axes, body, universal) = if f.free_vars().is_empty() {
        let mut vars = Vec::new();
        let mut cur = &f;
        let universal = matches!(f, Formula::Forall(..));
        loop {
            match (cur, universal) {
                (Formula::Exists(v, b), false) | (Formula::Forall(v, b), true) if vars.len() < 3 => {
                    vars.push(v.clone());
                    cur = b;
                }
                _ => break,
            }
        }
        (vars, cur.clone(), universal)
    } else {
        (f.free_vars().into_iter().collect(), f.clone(), false)
    };
    if axes.is_empty() || axes.len() > 3 {
        return Verdict::Unknown(format!("grid oracle needs 1 to 3 open variables, got {}", axes.len()));
    }
    let (lo, hi) = b.grid_bounds;
    let eval = |cells: usize| -> Result<bool, String> {
        let ax = Axis::new(lo, hi, cells).map_err(|e| e.to_string())?;
        let refs: Vec<&str> = axes.iter().map(String::as_str).collect();
        let mut grid = Grid::new(&refs, vec![ax.clone(); axes.len()]).map_err(|e| e.to_string())?;
        for v in body.bound_vars() {
            grid = grid.with_bound(&v, ax.clone());
        }
        let r = std_eval(&body, &grid).map_err(|e| e.to_string())?;
        Ok(if universal { r.count() == r.bits.len() } else { !r.is_empty() })
    };
    let coarse = (b.grid_cells * 2 / 3).max(3) | 1;
    match (eval(b.grid_cells), eval(coarse)) {
        (Ok(x), Ok(y)) if x == y => {
            if x {
                Verdict::True
            } else {
                Verdict::False
            }
        }
        (Ok(_), Ok(_)) => Verdict::Unknown("answer changes with the grid resolution".into()),
        (Err(e), _) | (_, Err(e)) => Verdict::Unknown(e),
    }
}

/// Truth value of the sentence `f` (free variables are read existentially).
pub fn run_backend(f: &Formula, b: &QEBackend) -> Verdict {
    if !f.is_well_formed() {
        return Verdict::Unknown("formula is not well formed".into());
    }
    let _guard = b.lock.lock().unwrap_or_else(|p| p.into_inner());
    let closed = close(f);
    match b.kind {
        BackendKind::Smt => run_smt(b, &closed),
        BackendKind::Redlog => run_redlog(b, &closed),
        BackendKind::GridOracle => run_grid(b, &closed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_sexpr;

    fn backends() -> Vec<QEBackend> {
        let mut out = vec![QEBackend::grid_oracle(-4.0, 4.0, 401)];
        for b in [QEBackend::smt(), QEBackend::redlog()] {
            if b.available() {
                out.push(b.with_timeout(20.0));
            } else {
                eprintln!("[skipped] {:?} backend not installed", b.kind);
            }
        }
        out
    }

    #[test]
    fn trivial_sentences() {
        let cases = [
            ("(exists ((x Real)) (= (* x x) 2))", true),
            ("(forall ((x Real)) (>= (* x x) 0))", true),
            // discriminant 0 - 4 < 0
            ("(exists ((x Real)) (= (+ (* x x) 1) 0))", false),
        ];
        for b in backends() {
            for (src, want) in cases {
                let f = parse_sexpr(src).unwrap();
                assert_eq!(run_backend(&f, &b), if want { Verdict::True } else { Verdict::False }, "{:?} on {src}", b.kind);
            }
        }
    }

    #[test]
    fn pulled_names_are_apart() {
        let f = parse_sexpr("(and (exists ((y Real)) (< y x)) (exists ((y Real)) (> y x)))").unwrap();
        let (vars, body) = pull_exists(&f);
        assert_eq!(vars.len(), 2);
        assert_ne!(vars[0], vars[1]);
        assert!(body.is_quantifier_free());
    }

    #[test]
    fn missing_tool_is_unknown() {
        let mut b = QEBackend::smt();
        b.executable = Some(PathBuf::from("/nonexistent/z3"));
        assert!(matches!(run_backend(&Formula::tt(), &b), Verdict::Unknown(_)));
    }
}
