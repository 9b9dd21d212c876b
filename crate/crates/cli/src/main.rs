//! `epsreach`: build, simulate, translate and analyse hybrid automata.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epsreach::formula::Dialect;
use epsreach::reach::BackendKind;
use epsreach::sim::Integrator;

use crate::config::{ConfigError, RunConfig};

/// Exit codes.
pub const OK: u8 = 0;
pub const PROPERTY_FALSE: u8 = 1;
pub const USAGE: u8 = 2;
pub const BACKEND_UNAVAILABLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "epsreach", version, about = "Hybrid automata under standard and sphere semantics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in model (tanh, sgn, pwl, taylor, ball) or an automaton JSON file.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Bouncing ball: initial height.
    #[arg(long, global = true)]
    h0: Option<f64>,
    /// Bouncing ball: gravity.
    #[arg(long, global = true)]
    g: Option<f64>,
    /// Bouncing ball: restitution factor.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Sphere radius.
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// One box side `lo:hi` per variable, in variable order.
    #[arg(long = "box", global = true, allow_hyphen_values = true, value_parser = parse_side)]
    bounds: Vec<[f64; 2]>,
    /// Grid cells per axis.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// redlog, smt or grid.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the sample generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_jumps: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    step: Option<f64>,
    /// auto, rk4, exact or frozen.
    #[arg(long, global = true)]
    integrator: Option<Integrator>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the automaton as JSON.
    Build,
    /// Simulate from a start point; writes a trace CSV and a phase portrait.
    Simulate {
        /// Start point, comma separated.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
        start: Option<Point>,
    },
    /// Translate a formula file from sphere semantics to standard semantics.
    Translate {
        input: PathBuf,
        #[arg(long, default_value = "sexpr")]
        dialect: Dialect,
        /// Free variables that are parameters rather than coordinates.
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
    },
    /// Epsilon-reachable region from a start point.
    Reach {
        /// Start point, comma separated.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
        start: Option<Point>,
        /// Noise level of the disturbed automaton; 0 keeps the automaton as is.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Maximum number of sweeps.
        #[arg(long, default_value_t = 200)]
        budget: usize,
    },
    /// Check contraction of the limit-cycle return map, numerically and symbolically.
    CheckConvergence {
        /// Location whose frozen flow carries the arc.
        #[arg(long, default_value = "pp")]
        location: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Shift of the second crossing along its section (negative control).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        displace_q1: f64,
        /// Fail with exit code 3 instead of continuing when the backend is missing.
        #[arg(long)]
        no_fallback: bool,
    },
}

fn parse_side(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected `lo:hi`, got `{s}`"))?;
    let f = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([f(lo)?, f(hi)?])
}

/// Comma-separated coordinates.
#[derive(Clone, Debug)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))).collect::<Result<_, _>>().map(Point)
}

fn resolve(c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &c.model {
        cfg.model = m.clone();
    }
    let p = &mut cfg.params;
    for (slot, flag) in [
        (&mut p.tau, c.tau),
        (&mut p.lambda, c.lambda),
        (&mut p.alpha, c.alpha),
        (&mut p.h0, c.h0),
        (&mut p.g, c.g),
        (&mut p.gamma, c.gamma),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    if let Some(e) = c.epsilon {
        cfg.epsilon = e;
    }
    if !c.bounds.is_empty() {
        cfg.bounds = c.bounds.clone();
    }
    if let Some(r) = c.resolution {
        cfg.resolution = r;
    }
    if let Some(k) = c.backend {
        if k != cfg.backend.kind {
            cfg.backend.kind = k;
            cfg.backend.executable = None;
        }
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(j) = c.max_jumps {
        cfg.sim.max_jumps = j;
    }
    if let Some(h) = c.horizon {
        cfg.sim.horizon = h;
    }
    if let Some(s) = c.step {
        cfg.sim.step = s;
    }
    if let Some(i) = c.integrator {
        cfg.sim.integrator = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let r = match cli.command {
        Command::Build => commands::build(&cfg),
        Command::Simulate { start } => commands::simulate(&cfg, start.map(|p| p.0)),
        Command::Translate { input, dialect, params } => commands::translate(&cfg, &input, dialect, &params),
        Command::Reach { start, noise, budget } => commands::reach(&cfg, start.map(|p| p.0), noise, budget),
        Command::CheckConvergence { location, samples, displace_q1, no_fallback } => {
            commands::check_convergence(&cfg, &location, samples, displace_q1, no_fallback)
        }
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE)
        }
    }
}
