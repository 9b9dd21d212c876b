//! JSON automaton documents and CSV trace export.
//!
//! Document layout:
//!
//! ```json
//! {
//!   "variables": ["x1", "x2"],
//!   "tolerance": 1e-7,
//!   "noise": 0.0,
//!   "locations": [
//!     { "name": "fall", "invariant": "(>= x1 0)",
//!       "flow": { "kind": "affine", "a": [["0", "1"], ["0", "0"]], "b": ["0", "-49/5"] } }
//!   ],
//!   "edges": [
//!     { "source": "fall", "target": "fall", "activation": "(= x1 0)",
//!       "reset": "(and (= x1' x1) (= x2' (* (- (/ 43 50)) x2)))" }
//!   ]
//! }
//! ```
//!
//! Formulas use the s-expression grammar; rationals are strings `"p/q"`, integers
//! or decimals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Edge, FlowSpec, HybridAutomaton, Location, Trace, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::formula::{emit_sexpr, parse_sexpr, Formula};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutomatonDoc {
    pub variables: Vec<String>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub noise: f64,
    pub locations: Vec<LocationDoc>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocationDoc {
    pub name: String,
    #[serde(default = "true_text")]
    pub invariant: String,
    pub flow: FlowSpec,
}

fn true_text() -> String {
    "true".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub source: String,
    pub target: String,
    pub activation: String,
    pub reset: String,
}

fn parse_field(what: &str, src: &str) -> Result<Formula> {
    parse_sexpr(src).map_err(|e| Error::Malformed(format!("{what}: {e}")))
}

impl AutomatonDoc {
    pub fn build(&self) -> Result<HybridAutomaton> {
        let mut locs = Vec::new();
        for l in &self.locations {
            locs.push(Location {
                name: l.name.clone(),
                invariant: parse_field(&format!("invariant of `{}`", l.name), &l.invariant)?,
                flow: l.flow.clone(),
            });
        }
        let index = |name: &str| {
            locs.iter().position(|l: &Location| l.name == name).ok_or_else(|| Error::Malformed(format!("unknown location `{name}`")))
        };
        let mut edges = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            edges.push(Edge {
                source: index(&e.source)?,
                target: index(&e.target)?,
                activation: parse_field(&format!("activation of edge {i}"), &e.activation)?,
                reset: parse_field(&format!("reset of edge {i}"), &e.reset)?,
            });
        }
        let mut h = HybridAutomaton::new(self.variables.clone(), locs, edges)?.with_tolerance(self.tolerance);
        if self.noise > 0.0 {
            h = h.disturb(self.noise)?;
        }
        Ok(h)
    }

    pub fn from_automaton(h: &HybridAutomaton) -> Self {
        let name = |i: usize| h.locations()[i].name.clone();
        AutomatonDoc {
            variables: h.vars().to_vec(),
            tolerance: h.tolerance(),
            noise: h.noise(),
            locations: h
                .locations()
                .iter()
                .map(|l| LocationDoc { name: l.name.clone(), invariant: emit_sexpr(&l.invariant), flow: l.flow.clone() })
                .collect(),
            edges: h
                .edges()
                .iter()
                .map(|e| EdgeDoc {
                    source: name(e.source),
                    target: name(e.target),
                    activation: emit_sexpr(&e.activation),
                    reset: emit_sexpr(&e.reset),
                })
                .collect(),
        }
    }
}

pub fn to_json(h: &HybridAutomaton) -> Result<String> {
    Ok(serde_json::to_string_pretty(&AutomatonDoc::from_automaton(h))?)
}

pub fn from_json(src: &str) -> Result<HybridAutomaton> {
    serde_json::from_str::<AutomatonDoc>(src)?.build()
}

/// CSV with header `time,location,<vars...>`, one row per trace state.
pub fn write_trace_csv(h: &HybridAutomaton, tr: &Trace, out: &mut dyn Write) -> Result<()> {
    write!(out, "time,location")?;
    for v in h.vars() {
        write!(out, ",{v}")?;
    }
    writeln!(out)?;
    for (t, s) in tr.timed_states() {
        let loc = h.locations().get(s.location).map(|l| l.name.as_str()).unwrap_or("?");
        write!(out, "{t},{loc}")?;
        for x in &s.x {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn trace_csv(h: &HybridAutomaton, tr: &Trace) -> String {
    let mut buf = Vec::new();
    // writing into a Vec cannot fail
    let _ = write_trace_csv(h, tr, &mut buf);
    String::from_utf8(buf).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::HybridState;

    const BALL: &str = r#"{
      "variables": ["x1", "x2"],
      "locations": [
        { "name": "fall", "invariant": "(>= x1 0)",
          "flow": { "kind": "affine", "a": [["0", "1"], [0, 0]], "b": ["0", "-9.8"] } }
      ],
      "edges": [
        { "source": "fall", "target": "fall", "activation": "(= x1 0)",
          "reset": "(and (= x1' x1) (= x2' (- (* 0.86 x2))))" }
      ]
    }"#;

    #[test]
    fn document_round_trip() {
        let h = from_json(BALL).unwrap();
        let s = h.discrete_post(&HybridState::new(0, vec![0.0, -14.0]), 0).unwrap();
        assert!((s.x[1] - 12.04).abs() < 1e-12);
        let again = from_json(&to_json(&h).unwrap()).unwrap();
        assert_eq!(again.locations()[0].flow, h.locations()[0].flow);
        assert!(again.edges()[0].reset.alpha_eq(&h.edges()[0].reset));
    }

    #[test]
    fn unknown_location_is_reported() {
        let bad = BALL.replace("\"target\": \"fall\"", "\"target\": \"nowhere\"");
        assert!(matches!(from_json(&bad), Err(Error::Malformed(m)) if m.contains("nowhere")));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let h = from_json(BALL).unwrap();
        let mut tr = Trace::new(HybridState::new(0, vec![10.0, 0.0]));
        let s = h.continuous_post(&tr.start, 1.0, None).unwrap();
        tr.push(crate::hybrid::Transition::Continuous(1.0), s);
        let csv = trace_csv(&h, &tr);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time,location,x1,x2");
        assert!(lines[2].starts_with("1,fall,5.1"));
    }
}
