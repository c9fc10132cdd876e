//! JSON interchange for models and policies.
//!
//! UMDP layout:
//! `{"states": [..] | n, "actions": [..] | n, "initial": s, "goals": [..],
//!   "samples": [{"transitions": [[s, a, s', p, c], ...]}, ...]}`.
//! States and actions are given as a list of names or as a count; the
//! indices inside transitions may be integers or names. Probabilities and
//! costs may be numbers or decimal strings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{validate_umdp, MdpSample, Umdp};
use crate::planners::Policy;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Names {
    Count(usize),
    List(Vec<String>),
}

impl Names {
    fn into_list(self, prefix: char) -> Vec<String> {
        match self {
            Names::Count(n) => (0..n).map(|i| format!("{prefix}{i}")).collect(),
            Names::List(v) => v,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    transitions: Vec<[Value; 5]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUmdp {
    states: Names,
    actions: Names,
    initial: Value,
    goals: Vec<Value>,
    samples: Vec<RawSample>,
}

fn index_of(value: &Value, names: &[String], what: &str) -> std::result::Result<usize, String> {
    let found = match value {
        Value::Number(n) => n.as_u64().map(|i| i as usize).filter(|&i| i < names.len()),
        Value::String(s) => names.iter().position(|n| n == s),
        _ => None,
    };
    found.ok_or_else(|| format!("unknown {what} {value}"))
}

fn real(value: &Value, what: &str) -> std::result::Result<f64, String> {
    let parsed = match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    parsed.ok_or_else(|| format!("{what} {value} is not a number"))
}

/// Parses and validates a UMDP document.
pub fn parse_umdp(text: &str) -> Result<Umdp> {
    let raw: RawUmdp = serde_json::from_str(text)?;
    let states = raw.states.into_list('s');
    let actions = raw.actions.into_list('a');
    let mut problems = Vec::new();
    let initial = index_of(&raw.initial, &states, "initial state").map_err(|e| problems.push(e)).ok();
    let goals: Vec<usize> = raw
        .goals
        .iter()
        .filter_map(|g| index_of(g, &states, "goal state").map_err(|e| problems.push(e)).ok())
        .collect();
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (q, sample) in raw.samples.iter().enumerate() {
        let mut builder = MdpSample::builder(states.len(), actions.len());
        for (k, [s, a, next, p, c]) in sample.transitions.iter().enumerate() {
            let entry = (|| {
                Ok::<_, String>((
                    index_of(s, &states, "state")?,
                    index_of(a, &actions, "action")?,
                    index_of(next, &states, "successor")?,
                    real(p, "probability")?,
                    real(c, "cost")?,
                ))
            })();
            match entry {
                Ok((s, a, next, p, c)) => {
                    builder.add(s, a, next, p, c);
                }
                Err(e) => problems.push(format!("sample {q}, transition {k}: {e}")),
            }
        }
        samples.push(builder.build()?);
    }
    let Some(initial) = initial.filter(|_| problems.is_empty()) else {
        return Err(Error::Validation(problems));
    };
    let umdp = Umdp::new(states, actions, initial, &goals, samples)?;
    validate_umdp(&umdp).into_result()?;
    Ok(umdp)
}

pub fn read_umdp(path: impl AsRef<Path>) -> Result<Umdp> {
    parse_umdp(&fs::read_to_string(path)?)
}

pub fn umdp_to_json(umdp: &Umdp) -> Result<String> {
    let samples = umdp
        .samples()
        .iter()
        .map(|sample| {
            let mut transitions = Vec::new();
            for s in 0..umdp.n_states() {
                for a in 0..umdp.n_actions() {
                    for o in sample.row(s, a) {
                        transitions.push([s.into(), a.into(), o.next.into(), o.prob.into(), o.cost.into()]);
                    }
                }
            }
            RawSample { transitions }
        })
        .collect();
    let raw = RawUmdp {
        states: Names::List(umdp.state_names().to_vec()),
        actions: Names::List(umdp.action_names().to_vec()),
        initial: umdp.initial().into(),
        goals: umdp.goals().into_iter().map(Value::from).collect(),
        samples,
    };
    Ok(serde_json::to_string(&raw)?)
}

pub fn write_umdp(umdp: &Umdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, umdp_to_json(umdp)?)?;
    Ok(())
}

pub fn read_policy(path: impl AsRef<Path>) -> Result<Policy> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(policy)?)?;
    Ok(())
}
