//! Exact evaluation of stationary policies and option plans in a sample, and
//! the value of a fixed policy against a sample-switching adversary.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Mdp, StationaryPolicy, Umdp};
use crate::planners::OptionPlan;
use crate::solve::{evaluate_policy, gauss_seidel, hitting_times, IterLimits, SampleOptimum};

/// What to do when an option plan reaches a `(step, state)` its option does not cover.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Coverage {
    /// Fail with [`Error::Coverage`].
    #[default]
    Strict,
    /// Start a fresh option anchored at the uncovered state.
    Fallback,
}

/// A policy that can be executed in any sample.
#[derive(Clone, Copy, Debug)]
pub enum PolicyRef<'a> {
    Stationary(&'a StationaryPolicy),
    Options(&'a OptionPlan),
}

impl<'a> From<&'a StationaryPolicy> for PolicyRef<'a> {
    fn from(p: &'a StationaryPolicy) -> Self {
        PolicyRef::Stationary(p)
    }
}

impl<'a> From<&'a OptionPlan> for PolicyRef<'a> {
    fn from(p: &'a OptionPlan) -> Self {
        PolicyRef::Options(p)
    }
}

const TERMINAL: usize = usize::MAX;

/// Markov chain induced by an option plan on `(anchor, step, state)` nodes.
struct PlanChain {
    /// Per node: `(expected step cost, successors)`; `TERMINAL` marks goal arrival.
    rows: Vec<(f64, Vec<(usize, f64)>)>,
}

fn build_plan_chain(mdp: &Mdp<'_>, plan: &OptionPlan, start: usize, coverage: Coverage) -> Result<PlanChain> {
    let n = plan.n;
    let mut index: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<(usize, usize, usize)> = Vec::new();
    let mut rows = Vec::new();
    let mut intern = |key: (usize, usize, usize), nodes: &mut Vec<_>| -> usize {
        *index.entry(key).or_insert_with(|| {
            nodes.push(key);
            nodes.len() - 1
        })
    };
    if mdp.is_goal(start) {
        return Ok(PlanChain { rows });
    }
    intern((start, 0, start), &mut nodes);
    let mut k = 0;
    while k < nodes.len() {
        let (anchor, t, s) = nodes[k];
        let (anchor, t, a) = match plan.options.get(anchor).and_then(|o| o.action(t, s)) {
            Some(a) => (anchor, t, a),
            None => match coverage {
                Coverage::Strict => return Err(Error::Coverage { anchor, state: s, step: t }),
                Coverage::Fallback => {
                    let a = plan.options.get(s).and_then(|o| o.action(0, s)).ok_or(Error::Coverage {
                        anchor: s,
                        state: s,
                        step: 0,
                    })?;
                    (s, 0, a)
                }
            },
        };
        if !mdp.sample.is_available(s, a) {
            return Err(Error::Structural(format!("plan uses unavailable action a{a} at s{s}")));
        }
        let mut succ = Vec::with_capacity(mdp.sample.row(s, a).len());
        let mut to_goal = 0.0;
        for o in mdp.sample.row(s, a) {
            if mdp.is_goal(o.next) {
                to_goal += o.prob;
                continue;
            }
            let key = if t + 1 == n { (o.next, 0, o.next) } else { (anchor, t + 1, o.next) };
            succ.push((intern(key, &mut nodes), o.prob));
        }
        if to_goal > 0.0 {
            succ.push((TERMINAL, to_goal));
        }
        rows.push((mdp.sample.cbar(s, a), succ));
        k += 1;
    }
    Ok(PlanChain { rows })
}

impl PlanChain {
    /// Node that cannot reach goal arrival, if any.
    fn trapped(&self) -> Option<usize> {
        let m = self.rows.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut ok = vec![false; m];
        let mut stack = Vec::new();
        for (i, (_, succ)) in self.rows.iter().enumerate() {
            for &(j, _) in succ {
                if j == TERMINAL {
                    if !ok[i] {
                        ok[i] = true;
                        stack.push(i);
                    }
                } else {
                    preds[j].push(i);
                }
            }
        }
        while let Some(j) = stack.pop() {
            for &i in &preds[j] {
                if !ok[i] {
                    ok[i] = true;
                    stack.push(i);
                }
            }
        }
        ok.iter().position(|&b| !b)
    }

    fn solve(&self, limits: IterLimits, unit_cost: bool) -> Result<f64> {
        if self.rows.is_empty() {
            return Ok(0.0);
        }
        if let Some(node) = self.trapped() {
            return Err(Error::ImproperPolicy { state: node });
        }
        let values = gauss_seidel(self.rows.len(), vec![0.0; self.rows.len()], limits, |i, v| {
            let (c, succ) = &self.rows[i];
            let cost = if unit_cost { 1.0 } else { *c };
            Some(
                cost + succ
                    .iter()
                    .filter(|&&(j, _)| j != TERMINAL)
                    .map(|&(j, p)| p * v[j])
                    .sum::<f64>(),
            )
        })?;
        Ok(values[0])
    }
}

/// Expected cost of executing `plan` from `start` in one sample.
pub fn evaluate_option_plan_from(
    mdp: &Mdp<'_>,
    plan: &OptionPlan,
    start: usize,
    coverage: Coverage,
    limits: IterLimits,
) -> Result<f64> {
    build_plan_chain(mdp, plan, start, coverage)?.solve(limits, false)
}

/// Expected cost of executing `plan` from the initial state in one sample.
pub fn evaluate_option_plan(mdp: &Mdp<'_>, plan: &OptionPlan, coverage: Coverage, limits: IterLimits) -> Result<f64> {
    evaluate_option_plan_from(mdp, plan, mdp.initial, coverage, limits)
}

/// Expected number of steps until `plan` reaches the goal from `start`.
pub fn plan_hitting_time(mdp: &Mdp<'_>, plan: &OptionPlan, start: usize, coverage: Coverage, limits: IterLimits) -> Result<f64> {
    build_plan_chain(mdp, plan, start, coverage)?.solve(limits, true)
}

/// Value of `policy` at the initial state of one sample.
pub fn policy_value(mdp: &Mdp<'_>, policy: PolicyRef<'_>, coverage: Coverage, limits: IterLimits) -> Result<f64> {
    match policy {
        PolicyRef::Stationary(p) => Ok(evaluate_policy(mdp, p, limits)?[mdp.initial]),
        PolicyRef::Options(plan) => evaluate_option_plan(mdp, plan, coverage, limits),
    }
}

/// Per-sample regrets and their maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretProfile {
    pub max_regret: f64,
    /// Sample achieving the maximum (first on ties).
    pub worst_sample: usize,
    /// `+∞` where the policy is improper.
    pub per_sample: Vec<f64>,
}

/// Maximum over samples of `V_q(s0, π) − V*_q(s0)`. Improperness in a
/// sample is reported as infinite regret for that sample.
pub fn max_regret(
    umdp: &Umdp,
    policy: PolicyRef<'_>,
    optima: &[SampleOptimum],
    coverage: Coverage,
    limits: IterLimits,
) -> Result<RegretProfile> {
    let s0 = umdp.initial();
    let per_sample: Vec<f64> = (0..umdp.n_samples())
        .into_par_iter()
        .map(|q| match policy_value(&umdp.mdp(q), policy, coverage, limits) {
            Ok(v) => Ok(v - optima[q].values[s0]),
            Err(Error::ImproperPolicy { .. } | Error::Divergence { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut worst_sample = 0;
    for (q, &r) in per_sample.iter().enumerate() {
        if r > per_sample[worst_sample] {
            worst_sample = q;
        }
    }
    Ok(RegretProfile {
        max_regret: per_sample.get(worst_sample).copied().unwrap_or(0.0),
        worst_sample,
        per_sample,
    })
}

/// `(max regret, worst sample)` of a stationary policy.
pub fn stationary_max_regret(
    umdp: &Umdp,
    policy: &StationaryPolicy,
    optima: &[SampleOptimum],
    limits: IterLimits,
) -> Result<(f64, usize)> {
    let profile = max_regret(umdp, PolicyRef::Stationary(policy), optima, Coverage::Strict, limits)?;
    Ok((profile.max_regret, profile.worst_sample))
}

/// One block of execution from a block-start state in one sample: expected
/// cost and the stopping distribution over non-goal states.
struct Block {
    cost: f64,
    end: Vec<(usize, f64)>,
}

fn block_model(mdp: &Mdp<'_>, policy: PolicyRef<'_>, n: usize, start: usize) -> Result<Block> {
    let ns = mdp.n_states();
    let mut dist = vec![0.0; ns];
    dist[start] = 1.0;
    let mut cost = 0.0;
    for t in 0..n {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let p = dist[s];
            if p == 0.0 || mdp.is_goal(s) {
                continue;
            }
            let mut step = |a: usize, w: f64| {
                cost += p * w * mdp.sample.cbar(s, a);
                for o in mdp.sample.row(s, a) {
                    if !mdp.is_goal(o.next) {
                        next[o.next] += p * w * o.prob;
                    }
                }
            };
            match policy {
                PolicyRef::Stationary(pi) => {
                    for &(a, w) in pi.probs(s) {
                        step(a, w);
                    }
                }
                PolicyRef::Options(plan) => {
                    let a = plan.options[start].action(t, s).ok_or(Error::Coverage {
                        anchor: start,
                        state: s,
                        step: t,
                    })?;
                    step(a, 1.0);
                }
            }
        }
        dist = next;
    }
    Ok(Block {
        cost,
        end: dist.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect(),
    })
}

/// Regret of a fixed policy against an adversary that picks the sample for
/// every block of `n` steps. For option plans the block is the plan's option,
/// so `n` must equal the plan horizon.
pub fn adversary_value(
    umdp: &Umdp,
    policy: PolicyRef<'_>,
    n: usize,
    optima: &[SampleOptimum],
    limits: IterLimits,
) -> Result<f64> {
    if let PolicyRef::Options(plan) = policy {
        if plan.n != n {
            return Err(Error::Structural(format!(
                "adversary block {n} differs from the plan horizon {}",
                plan.n
            )));
        }
    }
    if n == 0 {
        return Err(Error::Structural("adversary block length must be at least 1".into()));
    }
    let ns = umdp.n_states();
    let blocks: Vec<Vec<Block>> = (0..ns)
        .into_par_iter()
        .map(|s| {
            if umdp.is_goal(s) {
                return Ok(Vec::new());
            }
            (0..umdp.n_samples())
                .map(|q| block_model(&umdp.mdp(q), policy, n, s))
                .collect()
        })
        .collect::<Result<_>>()?;
    let values = gauss_seidel(ns, vec![0.0; ns], limits, |s, v| {
        if umdp.is_goal(s) {
            return None;
        }
        Some(
            blocks[s]
                .iter()
                .enumerate()
                .map(|(q, b)| {
                    let vstar = &optima[q].values;
                    b.cost - vstar[s] + b.end.iter().map(|&(x, p)| p * (vstar[x] + v[x])).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max),
        )
    })
    .map_err(|e| match e {
        Error::Divergence { state, .. } => Error::ImproperPolicy { state },
        other => other,
    })?;
    Ok(values[umdp.initial()])
}

/// Worst-case expected number of steps to the goal when the sample may
/// change at every step, at every state.
pub fn adversarial_hitting_times(umdp: &Umdp, policy: &StationaryPolicy, limits: IterLimits) -> Result<Vec<f64>> {
    let ns = umdp.n_states();
    gauss_seidel(ns, vec![0.0; ns], limits, |s, v| {
        if umdp.is_goal(s) {
            return None;
        }
        Some(
            umdp.samples()
                .iter()
                .map(|sample| {
                    1.0 + policy
                        .probs(s)
                        .iter()
                        .map(|&(a, w)| w * sample.row(s, a).iter().map(|o| o.prob * v[o.next]).sum::<f64>())
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max),
        )
    })
    .map_err(|e| match e {
        Error::Divergence { state, .. } => Error::ImproperPolicy { state },
        other => other,
    })
}

/// Per-sample expected hitting times of a stationary policy, maximised over
/// samples and states.
pub fn max_hitting_time(umdp: &Umdp, policy: &StationaryPolicy, limits: IterLimits) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for mdp in umdp.mdps() {
        let h = hitting_times(&mdp, policy, limits)?;
        worst = worst.max(h.values().iter().copied().fold(0.0, f64::max));
    }
    Ok(worst)
}
