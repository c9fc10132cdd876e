//! Per-sample dynamic programming: optimal values, policy evaluation, the
//! regret Bellman recursion and CEMR.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{proper_region, Mdp, StationaryPolicy, Umdp, ValueTable};

/// Residual-based stopping rule for value iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterLimits {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterLimits {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

impl IterLimits {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }
}

/// Iterations between divergence checks: the sup-norm residual must shrink
/// over every window or the iteration is declared divergent.
pub const DIVERGENCE_WINDOW: usize = 1000;

const VALUE_CEILING: f64 = 1e15;

/// Relative slack under which two action values count as tied.
pub(crate) const TIE_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn strictly_less(candidate: f64, best: f64) -> bool {
    candidate < best - TIE_EPS * best.abs().max(1.0)
}

/// In-place (Gauss-Seidel) fixed-point iteration over `n` states, in
/// ascending state order. `backup(s, values)` returns the new value of `s`
/// or `None` to leave it untouched (goal states).
pub(crate) fn gauss_seidel(
    n: usize,
    init: Vec<f64>,
    limits: IterLimits,
    mut backup: impl FnMut(usize, &[f64]) -> Option<f64>,
) -> Result<Vec<f64>> {
    debug_assert_eq!(init.len(), n);
    let mut values = init;
    let mut window_start = f64::INFINITY;
    for iter in 0..limits.max_iter {
        let mut residual: f64 = 0.0;
        let mut worst = 0;
        for s in 0..n {
            if let Some(new) = backup(s, &values) {
                let diff = (new - values[s]).abs();
                if diff > residual || diff.is_nan() {
                    residual = diff;
                    worst = s;
                }
                values[s] = new;
            }
        }
        if residual.is_nan() || values[worst].abs() > VALUE_CEILING {
            return Err(Error::Divergence {
                state: worst,
                residual,
                iterations: iter + 1,
            });
        }
        if residual < limits.tol {
            return Ok(values);
        }
        if iter % DIVERGENCE_WINDOW == 0 {
            if iter > 0 && residual >= window_start {
                return Err(Error::Divergence {
                    state: worst,
                    residual,
                    iterations: iter + 1,
                });
            }
            window_start = residual;
        }
        if iter + 1 == limits.max_iter {
            return Err(Error::Divergence {
                state: worst,
                residual,
                iterations: iter + 1,
            });
        }
    }
    Err(Error::Divergence {
        state: 0,
        residual: f64::INFINITY,
        iterations: 0,
    })
}

/// `Σ_{s'} T(s,a,s') C(s,a,s')`.
pub fn expected_cost(mdp: &Mdp<'_>, s: usize, a: usize) -> Result<f64> {
    if mdp.is_goal(s) {
        return Ok(0.0);
    }
    mdp.sample.expected_cost(s, a)
}

/// `C̄*(s) = min_a C̄(s,a)`; zero at goals.
pub fn best_local_costs(mdp: &Mdp<'_>) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| {
            if mdp.is_goal(s) {
                0.0
            } else {
                mdp.sample
                    .available_actions(s)
                    .map(|a| mdp.sample.cbar(s, a))
                    .fold(f64::INFINITY, f64::min)
            }
        })
        .collect()
}

#[inline]
fn lookahead(mdp: &Mdp<'_>, values: &[f64], s: usize, a: usize) -> f64 {
    mdp.sample.cbar(s, a)
        + mdp
            .sample
            .row(s, a)
            .iter()
            .map(|o| o.prob * values[o.next])
            .sum::<f64>()
}

/// Optimal values `V*` and a greedy deterministic policy (ties go to the
/// lowest action index).
pub fn optimal_values(mdp: &Mdp<'_>, limits: IterLimits) -> Result<(ValueTable, StationaryPolicy)> {
    let n = mdp.n_states();
    if let Some(state) = proper_region(mdp).iter().position(|&ok| !ok) {
        return Err(Error::NoProperPolicy { sample: None, state });
    }
    let values = gauss_seidel(n, vec![0.0; n], limits, |s, v| {
        if mdp.is_goal(s) {
            return None;
        }
        Some(
            mdp.sample
                .available_actions(s)
                .map(|a| lookahead(mdp, v, s, a))
                .fold(f64::INFINITY, f64::min),
        )
    })?;
    let policy = greedy_policy(mdp, &values);
    Ok((ValueTable(values), policy))
}

/// Deterministic policy greedy with respect to `values`.
pub fn greedy_policy(mdp: &Mdp<'_>, values: &[f64]) -> StationaryPolicy {
    let actions: Vec<Option<usize>> = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_goal(s) {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for a in mdp.sample.available_actions(s) {
                let q = lookahead(mdp, values, s, a);
                if best.is_none_or(|(_, b)| strictly_less(q, b)) {
                    best = Some((a, q));
                }
            }
            best.map(|(a, _)| a)
        })
        .collect();
    StationaryPolicy::deterministic(&actions)
}

/// First state at which `policy` fails to reach the goal set with
/// probability 1, if any.
pub fn improper_state(mdp: &Mdp<'_>, policy: &StationaryPolicy) -> Option<usize> {
    let n = mdp.n_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        if mdp.is_goal(s) {
            continue;
        }
        for &(a, p) in policy.probs(s) {
            if p <= 0.0 {
                continue;
            }
            for o in mdp.sample.row(s, a) {
                if o.prob > 0.0 {
                    preds[o.next].push(s);
                }
            }
        }
    }
    let mut reached: Vec<bool> = (0..n).map(|s| mdp.is_goal(s)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&s| reached[s]).collect();
    while let Some(s) = stack.pop() {
        for &p in &preds[s] {
            if !reached[p] {
                reached[p] = true;
                stack.push(p);
            }
        }
    }
    reached.iter().position(|&r| !r)
}

/// True iff every state reaches the goal set with probability 1 under `policy`.
pub fn check_proper(mdp: &Mdp<'_>, policy: &StationaryPolicy) -> bool {
    improper_state(mdp, policy).is_none()
}

/// Fixed point of `x(s) = Σ_a π(s,a) [cost(s,a) + Σ_{s'} T(s,a,s') x(s')]`, zero on goals.
pub fn evaluate_with(
    mdp: &Mdp<'_>,
    policy: &StationaryPolicy,
    limits: IterLimits,
    cost: impl Fn(usize, usize) -> f64,
) -> Result<ValueTable> {
    if let Some(state) = improper_state(mdp, policy) {
        return Err(Error::ImproperPolicy { state });
    }
    let n = mdp.n_states();
    let values = gauss_seidel(n, vec![0.0; n], limits, |s, v| {
        if mdp.is_goal(s) {
            return None;
        }
        Some(
            policy
                .probs(s)
                .iter()
                .map(|&(a, p)| {
                    p * (cost(s, a)
                        + mdp
                            .sample
                            .row(s, a)
                            .iter()
                            .map(|o| o.prob * v[o.next])
                            .sum::<f64>())
                })
                .sum(),
        )
    })?;
    Ok(ValueTable(values))
}

/// Value of a proper policy.
pub fn evaluate_policy(mdp: &Mdp<'_>, policy: &StationaryPolicy, limits: IterLimits) -> Result<ValueTable> {
    evaluate_with(mdp, policy, limits, |s, a| mdp.sample.cbar(s, a))
}

/// Expected number of steps to reach the goal set under a proper policy.
pub fn hitting_times(mdp: &Mdp<'_>, policy: &StationaryPolicy, limits: IterLimits) -> Result<ValueTable> {
    evaluate_with(mdp, policy, limits, |_, _| 1.0)
}

/// Suboptimality attributed to taking `a` at `s`:
/// `C̄(s,a) + Σ T(s,a,s') V*(s') − V*(s)`.
pub fn q_gap(mdp: &Mdp<'_>, vstar: &ValueTable, s: usize, a: usize) -> f64 {
    if mdp.is_goal(s) {
        return 0.0;
    }
    lookahead(mdp, &vstar.0, s, a) - vstar[s]
}

/// `V(s0, π) − V*(s0)` computed from two value evaluations.
pub fn regret_direct(mdp: &Mdp<'_>, policy: &StationaryPolicy, limits: IterLimits) -> Result<f64> {
    let table = regret_direct_table(mdp, policy, limits)?;
    Ok(table[mdp.initial])
}

/// `V(s, π) − V*(s)` at every state.
pub fn regret_direct_table(mdp: &Mdp<'_>, policy: &StationaryPolicy, limits: IterLimits) -> Result<ValueTable> {
    let value = evaluate_policy(mdp, policy, limits)?;
    let (vstar, _) = optimal_values(mdp, limits)?;
    Ok(ValueTable(
        value.0.iter().zip(&vstar.0).map(|(v, o)| v - o).collect(),
    ))
}

/// Regret of a proper policy via the regret Bellman recursion with Q-gap costs.
pub fn regret_bellman_eval(
    mdp: &Mdp<'_>,
    policy: &StationaryPolicy,
    vstar: &ValueTable,
    limits: IterLimits,
) -> Result<ValueTable> {
    evaluate_with(mdp, policy, limits, |s, a| q_gap(mdp, vstar, s, a))
}

/// Cumulative expected myopic regret: accumulates `C̄(s,a) − C̄*(s)`.
pub fn cemr_eval(mdp: &Mdp<'_>, policy: &StationaryPolicy, limits: IterLimits) -> Result<ValueTable> {
    let best = best_local_costs(mdp);
    evaluate_with(mdp, policy, limits, |s, a| mdp.sample.cbar(s, a) - best[s])
}

/// Optimal solution of one sample, shared by every planner.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOptimum {
    pub values: ValueTable,
    pub policy: StationaryPolicy,
    /// `C̄*_q(s)` for the CEMR local gap.
    pub best_local: Vec<f64>,
}

/// Solves every sample of `umdp` (in parallel, results in sample order).
pub fn solve_samples(umdp: &Umdp, limits: IterLimits) -> Result<Vec<SampleOptimum>> {
    (0..umdp.n_samples())
        .into_par_iter()
        .map(|q| {
            let mdp = umdp.mdp(q);
            let (values, policy) = optimal_values(&mdp, limits).map_err(|e| match e {
                Error::NoProperPolicy { state, .. } => Error::NoProperPolicy {
                    sample: Some(q),
                    state,
                },
                other => other,
            })?;
            Ok(SampleOptimum {
                values,
                policy,
                best_local: best_local_costs(&mdp),
            })
        })
        .collect()
}
