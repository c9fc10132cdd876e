//! Independent oracles: dense linear solves and exhaustive enumeration.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use regret_core::model::{MdpSample, Outcome, Umdp};

/// Exact value of a stochastic policy `pi[s] = [(a, w)]` by solving
/// `(I - P) V = c` on non-goal states. `None` if the system is singular
/// (the policy is improper).
pub fn policy_value(umdp: &Umdp, sample: &MdpSample, pi: &[Vec<(usize, f64)>]) -> Option<Vec<f64>> {
    let n = umdp.n_states();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for s in 0..n {
        if umdp.is_goal(s) {
            continue;
        }
        for &(a, w) in &pi[s] {
            for o in sample.row(s, a) {
                c[s] += w * o.prob * o.cost;
                if !umdp.is_goal(o.next) {
                    m[(s, o.next)] -= w * o.prob;
                }
            }
        }
    }
    let lu = m.lu();
    let x = lu.solve(&c)?;
    if x.iter().any(|v| !v.is_finite() || *v < -1e-9 || *v > 1e9) {
        return None;
    }
    Some(x.iter().copied().collect())
}

pub fn deterministic(actions: &[Option<usize>]) -> Vec<Vec<(usize, f64)>> {
    actions.iter().map(|a| a.map(|a| vec![(a, 1.0)]).unwrap_or_default()).collect()
}

/// Optimal values by policy iteration with exact solves, starting from a
/// proper deterministic policy.
pub fn optimal_value(umdp: &Umdp, sample: &MdpSample, start: &[Option<usize>]) -> Vec<f64> {
    let n = umdp.n_states();
    let mut actions = start.to_vec();
    loop {
        let v = policy_value(umdp, sample, &deterministic(&actions)).expect("proper start policy");
        let mut changed = false;
        for s in 0..n {
            if umdp.is_goal(s) {
                continue;
            }
            let q = |a: usize| -> f64 {
                sample
                    .row(s, a)
                    .iter()
                    .map(|o| o.prob * (o.cost + if umdp.is_goal(o.next) { 0.0 } else { v[o.next] }))
                    .sum()
            };
            let current = q(actions[s].unwrap());
            for a in 0..umdp.n_actions() {
                if !sample.row(s, a).is_empty() && q(a) < current - 1e-12 {
                    actions[s] = Some(a);
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            return v;
        }
    }
}

/// Action 0 everywhere except goals; proper on every instance built by
/// [`random_instance`].
pub fn chain_policy(umdp: &Umdp) -> Vec<Option<usize>> {
    (0..umdp.n_states())
        .map(|s| (!umdp.is_goal(s)).then_some(0))
        .collect()
}

/// Random UMDP with states `0..n`, goal `n - 1`, initial `0`. Every action
/// shares one random support per `(s, a)` across samples and action 0 always
/// reaches `s + 1`, so the all-zero policy is proper.
pub fn random_instance(rng: &mut impl Rng, n_states: usize, n_actions: usize, n_samples: usize) -> Umdp {
    let goal = n_states - 1;
    let supports: Vec<Vec<usize>> = (0..n_states * n_actions)
        .map(|i| {
            let (s, a) = (i / n_actions, i % n_actions);
            if s == goal {
                return Vec::new();
            }
            let mut succ: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..n_states)).collect();
            if a == 0 {
                succ.push(s + 1);
            }
            succ.sort_unstable();
            succ.dedup();
            succ
        })
        .collect();
    let samples = (0..n_samples)
        .map(|_| {
            let rows = supports
                .iter()
                .map(|succ| {
                    let w: Vec<f64> = succ.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    succ.iter()
                        .zip(&w)
                        .map(|(&next, &x)| Outcome::new(next, x / total, rng.random_range(0.2..2.0)))
                        .collect()
                })
                .collect();
            MdpSample::from_rows(n_states, n_actions, rows).unwrap()
        })
        .collect();
    Umdp::with_indices(n_states, n_actions, 0, &[goal], samples).unwrap()
}

/// Exact optimal values of every sample.
pub fn sample_optima(umdp: &Umdp) -> Vec<Vec<f64>> {
    let start = chain_policy(umdp);
    umdp.samples().iter().map(|q| optimal_value(umdp, q, &start)).collect()
}

/// Maximum regret at the initial state of a stochastic stationary policy;
/// infinite if improper in some sample.
pub fn max_regret(umdp: &Umdp, optima: &[Vec<f64>], pi: &[Vec<(usize, f64)>]) -> f64 {
    let s0 = umdp.initial();
    umdp.samples()
        .iter()
        .zip(optima)
        .map(|(q, v)| policy_value(umdp, q, pi).map_or(f64::INFINITY, |x| x[s0] - v[s0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// All deterministic stationary policies (`None` at goals).
pub fn all_deterministic(umdp: &Umdp) -> Vec<Vec<Option<usize>>> {
    let sample = &umdp.samples()[0];
    let mut out = vec![Vec::new()];
    for s in 0..umdp.n_states() {
        let choices: Vec<Option<usize>> = if umdp.is_goal(s) {
            vec![None]
        } else {
            (0..umdp.n_actions()).filter(|&a| !sample.row(s, a).is_empty()).map(Some).collect()
        };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// Brute-force minimax regret over deterministic stationary policies.
pub fn brute_force_minimax_regret(umdp: &Umdp) -> f64 {
    let optima = sample_optima(umdp);
    all_deterministic(umdp)
        .iter()
        .map(|p| max_regret(umdp, &optima, &deterministic(p)))
        .fold(f64::INFINITY, f64::min)
}

/// Distribution and accrued cost after running a time-indexed table for
/// `n` steps from `anchor` in one sample.
pub fn run_table(
    umdp: &Umdp,
    sample: &MdpSample,
    anchor: usize,
    n: usize,
    action: impl Fn(usize, usize) -> usize,
) -> (f64, Vec<f64>) {
    let ns = umdp.n_states();
    let mut dist = vec![0.0; ns];
    dist[anchor] = 1.0;
    let mut cost = 0.0;
    for t in 0..n {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            if umdp.is_goal(s) {
                next[s] += dist[s];
                continue;
            }
            for o in sample.row(s, action(t, s)) {
                cost += dist[s] * o.prob * o.cost;
                next[o.next] += dist[s] * o.prob;
            }
        }
        dist = next;
    }
    (cost, dist)
}
