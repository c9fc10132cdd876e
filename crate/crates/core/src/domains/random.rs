//! Small random instances for property checks.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::model::{MdpSample, Outcome, StationaryPolicy, Umdp};
use crate::planners::FactoredUmdp;
use crate::solve::check_proper;

/// Sparse support of each `(s, a)` pair. Action 0 always reaches `s + 1`, so
/// the chain `0 → 1 → … → goal` makes some policy proper.
fn random_support(rng: &mut impl Rng, n_states: usize, n_actions: usize, max_branch: usize) -> Vec<Vec<usize>> {
    let goal = n_states - 1;
    let mut support = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        for a in 0..n_actions {
            if s == goal {
                support.push(Vec::new());
                continue;
            }
            let k = rng.random_range(1..=max_branch.min(n_states));
            let mut succ = sample_indices(rng, n_states, k).into_vec();
            if a == 0 && !succ.contains(&(s + 1)) {
                succ[0] = s + 1;
            }
            succ.sort_unstable();
            succ.dedup();
            support.push(succ);
        }
    }
    support
}

fn random_row(rng: &mut impl Rng, succ: &[usize]) -> Vec<Outcome> {
    let weights: Vec<f64> = succ.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    succ.iter()
        .zip(weights)
        .map(|(&next, w)| Outcome::new(next, w / total, rng.random_range(0.1..2.0)))
        .collect()
}

/// Random UMDP with shared support across `n_samples` samples; the goal is the
/// last state and the initial state is 0.
pub fn random_umdp(rng: &mut impl Rng, n_states: usize, n_actions: usize, n_samples: usize) -> Umdp {
    assert!(n_states >= 2 && n_actions >= 1 && n_samples >= 1);
    let support = random_support(rng, n_states, n_actions, 3);
    let samples = (0..n_samples)
        .map(|_| {
            let rows = support.iter().map(|succ| random_row(rng, succ)).collect();
            MdpSample::from_rows(n_states, n_actions, rows).expect("well-formed rows")
        })
        .collect();
    Umdp::with_indices(n_states, n_actions, 0, &[n_states - 1], samples).expect("valid shape")
}

/// Random stochastic policy that is proper in every sample of `umdp`
/// (retrying, then falling back to the uniform policy, which is proper
/// because action 0 always moves towards the goal with positive probability).
pub fn random_proper_policy(rng: &mut impl Rng, umdp: &Umdp, deterministic: bool) -> StationaryPolicy {
    for _ in 0..64 {
        let rows = (0..umdp.n_states())
            .map(|s| {
                let actions = umdp.available_actions(s);
                if actions.is_empty() {
                    return Vec::new();
                }
                if deterministic {
                    return vec![(actions[rng.random_range(0..actions.len())], 1.0)];
                }
                let w: Vec<f64> = actions.iter().map(|_| rng.random_range(0.0..1.0)).collect();
                let total: f64 = w.iter().sum();
                actions.iter().zip(w).map(|(&a, x)| (a, x / total)).collect()
            })
            .collect();
        let pi = StationaryPolicy::from_rows(rows);
        if umdp.mdps().all(|m| check_proper(&m, &pi)) {
            return pi;
        }
    }
    let rows = (0..umdp.n_states())
        .map(|s| {
            let actions = umdp.available_actions(s);
            if actions.is_empty() {
                Vec::new()
            } else {
                let w = 1.0 / actions.len() as f64;
                actions.iter().map(|&a| (a, w)).collect()
            }
        })
        .collect();
    StationaryPolicy::from_rows(rows)
}

/// Random factored UMDP: every `(s, a)` has `menu` alternative rows on a shared support.
pub fn random_factored(rng: &mut impl Rng, n_states: usize, n_actions: usize, menu: usize) -> FactoredUmdp {
    let support = random_support(rng, n_states, n_actions, 3);
    let menus = support
        .iter()
        .map(|succ| {
            if succ.is_empty() {
                Vec::new()
            } else {
                (0..menu).map(|_| random_row(rng, succ)).collect()
            }
        })
        .collect();
    FactoredUmdp {
        n_states,
        n_actions,
        initial: 0,
        goals: vec![n_states - 1],
        menus,
    }
}
