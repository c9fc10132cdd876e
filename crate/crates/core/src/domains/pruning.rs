//! Removal of actions that no sample's optimal policy uses.

use crate::error::{Error, Result};
use crate::model::{validate_umdp, Umdp};
use crate::solve::{solve_samples, IterLimits};

/// Keeps `(s, a)` only if `a` is the optimal action at `s` in some sample.
pub fn prune_actions(umdp: &Umdp, limits: IterLimits) -> Result<Umdp> {
    let optima = solve_samples(umdp, limits)?;
    let ns = umdp.n_states();
    let mut keep = vec![false; ns * umdp.n_actions()];
    for opt in &optima {
        for s in 0..ns {
            if let Some(a) = opt.policy.action(s) {
                keep[s * umdp.n_actions() + a] = true;
            }
        }
    }
    let na = umdp.n_actions();
    let samples = umdp
        .samples()
        .iter()
        .map(|sample| sample.retain_actions(|s, a| umdp.is_goal(s) || keep[s * na + a]))
        .collect();
    let pruned = umdp.with_samples(samples)?;
    if let Some(s) = (0..ns).find(|&s| !umdp.is_goal(s) && pruned.available_actions(s).is_empty()) {
        return Err(Error::Structural(format!("pruning removed every action at s{s}")));
    }
    validate_umdp(&pruned).into_result()?;
    Ok(pruned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MdpSample;

    #[test]
    fn union_of_optimal_actions_survives() {
        let mut samples = Vec::new();
        for (c0, c1, c2) in [(1.0, 2.0, 5.0), (3.0, 2.0, 5.0)] {
            let mut b = MdpSample::builder(2, 3);
            b.add(0, 0, 1, 1.0, c0).add(0, 1, 1, 1.0, c1).add(0, 2, 1, 1.0, c2);
            samples.push(b.build().unwrap());
        }
        let umdp = Umdp::with_indices(2, 3, 0, &[1], samples).unwrap();
        let pruned = prune_actions(&umdp, IterLimits::default()).unwrap();
        assert_eq!(pruned.available_actions(0), vec![0, 1]);

        let single = umdp.with_samples(vec![umdp.samples()[0].clone()]).unwrap();
        assert_eq!(prune_actions(&single, IterLimits::default()).unwrap().available_actions(0), vec![0]);
    }
}
