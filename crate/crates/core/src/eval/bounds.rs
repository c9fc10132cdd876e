//! Constants of the one-step adversary over-approximation bound.

use serde::Serialize;

use crate::error::Result;
use crate::model::{StationaryPolicy, Umdp};
use crate::solve::{IterLimits, SampleOptimum};

use super::chain::{adversarial_hitting_times, max_hitting_time};

/// Where a maximum was attained: `(sample i, sample j, state, action)`.
pub type Witness = (usize, usize, usize, usize);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    /// Max `|C̄_i(s,a) − C̄_j(s,a)|`.
    pub delta_c: f64,
    /// Half the max L1 distance between transition rows.
    pub delta_t: f64,
    /// Max `|V*_i(s) − V*_j(s)|`.
    pub delta_v: f64,
    /// Max expected step cost.
    pub c_max: f64,
    /// Bound on the expected number of steps to the goal.
    pub horizon: f64,
    pub witness_c: Witness,
    pub witness_t: Witness,
    /// Action slot unused.
    pub witness_v: Witness,
    pub witness_c_max: Witness,
}

fn l1(a: &[crate::model::Outcome], b: &[crate::model::Outcome]) -> f64 {
    // Rows are sorted by successor.
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.next == y.next => {
                sum += (x.prob - y.prob).abs();
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.next < y.next => {
                sum += x.prob;
                i += 1;
            }
            (Some(_), Some(y)) => {
                sum += y.prob;
                j += 1;
            }
            (Some(x), None) => {
                sum += x.prob;
                i += 1;
            }
            (None, Some(y)) => {
                sum += y.prob;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    sum
}

/// Tight maxima over sample pairs, with the supplied horizon.
pub fn bound_constants(umdp: &Umdp, optima: &[SampleOptimum], horizon: f64) -> BoundConstants {
    let mut bc = BoundConstants {
        delta_c: 0.0,
        delta_t: 0.0,
        delta_v: 0.0,
        c_max: 0.0,
        horizon,
        witness_c: (0, 0, 0, 0),
        witness_t: (0, 0, 0, 0),
        witness_v: (0, 0, 0, 0),
        witness_c_max: (0, 0, 0, 0),
    };
    let samples = umdp.samples();
    for s in 0..umdp.n_states() {
        if umdp.is_goal(s) {
            continue;
        }
        for a in umdp.available_actions(s) {
            for (i, si) in samples.iter().enumerate() {
                let ci = si.cbar(s, a);
                if ci > bc.c_max {
                    bc.c_max = ci;
                    bc.witness_c_max = (i, i, s, a);
                }
                for (j, sj) in samples.iter().enumerate().skip(i + 1) {
                    let dc = (ci - sj.cbar(s, a)).abs();
                    if dc > bc.delta_c {
                        bc.delta_c = dc;
                        bc.witness_c = (i, j, s, a);
                    }
                    let dt = 0.5 * l1(si.row(s, a), sj.row(s, a));
                    if dt > bc.delta_t {
                        bc.delta_t = dt;
                        bc.witness_t = (i, j, s, a);
                    }
                }
            }
        }
        for i in 0..optima.len() {
            for j in i + 1..optima.len() {
                let dv = (optima[i].values[s] - optima[j].values[s]).abs();
                if dv > bc.delta_v {
                    bc.delta_v = dv;
                    bc.witness_v = (i, j, s, 0);
                }
            }
        }
    }
    bc
}

/// Horizon estimate for `policy`: the larger of twice the worst per-sample
/// expected hitting time and the exact worst case under a per-step adversary.
pub fn horizon_estimate(umdp: &Umdp, policy: &StationaryPolicy, limits: IterLimits) -> Result<f64> {
    let per_sample = max_hitting_time(umdp, policy, limits)?;
    let adversarial = adversarial_hitting_times(umdp, policy, limits)?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((2.0 * per_sample).max(adversarial))
}

/// `(δ_C + 2δ_V + 2δ_T·C_max·H)·H`.
pub fn adversary_gap_bound(bc: &BoundConstants) -> f64 {
    (bc.delta_c + 2.0 * bc.delta_v + 2.0 * bc.delta_t * bc.c_max * bc.horizon) * bc.horizon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MdpSample;
    use crate::solve::solve_samples;

    fn two_samples(c1: f64) -> Umdp {
        let mut samples = Vec::new();
        for c in [1.0, c1] {
            let mut b = MdpSample::builder(2, 1);
            b.add(0, 0, 1, 1.0, c);
            samples.push(b.build().unwrap());
        }
        Umdp::with_indices(2, 1, 0, &[1], samples).unwrap()
    }

    #[test]
    fn identical_samples_give_zero_bound() {
        let umdp = two_samples(1.0);
        let optima = solve_samples(&umdp, IterLimits::default()).unwrap();
        let bc = bound_constants(&umdp, &optima, 3.0);
        assert_eq!((bc.delta_c, bc.delta_t, bc.delta_v), (0.0, 0.0, 0.0));
        assert_eq!(adversary_gap_bound(&bc), 0.0);
    }

    #[test]
    fn one_cost_difference() {
        let umdp = two_samples(2.0);
        let optima = solve_samples(&umdp, IterLimits::default()).unwrap();
        let bc = bound_constants(&umdp, &optima, 1.0);
        assert_eq!(bc.delta_c, 1.0);
        assert_eq!(bc.witness_c, (0, 1, 0, 0));
        assert_eq!(bc.c_max, 2.0);
    }
}
