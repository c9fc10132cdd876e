//! Self-contained property suite over seeded random instances.

use std::time::Instant;

use rand::Rng;

use crate::domains::random::{random_factored, random_umdp};
use crate::domains::stream_rng;
use crate::error::Result;
use crate::eval::{
    adversary_value, bound_constants, horizon_estimate, max_regret, adversary_gap_bound, Coverage, PolicyRef,
};
use crate::model::{validate_umdp, MdpSample, Outcome, StationaryPolicy, Umdp, ValueTable};
use crate::options::{option_cost_and_transition, reachable_sets, OptionPolicy, OptionSearch};
use crate::planners::{exact_independent_minimax_regret, minimax_regret_vi, robust_vi, PlannerConfig};
use crate::solve::{
    check_proper, optimal_values, regret_bellman_eval, regret_direct_table, solve_samples, IterLimits,
    SampleOptimum,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Smaller instance counts.
    pub quick: bool,
    /// Corrupts one row of every validator instance to mass 0.9.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            quick: false,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed discrepancy or first failure.
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(&VerifyConfig, u64, usize) -> Result<(bool, String)>;

const PROPERTIES: [(&str, Check, usize); 8] = [
    ("validator", check_validator, 20),
    ("regret-bellman", check_regret_bellman, 200),
    ("independent-exactness", check_independent, 20),
    ("independent-game-value", check_game_value, 10),
    ("inner-search", check_inner_search, 50),
    ("adversary-sandwich", check_sandwich, 30),
    ("option-consistency", check_option_consistency, 20),
    ("horizon-monotonicity", check_monotonicity, 10),
];

/// Runs every property; a property that errors counts as failed.
pub fn run_suite(cfg: &VerifyConfig) -> Vec<PropertyOutcome> {
    PROPERTIES
        .iter()
        .enumerate()
        .map(|(k, &(name, check, full))| {
            let cases = if cfg.quick { full.div_ceil(4) } else { full };
            let start = Instant::now();
            let (passed, detail) = match check(cfg, k as u64, cases) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            PropertyOutcome {
                name,
                passed,
                cases,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn limits() -> IterLimits {
    IterLimits::new(1e-12, 1_000_000)
}

fn instance(cfg: &VerifyConfig, property: u64, case: usize) -> rand_chacha::ChaCha8Rng {
    stream_rng(cfg.seed, (property << 32) | case as u64)
}

fn corrupt(umdp: &Umdp) -> Result<Umdp> {
    let mut samples: Vec<MdpSample> = umdp.samples().to_vec();
    let s = (0..umdp.n_states()).find(|&s| !umdp.is_goal(s)).unwrap_or(0);
    let a = umdp.available_actions(s).first().copied().unwrap_or(0);
    let mut builder = MdpSample::builder(umdp.n_states(), umdp.n_actions());
    for s2 in 0..umdp.n_states() {
        for a2 in 0..umdp.n_actions() {
            let mut row: Vec<Outcome> = samples[0].row(s2, a2).to_vec();
            if (s2, a2) == (s, a) {
                let mass: f64 = row.iter().map(|o| o.prob).sum();
                row.iter_mut().for_each(|o| o.prob *= 0.9 / mass);
            }
            builder.set_row(s2, a2, row);
        }
    }
    samples[0] = builder.build()?;
    umdp.with_samples(samples)
}

fn check_validator(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(3..=8);
        let na = rng.random_range(1..=3);
        let mut umdp = random_umdp(&mut rng, ns, na, 3);
        if cfg.inject_fault {
            umdp = corrupt(&umdp)?;
        }
        let report = validate_umdp(&umdp);
        if !report.is_valid() {
            return Ok((false, format!("case {case}: {}", report.violations.join("; "))));
        }
    }
    Ok((true, "all generated models valid".into()))
}

fn check_regret_bellman(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(2..=12);
        let na = rng.random_range(1..=4);
        let umdp = random_umdp(&mut rng, ns, na, 1);
        let mdp = umdp.mdp(0);
        let pi = crate::domains::random::random_proper_policy(&mut rng, &umdp, false);
        if !check_proper(&mdp, &pi) {
            continue;
        }
        let (vstar, _) = optimal_values(&mdp, limits())?;
        let recursive = regret_bellman_eval(&mdp, &pi, &vstar, limits())?;
        let direct = regret_direct_table(&mdp, &pi, limits())?;
        worst = worst.max(recursive.max_abs_diff(&direct));
    }
    Ok((worst <= 1e-6, format!("max gap {worst:.3e}")))
}

/// Minimax regret over deterministic stationary policies and all samples.
fn brute_force_minimax(umdp: &Umdp, optima: &[SampleOptimum]) -> Result<f64> {
    let choices: Vec<Vec<Option<usize>>> = (0..umdp.n_states())
        .map(|s| {
            if umdp.is_goal(s) {
                vec![None]
            } else {
                umdp.available_actions(s).into_iter().map(Some).collect()
            }
        })
        .collect();
    let total: usize = choices.iter().map(Vec::len).product();
    let mut best = f64::INFINITY;
    for mut idx in 0..total {
        let actions: Vec<Option<usize>> = choices
            .iter()
            .map(|c| {
                let a = c[idx % c.len()];
                idx /= c.len();
                a
            })
            .collect();
        let pi = StationaryPolicy::deterministic(&actions);
        let r = max_regret(umdp, PolicyRef::Stationary(&pi), optima, Coverage::Strict, limits())?.max_regret;
        best = best.min(r);
    }
    Ok(best)
}

fn check_independent(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let kappa = 1e-6;
    let planner = PlannerConfig {
        epsilon: 1e-10,
        kappa,
        ..PlannerConfig::default()
    };
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(2..=4);
        let factored = random_factored(&mut rng, ns, 2, 2);
        let umdp = factored.expand(crate::planners::PRODUCT_LIMIT)?;
        let optima = solve_samples(&umdp, limits())?;
        let plan = exact_independent_minimax_regret(&factored, &planner)?;
        let oracle = brute_force_minimax(&umdp, &optima)?;
        worst = worst.max((plan.value_at(umdp.initial()) - oracle).abs());
    }
    Ok((worst <= kappa * 20.0 + 1e-6, format!("max gap {worst:.3e}")))
}

/// Regret of `policy` when the adversary fixes sample `sigma[s]` at every
/// state: the regret recursion with the per-state sample's `V*`.
fn mixed_regret(umdp: &Umdp, optima: &[SampleOptimum], actions: &[Option<usize>], sigma: &[usize]) -> f64 {
    let n = umdp.n_states();
    let mut reg = vec![0.0; n];
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for s in 0..n {
            let Some(a) = actions[s] else { continue };
            let (sample, vstar) = (&umdp.samples()[sigma[s]], &optima[sigma[s]].values);
            let mut x = -vstar[s];
            for o in sample.row(s, a) {
                let cont = if umdp.is_goal(o.next) { 0.0 } else { vstar[o.next] + reg[o.next] };
                x += o.prob * (o.cost + cont);
            }
            delta = delta.max((x - reg[s]).abs());
            reg[s] = x;
        }
        if delta < 1e-12 {
            break;
        }
    }
    reg[umdp.initial()]
}

fn check_game_value(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let kappa = 1e-6;
    let planner = PlannerConfig {
        epsilon: 1e-10,
        kappa,
        ..PlannerConfig::default()
    };
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(2..=3);
        let factored = random_factored(&mut rng, ns, 2, 2);
        let umdp = factored.expand(crate::planners::PRODUCT_LIMIT)?;
        let optima = solve_samples(&umdp, limits())?;
        let plan = exact_independent_minimax_regret(&factored, &planner)?;
        let nq = umdp.n_samples();
        let choices: Vec<Vec<Option<usize>>> = (0..ns)
            .map(|s| {
                if umdp.is_goal(s) {
                    vec![None]
                } else {
                    umdp.available_actions(s).into_iter().map(Some).collect()
                }
            })
            .collect();
        let total: usize = choices.iter().map(Vec::len).product();
        let mut game = f64::INFINITY;
        for mut idx in 0..total {
            let actions: Vec<Option<usize>> = choices
                .iter()
                .map(|c| {
                    let a = c[idx % c.len()];
                    idx /= c.len();
                    a
                })
                .collect();
            if !check_proper(&umdp.mdp(0), &StationaryPolicy::deterministic(&actions)) {
                continue;
            }
            let mut value = f64::NEG_INFINITY;
            for mut j in 0..nq.pow(ns as u32) {
                let sigma: Vec<usize> = (0..ns)
                    .map(|_| {
                        let q = j % nq;
                        j /= nq;
                        q
                    })
                    .collect();
                value = value.max(mixed_regret(&umdp, &optima, &actions, &sigma));
            }
            game = game.min(value);
        }
        let pi = plan.to_stationary().expect("n = 1 plans are stationary");
        let horizon = horizon_estimate(&umdp, &pi, limits())?;
        worst = worst.max((plan.value_at(umdp.initial()) - game).abs() - kappa * horizon);
    }
    Ok((worst <= 1e-6, format!("max gap beyond κH {worst:.3e}")))
}

/// `κ + max_q [C^o_q + Σ T^o_q reg]` from the forward option model.
fn option_objective(
    umdp: &Umdp,
    option: &OptionPolicy,
    reg: &ValueTable,
    optima: &[SampleOptimum],
    kappa: f64,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for (q, opt) in optima.iter().enumerate() {
        let model = option_cost_and_transition(umdp, q, option, &opt.values)?;
        let cont: f64 = model
            .transition
            .iter()
            .filter(|(s, _)| !umdp.is_goal(*s))
            .map(|&(s, p)| p * reg[s])
            .sum();
        worst = worst.max(model.cost + cont);
    }
    Ok(kappa + worst)
}

fn check_inner_search(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let kappa = 1e-4;
    let mut done = 0;
    let mut attempt = 0;
    let mut worst = 0.0f64;
    while done < cases {
        let mut rng = instance(cfg, k, attempt);
        attempt += 1;
        let ns = rng.random_range(3..=6);
        let na = rng.random_range(2..=3);
        let nq = rng.random_range(1..=3);
        let umdp = random_umdp(&mut rng, ns, na, nq);
        let n = rng.random_range(1..=3);
        let anchor = rng.random_range(0..umdp.n_states() - 1);
        let reg = ValueTable((0..umdp.n_states()).map(|_| rng.random_range(0.0..2.0)).collect());
        let sets = reachable_sets(&umdp, anchor, n);
        let slots: Vec<(usize, usize, Vec<usize>)> = (0..n)
            .flat_map(|t| {
                sets.union_non_goal(&umdp, t)
                    .into_iter()
                    .map(move |s| (t, s))
                    .collect::<Vec<_>>()
            })
            .map(|(t, s)| (t, s, umdp.available_actions(s)))
            .collect();
        let count = slots.iter().try_fold(1usize, |acc, (_, _, a)| acc.checked_mul(a.len()));
        if !matches!(count, Some(c) if c <= 1000) {
            continue;
        }
        let optima = solve_samples(&umdp, limits())?;
        let mut best = f64::INFINITY;
        for mut idx in 0..count.unwrap_or(0) {
            let entries = slots.iter().map(|(t, s, acts)| {
                let a = acts[idx % acts.len()];
                idx /= acts.len();
                ((*t, *s), a)
            });
            let option = OptionPolicy::new(anchor, n, entries.collect::<Vec<_>>());
            best = best.min(option_objective(&umdp, &option, &reg, &optima, kappa)?);
        }
        let sol = OptionSearch::new(&umdp, &optima).kappa(kappa).solve(anchor, n, &reg.0, None)?;
        let gap = (sol.objective - best).abs() / best.abs().max(1.0);
        worst = worst.max(gap);
        done += 1;
    }
    Ok((worst <= 1e-9, format!("max relative gap {worst:.3e}")))
}

fn check_sandwich(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let planner = PlannerConfig::default();
    let mut tightest = f64::INFINITY;
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(3..=8);
        let na = rng.random_range(2..=3);
        let nq = rng.random_range(2..=4);
        let umdp = random_umdp(&mut rng, ns, na, nq);
        let optima = solve_samples(&umdp, limits())?;
        let (pi, _) = robust_vi(&umdp, &planner)?;
        let policy = PolicyRef::Stationary(&pi);
        let regret = max_regret(&umdp, policy, &optima, Coverage::Strict, limits())?.max_regret;
        let adversary = adversary_value(&umdp, policy, 1, &optima, limits())?;
        let bound = adversary_gap_bound(&bound_constants(&umdp, &optima, horizon_estimate(&umdp, &pi, limits())?));
        let diff = adversary - regret;
        if diff < -1e-7 || diff > bound + 1e-7 {
            return Ok((false, format!("case {case}: difference {diff:.6} outside [0, {bound:.6}]")));
        }
        tightest = tightest.min(bound - diff);
    }
    Ok((true, format!("min slack {tightest:.3e}")))
}

fn check_option_consistency(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let planner = PlannerConfig {
        epsilon: 1e-10,
        limits: limits(),
        ..PlannerConfig::default()
    };
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(3..=6);
        let nq = rng.random_range(2..=3);
        let umdp = random_umdp(&mut rng, ns, 2, nq);
        let n = rng.random_range(1..=2);
        let optima = solve_samples(&umdp, planner.limits)?;
        let plan = minimax_regret_vi(&umdp, n, &planner)?;
        let s0 = umdp.initial();
        let recomputed = option_objective(&umdp, plan.option(s0), &plan.reg, &optima, planner.kappa)?.max(0.0);
        worst = worst.max((recomputed - plan.value_at(s0)).abs());
    }
    Ok((worst <= 1e-8, format!("max gap {worst:.3e}")))
}

fn check_monotonicity(cfg: &VerifyConfig, k: u64, cases: usize) -> Result<(bool, String)> {
    let planner = PlannerConfig::default();
    for case in 0..cases {
        let mut rng = instance(cfg, k, case);
        let ns = rng.random_range(3..=6);
        let nq = rng.random_range(2..=3);
        let umdp = random_umdp(&mut rng, ns, 2, nq);
        let one = minimax_regret_vi(&umdp, 1, &planner)?;
        let two = minimax_regret_vi(&umdp, 2, &planner)?;
        let pi = one.to_stationary().expect("n = 1 plans are stationary");
        let horizon = horizon_estimate(&umdp, &pi, limits())?;
        let s0 = umdp.initial();
        let slack = 2.0 * planner.kappa * horizon + planner.epsilon;
        if two.value_at(s0) > one.value_at(s0) + slack {
            return Ok((
                false,
                format!("case {case}: n=2 {} > n=1 {} + {slack:.2e}", two.value_at(s0), one.value_at(s0)),
            ));
        }
    }
    Ok((true, "non-increasing in n".into()))
}
