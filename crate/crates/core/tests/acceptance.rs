//! Acceptance gate: ten criteria, one PASS/FAIL line each. Exits non-zero if
//! any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use regret_core::domains::random::random_factored;
use regret_core::domains::{prune_actions, select_samples, stream_rng, Domain};
use regret_core::eval::{
    adversary_value, bound_constants, horizon_estimate, mean, adversary_gap_bound, run_experiment, welch_t_test,
    write_results, ExperimentConfig, MethodSpec, PolicyRef, ResultRow, Status,
};
use regret_core::model::{StationaryPolicy, Umdp};
use regret_core::options::OptionSearch;
use regret_core::planners::{
    exact_independent_minimax_regret, minimax_regret_vi, robust_vi, Method, PlannerConfig, PRODUCT_LIMIT,
};
use regret_core::solve::{optimal_values, regret_bellman_eval, solve_samples, IterLimits, SampleOptimum};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn tight() -> IterLimits {
    IterLimits::new(1e-12, 1_000_000)
}

fn random_policy(rng: &mut impl Rng, umdp: &Umdp) -> Vec<Vec<(usize, f64)>> {
    let sample = &umdp.samples()[0];
    (0..umdp.n_states())
        .map(|s| {
            if umdp.is_goal(s) {
                return Vec::new();
            }
            let acts: Vec<usize> = (0..umdp.n_actions()).filter(|&a| !sample.row(s, a).is_empty()).collect();
            let w: Vec<f64> = acts.iter().map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            acts.iter().zip(w).map(|(&a, x)| (a, x / total)).collect()
        })
        .collect()
}

fn regret_bellman_equivalence() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..200u64 {
        let mut rng = stream_rng(101, case);
        let ns = rng.random_range(2..=12);
        let na = rng.random_range(1..=4);
        let umdp = common::random_instance(&mut rng, ns, na, 1);
        let sample = &umdp.samples()[0];
        let pi_rows = random_policy(&mut rng, &umdp);
        let Some(v_pi) = common::policy_value(&umdp, sample, &pi_rows) else {
            continue;
        };
        let v_star = common::optimal_value(&umdp, sample, &common::chain_policy(&umdp));
        let mdp = umdp.mdp(0);
        let (vstar_lib, _) = optimal_values(&mdp, tight()).unwrap();
        let reg = regret_bellman_eval(&mdp, &StationaryPolicy::from_rows(pi_rows), &vstar_lib, tight()).unwrap();
        for s in 0..ns {
            worst = worst.max((reg[s] - (v_pi[s] - v_star[s])).abs());
        }
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && secs < 10.0 && checked >= 150,
        format!("{checked} MDPs, max gap {worst:.2e}, {secs:.1} s"),
    )
}

fn independent_exactness() -> Verdict {
    let start = Instant::now();
    let kappa = 1e-6;
    let cfg = PlannerConfig {
        kappa,
        epsilon: 1e-10,
        limits: tight(),
        ..PlannerConfig::default()
    };
    let mut worst = 0.0f64;
    let mut failures = 0;
    for case in 0..20u64 {
        let mut rng = stream_rng(202, case);
        let ns = rng.random_range(2..=4);
        let factored = random_factored(&mut rng, ns, 2, 2);
        let umdp = factored.expand(PRODUCT_LIMIT).unwrap();
        let plan = exact_independent_minimax_regret(&factored, &cfg).unwrap();
        let oracle = common::brute_force_minimax_regret(&umdp);
        let gap = (plan.value_at(umdp.initial()) - oracle).abs();
        if gap > kappa * 20.0 + 1e-6 {
            failures += 1;
        }
        worst = worst.max(gap);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures == 0 && secs < 60.0,
        format!("{failures}/20 instances outside tolerance, max gap {worst:.3e}, {secs:.1} s"),
    )
}

/// Reachable decision slots `(t, s)` of an option from `anchor`, over every sample and action.
fn option_slots(umdp: &Umdp, anchor: usize, n: usize) -> Vec<(usize, usize)> {
    let mut slots = Vec::new();
    for t in 0..n {
        let mut layer = std::collections::BTreeSet::new();
        for sample in umdp.samples() {
            let mut current = vec![anchor];
            for _ in 0..t {
                let mut next = Vec::new();
                for &s in &current {
                    if umdp.is_goal(s) {
                        continue;
                    }
                    for a in 0..umdp.n_actions() {
                        next.extend(sample.row(s, a).iter().filter(|o| o.prob > 0.0).map(|o| o.next));
                    }
                }
                next.sort_unstable();
                next.dedup();
                current = next;
            }
            layer.extend(current.into_iter().filter(|&s| !umdp.is_goal(s)));
        }
        slots.extend(layer.into_iter().map(|s| (t, s)));
    }
    slots
}

/// `κ + max_q [cost + Σ dist (V*_q + reg) − V*_q(anchor)]`.
fn option_objective(
    umdp: &Umdp,
    optima: &[SampleOptimum],
    anchor: usize,
    n: usize,
    reg: &[f64],
    kappa: f64,
    action: impl Fn(usize, usize) -> usize + Copy,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (sample, opt) in umdp.samples().iter().zip(optima) {
        let (cost, dist) = common::run_table(umdp, sample, anchor, n, action);
        let v = &opt.values;
        let cont: f64 = dist
            .iter()
            .enumerate()
            .filter(|(s, _)| !umdp.is_goal(*s))
            .map(|(s, p)| p * (v[s] + reg[s]))
            .sum();
        worst = worst.max(cost + cont - v[anchor]);
    }
    kappa + worst
}

fn inner_search_exactness() -> Verdict {
    let start = Instant::now();
    let kappa = 1e-4;
    let mut done = 0;
    let mut worst = 0.0f64;
    let mut attempt = 0u64;
    while done < 50 {
        let mut rng = stream_rng(303, attempt);
        attempt += 1;
        let ns = rng.random_range(3..=7);
        let na = rng.random_range(2..=3);
        let nq = rng.random_range(1..=4);
        let umdp = common::random_instance(&mut rng, ns, na, nq);
        let n = rng.random_range(1..=3);
        let anchor = rng.random_range(0..ns - 1);
        let reg: Vec<f64> = (0..ns).map(|s| if s == ns - 1 { 0.0 } else { rng.random_range(0.0..3.0) }).collect();
        let slots = option_slots(&umdp, anchor, n);
        let acts: Vec<Vec<usize>> = slots
            .iter()
            .map(|&(_, s)| (0..na).filter(|&a| !umdp.samples()[0].row(s, a).is_empty()).collect())
            .collect();
        let count = acts.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
        let Some(count) = count.filter(|&c| (2..=1000).contains(&c)) else {
            continue;
        };
        let optima = solve_samples(&umdp, tight()).unwrap();
        let mut best = f64::INFINITY;
        for idx in 0..count {
            let mut table = BTreeMap::new();
            let mut rest = idx;
            for (slot, a) in slots.iter().zip(&acts) {
                table.insert(*slot, a[rest % a.len()]);
                rest /= a.len();
            }
            let obj = option_objective(&umdp, &optima, anchor, n, &reg, kappa, |t, s| table[&(t, s)]);
            best = best.min(obj);
        }
        let sol = OptionSearch::new(&umdp, &optima).kappa(kappa).solve(anchor, n, &reg, None).unwrap();
        worst = worst.max((sol.objective - best).abs());
        done += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-10 && secs < 60.0,
        format!("50 problems, max |B&B − enumeration| {worst:.2e}, {secs:.1} s"),
    )
}

fn sandwich() -> Verdict {
    let start = Instant::now();
    let cfg = PlannerConfig::default();
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for case in 0..30u64 {
        let mut rng = stream_rng(404, case);
        let ns = rng.random_range(3..=8);
        let na = rng.random_range(2..=3);
        let nq = rng.random_range(2..=5);
        let umdp = common::random_instance(&mut rng, ns, na, nq);
        let optima = solve_samples(&umdp, tight()).unwrap();
        let (pi, _) = robust_vi(&umdp, &cfg).unwrap();
        let rows: Vec<Vec<(usize, f64)>> = (0..ns).map(|s| pi.probs(s).to_vec()).collect();
        let regret = common::max_regret(&umdp, &common::sample_optima(&umdp), &rows);
        let adversary = adversary_value(&umdp, PolicyRef::Stationary(&pi), 1, &optima, tight()).unwrap();
        let bc = bound_constants(&umdp, &optima, horizon_estimate(&umdp, &pi, tight()).unwrap());
        let (i, j, s, a) = bc.witness_c;
        let witness_ok = bc.delta_c == 0.0
            || ((umdp.samples()[i].expected_cost(s, a).unwrap() - umdp.samples()[j].expected_cost(s, a).unwrap()).abs()
                - bc.delta_c)
                .abs()
                < 1e-12;
        let bound = adversary_gap_bound(&bc);
        let diff = adversary - regret;
        if diff < -1e-6 || diff > bound + 1e-6 || !witness_ok {
            violations += 1;
        }
        min_slack = min_slack.min(bound - diff);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        violations == 0 && secs < 60.0,
        format!("{violations}/30 violations, min slack {min_slack:.3e}, {secs:.1} s"),
    )
}

fn option_consistency() -> Verdict {
    let cfg = PlannerConfig {
        epsilon: 1e-10,
        limits: tight(),
        ..PlannerConfig::default()
    };
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mut rng = stream_rng(505, case);
        let ns = rng.random_range(3..=7);
        let nq = rng.random_range(2..=4);
        let umdp = common::random_instance(&mut rng, ns, 2, nq);
        let n = rng.random_range(1..=3);
        let plan = minimax_regret_vi(&umdp, n, &cfg).unwrap();
        let optima = solve_samples(&umdp, cfg.limits).unwrap();
        let s0 = umdp.initial();
        let option = plan.option(s0);
        let recomputed = option_objective(&umdp, &optima, s0, n, &plan.reg.0, cfg.kappa, |t, s| {
            option.action(t, s).expect("plan covers reachable slots")
        })
        .max(0.0);
        worst = worst.max((recomputed - plan.value_at(s0)).abs());
    }
    verdict(worst <= 1e-8, format!("20 plans, max |reg(s0) − recomputation| {worst:.2e}"))
}

fn scenario_umdp(domain: Domain, size: usize, seed: u64, prune: bool) -> Umdp {
    let scenario = domain.scenario(size, seed).unwrap();
    let pool = scenario.training_candidates(45).unwrap();
    let umdp = scenario.assemble(select_samples(&pool, 15).unwrap()).unwrap();
    if prune {
        prune_actions(&umdp, IterLimits::default()).unwrap()
    } else {
        umdp
    }
}

fn experiment(domain: Domain, seeds: std::ops::Range<u64>, methods: &[MethodSpec]) -> ExperimentConfig {
    let mut cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "domain": domain,
        "seeds": seeds.collect::<Vec<_>>(),
        "methods": methods,
        "test_samples": 0,
    }))
    .unwrap();
    cfg.sizes = vec![6];
    cfg
}

fn column(rows: &[ResultRow], label: &str, f: impl Fn(&ResultRow) -> Option<f64>) -> Vec<f64> {
    rows.iter().filter(|r| r.label == label).filter_map(f).collect()
}

fn all_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Method::Reg, 1),
        MethodSpec::new(Method::Reg, 2),
        MethodSpec::new(Method::Cemr, 1),
        MethodSpec::new(Method::Robust, 1),
        MethodSpec::new(Method::Avg, 1),
        MethodSpec::new(Method::Best, 1),
    ]
}

fn horizon_trend() -> Verdict {
    let cfg = PlannerConfig::default();
    let mut violations = 0;
    for seed in 0..10 {
        let umdp = scenario_umdp(Domain::Disaster, 6, seed, true);
        let one = minimax_regret_vi(&umdp, 1, &cfg).unwrap();
        let two = minimax_regret_vi(&umdp, 2, &cfg).unwrap();
        let h = horizon_estimate(&umdp, &one.to_stationary().unwrap(), IterLimits::default()).unwrap();
        let s0 = umdp.initial();
        if two.value_at(s0) > one.value_at(s0) + 2.0 * cfg.kappa * h {
            violations += 1;
        }
    }
    let out = run_experiment(&experiment(Domain::Disaster, 0..10, &all_methods())).unwrap();
    let n1 = mean(&column(&out.rows, "reg(n=1)", |r| r.normalized));
    let n2 = mean(&column(&out.rows, "reg(n=2)", |r| r.normalized));
    verdict(
        violations == 0 && n2 <= n1 + 0.02,
        format!("{violations}/10 plan-value increases; normalized reg(n=1) {n1:.3}, reg(n=2) {n2:.3}"),
    )
}

fn medical_ordering() -> Verdict {
    let start = Instant::now();
    let methods = [MethodSpec::new(Method::Reg, 1), MethodSpec::new(Method::Cemr, 1)];
    let out = run_experiment(&experiment(Domain::Medical, 0..25, &methods)).unwrap();
    let reg = column(&out.rows, "reg(n=1)", |r| r.max_regret_train);
    let cemr = column(&out.rows, "cemr(n=1)", |r| r.max_regret_train);
    let p = welch_t_test(&reg, &cemr).unwrap_or(1.0);
    let secs = start.elapsed().as_secs_f64();
    let (mr, mc) = (mean(&reg), mean(&cemr));
    verdict(
        reg.len() == 25 && cemr.len() == 25 && mr < mc && p < 0.05 && secs < 600.0,
        format!("reg(n=1) {mr:.4} vs cemr(n=1) {mc:.4}, p = {p:.2e}, {secs:.1} s"),
    )
}

fn robust_ordering() -> Verdict {
    let methods = [MethodSpec::new(Method::Reg, 2), MethodSpec::new(Method::Robust, 1)];
    let out = run_experiment(&experiment(Domain::Disaster, 0..25, &methods)).unwrap();
    let reg = column(&out.rows, "reg(n=2)", |r| r.max_regret_train);
    let robust = column(&out.rows, "robust", |r| r.max_regret_train);
    let p = welch_t_test(&reg, &robust).unwrap_or(1.0);
    let (mr, mb) = (mean(&reg), mean(&robust));
    verdict(
        reg.len() == 25 && robust.len() == 25 && mr < mb && p < 0.05,
        format!("reg(n=2) {mr:.4} vs robust {mb:.4}, p = {p:.2e}"),
    )
}

fn pruning_fidelity() -> Verdict {
    let methods = [
        MethodSpec::new(Method::Reg, 1),
        MethodSpec {
            prune: Some(false),
            ..MethodSpec::new(Method::Reg, 1)
        },
    ];
    let out = run_experiment(&experiment(Domain::Disaster, 0..10, &methods)).unwrap();
    let pruned = mean(&column(&out.rows, "reg(n=1)", |r| r.max_regret_train));
    let full = mean(&column(&out.rows, "reg(n=1)-unpruned", |r| r.max_regret_train));
    let rel = (pruned - full).abs() / full.abs().max(1e-12);
    verdict(
        rel < 0.10 && out.rows.iter().all(|r| r.status == Status::Ok),
        format!("pruned {pruned:.4} vs unpruned {full:.4} ({:.1}%)", 100.0 * rel),
    )
}

fn sweep_determinism() -> Verdict {
    let mut cfg = experiment(Domain::Disaster, 0..4, &all_methods());
    cfg.test_samples = 10;
    cfg.record_time = false;
    let csv = || {
        let out = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_results(&out.rows, &mut buf).unwrap();
        buf
    };
    let (a, b) = (csv(), csv());
    verdict(a == b && !a.is_empty(), format!("{} bytes, identical = {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("regret Bellman equation equals V(π) − V*", regret_bellman_equivalence),
        ("independent uncertainty: VI equals brute-force minimax regret", independent_exactness),
        ("branch-and-bound equals enumeration", inner_search_exactness),
        ("adversary sandwich bound", sandwich),
        ("option-level Bellman consistency", option_consistency),
        ("longer options do not increase regret", horizon_trend),
        ("medical: reg(n=1) beats cemr(n=1)", medical_ordering),
        ("disaster: reg(n=2) beats robust", robust_ordering),
        ("pruning fidelity", pruning_fidelity),
        ("sweep determinism", sweep_determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        println!("[{}] {:>2}. {name}: {}", if v.passed { "PASS" } else { "FAIL" }, k + 1, v.detail);
        if !v.passed {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
