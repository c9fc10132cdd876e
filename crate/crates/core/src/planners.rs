//! Outer planners: minimax-regret value iteration over n-step options, its
//! CEMR variant, robust dynamic programming and the two single-MDP baselines.

use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::stationary_max_regret;
use crate::model::{MdpSample, Outcome, StationaryPolicy, Umdp, ValueTable};
use crate::options::{GapKind, OptionPolicy, OptionSearch, DEFAULT_NODE_BUDGET};
use crate::solve::{gauss_seidel, optimal_values, solve_samples, strictly_less, IterLimits, SampleOptimum};

/// Planner settings shared by every method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Sweep-to-sweep change below which value iteration stops.
    pub epsilon: f64,
    /// Perturbation added once per option backup.
    pub kappa: f64,
    pub max_sweeps: usize,
    pub node_budget: u64,
    /// Limits for the per-sample value iterations.
    pub limits: IterLimits,
    pub time_limit: Option<Duration>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            kappa: 1e-4,
            max_sweeps: 100_000,
            node_budget: DEFAULT_NODE_BUDGET,
            limits: IterLimits::default(),
            time_limit: None,
        }
    }
}

impl PlannerConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation(vec![format!("epsilon must be positive, got {}", self.epsilon)]));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Validation(vec![format!("kappa must be non-negative, got {}", self.kappa)]));
        }
        Ok(())
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit.map(|d| start + d)
    }
}

/// Output of minimax value iteration: one option per state and the
/// converged values (minimax regret, or CEMR for [`GapKind::Cemr`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionPlan {
    pub n: usize,
    #[serde(default)]
    pub kind: GapKind,
    /// `options[s]`; goal states hold an empty option.
    pub options: Vec<OptionPolicy>,
    pub reg: ValueTable,
    pub iterations: usize,
    pub converged: bool,
    /// True when the last sweep changed no option choice.
    #[serde(default)]
    pub policy_stable: bool,
    #[serde(default)]
    pub kappa: f64,
}

impl OptionPlan {
    pub fn option(&self, s: usize) -> &OptionPolicy {
        &self.options[s]
    }

    /// Converged value at `s0`.
    pub fn value_at(&self, s: usize) -> f64 {
        self.reg[s]
    }

    /// Stationary policy of an `n = 1` plan.
    pub fn to_stationary(&self) -> Option<StationaryPolicy> {
        if self.n != 1 {
            return None;
        }
        let actions: Vec<Option<usize>> = self
            .options
            .iter()
            .enumerate()
            .map(|(s, o)| o.action(0, s))
            .collect();
        Some(StationaryPolicy::deterministic(&actions))
    }
}

/// Minimax-regret value iteration with `n`-step options.
pub fn minimax_regret_vi(umdp: &Umdp, n: usize, cfg: &PlannerConfig) -> Result<OptionPlan> {
    minimax_vi(umdp, n, cfg, GapKind::Regret, None)
}

/// As [`minimax_regret_vi`] but reuses precomputed per-sample optima.
pub fn minimax_regret_vi_with(
    umdp: &Umdp,
    n: usize,
    cfg: &PlannerConfig,
    optima: &[SampleOptimum],
) -> Result<OptionPlan> {
    minimax_vi(umdp, n, cfg, GapKind::Regret, Some(optima))
}

/// Minimax-CEMR value iteration with `n`-step options: the local gap
/// `C̄_q(s,a) − C̄*_q(s)` replaces the Q-gap inside each option backup.
pub fn cemr_minimax_vi(umdp: &Umdp, n: usize, cfg: &PlannerConfig) -> Result<OptionPlan> {
    minimax_vi(umdp, n, cfg, GapKind::Cemr, None)
}

fn minimax_vi(
    umdp: &Umdp,
    n: usize,
    cfg: &PlannerConfig,
    kind: GapKind,
    optima: Option<&[SampleOptimum]>,
) -> Result<OptionPlan> {
    cfg.check()?;
    if n == 0 {
        return Err(Error::Validation(vec!["option horizon n must be at least 1".into()]));
    }
    let start = Instant::now();
    let deadline = cfg.deadline(start);
    let owned;
    let optima = match optima {
        Some(o) => o,
        None => {
            owned = solve_samples(umdp, cfg.limits)?;
            &owned
        }
    };
    let search = OptionSearch::new(umdp, optima)
        .kind(kind)
        .kappa(cfg.kappa)
        .node_budget(cfg.node_budget)
        .deadline(deadline);
    let ns = umdp.n_states();
    let mut values = vec![0.0; ns];
    let mut options: Vec<OptionPolicy> = (0..ns).map(|s| OptionPolicy::empty(s, n)).collect();
    let mut delta = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        delta = 0.0;
        let mut changed = false;
        for s in 0..ns {
            if umdp.is_goal(s) {
                continue;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(Error::Timeout);
            }
            let warm = (sweep > 1).then_some(&options[s]);
            let sol = search.solve(s, n, &values, warm)?;
            let new = sol.objective.max(0.0);
            delta = delta.max((new - values[s]).abs());
            values[s] = new;
            if options[s].entries().ne(sol.policy.entries()) {
                changed = true;
            }
            options[s] = sol.policy;
        }
        debug!("sweep {sweep}: delta {delta:e}");
        if delta < cfg.epsilon {
            info!(
                "minimax VI (n={n}, {kind:?}) converged after {sweep} sweeps in {:.3}s, value {:.6}",
                start.elapsed().as_secs_f64(),
                values[umdp.initial()]
            );
            return Ok(OptionPlan {
                n,
                kind,
                options,
                reg: ValueTable(values),
                iterations: sweep,
                converged: true,
                policy_stable: !changed,
                kappa: cfg.kappa,
            });
        }
    }
    Err(Error::NonConvergence {
        sweeps: cfg.max_sweeps,
        delta,
    })
}

/// Robust dynamic programming: `V(s) = min_a max_q [C̄_q(s,a) + Σ T_q(s,a,s') V(s')]`.
pub fn robust_vi(umdp: &Umdp, cfg: &PlannerConfig) -> Result<(StationaryPolicy, ValueTable)> {
    cfg.check()?;
    let ns = umdp.n_states();
    let actions: Vec<Vec<usize>> = (0..ns).map(|s| umdp.available_actions(s)).collect();
    let worst = |s: usize, a: usize, v: &[f64]| {
        umdp.samples()
            .iter()
            .map(|sample| {
                sample.cbar(s, a) + sample.row(s, a).iter().map(|o| o.prob * v[o.next]).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let limits = IterLimits::new(cfg.epsilon.min(cfg.limits.tol), cfg.limits.max_iter);
    let values = gauss_seidel(ns, vec![0.0; ns], limits, |s, v| {
        if umdp.is_goal(s) {
            return None;
        }
        Some(actions[s].iter().map(|&a| worst(s, a, v)).fold(f64::INFINITY, f64::min))
    })
    .map_err(|e| match e {
        Error::Divergence { residual, iterations, .. } => Error::NonConvergence {
            sweeps: iterations,
            delta: residual,
        },
        other => other,
    })?;
    let choice: Vec<Option<usize>> = (0..ns)
        .map(|s| {
            if umdp.is_goal(s) {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for &a in &actions[s] {
                let v = worst(s, a, &values);
                if best.is_none_or(|(_, b)| strictly_less(v, b)) {
                    best = Some((a, v));
                }
            }
            best.map(|(a, _)| a)
        })
        .collect();
    Ok((StationaryPolicy::deterministic(&choice), ValueTable(values)))
}

/// Arithmetic mean of the samples' transition rows. Costs are averaged with
/// probability weights so that expected costs equal the mean expected cost.
pub fn averaged_sample(umdp: &Umdp) -> Result<MdpSample> {
    let ns = umdp.n_states();
    let na = umdp.n_actions();
    let nq = umdp.n_samples() as f64;
    let mut rows = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let mut acc: Vec<(usize, f64, f64)> = Vec::new();
            for sample in umdp.samples() {
                for o in sample.row(s, a) {
                    match acc.iter_mut().find(|e| e.0 == o.next) {
                        Some(e) => {
                            e.1 += o.prob;
                            e.2 += o.prob * o.cost;
                        }
                        None => acc.push((o.next, o.prob, o.prob * o.cost)),
                    }
                }
            }
            acc.sort_by_key(|e| e.0);
            let mass: f64 = acc.iter().map(|e| e.1).sum::<f64>() / nq;
            let row = acc
                .into_iter()
                .filter(|e| e.1 > 0.0)
                .map(|(next, p, pc)| Outcome::new(next, p / nq / mass, pc / p))
                .collect();
            rows.push(row);
        }
    }
    MdpSample::from_rows(ns, na, rows)
}

/// Optimal policy of the averaged MDP.
pub fn averaged_mdp_policy(umdp: &Umdp, cfg: &PlannerConfig) -> Result<StationaryPolicy> {
    let avg = umdp.with_samples(vec![averaged_sample(umdp)?])?;
    let (_, policy) = optimal_values(&avg.mdp(0), cfg.limits)?;
    Ok(policy)
}

/// Best of the per-sample optimal policies by maximum regret over all samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BestSample {
    pub policy: StationaryPolicy,
    pub max_regret: f64,
    pub sample: usize,
}

pub fn best_sample_policy(umdp: &Umdp, cfg: &PlannerConfig) -> Result<BestSample> {
    let optima = solve_samples(umdp, cfg.limits)?;
    best_sample_policy_with(umdp, cfg, &optima)
}

pub fn best_sample_policy_with(umdp: &Umdp, cfg: &PlannerConfig, optima: &[SampleOptimum]) -> Result<BestSample> {
    let mut best: Option<BestSample> = None;
    for (q, opt) in optima.iter().enumerate() {
        let (score, worst) = stationary_max_regret(umdp, &opt.policy, optima, cfg.limits)?;
        if !score.is_finite() {
            warn!("optimal policy of sample {q} is improper in sample {worst}; skipped");
            continue;
        }
        if best.as_ref().is_none_or(|b| strictly_less(score, b.max_regret)) {
            best = Some(BestSample {
                policy: opt.policy.clone(),
                max_regret: score,
                sample: q,
            });
        }
    }
    best.ok_or_else(|| Error::Degenerate("every per-sample optimal policy is improper in some sample".into()))
}

/// Uncertainty given independently per `(state, action)` pair: each pair has
/// a menu of rows and the uncertainty set is the product of the menus.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredUmdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub initial: usize,
    pub goals: Vec<usize>,
    /// `menus[s * n_actions + a]`: alternatives for that pair. Empty means the action is unavailable.
    pub menus: Vec<Vec<Vec<Outcome>>>,
}

/// Upper limit on the number of product samples expanded by
/// [`exact_independent_minimax_regret`].
pub const PRODUCT_LIMIT: usize = 1 << 16;

impl FactoredUmdp {
    /// Number of samples in the product set.
    pub fn product_size(&self) -> Option<usize> {
        self.menus
            .iter()
            .filter(|m| !m.is_empty())
            .try_fold(1usize, |acc, m| acc.checked_mul(m.len()))
    }

    /// The `index`-th product sample in mixed-radix order (pair order, first pair fastest).
    pub fn product_sample(&self, mut index: usize) -> Result<MdpSample> {
        let rows = self
            .menus
            .iter()
            .map(|menu| {
                if menu.is_empty() {
                    return Vec::new();
                }
                let choice = index % menu.len();
                index /= menu.len();
                menu[choice].clone()
            })
            .collect();
        MdpSample::from_rows(self.n_states, self.n_actions, rows)
    }

    /// Explicit sample-based UMDP over the whole product set.
    pub fn expand(&self, limit: usize) -> Result<Umdp> {
        let size = self
            .product_size()
            .filter(|&k| k <= limit)
            .ok_or_else(|| Error::Degenerate(format!("product uncertainty set exceeds {limit} samples")))?;
        let samples = (0..size).map(|i| self.product_sample(i)).collect::<Result<Vec<_>>>()?;
        Umdp::with_indices(self.n_states, self.n_actions, self.initial, &self.goals, samples)
    }
}

/// Minimax regret under independent uncertainty: one-step minimax value
/// iteration over the full product set.
pub fn exact_independent_minimax_regret(factored: &FactoredUmdp, cfg: &PlannerConfig) -> Result<OptionPlan> {
    let umdp = factored.expand(PRODUCT_LIMIT)?;
    crate::model::validate_umdp(&umdp).into_result()?;
    minimax_regret_vi(&umdp, 1, cfg)
}

/// Planning method selectable from configuration and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Minimax regret with n-step options.
    Reg,
    /// Minimax CEMR with n-step options.
    Cemr,
    /// Robust dynamic programming.
    Robust,
    /// Optimal policy of the averaged MDP.
    Avg,
    /// Best per-sample optimal policy.
    Best,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Reg, Method::Cemr, Method::Robust, Method::Avg, Method::Best];

    pub fn name(self) -> &'static str {
        match self {
            Method::Reg => "reg",
            Method::Cemr => "cemr",
            Method::Robust => "robust",
            Method::Avg => "avg",
            Method::Best => "best",
        }
    }

    /// Whether the method plans with n-step options.
    pub fn uses_options(self) -> bool {
        matches!(self, Method::Reg | Method::Cemr)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected reg, cemr, robust, avg or best)"))
    }
}

/// A planned policy in its serialized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Policy {
    Stationary(StationaryPolicy),
    OptionPlan(OptionPlan),
}

impl Policy {
    pub fn as_ref(&self) -> crate::eval::PolicyRef<'_> {
        match self {
            Policy::Stationary(p) => crate::eval::PolicyRef::Stationary(p),
            Policy::OptionPlan(p) => crate::eval::PolicyRef::Options(p),
        }
    }
}

/// Policy produced by a method and the planner's own objective value at the
/// initial state, where it has one (regret/CEMR plans, robust value, best-sample score).
#[derive(Clone, Debug, PartialEq)]
pub struct Planned {
    pub policy: Policy,
    pub value: Option<f64>,
}

/// Runs `method` on `umdp`; `optima` are the per-sample optimal solutions of `umdp`.
pub fn run_method(
    umdp: &Umdp,
    method: Method,
    n: usize,
    cfg: &PlannerConfig,
    optima: &[SampleOptimum],
) -> Result<Planned> {
    let s0 = umdp.initial();
    Ok(match method {
        Method::Reg | Method::Cemr => {
            let kind = if method == Method::Reg { GapKind::Regret } else { GapKind::Cemr };
            let plan = minimax_vi(umdp, n, cfg, kind, Some(optima))?;
            Planned {
                value: Some(plan.value_at(s0)),
                policy: Policy::OptionPlan(plan),
            }
        }
        Method::Robust => {
            let (policy, values) = robust_vi(umdp, cfg)?;
            Planned {
                policy: Policy::Stationary(policy),
                value: Some(values[s0]),
            }
        }
        Method::Avg => Planned {
            policy: Policy::Stationary(averaged_mdp_policy(umdp, cfg)?),
            value: None,
        },
        Method::Best => {
            let best = best_sample_policy_with(umdp, cfg, optima)?;
            Planned {
                policy: Policy::Stationary(best.policy),
                value: Some(best.max_regret),
            }
        }
    })
}
