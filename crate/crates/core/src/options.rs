//! n-step options: reachable sets, per-sample backward induction and the
//! exact inner minimax solve over deterministic time-indexed option policies.
//!
//! An option anchored at `s̄` runs a table `(t, s) -> a` for `n` steps or until
//! a goal is entered. For a frozen continuation table `reg`, the option's
//! worst-case contribution is
//!
//! ```text
//! κ + max_q [ V^n_q(s̄,0) − V*_q(s̄) + c_q(s̄,0) ]
//! ```
//!
//! where `V^n_q` is the expected cost accrued over the option and `c_q` the
//! expected `reg + V*_q` at the state where it stops. The search below finds the
//! table minimising this quantity exactly.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mdp, Umdp, ValueTable};
use crate::solve::{strictly_less, SampleOptimum, TIE_EPS};

/// Default node budget per inner solve.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// States reachable from an anchor in exactly `t` steps, per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachableSets {
    pub anchor: usize,
    pub horizon: usize,
    /// `sets[q][t]`, sorted. Goal states stay in the set once entered.
    pub sets: Vec<Vec<Vec<usize>>>,
}

impl ReachableSets {
    /// `⋃_q S^q_t` without goal states: the decision slots at step `t`.
    pub fn union_non_goal(&self, umdp: &Umdp, t: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .sets
            .iter()
            .flat_map(|per_t| per_t[t].iter().copied())
            .filter(|&s| !umdp.is_goal(s))
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

fn reachable_in(mdp: &Mdp<'_>, anchor: usize, n: usize) -> Vec<Vec<usize>> {
    let mut layers = Vec::with_capacity(n);
    let mut current = vec![anchor];
    for t in 0..n {
        if t > 0 {
            let mut next = Vec::new();
            for &s in &layers[t - 1] {
                if mdp.is_goal(s) {
                    next.push(s);
                    continue;
                }
                for a in mdp.sample.available_actions(s) {
                    next.extend(mdp.sample.row(s, a).iter().filter(|o| o.prob > 0.0).map(|o| o.next));
                }
            }
            next.sort_unstable();
            next.dedup();
            current = next;
        }
        layers.push(std::mem::take(&mut current));
    }
    layers
}

/// Breadth-first expansion of the anchor over non-zero transitions of any
/// action, for `n` layers (`t = 0..n`), in every sample.
pub fn reachable_sets(umdp: &Umdp, anchor: usize, n: usize) -> ReachableSets {
    assert!(n >= 1, "option horizon must be at least 1");
    ReachableSets {
        anchor,
        horizon: n,
        sets: umdp.mdps().map(|mdp| reachable_in(&mdp, anchor, n)).collect(),
    }
}

/// Deterministic time-indexed option policy `(t, s) -> a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawOption", try_from = "RawOption")]
pub struct OptionPolicy {
    anchor: usize,
    horizon: usize,
    table: BTreeMap<(usize, usize), usize>,
    objective: f64,
}

#[derive(Serialize, Deserialize)]
struct RawOption {
    anchor: usize,
    n: usize,
    table: Vec<[usize; 3]>,
    objective: f64,
}

impl From<OptionPolicy> for RawOption {
    fn from(o: OptionPolicy) -> Self {
        RawOption {
            anchor: o.anchor,
            n: o.horizon,
            table: o.table.iter().map(|(&(t, s), &a)| [s, t, a]).collect(),
            objective: o.objective,
        }
    }
}

impl TryFrom<RawOption> for OptionPolicy {
    type Error = String;

    fn try_from(raw: RawOption) -> std::result::Result<Self, String> {
        if raw.n == 0 {
            return Err("option horizon must be at least 1".into());
        }
        let mut table = BTreeMap::new();
        for [s, t, a] in raw.table {
            if t >= raw.n {
                return Err(format!("step {t} outside horizon {}", raw.n));
            }
            if table.insert((t, s), a).is_some() {
                return Err(format!("duplicate entry for state {s} at step {t}"));
            }
        }
        Ok(OptionPolicy {
            anchor: raw.anchor,
            horizon: raw.n,
            table,
            objective: raw.objective,
        })
    }
}

impl OptionPolicy {
    pub fn new(anchor: usize, horizon: usize, entries: impl IntoIterator<Item = ((usize, usize), usize)>) -> Self {
        assert!(horizon >= 1, "option horizon must be at least 1");
        Self {
            anchor,
            horizon,
            table: entries.into_iter().collect(),
            objective: 0.0,
        }
    }

    /// The option that stays put at a goal anchor.
    pub fn empty(anchor: usize, horizon: usize) -> Self {
        Self::new(anchor, horizon, [])
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Objective recorded by the search that produced this option (κ included).
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn with_objective(mut self, objective: f64) -> Self {
        self.objective = objective;
        self
    }

    #[inline]
    pub fn action(&self, t: usize, s: usize) -> Option<usize> {
        self.table.get(&(t, s)).copied()
    }

    /// Entries as `((t, s), a)` in ascending `(t, s)` order.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.table.iter().map(|(&k, &a)| (k, a))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Which per-step gap the option backup accumulates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// Q-gap of the regret Bellman equation: step cost `C̄_q`, continuation
    /// `reg + V*_q`, offset `−V*_q(s̄)`.
    #[default]
    Regret,
    /// CEMR local gap `C̄_q(s,a) − C̄*_q(s)`, continuation `cemr`.
    Cemr,
}

fn missing_action(anchor: usize, s: usize, t: usize) -> Error {
    Error::Structural(format!(
        "option anchored at s{anchor} has no action for s{s} at step {t}"
    ))
}

/// Exact `(V^n_q(s̄,0), c_q(s̄,0))` of `option` in sample `q` by backward
/// induction over the sample's reachable sets.
pub fn backward_induction(
    umdp: &Umdp,
    q: usize,
    option: &OptionPolicy,
    reg: &ValueTable,
    vstar: &ValueTable,
) -> Result<(f64, f64)> {
    let mdp = umdp.mdp(q);
    let anchor = option.anchor();
    let n = option.horizon();
    if mdp.is_goal(anchor) {
        return Ok((0.0, 0.0));
    }
    let layers = reachable_in(&mdp, anchor, n);
    let ns = mdp.n_states();
    // value[s], cont[s] of layer t+1
    let mut next_value = vec![0.0; ns];
    let mut next_cont = vec![0.0; ns];
    for t in (0..n).rev() {
        let mut value = vec![0.0; ns];
        let mut cont = vec![0.0; ns];
        for &s in &layers[t] {
            if mdp.is_goal(s) {
                continue;
            }
            let a = option.action(t, s).ok_or_else(|| missing_action(anchor, s, t))?;
            if !mdp.sample.is_available(s, a) {
                return Err(Error::Structural(format!("action a{a} unavailable at s{s}")));
            }
            let row = mdp.sample.row(s, a);
            let mut v = mdp.sample.cbar(s, a);
            let mut c = 0.0;
            for o in row {
                if mdp.is_goal(o.next) {
                    continue;
                }
                if t + 1 == n {
                    c += o.prob * (reg[o.next] + vstar[o.next]);
                } else {
                    v += o.prob * next_value[o.next];
                    c += o.prob * next_cont[o.next];
                }
            }
            value[s] = v;
            cont[s] = c;
        }
        next_value = value;
        next_cont = cont;
    }
    Ok((next_value[anchor], next_cont[anchor]))
}

/// Option-level model of `option` in one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionModel {
    /// `V^n_q(s̄, π^o)`: expected cost accrued while the option runs.
    pub value: f64,
    /// `C^o_q(s̄, o) = V^n + Σ T^o V*_q − V*_q(s̄)`.
    pub cost: f64,
    /// `Pr(s' | s̄, o)` in ascending state order; goals absorb.
    pub transition: Vec<(usize, f64)>,
}

/// Cost and stopping distribution of `option` in sample `q` (forward propagation).
pub fn option_cost_and_transition(
    umdp: &Umdp,
    q: usize,
    option: &OptionPolicy,
    vstar: &ValueTable,
) -> Result<OptionModel> {
    let mdp = umdp.mdp(q);
    let anchor = option.anchor();
    if mdp.is_goal(anchor) {
        return Ok(OptionModel {
            value: 0.0,
            cost: 0.0,
            transition: vec![(anchor, 1.0)],
        });
    }
    let ns = mdp.n_states();
    let mut dist = vec![0.0; ns];
    dist[anchor] = 1.0;
    let mut value = 0.0;
    for t in 0..option.horizon() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let p = dist[s];
            if p == 0.0 {
                continue;
            }
            if mdp.is_goal(s) {
                next[s] += p;
                continue;
            }
            let a = option.action(t, s).ok_or_else(|| missing_action(anchor, s, t))?;
            if !mdp.sample.is_available(s, a) {
                return Err(Error::Structural(format!("action a{a} unavailable at s{s}")));
            }
            value += p * mdp.sample.cbar(s, a);
            for o in mdp.sample.row(s, a) {
                next[o.next] += p * o.prob;
            }
        }
        dist = next;
    }
    let transition: Vec<(usize, f64)> = dist
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| (s, p))
        .collect();
    let expected_vstar: f64 = transition.iter().map(|&(s, p)| p * vstar[s]).sum();
    Ok(OptionModel {
        value,
        cost: value + expected_vstar - vstar[anchor],
        transition,
    })
}

/// Result of an inner solve.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionSolution {
    pub policy: OptionPolicy,
    /// `κ + max_q [...]` of the returned policy.
    pub objective: f64,
    /// Per-sample terms inside the max (κ excluded).
    pub per_sample: Vec<f64>,
    pub nodes: u64,
}

/// Exact minimax search over deterministic option policies.
///
/// Slots `(t, s)` are assigned depth-first in ascending `t` then state order,
/// actions in ascending index. The bound at a node is the max over samples of
/// the per-sample optimal completion with every unassigned slot free. Slots
/// that no sample can reach under the current prefix do not affect the
/// objective and are fixed to their lowest action. Among optimal tables the
/// lexicographically smallest (in slot order) is returned.
#[derive(Clone, Copy, Debug)]
pub struct OptionSearch<'a> {
    umdp: &'a Umdp,
    optima: &'a [SampleOptimum],
    kind: GapKind,
    kappa: f64,
    node_budget: u64,
    deadline: Option<Instant>,
}

impl<'a> OptionSearch<'a> {
    pub fn new(umdp: &'a Umdp, optima: &'a [SampleOptimum]) -> Self {
        Self {
            umdp,
            optima,
            kind: GapKind::Regret,
            kappa: 1e-4,
            node_budget: DEFAULT_NODE_BUDGET,
            deadline: None,
        }
    }

    /// Aborts the search with [`Error::Timeout`] once `deadline` passes.
    pub fn deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn kind(mut self, kind: GapKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn node_budget(mut self, budget: u64) -> Self {
        self.node_budget = budget;
        self
    }

    /// Solves the backup at `anchor` against the continuation table `values`
    /// (minimax regret or CEMR values, per [`GapKind`]). `warm` seeds the
    /// incumbent; it never changes the returned optimum.
    pub fn solve(
        &self,
        anchor: usize,
        n: usize,
        values: &[f64],
        warm: Option<&OptionPolicy>,
    ) -> Result<OptionSolution> {
        if n == 0 {
            return Err(Error::Structural("option horizon must be at least 1".into()));
        }
        if self.umdp.is_goal(anchor) {
            return Ok(OptionSolution {
                policy: OptionPolicy::empty(anchor, n),
                objective: 0.0,
                per_sample: vec![0.0; self.umdp.n_samples()],
                nodes: 0,
            });
        }
        let problem = InnerProblem::build(self, anchor, n, values)?;
        problem.search(warm)
    }

    /// Admissible bound for a partial assignment: max over samples of the
    /// per-sample optimal completion with every slot missing from `partial`
    /// chosen freely. κ is included.
    pub fn lower_bound(
        &self,
        anchor: usize,
        n: usize,
        values: &[f64],
        partial: &BTreeMap<(usize, usize), usize>,
    ) -> Result<f64> {
        let problem = InnerProblem::build(self, anchor, n, values)?;
        let mut worst = f64::NEG_INFINITY;
        for q in 0..self.umdp.n_samples() {
            let mdp = self.umdp.mdp(q);
            let mut next = vec![0.0; mdp.n_states()];
            for t in (0..n).rev() {
                let mut cur = vec![0.0; mdp.n_states()];
                for &s in &problem.reach[q][t] {
                    if mdp.is_goal(s) {
                        continue;
                    }
                    let eval = |a: usize| {
                        problem.step(q, s, a)
                            + mdp
                                .sample
                                .row(s, a)
                                .iter()
                                .map(|o| {
                                    o.prob
                                        * if mdp.is_goal(o.next) {
                                            0.0
                                        } else if t + 1 == n {
                                            problem.terminal(q, o.next)
                                        } else {
                                            next[o.next]
                                        }
                                })
                                .sum::<f64>()
                    };
                    cur[s] = match partial.get(&(t, s)) {
                        Some(&a) => eval(a),
                        None => mdp.sample.available_actions(s).map(eval).fold(f64::INFINITY, f64::min),
                    };
                }
                next = cur;
            }
            worst = worst.max(next[anchor] + problem.offset[q]);
        }
        Ok(worst + self.kappa)
    }
}

/// `optimize_option_deterministic` with the regret gap: returns the optimal
/// option and `κ + max_q [V^n_q(s̄,0) − V*_q(s̄) + c_q(s̄,0)]`.
pub fn optimize_option_deterministic(
    umdp: &Umdp,
    anchor: usize,
    n: usize,
    reg: &ValueTable,
    optima: &[SampleOptimum],
    kappa: f64,
) -> Result<(OptionPolicy, f64)> {
    let sol = OptionSearch::new(umdp, optima).kappa(kappa).solve(anchor, n, &reg.0, None)?;
    Ok((sol.policy, sol.objective))
}

struct Slot {
    t: usize,
    s: usize,
    actions: Vec<usize>,
    /// Offset of this slot's actions in the flattened `qval` rows.
    qoff: usize,
}

struct InnerProblem<'a> {
    umdp: &'a Umdp,
    optima: &'a [SampleOptimum],
    kind: GapKind,
    values: &'a [f64],
    anchor: usize,
    n: usize,
    kappa: f64,
    budget: u64,
    deadline: Option<Instant>,
    reach: Vec<Vec<Vec<usize>>>,
    slots: Vec<Slot>,
    layer_end: Vec<usize>,
    /// `wstar[q][t][s]`: per-sample optimal completion from `(s, t)`; NaN where unreachable.
    wstar: Vec<Vec<Vec<f64>>>,
    /// `qval[q][qoff + i]`: step plus optimal completion after taking `slots[..].actions[i]`.
    qval: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl<'a> InnerProblem<'a> {
    fn build(search: &OptionSearch<'a>, anchor: usize, n: usize, values: &'a [f64]) -> Result<Self> {
        let umdp = search.umdp;
        let ns = umdp.n_states();
        let reach: Vec<Vec<Vec<usize>>> = umdp.mdps().map(|mdp| reachable_in(&mdp, anchor, n)).collect();
        let sets = ReachableSets {
            anchor,
            horizon: n,
            sets: reach,
        };
        let mut slots = Vec::new();
        let mut layer_end = Vec::with_capacity(n);
        let mut qoff = 0;
        for t in 0..n {
            for s in sets.union_non_goal(umdp, t) {
                let actions = umdp.available_actions(s);
                if actions.is_empty() {
                    return Err(Error::Structural(format!("no available action at s{s}")));
                }
                let len = actions.len();
                slots.push(Slot { t, s, actions, qoff });
                qoff += len;
            }
            layer_end.push(slots.len());
        }
        let reach = sets.sets;
        let offset = (0..umdp.n_samples())
            .map(|q| match search.kind {
                GapKind::Regret => -search.optima[q].values[anchor],
                GapKind::Cemr => 0.0,
            })
            .collect();
        let mut problem = InnerProblem {
            umdp,
            optima: search.optima,
            kind: search.kind,
            values,
            anchor,
            n,
            kappa: search.kappa,
            budget: search.node_budget,
            deadline: search.deadline,
            reach,
            slots,
            layer_end,
            wstar: Vec::new(),
            qval: Vec::new(),
            offset,
        };
        let mut wstar = Vec::with_capacity(umdp.n_samples());
        let mut qval = Vec::with_capacity(umdp.n_samples());
        for q in 0..umdp.n_samples() {
            let mdp = umdp.mdp(q);
            let mut w = vec![vec![f64::NAN; ns]; n];
            let mut qv = vec![f64::NAN; qoff];
            for t in (0..n).rev() {
                let start = if t == 0 { 0 } else { problem.layer_end[t - 1] };
                for slot in &problem.slots[start..problem.layer_end[t]] {
                    if problem.reach[q][t].binary_search(&slot.s).is_err() {
                        continue;
                    }
                    let mut best = f64::INFINITY;
                    for (i, &a) in slot.actions.iter().enumerate() {
                        let mut v = problem.step(q, slot.s, a);
                        for o in mdp.sample.row(slot.s, a) {
                            if mdp.is_goal(o.next) {
                                continue;
                            }
                            v += o.prob
                                * if t + 1 == n {
                                    problem.terminal(q, o.next)
                                } else {
                                    w[t + 1][o.next]
                                };
                        }
                        qv[slot.qoff + i] = v;
                        best = best.min(v);
                    }
                    w[t][slot.s] = best;
                }
            }
            wstar.push(w);
            qval.push(qv);
        }
        problem.wstar = wstar;
        problem.qval = qval;
        Ok(problem)
    }

    #[inline]
    fn step(&self, q: usize, s: usize, a: usize) -> f64 {
        let c = self.umdp.samples()[q].cbar(s, a);
        match self.kind {
            GapKind::Regret => c,
            GapKind::Cemr => c - self.optima[q].best_local[s],
        }
    }

    #[inline]
    fn terminal(&self, q: usize, s: usize) -> f64 {
        if self.umdp.is_goal(s) {
            return 0.0;
        }
        match self.kind {
            GapKind::Regret => self.values[s] + self.optima[q].values[s],
            GapKind::Cemr => self.values[s],
        }
    }

    fn layer_start(&self, t: usize) -> usize {
        if t == 0 {
            0
        } else {
            self.layer_end[t - 1]
        }
    }

    fn action_index(&self, slot: usize, a: usize) -> usize {
        self.slots[slot]
            .actions
            .iter()
            .position(|&x| x == a)
            .expect("action belongs to slot")
    }

    /// Forward evaluation of a complete assignment. Returns per-sample terms
    /// (offset included, κ excluded) and the relevance mask of each slot.
    fn evaluate(&self, assign: &[usize]) -> (Vec<f64>, Vec<bool>) {
        let nq = self.umdp.n_samples();
        let ns = self.umdp.n_states();
        let mut relevant = vec![false; self.slots.len()];
        let mut probs = vec![vec![0.0; ns]; nq];
        for p in probs.iter_mut() {
            p[self.anchor] = 1.0;
        }
        let mut total = self.offset.clone();
        for t in 0..self.n {
            let range = self.layer_start(t)..self.layer_end[t];
            let mut next = vec![vec![0.0; ns]; nq];
            for idx in range {
                let slot = &self.slots[idx];
                let a = assign[idx];
                let ai = self.action_index(idx, a);
                for q in 0..nq {
                    let p = probs[q][slot.s];
                    if p == 0.0 {
                        continue;
                    }
                    relevant[idx] = true;
                    if t + 1 == self.n {
                        total[q] += p * self.qval[q][slot.qoff + ai];
                    } else {
                        total[q] += p * self.step(q, slot.s, a);
                        for o in self.umdp.samples()[q].row(slot.s, a) {
                            if !self.umdp.is_goal(o.next) {
                                next[q][o.next] += p * o.prob;
                            }
                        }
                    }
                }
            }
            probs = next;
        }
        (total, relevant)
    }

    fn canonical(&self, mut assign: Vec<usize>) -> (Vec<usize>, f64, Vec<f64>) {
        let (terms, relevant) = self.evaluate(&assign);
        for (idx, rel) in relevant.iter().enumerate() {
            if !rel {
                assign[idx] = self.slots[idx].actions[0];
            }
        }
        let obj = self.kappa + terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (assign, obj, terms)
    }

    fn search(&self, warm: Option<&OptionPolicy>) -> Result<OptionSolution> {
        let nq = self.umdp.n_samples();
        // Incumbent candidates: each sample's greedy completion, plus the warm start.
        let mut candidates: Vec<Vec<usize>> = (0..nq)
            .map(|q| {
                self.slots
                    .iter()
                    .map(|slot| {
                        if self.wstar[q][slot.t][slot.s].is_nan() {
                            return slot.actions[0];
                        }
                        let mut best = (slot.actions[0], f64::INFINITY);
                        for (i, &a) in slot.actions.iter().enumerate() {
                            let v = self.qval[q][slot.qoff + i];
                            if strictly_less(v, best.1) {
                                best = (a, v);
                            }
                        }
                        best.0
                    })
                    .collect()
            })
            .collect();
        if let Some(w) = warm {
            candidates.push(
                self.slots
                    .iter()
                    .map(|slot| match w.action(slot.t, slot.s) {
                        Some(a) if slot.actions.contains(&a) => a,
                        _ => slot.actions[0],
                    })
                    .collect(),
            );
        }
        let mut best: Option<(Vec<usize>, f64)> = None;
        for cand in candidates {
            let (assign, obj, _) = self.canonical(cand);
            let better = match &best {
                None => true,
                Some((b, bobj)) => {
                    let tol = TIE_EPS * bobj.abs().max(1.0);
                    obj < bobj - tol || (obj <= bobj + tol && assign < *b)
                }
            };
            if better {
                best = Some((assign, obj));
            }
        }
        let (incumbent, inc_obj) = best.expect("at least one sample");
        let mut state = SearchState {
            assign: incumbent.clone(),
            incumbent,
            inc_obj,
            dfs_found: false,
            nodes: 0,
        };
        let ns = self.umdp.n_states();
        let mut probs = vec![vec![0.0; ns]; nq];
        for p in probs.iter_mut() {
            p[self.anchor] = 1.0;
        }
        let acc = vec![0.0; nq];
        let outcome = self.layer(&mut state, 0, &probs, &acc, Ordering::Equal, 0);
        let policy = |assign: &[usize]| {
            OptionPolicy::new(
                self.anchor,
                self.n,
                self.slots.iter().zip(assign).map(|(slot, &a)| ((slot.t, slot.s), a)),
            )
        };
        if let Err(Abort::Timeout) = outcome {
            return Err(Error::Timeout);
        }
        if let Err(Abort::Budget) = outcome {
            return Err(Error::BudgetExceeded {
                anchor: self.anchor,
                budget: self.budget,
                objective: state.inc_obj,
                incumbent: Box::new(policy(&state.incumbent).with_objective(state.inc_obj)),
            });
        }
        let (assign, objective, per_sample) = self.canonical(state.incumbent);
        Ok(OptionSolution {
            policy: policy(&assign).with_objective(objective),
            objective,
            per_sample,
            nodes: state.nodes,
        })
    }

    fn advance_order(&self, st: &SearchState, ord: Ordering, from: usize, to: usize) -> Ordering {
        if ord != Ordering::Equal {
            return ord;
        }
        for i in from..to {
            match st.assign[i].cmp(&st.incumbent[i]) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    }

    fn prunable(&self, st: &SearchState, bound: f64, ord: Ordering) -> bool {
        let tol = TIE_EPS * st.inc_obj.abs().max(1.0);
        bound > st.inc_obj + tol || (bound >= st.inc_obj - tol && ord != Ordering::Less)
    }

    fn layer(
        &self,
        st: &mut SearchState,
        t: usize,
        probs: &[Vec<f64>],
        acc: &[f64],
        ord: Ordering,
        upto: usize,
    ) -> std::result::Result<(), Abort> {
        let nq = self.umdp.n_samples();
        let mut relevant = Vec::new();
        let mut layer_sum = vec![0.0; nq];
        for idx in self.layer_start(t)..self.layer_end[t] {
            let s = self.slots[idx].s;
            let mut hit = false;
            for q in 0..nq {
                let p = probs[q][s];
                if p > 0.0 {
                    hit = true;
                    layer_sum[q] += p * self.wstar[q][t][s];
                }
            }
            if hit {
                relevant.push(idx);
            } else {
                st.assign[idx] = self.slots[idx].actions[0];
            }
        }
        self.branch(st, t, &relevant, 0, probs, acc, &layer_sum, ord, upto)
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &self,
        st: &mut SearchState,
        t: usize,
        relevant: &[usize],
        k: usize,
        probs: &[Vec<f64>],
        acc: &[f64],
        layer_sum: &[f64],
        ord: Ordering,
        upto: usize,
    ) -> std::result::Result<(), Abort> {
        let nq = self.umdp.n_samples();
        let pos = relevant.get(k).copied().unwrap_or(self.layer_end[t]);
        let ord = if st.dfs_found {
            Ordering::Greater
        } else {
            self.advance_order(st, ord, upto, pos)
        };
        let bound = self.kappa
            + (0..nq)
                .map(|q| acc[q] + layer_sum[q] + self.offset[q])
                .fold(f64::NEG_INFINITY, f64::max);
        if self.prunable(st, bound, ord) {
            return Ok(());
        }
        if k == relevant.len() {
            if t + 1 == self.n {
                // Every term is exact at a leaf.
                st.incumbent.copy_from_slice(&st.assign);
                st.inc_obj = bound;
                st.dfs_found = true;
                return Ok(());
            }
            let ns = self.umdp.n_states();
            let mut next = vec![vec![0.0; ns]; nq];
            let mut next_acc = acc.to_vec();
            for &idx in relevant {
                let s = self.slots[idx].s;
                let a = st.assign[idx];
                for q in 0..nq {
                    let p = probs[q][s];
                    if p == 0.0 {
                        continue;
                    }
                    next_acc[q] += p * self.step(q, s, a);
                    for o in self.umdp.samples()[q].row(s, a) {
                        if !self.umdp.is_goal(o.next) {
                            next[q][o.next] += p * o.prob;
                        }
                    }
                }
            }
            return self.layer(st, t + 1, &next, &next_acc, ord, pos);
        }
        let idx = relevant[k];
        let slot = &self.slots[idx];
        let mut sum = vec![0.0; nq];
        for (i, &a) in slot.actions.iter().enumerate() {
            st.nodes += 1;
            if st.nodes > self.budget {
                return Err(Abort::Budget);
            }
            if st.nodes % 4096 == 0 && self.deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(Abort::Timeout);
            }
            st.assign[idx] = a;
            for q in 0..nq {
                let p = probs[q][slot.s];
                sum[q] = if p > 0.0 {
                    layer_sum[q] + p * (self.qval[q][slot.qoff + i] - self.wstar[q][t][slot.s])
                } else {
                    layer_sum[q]
                };
            }
            self.branch(st, t, relevant, k + 1, probs, acc, &sum, ord, pos)?;
        }
        Ok(())
    }
}

enum Abort {
    Budget,
    Timeout,
}

struct SearchState {
    assign: Vec<usize>,
    incumbent: Vec<usize>,
    inc_obj: f64,
    dfs_found: bool,
    nodes: u64,
}
