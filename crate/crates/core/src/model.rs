//! Sample-based uncertain SSP model.
//!
//! A [`Umdp`] is a shared state/action space, an initial state, a goal set
//! and a finite list of [`MdpSample`]s. Each sample stores its own sparse
//! transition rows keyed by `(state, action)`; an empty row means the action
//! is unavailable at that state. Goal states need no rows: every algorithm
//! treats them as absorbing with zero cost.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row mass used by validation.
pub const MASS_TOL: f64 = 1e-9;

/// One successor of a `(state, action)` pair: probability and transition cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub cost: f64,
}

impl Outcome {
    pub fn new(next: usize, prob: f64, cost: f64) -> Self {
        Self { next, prob, cost }
    }
}

/// One `(C_q, T_q)` instantiation of model uncertainty.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpSample {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<Outcome>>,
    expected: Vec<f64>,
}

impl MdpSample {
    /// Builds a sample from rows laid out as `rows[s * n_actions + a]`.
    pub fn from_rows(n_states: usize, n_actions: usize, rows: Vec<Vec<Outcome>>) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(Error::Structural(format!(
                "expected {} rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        for (idx, row) in rows.iter().enumerate() {
            if let Some(o) = row.iter().find(|o| o.next >= n_states) {
                return Err(Error::Structural(format!(
                    "successor {} out of range at (s{},a{})",
                    o.next,
                    idx / n_actions,
                    idx % n_actions
                )));
            }
        }
        let expected = rows
            .iter()
            .map(|row| row.iter().map(|o| o.prob * o.cost).sum())
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            rows,
            expected,
        })
    }

    pub fn builder(n_states: usize, n_actions: usize) -> SampleBuilder {
        SampleBuilder {
            n_states,
            n_actions,
            rows: vec![Vec::new(); n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[Outcome] {
        &self.rows[s * self.n_actions + a]
    }

    #[inline]
    pub fn is_available(&self, s: usize, a: usize) -> bool {
        !self.rows[s * self.n_actions + a].is_empty()
    }

    pub fn available_actions(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_actions).filter(move |&a| self.is_available(s, a))
    }

    /// Expected immediate cost `Σ_{s'} T(s,a,s') C(s,a,s')`.
    pub fn expected_cost(&self, s: usize, a: usize) -> Result<f64> {
        if s >= self.n_states || a >= self.n_actions || !self.is_available(s, a) {
            return Err(Error::Structural(format!("no transition row at (s{s},a{a})")));
        }
        Ok(self.expected[s * self.n_actions + a])
    }

    /// Unchecked variant of [`MdpSample::expected_cost`] for hot loops.
    #[inline]
    pub(crate) fn cbar(&self, s: usize, a: usize) -> f64 {
        self.expected[s * self.n_actions + a]
    }

    /// Returns a copy with the rows at `(s, a)` cleared wherever `keep(s, a)` is false.
    pub fn retain_actions(&self, keep: impl Fn(usize, usize) -> bool) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(idx, row)| {
                if keep(idx / self.n_actions, idx % self.n_actions) {
                    row.clone()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self::from_rows(self.n_states, self.n_actions, rows).expect("same shape")
    }
}

/// Incremental constructor for [`MdpSample`]. Repeated successors of the
/// same `(s, a)` are merged with probability-weighted cost.
#[derive(Clone, Debug)]
pub struct SampleBuilder {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<Outcome>>,
}

impl SampleBuilder {
    pub fn add(&mut self, s: usize, a: usize, next: usize, prob: f64, cost: f64) -> &mut Self {
        let row = &mut self.rows[s * self.n_actions + a];
        if let Some(o) = row.iter_mut().find(|o| o.next == next) {
            let total = o.prob + prob;
            if total > 0.0 {
                o.cost = (o.prob * o.cost + prob * cost) / total;
            }
            o.prob = total;
        } else {
            row.push(Outcome::new(next, prob, cost));
        }
        self
    }

    pub fn set_row(&mut self, s: usize, a: usize, outcomes: Vec<Outcome>) -> &mut Self {
        self.rows[s * self.n_actions + a] = outcomes;
        self
    }

    pub fn build(mut self) -> Result<MdpSample> {
        for row in &mut self.rows {
            row.sort_by_key(|o| o.next);
        }
        MdpSample::from_rows(self.n_states, self.n_actions, self.rows)
    }
}

/// Sample-based SSP uncertain MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct Umdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    initial: usize,
    goal_mask: Vec<bool>,
    samples: Vec<MdpSample>,
}

impl Umdp {
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        initial: usize,
        goals: &[usize],
        samples: Vec<MdpSample>,
    ) -> Result<Self> {
        let n_states = state_names.len();
        let n_actions = action_names.len();
        if initial >= n_states {
            return Err(Error::Structural(format!("initial state {initial} out of range")));
        }
        let mut goal_mask = vec![false; n_states];
        for &g in goals {
            if g >= n_states {
                return Err(Error::Structural(format!("goal state {g} out of range")));
            }
            goal_mask[g] = true;
        }
        for (q, sample) in samples.iter().enumerate() {
            if sample.n_states() != n_states || sample.n_actions() != n_actions {
                return Err(Error::Structural(format!(
                    "sample {q} has shape {}x{}, expected {n_states}x{n_actions}",
                    sample.n_states(),
                    sample.n_actions()
                )));
            }
        }
        Ok(Self {
            state_names,
            action_names,
            initial,
            goal_mask,
            samples,
        })
    }

    /// Convenience constructor with generated `s{i}` / `a{i}` names.
    pub fn with_indices(
        n_states: usize,
        n_actions: usize,
        initial: usize,
        goals: &[usize],
        samples: Vec<MdpSample>,
    ) -> Result<Self> {
        Self::new(
            (0..n_states).map(|i| format!("s{i}")).collect(),
            (0..n_actions).map(|i| format!("a{i}")).collect(),
            initial,
            goals,
            samples,
        )
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn goal_mask(&self) -> &[bool] {
        &self.goal_mask
    }

    #[inline]
    pub fn is_goal(&self, s: usize) -> bool {
        self.goal_mask[s]
    }

    pub fn goals(&self) -> Vec<usize> {
        (0..self.n_states()).filter(|&s| self.goal_mask[s]).collect()
    }

    pub fn samples(&self) -> &[MdpSample] {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn mdp(&self, q: usize) -> Mdp<'_> {
        Mdp {
            sample: &self.samples[q],
            goals: &self.goal_mask,
            initial: self.initial,
        }
    }

    pub fn mdps(&self) -> impl Iterator<Item = Mdp<'_>> {
        (0..self.n_samples()).map(move |q| self.mdp(q))
    }

    /// Same state/action space and goals with a different sample list.
    pub fn with_samples(&self, samples: Vec<MdpSample>) -> Result<Self> {
        Self::new(
            self.state_names.clone(),
            self.action_names.clone(),
            self.initial,
            &self.goals(),
            samples,
        )
    }

    /// Actions available at `s` in the first sample (validation checks that
    /// availability is identical across samples).
    pub fn available_actions(&self, s: usize) -> Vec<usize> {
        match self.samples.first() {
            Some(sample) => sample.available_actions(s).collect(),
            None => Vec::new(),
        }
    }
}

/// A single SSP MDP: one sample together with the goal set it is solved against.
#[derive(Clone, Copy, Debug)]
pub struct Mdp<'a> {
    pub sample: &'a MdpSample,
    pub goals: &'a [bool],
    pub initial: usize,
}

impl<'a> Mdp<'a> {
    pub fn new(sample: &'a MdpSample, goals: &'a [bool], initial: usize) -> Self {
        Self {
            sample,
            goals,
            initial,
        }
    }

    pub fn n_states(&self) -> usize {
        self.sample.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.sample.n_actions()
    }

    #[inline]
    pub fn is_goal(&self, s: usize) -> bool {
        self.goals[s]
    }
}

/// Per-state action distribution. Deterministic policies are one-hot rows;
/// goal states carry empty rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    choice: Vec<Vec<(usize, f64)>>,
}

impl StationaryPolicy {
    pub fn from_rows(choice: Vec<Vec<(usize, f64)>>) -> Self {
        Self { choice }
    }

    pub fn deterministic(actions: &[Option<usize>]) -> Self {
        Self {
            choice: actions
                .iter()
                .map(|a| a.map(|a| vec![(a, 1.0)]).unwrap_or_default())
                .collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.choice.len()
    }

    #[inline]
    pub fn probs(&self, s: usize) -> &[(usize, f64)] {
        &self.choice[s]
    }

    /// The single action chosen at `s`, if the row is one-hot.
    pub fn action(&self, s: usize) -> Option<usize> {
        match self.choice[s].as_slice() {
            [(a, p)] if (*p - 1.0).abs() <= MASS_TOL => Some(*a),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.choice.iter().all(|row| row.len() <= 1)
    }

    /// Checks row sums and action support against `umdp`.
    pub fn check(&self, umdp: &Umdp) -> Result<()> {
        if self.choice.len() != umdp.n_states() {
            return Err(Error::Structural(format!(
                "policy covers {} states, model has {}",
                self.choice.len(),
                umdp.n_states()
            )));
        }
        for (s, row) in self.choice.iter().enumerate() {
            if umdp.is_goal(s) {
                continue;
            }
            let mass: f64 = row.iter().map(|&(_, p)| p).sum();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::Structural(format!("policy row at s{s} sums to {mass}")));
            }
            for &(a, p) in row {
                if p < 0.0 || a >= umdp.n_actions() || umdp.samples().iter().any(|m| !m.is_available(s, a)) {
                    return Err(Error::Structural(format!("policy uses invalid action a{a} at s{s}")));
                }
            }
        }
        Ok(())
    }
}

/// State-indexed table of values, regrets or CEMR values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for ValueTable {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Result of [`validate_umdp`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Per sample: whether some policy reaches the goal set with probability 1 from every state.
    pub proper_policy_exists: Vec<bool>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

/// Lists every violated model invariant. An empty violation list means the
/// model is a well-formed SSP UMDP in which each sample admits a proper policy.
pub fn validate_umdp(umdp: &Umdp) -> ValidationReport {
    let mut violations = Vec::new();
    let mut proper_policy_exists = Vec::new();
    let v = &mut violations;
    if umdp.goals().is_empty() {
        v.push("goal set is empty".into());
    }
    if umdp.samples().is_empty() {
        v.push("model has no samples".into());
    }
    let n_actions = umdp.n_actions();
    for (q, sample) in umdp.samples().iter().enumerate() {
        for s in 0..umdp.n_states() {
            let goal = umdp.is_goal(s);
            let mut any_action = false;
            for a in 0..n_actions {
                let row = sample.row(s, a);
                if row.is_empty() {
                    continue;
                }
                any_action = true;
                if goal {
                    let ok = row.len() == 1
                        && row[0].next == s
                        && (row[0].prob - 1.0).abs() <= MASS_TOL
                        && row[0].cost == 0.0;
                    if !ok {
                        v.push(format!(
                            "sample {q}: goal s{s} must be an absorbing zero-cost self-loop (action a{a})"
                        ));
                    }
                    continue;
                }
                let mut mass = 0.0;
                for o in row {
                    if !(0.0..=1.0).contains(&o.prob) || !o.prob.is_finite() {
                        v.push(format!(
                            "sample {q}: probability {} outside [0,1] at (s{s},a{a})->s{}",
                            o.prob, o.next
                        ));
                    }
                    if !o.cost.is_finite() {
                        v.push(format!("sample {q}: non-finite cost at (s{s},a{a})->s{}", o.next));
                    } else if o.cost < 0.0 {
                        v.push(format!(
                            "sample {q}: negative cost {} at (s{s},a{a})->s{}",
                            o.cost, o.next
                        ));
                    }
                    mass += o.prob;
                }
                if (mass - 1.0).abs() > MASS_TOL {
                    v.push(format!("sample {q}: distribution mass {mass} at (s{s},a{a})"));
                }
            }
            if !goal && !any_action {
                v.push(format!("sample {q}: non-goal state s{s} has no available action"));
            }
        }
        if q > 0 {
            let first = &umdp.samples()[0];
            for s in 0..umdp.n_states() {
                for a in 0..n_actions {
                    if first.is_available(s, a) != sample.is_available(s, a) && !umdp.is_goal(s) {
                        v.push(format!(
                            "sample {q}: availability of (s{s},a{a}) differs from sample 0"
                        ));
                    }
                }
            }
        }
        let proper = proper_region(&umdp.mdp(q)).iter().all(|&ok| ok);
        proper_policy_exists.push(proper);
        if !proper {
            v.push(format!("no proper policy in sample {q}"));
        }
    }
    ValidationReport {
        violations,
        proper_policy_exists,
    }
}

/// States from which some policy reaches the goal set with probability 1.
///
/// Standard almost-sure reachability fixed point: repeatedly restrict to
/// actions whose whole support stays inside the candidate set and keep the
/// states that can still reach a goal through them.
pub fn proper_region(mdp: &Mdp<'_>) -> Vec<bool> {
    let n = mdp.n_states();
    let sample = mdp.sample;
    let mut inside = vec![true; n];
    loop {
        let mut reach: Vec<bool> = (0..n).map(|s| mdp.is_goal(s)).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if reach[s] || !inside[s] {
                    continue;
                }
                let ok = sample.available_actions(s).any(|a| {
                    let row = sample.row(s, a);
                    let support = row.iter().filter(|o| o.prob > 0.0);
                    support.clone().all(|o| inside[o.next]) && support.clone().any(|o| reach[o.next])
                });
                if ok {
                    reach[s] = true;
                    changed = true;
                }
            }
        }
        if reach == inside {
            return inside;
        }
        inside = reach;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(mass: f64) -> Umdp {
        let mut b = MdpSample::builder(2, 1);
        b.add(0, 0, 1, mass, 1.0);
        let sample = b.build().unwrap();
        Umdp::with_indices(2, 1, 0, &[1], vec![sample]).unwrap()
    }

    #[test]
    fn minimal_chain_is_valid() {
        let report = validate_umdp(&chain(1.0));
        assert!(report.is_valid(), "{:?}", report.violations);
        assert_eq!(report.proper_policy_exists, vec![true]);
    }

    #[test]
    fn short_row_is_reported() {
        let report = validate_umdp(&chain(0.9));
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("distribution mass 0.9 at (s0,a0)")));
    }

    #[test]
    fn unreachable_goal_in_one_sample() {
        let mut ok = MdpSample::builder(3, 1);
        ok.add(0, 0, 2, 1.0, 1.0).add(1, 0, 2, 1.0, 1.0);
        let mut bad = MdpSample::builder(3, 1);
        bad.add(0, 0, 1, 1.0, 1.0).add(1, 0, 0, 1.0, 1.0);
        let umdp = Umdp::with_indices(3, 1, 0, &[2], vec![ok.build().unwrap(), bad.build().unwrap()]).unwrap();
        let report = validate_umdp(&umdp);
        assert_eq!(report.proper_policy_exists, vec![true, false]);
        assert!(report.violations.iter().any(|v| v == "no proper policy in sample 1"));
    }

    #[test]
    fn negative_cost_rejected() {
        let mut b = MdpSample::builder(2, 1);
        b.add(0, 0, 1, 1.0, -1.0);
        let umdp = Umdp::with_indices(2, 1, 0, &[1], vec![b.build().unwrap()]).unwrap();
        assert!(!validate_umdp(&umdp).is_valid());
    }

    #[test]
    fn proper_region_excludes_trap() {
        // s0 -a0-> {s1: 0.5, goal: 0.5}; s1 is a trap; s0 -a1-> goal.
        let mut b = MdpSample::builder(3, 2);
        b.add(0, 0, 1, 0.5, 1.0).add(0, 0, 2, 0.5, 1.0);
        b.add(0, 1, 2, 1.0, 1.0);
        b.add(1, 0, 1, 1.0, 1.0);
        let sample = b.build().unwrap();
        let goals = [false, false, true];
        let region = proper_region(&Mdp::new(&sample, &goals, 0));
        assert_eq!(region, vec![true, false, true]);
    }

    #[test]
    fn builder_merges_duplicate_successors() {
        let mut b = MdpSample::builder(2, 1);
        b.add(0, 0, 1, 0.5, 2.0).add(0, 0, 1, 0.5, 4.0);
        let sample = b.build().unwrap();
        assert_eq!(sample.row(0, 0).len(), 1);
        assert!((sample.expected_cost(0, 0).unwrap() - 3.0).abs() < 1e-12);
    }
}
