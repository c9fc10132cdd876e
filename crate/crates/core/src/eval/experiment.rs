//! Benchmark experiments: plan every configured method on generated
//! instances, score max regret on training and generalisation samples and
//! aggregate normalised scores.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::{max_regret, Coverage};
use super::stats::{mean, std_dev, welch_t_test};
use crate::domains::{prune_actions, select_samples, Domain};
use crate::error::{Error, Result};
use crate::model::validate_umdp;
use crate::planners::{run_method, Method, PlannerConfig};
use crate::solve::{solve_samples, IterLimits};

fn default_sizes() -> Vec<usize> {
    vec![6]
}
fn default_n() -> usize {
    1
}
fn default_samples() -> usize {
    15
}
fn default_candidates() -> usize {
    45
}
fn default_test() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_kappa() -> f64 {
    1e-4
}
fn default_budget() -> u64 {
    crate::options::DEFAULT_NODE_BUDGET
}
fn default_timeout() -> f64 {
    600.0
}

/// One method of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Overrides the experiment-wide pruning flag for this method.
    #[serde(default)]
    pub prune: Option<bool>,
}

impl MethodSpec {
    pub fn new(method: Method, n: usize) -> Self {
        Self { method, n, prune: None }
    }

    /// `reg(n=2)`, `robust`, ...
    pub fn label(&self) -> String {
        let mut label = if self.method.uses_options() {
            format!("{}(n={})", self.method, self.n)
        } else {
            self.method.to_string()
        };
        if self.prune == Some(false) && self.method.uses_options() {
            label.push_str("-unpruned");
        }
        label
    }
}

/// Experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSpec>,
    /// Training samples per instance.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Candidate pool the training samples are selected from.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// Generalisation samples per instance (0 disables the test set).
    #[serde(default = "default_test")]
    pub test_samples: usize,
    /// Prune actions before planning with option-based methods.
    #[serde(default = "default_true")]
    pub prune: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_budget")]
    pub node_budget: u64,
    /// Planning time limit per method and instance (s).
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Record wall-clock planning time; disable for byte-identical output.
    #[serde(default = "default_true")]
    pub record_time: bool,
}

impl ExperimentConfig {
    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            epsilon: self.epsilon,
            kappa: self.kappa,
            node_budget: self.node_budget,
            time_limit: (self.timeout_s > 0.0).then(|| Duration::from_secs_f64(self.timeout_s)),
            ..PlannerConfig::default()
        }
    }

    fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.seeds.is_empty() {
            problems.push("experiment needs at least one seed".to_string());
        }
        if self.methods.is_empty() {
            problems.push("experiment needs at least one method".to_string());
        }
        if self.sizes.is_empty() {
            problems.push("experiment needs at least one size".to_string());
        }
        if self.n_samples == 0 || self.candidates < self.n_samples {
            problems.push(format!(
                "need 1 <= n_samples ({}) <= candidates ({})",
                self.n_samples, self.candidates
            ));
        }
        if self.methods.iter().any(|m| m.n == 0) {
            problems.push("option horizon n must be at least 1".to_string());
        }
        if problems.is_empty() {
            self.planner_config().check()
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Timeout,
    /// Policy improper in some training sample.
    Improper,
    Error,
}

/// One `results.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub domain: String,
    pub size: usize,
    pub method: Method,
    pub n: usize,
    pub max_regret_train: Option<f64>,
    pub max_regret_test: Option<f64>,
    pub normalized: Option<f64>,
    pub time_s: Option<f64>,
    pub status: Status,
    /// Method label distinguishing pruning variants.
    pub label: String,
}

/// Per-instance normalisation: each completed method's training max regret
/// divided by the worst among completers (all-zero cohorts score 1).
pub fn normalize(rows: &mut [ResultRow]) {
    let worst = rows
        .iter()
        .filter(|r| r.status == Status::Ok)
        .filter_map(|r| r.max_regret_train)
        .fold(f64::NEG_INFINITY, f64::max);
    for r in rows.iter_mut() {
        r.normalized = match (r.status, r.max_regret_train) {
            (Status::Ok, Some(x)) if worst > 0.0 => Some((x.max(0.0) / worst).min(1.0)),
            (Status::Ok, Some(_)) => Some(1.0),
            _ => None,
        };
    }
}

/// Plans and scores every configured method on one `(size, seed)` instance.
pub fn run_instance(cfg: &ExperimentConfig, size: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let limits = IterLimits::default();
    let scenario = cfg.domain.scenario(size, seed)?;
    let pool = scenario.training_candidates(cfg.candidates)?;
    let k = cfg.n_samples.min(pool.len());
    let train = scenario.assemble(select_samples(&pool, k)?)?;
    validate_umdp(&train).into_result()?;
    let optima = solve_samples(&train, limits)?;
    let test = if cfg.test_samples > 0 {
        let t = scenario.assemble(scenario.generalization(cfg.test_samples)?)?;
        let o = solve_samples(&t, limits)?;
        Some((t, o))
    } else {
        None
    };
    let needs_pruned = cfg
        .methods
        .iter()
        .any(|m| m.method.uses_options() && m.prune.unwrap_or(cfg.prune));
    let pruned = if needs_pruned {
        let p = prune_actions(&train, limits)?;
        let o = solve_samples(&p, limits)?;
        Some((p, o))
    } else {
        None
    };
    let planner = cfg.planner_config();
    let mut rows = Vec::with_capacity(cfg.methods.len());
    for spec in &cfg.methods {
        let prune = spec.method.uses_options() && spec.prune.unwrap_or(cfg.prune);
        let (umdp, opt) = match (&pruned, prune) {
            (Some((p, o)), true) => (p, o),
            _ => (&train, &optima),
        };
        let mut row = ResultRow {
            seed,
            domain: cfg.domain.name().to_string(),
            size: scenario.size(),
            method: spec.method,
            n: spec.n,
            max_regret_train: None,
            max_regret_test: None,
            normalized: None,
            time_s: None,
            status: Status::Ok,
            label: spec.label(),
        };
        let start = Instant::now();
        let planned = run_method(umdp, spec.method, spec.n, &planner, opt);
        let elapsed = start.elapsed().as_secs_f64();
        if cfg.record_time {
            row.time_s = Some(elapsed);
        }
        match planned {
            Ok(planned) => {
                let policy = planned.policy.as_ref();
                let train_regret = max_regret(&train, policy, &optima, Coverage::Strict, limits)?;
                if train_regret.max_regret.is_finite() {
                    row.max_regret_train = Some(train_regret.max_regret);
                } else {
                    row.status = Status::Improper;
                }
                if let Some((t, o)) = &test {
                    let r = max_regret(t, policy, o, Coverage::Fallback, limits)?;
                    row.max_regret_test = r.max_regret.is_finite().then_some(r.max_regret);
                }
            }
            Err(Error::Timeout) => {
                warn!("{} timed out on {} size {size} seed {seed}", spec.label(), cfg.domain.name());
                row.status = Status::Timeout;
            }
            Err(e) => {
                warn!("{} failed on {} size {size} seed {seed}: {e}", spec.label(), cfg.domain.name());
                row.status = Status::Error;
            }
        }
        rows.push(row);
    }
    normalize(&mut rows);
    info!("finished {} size {size} seed {seed}", cfg.domain.name());
    Ok(rows)
}

/// Aggregates of one method over all instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: Method,
    pub n: usize,
    pub completed: usize,
    pub mean_normalized: Option<f64>,
    pub sd_normalized: Option<f64>,
    pub mean_max_regret_train: Option<f64>,
    pub sd_max_regret_train: Option<f64>,
    pub mean_max_regret_test: Option<f64>,
    pub sd_max_regret_test: Option<f64>,
    pub mean_time_s: Option<f64>,
}

/// `summary.json` contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub domain: String,
    pub instances: usize,
    pub methods: Vec<MethodSummary>,
    /// `p_values[a][b]`: one-sided Welch p-value that `a` has a lower mean
    /// normalised max regret than `b` (null when undefined).
    pub p_values: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    /// Same test on raw training max regret.
    pub p_values_max_regret: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    /// Instances where some method did not complete, as `(size, seed)`.
    pub dropouts: Vec<(usize, u64)>,
}

fn stats_of(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        (None, None)
    } else {
        (Some(mean(xs)), Some(std_dev(xs)))
    }
}

pub fn summarize(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Summary {
    let labels: Vec<(String, MethodSpec)> = cfg.methods.iter().map(|m| (m.label(), *m)).collect();
    let column = |label: &str, f: &dyn Fn(&ResultRow) -> Option<f64>| -> Vec<f64> {
        rows.iter().filter(|r| r.label == label).filter_map(f).collect()
    };
    let methods = labels
        .iter()
        .map(|(label, spec)| {
            let norm = column(label, &|r| r.normalized);
            let train = column(label, &|r| r.max_regret_train);
            let test = column(label, &|r| r.max_regret_test);
            let time = column(label, &|r| r.time_s);
            let (mn, sn) = stats_of(&norm);
            let (mr, sr) = stats_of(&train);
            let (mt, st) = stats_of(&test);
            MethodSummary {
                label: label.clone(),
                method: spec.method,
                n: spec.n,
                completed: norm.len(),
                mean_normalized: mn,
                sd_normalized: sn,
                mean_max_regret_train: mr,
                sd_max_regret_train: sr,
                mean_max_regret_test: mt,
                sd_max_regret_test: st,
                mean_time_s: stats_of(&time).0,
            }
        })
        .collect();
    let matrix = |f: &dyn Fn(&ResultRow) -> Option<f64>| {
        let mut out = BTreeMap::new();
        for (a, _) in &labels {
            let xs = column(a, f);
            let mut row = BTreeMap::new();
            for (b, _) in &labels {
                if a != b {
                    row.insert(b.clone(), welch_t_test(&xs, &column(b, f)).ok());
                }
            }
            out.insert(a.clone(), row);
        }
        out
    };
    let mut dropouts: Vec<(usize, u64)> = rows
        .iter()
        .filter(|r| r.status != Status::Ok)
        .map(|r| (r.size, r.seed))
        .collect();
    dropouts.dedup();
    let instances = {
        let mut keys: Vec<(usize, u64)> = rows.iter().map(|r| (r.size, r.seed)).collect();
        keys.dedup();
        keys.len()
    };
    Summary {
        domain: cfg.domain.name().to_string(),
        instances,
        methods,
        p_values: matrix(&|r| r.normalized),
        p_values_max_regret: matrix(&|r| r.max_regret_train),
        dropouts,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

/// Runs all `(size, seed)` instances (in parallel) and aggregates them.
/// Rows are ordered by size, then seed, then configured method order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.check()?;
    let instances: Vec<(usize, u64)> = cfg
        .sizes
        .iter()
        .flat_map(|&size| cfg.seeds.iter().map(move |&seed| (size, seed)))
        .collect();
    let rows: Vec<ResultRow> = instances
        .par_iter()
        .map(|&(size, seed)| run_instance(cfg, size, seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(cfg, &rows);
    Ok(ExperimentOutput { rows, summary })
}

pub fn write_results(rows: &[ResultRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results(input: impl Read) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, regret: Option<f64>, status: Status) -> ResultRow {
        ResultRow {
            seed: 1,
            domain: "disaster".into(),
            size: 6,
            method,
            n: 1,
            max_regret_train: regret,
            max_regret_test: regret,
            normalized: None,
            time_s: Some(0.25),
            status,
            label: method.to_string(),
        }
    }

    #[test]
    fn single_method_normalizes_to_one() {
        let mut rows = vec![row(Method::Reg, Some(0.3), Status::Ok)];
        normalize(&mut rows);
        assert_eq!(rows[0].normalized, Some(1.0));
    }

    #[test]
    fn timeouts_leave_the_cohort() {
        let mut rows = vec![
            row(Method::Reg, Some(0.5), Status::Ok),
            row(Method::Robust, Some(1.0), Status::Ok),
            row(Method::Cemr, None, Status::Timeout),
        ];
        normalize(&mut rows);
        assert_eq!(rows[0].normalized, Some(0.5));
        assert_eq!(rows[1].normalized, Some(1.0));
        assert_eq!(rows[2].normalized, None);
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = vec![
            row(Method::Reg, Some(0.1 + 0.2), Status::Ok),
            row(Method::Avg, None, Status::Timeout),
        ];
        normalize(&mut rows);
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "seed,domain,size,method,n,max_regret_train,max_regret_test,normalized,time_s,status,label\n"
        ));
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn config_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"domain":"medical","seeds":[1],"methods":[{"method":"reg"}]}"#).unwrap();
        assert_eq!(cfg.n_samples, 15);
        assert_eq!(cfg.methods[0].n, 1);
        assert_eq!(cfg.timeout_s, 600.0);
        assert!(cfg.record_time);
    }
}
