//! Medical decision making: a health level evolves over a fixed number of
//! days under one of three treatments; the final health determines the cost.

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, Normal};

use super::{stream_rng, Scenario};
use crate::error::{Error, Result};
use crate::model::{validate_umdp, MdpSample, Umdp};

#[derive(Clone, Debug, PartialEq)]
pub struct MedicalSpec {
    pub health_levels: usize,
    pub days: usize,
    pub actions: usize,
    pub noise_sd: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for MedicalSpec {
    fn default() -> Self {
        Self {
            health_levels: 20,
            days: 7,
            actions: 3,
            noise_sd: 0.1,
            n_samples: 15,
            seed: 0,
        }
    }
}

/// Health changes `−3..=3`.
const CHANGES: usize = 7;
const MAX_DROP: i64 = 3;
pub const INITIAL_HEALTH: usize = 10;

/// Cost of finishing the last day at health `h` out of `levels`.
pub fn medical_terminal_cost(h: usize, levels: usize) -> f64 {
    0.05 * (levels - 1 - h) as f64 + if h == 0 { 2.0 } else { 0.0 }
}

/// Nominal dynamics: per health level, each action maps to one distinct
/// health change (a row of the 7×7 identity), shared across days.
#[derive(Clone, Debug, PartialEq)]
pub struct MedicalScenario {
    spec: MedicalSpec,
    /// `nominal[h][a]`: index into `−3..=3`.
    pub nominal: Vec<Vec<usize>>,
}

impl MedicalScenario {
    pub fn new(spec: &MedicalSpec) -> Result<Self> {
        let mut problems = Vec::new();
        if spec.health_levels < 2 || spec.days < 1 {
            problems.push("medical model needs at least 2 health levels and 1 day".to_string());
        }
        if spec.actions == 0 || spec.actions > CHANGES {
            problems.push(format!("medical model supports 1..={CHANGES} actions"));
        }
        if !(spec.noise_sd > 0.0) {
            problems.push(format!("noise standard deviation must be positive, got {}", spec.noise_sd));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let mut rng = stream_rng(spec.seed, u64::MAX);
        let nominal = (0..spec.health_levels)
            .map(|_| sample_indices(&mut rng, CHANGES, spec.actions).into_vec())
            .collect();
        Ok(Self {
            spec: spec.clone(),
            nominal,
        })
    }

    pub fn state_index(&self, h: usize, d: usize) -> usize {
        d * self.spec.health_levels + h
    }

    pub fn goal(&self) -> usize {
        self.spec.days * self.spec.health_levels
    }

    fn n_states(&self) -> usize {
        self.goal() + 1
    }
}

impl Scenario for MedicalScenario {
    fn domain(&self) -> &'static str {
        "medical"
    }

    fn size(&self) -> usize {
        self.spec.health_levels
    }

    fn assemble(&self, samples: Vec<MdpSample>) -> Result<Umdp> {
        let levels = self.spec.health_levels;
        let mut names: Vec<String> = (0..self.goal())
            .map(|s| format!("h{}d{}", s % levels, s / levels))
            .collect();
        names.push("done".into());
        Umdp::new(
            names,
            (0..self.spec.actions).map(|a| format!("treat{a}")).collect(),
            self.state_index(INITIAL_HEALTH.min(levels - 1), 0),
            &[self.goal()],
            samples,
        )
    }

    fn draw(&self, stream: u64) -> Result<MdpSample> {
        let spec = &self.spec;
        let levels = spec.health_levels;
        let mut rng = stream_rng(spec.seed, stream);
        let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Degenerate(e.to_string()))?;
        let mut b = MdpSample::builder(self.n_states(), spec.actions);
        for d in 0..spec.days {
            for h in 0..levels {
                let s = self.state_index(h, d);
                for a in 0..spec.actions {
                    if d + 1 == spec.days {
                        b.add(s, a, self.goal(), 1.0, medical_terminal_cost(h, levels));
                        continue;
                    }
                    let mut row = [0.0; CHANGES];
                    row[self.nominal[h][a]] = 1.0;
                    for x in row.iter_mut() {
                        *x += noise.sample(&mut rng).abs();
                    }
                    let total: f64 = row.iter().sum();
                    for (k, x) in row.iter().enumerate() {
                        let next_h = (h as i64 + k as i64 - MAX_DROP).clamp(0, levels as i64 - 1) as usize;
                        b.add(s, a, self.state_index(next_h, d + 1), x / total, 0.0);
                    }
                }
            }
        }
        b.build()
    }
}

/// Medical decision-making UMDP with `spec.n_samples` samples.
pub fn gen_medical(spec: &MedicalSpec) -> Result<Umdp> {
    let scenario = MedicalScenario::new(spec)?;
    let samples = scenario.training_candidates(spec.n_samples)?;
    let umdp = scenario.assemble(samples)?;
    validate_umdp(&umdp).into_result()?;
    Ok(umdp)
}
