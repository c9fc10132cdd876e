//! Procedural benchmark UMDPs, coverage sample selection and action pruning.

mod disaster;
mod field;
mod glider;
mod medical;
mod pruning;
pub mod random;
mod sampling;

pub use disaster::{gen_disaster, DisasterScenario, DisasterSpec};
pub use field::{synthetic_current_field, CurrentField};
pub use glider::{gen_glider, GliderScenario, GliderSpec};
pub use medical::{gen_medical, medical_terminal_cost, MedicalScenario, MedicalSpec};
pub use pruning::prune_actions;
pub use sampling::{select_sample_indices, select_samples};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{MdpSample, Umdp};

/// Independent random stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Offset separating generalisation streams from training streams.
const TEST_STREAM_OFFSET: u64 = 1 << 40;

/// A fixed benchmark instance (regions, nominal dynamics, field) from which
/// samples can be drawn reproducibly.
pub trait Scenario: Send + Sync {
    fn domain(&self) -> &'static str;

    /// Problem size reported in experiment tables.
    fn size(&self) -> usize;

    /// UMDP over this instance's state/action space with the given samples.
    fn assemble(&self, samples: Vec<MdpSample>) -> Result<Umdp>;

    /// Sample drawn from random stream `stream`.
    fn draw(&self, stream: u64) -> Result<MdpSample>;

    /// Candidate pool for training sample selection.
    fn training_candidates(&self, count: usize) -> Result<Vec<MdpSample>> {
        (0..count as u64).into_par_iter().map(|i| self.draw(i)).collect()
    }

    /// Fresh samples for generalisation tests, disjoint from the training streams.
    fn generalization(&self, count: usize) -> Result<Vec<MdpSample>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.draw(TEST_STREAM_OFFSET + i))
            .collect()
    }
}

/// Named benchmark domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Disaster,
    Medical,
    Glider,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Disaster => "disaster",
            Domain::Medical => "medical",
            Domain::Glider => "glider",
        }
    }

    /// Scenario of the given size (grid side; ignored for medical) and seed.
    pub fn scenario(self, size: usize, seed: u64) -> Result<Box<dyn Scenario>> {
        Ok(match self {
            Domain::Disaster => Box::new(DisasterScenario::new(&DisasterSpec {
                width: size,
                height: size,
                seed,
                ..DisasterSpec::default()
            })?),
            Domain::Medical => Box::new(MedicalScenario::new(&MedicalSpec {
                seed,
                ..MedicalSpec::default()
            })?),
            Domain::Glider => Box::new(GliderScenario::synthetic(&GliderSpec {
                width: size,
                height: size,
                seed,
                ..GliderSpec::default()
            })?),
        })
    }
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "disaster" => Ok(Domain::Disaster),
            "medical" => Ok(Domain::Medical),
            "glider" => Ok(Domain::Glider),
            other => Err(format!("unknown domain '{other}'")),
        }
    }
}
