//! Underwater glider navigation abstracted onto a grid of square cells.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::{field::synthetic_current_field, stream_rng, CurrentField, Scenario};
use crate::error::{Error, Result};
use crate::model::{validate_umdp, MdpSample, Umdp};

#[derive(Clone, Debug, PartialEq)]
pub struct GliderSpec {
    pub width: usize,
    pub height: usize,
    /// Cell side (m).
    pub cell_size: f64,
    /// Speed through water (m/s).
    pub glider_speed: f64,
    /// Time per step (s).
    pub dt: f64,
    /// Per-axis position noise standard deviation (m).
    pub noise_sd: f64,
    pub headings: usize,
    pub cost_range: (f64, f64),
    pub shallow_penalty: f64,
    pub shallow_depth: f64,
    pub strong_current: f64,
    /// Peak current of the synthetic field (m/s).
    pub max_current: f64,
    pub epochs: usize,
    pub vortices: usize,
    pub seed: u64,
}

impl Default for GliderSpec {
    fn default() -> Self {
        Self {
            width: 6,
            height: 6,
            cell_size: 500.0,
            glider_speed: 0.6,
            dt: 800.0,
            noise_sd: 150.0,
            headings: 12,
            cost_range: (0.8, 1.0),
            shallow_penalty: 3.0,
            shallow_depth: 260.0,
            strong_current: 0.12,
            max_current: 0.35,
            epochs: 12,
            vortices: 4,
            seed: 0,
        }
    }
}

/// Probabilities below this are dropped before renormalising a row.
const PROB_FLOOR: f64 = 1e-10;
/// Relative current noise of generalisation samples.
pub const TEST_NOISE_FRAC: f64 = 0.02;

/// A glider instance: field, per-cell entry costs, start and goal.
#[derive(Clone, Debug, PartialEq)]
pub struct GliderScenario {
    spec: GliderSpec,
    pub field: CurrentField,
    pub entry_cost: Vec<f64>,
    pub start: usize,
    pub goal: usize,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability mass of `N(mean, sd²)` per cell along one axis; tails beyond
/// the grid are assigned to the boundary cells.
fn axis_masses(mean: f64, sd: f64, cells: usize, cell_size: f64) -> Vec<f64> {
    let cdf = |edge: f64| {
        if sd > 0.0 {
            normal_cdf((edge - mean) / sd)
        } else if mean < edge {
            1.0
        } else {
            0.0
        }
    };
    let mut prev = 0.0;
    (0..cells)
        .map(|i| {
            let upper = if i + 1 == cells { 1.0 } else { cdf((i + 1) as f64 * cell_size) };
            let m = (upper - prev).max(0.0);
            prev = upper;
            m
        })
        .collect()
}

impl GliderScenario {
    fn check(spec: &GliderSpec) -> Result<()> {
        let mut problems = Vec::new();
        if spec.width * spec.height < 2 {
            problems.push("glider grid needs at least 2 cells".to_string());
        }
        if !(spec.cell_size > 0.0) || !(spec.dt > 0.0) || !(spec.glider_speed > 0.0) {
            problems.push("cell size, time step and glider speed must be positive".to_string());
        }
        if spec.headings == 0 {
            problems.push("at least one heading is required".to_string());
        }
        if !(spec.noise_sd >= 0.0) {
            problems.push("noise standard deviation must be non-negative".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Instance with a synthetic current field.
    pub fn synthetic(spec: &GliderSpec) -> Result<Self> {
        let field = synthetic_current_field(spec.seed, spec.width, spec.height, spec.epochs, spec.max_current, spec.vortices);
        Self::with_field(spec, field)
    }

    /// Instance over an externally supplied field; the grid size is taken from the field.
    pub fn with_field(spec: &GliderSpec, field: CurrentField) -> Result<Self> {
        let spec = GliderSpec {
            width: field.width,
            height: field.height,
            epochs: field.n_epochs(),
            ..spec.clone()
        };
        Self::check(&spec)?;
        if field.epochs.is_empty() || field.epochs.iter().any(|e| e.len() != spec.width * spec.height) {
            return Err(Error::Validation(vec!["current field does not match the grid".into()]));
        }
        let n = spec.width * spec.height;
        let mut rng = stream_rng(spec.seed, u64::MAX);
        let entry_cost = (0..n)
            .map(|_| rng.random_range(spec.cost_range.0..=spec.cost_range.1))
            .collect();
        // Start and goal at least half the larger grid side apart.
        let min_dist = (spec.width.max(spec.height) / 2).max(1);
        let dist = |a: usize, b: usize| {
            let (ax, ay) = ((a % spec.width) as i64, (a / spec.width) as i64);
            let (bx, by) = ((b % spec.width) as i64, (b / spec.width) as i64);
            (ax - bx).abs().max((ay - by).abs()) as usize
        };
        let (start, goal) = loop {
            let s = rng.random_range(0..n);
            let g = rng.random_range(0..n);
            if s != g && dist(s, g) >= min_dist {
                break (s, g);
            }
        };
        Ok(Self {
            spec,
            field,
            entry_cost,
            start,
            goal,
        })
    }

    pub fn spec(&self) -> &GliderSpec {
        &self.spec
    }

    /// Abstraction of one current snapshot.
    pub fn sample_for(&self, current: &[[f64; 2]]) -> Result<MdpSample> {
        let spec = &self.spec;
        let (w, h, l) = (spec.width, spec.height, spec.cell_size);
        let n = w * h;
        if current.len() != n {
            return Err(Error::Validation(vec![format!("current has {} cells, grid has {n}", current.len())]));
        }
        let shallow: Vec<bool> = match &self.field.depth {
            Some(depth) => (0..n)
                .map(|c| depth[c] < spec.shallow_depth && current[c][0].hypot(current[c][1]) > spec.strong_current)
                .collect(),
            None => vec![false; n],
        };
        let cost = |c: usize| self.entry_cost[c] + if shallow[c] { spec.shallow_penalty } else { 0.0 };
        let rows: Vec<Vec<Vec<(usize, f64)>>> = (0..n)
            .into_par_iter()
            .map(|s| {
                if s == self.goal {
                    return Vec::new();
                }
                let (x, y) = ((s % w) as f64 + 0.5, (s / w) as f64 + 0.5);
                (0..spec.headings)
                    .map(|a| {
                        let theta = std::f64::consts::TAU * a as f64 / spec.headings as f64;
                        let vx = spec.glider_speed * theta.cos() + current[s][0];
                        let vy = spec.glider_speed * theta.sin() + current[s][1];
                        let mx = axis_masses(x * l + vx * spec.dt, spec.noise_sd, w, l);
                        let my = axis_masses(y * l + vy * spec.dt, spec.noise_sd, h, l);
                        let mut row = Vec::new();
                        for (j, py) in my.iter().enumerate() {
                            for (i, px) in mx.iter().enumerate() {
                                let p = px * py;
                                if p >= PROB_FLOOR {
                                    row.push((j * w + i, p));
                                }
                            }
                        }
                        let total: f64 = row.iter().map(|e| e.1).sum();
                        row.iter_mut().for_each(|e| e.1 /= total);
                        row
                    })
                    .collect()
            })
            .collect();
        let mut b = MdpSample::builder(n, spec.headings);
        for (s, per_action) in rows.into_iter().enumerate() {
            for (a, row) in per_action.into_iter().enumerate() {
                for (next, p) in row {
                    b.add(s, a, next, p, cost(next));
                }
            }
        }
        b.build()
    }
}

impl Scenario for GliderScenario {
    fn domain(&self) -> &'static str {
        "glider"
    }

    fn size(&self) -> usize {
        self.spec.width.max(self.spec.height)
    }

    fn assemble(&self, samples: Vec<MdpSample>) -> Result<Umdp> {
        let w = self.spec.width;
        Umdp::new(
            (0..w * self.spec.height).map(|c| format!("({},{})", c % w, c / w)).collect(),
            (0..self.spec.headings)
                .map(|a| format!("{}deg", 360 * a / self.spec.headings))
                .collect(),
            self.start,
            &[self.goal],
            samples,
        )
    }

    /// Interpolated, noise-perturbed snapshot at a random fraction of the day.
    fn draw(&self, stream: u64) -> Result<MdpSample> {
        let mut rng = stream_rng(self.spec.seed, stream);
        let u = rng.random_range(0.0..=(self.field.n_epochs() - 1) as f64);
        let current = self.field.interpolate(u, TEST_NOISE_FRAC, &mut rng);
        self.sample_for(&current)
    }

    /// One sample per forecast epoch.
    fn training_candidates(&self, _count: usize) -> Result<Vec<MdpSample>> {
        self.field.epochs.par_iter().map(|e| self.sample_for(e)).collect()
    }
}

/// Glider UMDP with one sample per epoch of `field`.
pub fn gen_glider(spec: &GliderSpec, field: Option<CurrentField>) -> Result<Umdp> {
    let scenario = match field {
        Some(f) => GliderScenario::with_field(spec, f)?,
        None => GliderScenario::synthetic(spec)?,
    };
    let umdp = scenario.assemble(scenario.training_candidates(0)?)?;
    validate_umdp(&umdp).into_result()?;
    Ok(umdp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_field(w: usize, h: usize) -> CurrentField {
        CurrentField {
            width: w,
            height: h,
            epochs: vec![vec![[0.0, 0.0]; w * h]],
            depth: None,
        }
    }

    #[test]
    fn zero_current_east_heading_is_centred_480m_east() {
        let spec = GliderSpec::default();
        let sc = GliderScenario::with_field(&spec, still_field(9, 9)).unwrap();
        let current = vec![[0.0, 0.0]; 81];
        let sample = sc.sample_for(&current).unwrap();
        let s = if sc.goal == 40 { 31 } else { 40 };
        let (x0, y0) = ((s % 9) as f64 * 500.0 + 250.0, (s / 9) as f64 * 500.0 + 250.0);
        let (mut mx, mut my) = (0.0, 0.0);
        for o in sample.row(s, 0) {
            mx += o.prob * ((o.next % 9) as f64 * 500.0 + 250.0);
            my += o.prob * ((o.next / 9) as f64 * 500.0 + 250.0);
        }
        // Cell-centre discretisation of N(x0 + 480, 150²).
        assert!((mx - (x0 + 480.0)).abs() < 60.0, "mean x {mx} vs {}", x0 + 480.0);
        assert!((my - y0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_noise_gives_one_hot() {
        let spec = GliderSpec {
            noise_sd: 0.0,
            ..GliderSpec::default()
        };
        let sc = GliderScenario::with_field(&spec, still_field(9, 9)).unwrap();
        let sample = sc.sample_for(&vec![[0.0, 0.0]; 81]).unwrap();
        let s = if sc.goal == 40 { 31 } else { 40 };
        assert_eq!(sample.row(s, 0).len(), 1);
        assert_eq!(sample.row(s, 0)[0].next, s + 1);
    }

    #[test]
    fn axis_masses_sum_to_one() {
        let m = axis_masses(-300.0, 150.0, 5, 500.0);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m[0] > 0.99);
    }

    #[test]
    fn synthetic_instance_is_valid() {
        let umdp = gen_glider(&GliderSpec::default(), None).unwrap();
        assert_eq!(umdp.n_samples(), 12);
        assert_eq!(umdp.n_actions(), 12);
    }

    #[test]
    fn field_mismatch_rejected() {
        let mut f = still_field(3, 3);
        f.epochs[0].pop();
        assert!(GliderScenario::with_field(&GliderSpec::default(), f).is_err());
    }
}
