//! Disaster rescue: an 8-connected grid with uncertain swamps and obstacles.

use rand::Rng;

use super::{stream_rng, Scenario};
use crate::error::{Error, Result};
use crate::model::{validate_umdp, MdpSample, Umdp};

/// Compass moves, clockwise from north: (dx, dy) with y growing southwards.
const MOVES: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
const MOVE_NAMES: [&str; 8] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"];

pub const TARGET_PROB: f64 = 0.8;
pub const SIDE_PROB: f64 = 0.1;
pub const OBSTACLE_ENTRY_PROB: f64 = 0.05;
pub const BASE_COST: f64 = 0.5;
pub const SWAMP_COST: (f64, f64) = (1.0, 2.0);

const REGION_RETRIES: u64 = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct DisasterSpec {
    pub width: usize,
    pub height: usize,
    /// Chance that a cell is a swamp-region centre (and, independently, an obstacle-region centre).
    pub region_rate: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for DisasterSpec {
    fn default() -> Self {
        Self {
            width: 6,
            height: 6,
            region_rate: 1.0 / 15.0,
            n_samples: 15,
            seed: 0,
        }
    }
}

/// Regions of one disaster instance. The goal is cell 0 (north-west corner),
/// the start is the opposite corner.
#[derive(Clone, Debug, PartialEq)]
pub struct DisasterScenario {
    width: usize,
    height: usize,
    seed: u64,
    pub swamp_regions: Vec<Vec<usize>>,
    pub obstacle_regions: Vec<Vec<usize>>,
}

impl DisasterScenario {
    pub fn new(spec: &DisasterSpec) -> Result<Self> {
        if spec.width * spec.height < 4 || spec.width == 0 || spec.height == 0 {
            return Err(Error::Validation(vec![format!(
                "disaster grid {}x{} needs at least 4 cells",
                spec.width, spec.height
            )]));
        }
        if !(0.0..=1.0).contains(&spec.region_rate) {
            return Err(Error::Validation(vec![format!("region rate {} outside [0,1]", spec.region_rate)]));
        }
        let mut last_err = None;
        for attempt in 0..REGION_RETRIES {
            let scenario = Self::draw_regions(spec, attempt);
            // Obstacles are always enterable, so this only guards future changes.
            match scenario.assemble(vec![scenario.draw(0)?]) {
                Ok(u) if validate_umdp(&u).is_valid() => return Ok(scenario),
                Ok(u) => last_err = Some(Error::Validation(validate_umdp(&u).violations)),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Degenerate("no valid disaster regions".into())))
    }

    fn draw_regions(spec: &DisasterSpec, attempt: u64) -> Self {
        let mut rng = stream_rng(spec.seed, u64::MAX - attempt);
        let (w, h) = (spec.width, spec.height);
        let start = w * h - 1;
        let goal = 0;
        let mut swamp_regions = Vec::new();
        let mut obstacle_regions = Vec::new();
        for cell in 0..w * h {
            let swamp = rng.random_bool(spec.region_rate);
            let obstacle = rng.random_bool(spec.region_rate);
            if cell == start || cell == goal {
                continue;
            }
            let region = || -> Vec<usize> {
                let (x, y) = ((cell % w) as i64, (cell / w) as i64);
                let mut r: Vec<usize> = std::iter::once((0, 0))
                    .chain(MOVES)
                    .filter_map(|(dx, dy)| {
                        let (nx, ny) = (x + dx, y + dy);
                        (nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64).then(|| ny as usize * w + nx as usize)
                    })
                    .filter(|&c| c != start && c != goal)
                    .collect();
                r.sort_unstable();
                r
            };
            if swamp {
                swamp_regions.push(region());
            }
            if obstacle {
                obstacle_regions.push(region());
            }
        }
        Self {
            width: w,
            height: h,
            seed: spec.seed,
            swamp_regions,
            obstacle_regions,
        }
    }

    pub fn start(&self) -> usize {
        self.width * self.height - 1
    }

    pub fn goal(&self) -> usize {
        0
    }

    fn neighbour(&self, cell: usize, dir: usize) -> Option<usize> {
        let (dx, dy) = MOVES[dir];
        let (x, y) = ((cell % self.width) as i64 + dx, (cell / self.width) as i64 + dy);
        (x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64)
            .then(|| y as usize * self.width + x as usize)
    }

    /// Sample from explicit swamp costs (`NaN` = no swamp) and obstacle flags.
    pub fn sample_from(&self, swamp_cost: &[f64], obstacle: &[bool]) -> Result<MdpSample> {
        let n = self.width * self.height;
        let entry = |c: usize| if swamp_cost[c].is_nan() { BASE_COST } else { swamp_cost[c] };
        let mut b = MdpSample::builder(n, 8);
        for s in 0..n {
            if s == self.goal() {
                continue;
            }
            for dir in 0..8 {
                let mut stay = 0.0;
                for (d, p) in [(dir, TARGET_PROB), ((dir + 7) % 8, SIDE_PROB), ((dir + 1) % 8, SIDE_PROB)] {
                    match self.neighbour(s, d) {
                        None => stay += p,
                        Some(t) if obstacle[t] => {
                            b.add(s, dir, t, OBSTACLE_ENTRY_PROB, entry(t));
                            stay += p - OBSTACLE_ENTRY_PROB;
                        }
                        Some(t) => {
                            b.add(s, dir, t, p, entry(t));
                        }
                    }
                }
                if stay > 0.0 {
                    b.add(s, dir, s, stay, entry(s));
                }
            }
        }
        b.build()
    }

    /// Swamp costs and obstacle flags of the sample on stream `stream`.
    pub fn layout(&self, stream: u64) -> (Vec<f64>, Vec<bool>) {
        let n = self.width * self.height;
        let mut rng = stream_rng(self.seed, stream);
        let mut swamp_cost = vec![f64::NAN; n];
        let mut obstacle = vec![false; n];
        for region in &self.swamp_regions {
            let c = region[rng.random_range(0..region.len())];
            swamp_cost[c] = rng.random_range(SWAMP_COST.0..=SWAMP_COST.1);
        }
        for region in &self.obstacle_regions {
            obstacle[region[rng.random_range(0..region.len())]] = true;
        }
        (swamp_cost, obstacle)
    }
}

impl Scenario for DisasterScenario {
    fn domain(&self) -> &'static str {
        "disaster"
    }

    fn size(&self) -> usize {
        self.width.max(self.height)
    }

    fn assemble(&self, samples: Vec<MdpSample>) -> Result<Umdp> {
        let n = self.width * self.height;
        Umdp::new(
            (0..n).map(|c| format!("({},{})", c % self.width, c / self.width)).collect(),
            MOVE_NAMES.iter().map(|s| s.to_string()).collect(),
            self.start(),
            &[self.goal()],
            samples,
        )
    }

    fn draw(&self, stream: u64) -> Result<MdpSample> {
        let (swamp, obstacle) = self.layout(stream);
        self.sample_from(&swamp, &obstacle)
    }
}

/// Disaster rescue UMDP with `spec.n_samples` samples.
pub fn gen_disaster(spec: &DisasterSpec) -> Result<Umdp> {
    let scenario = DisasterScenario::new(spec)?;
    let samples = scenario.training_candidates(spec.n_samples)?;
    let umdp = scenario.assemble(samples)?;
    validate_umdp(&umdp).into_result()?;
    Ok(umdp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_scenario() -> DisasterScenario {
        DisasterScenario {
            width: 5,
            height: 5,
            seed: 0,
            swamp_regions: Vec::new(),
            obstacle_regions: Vec::new(),
        }
    }

    #[test]
    fn free_interior_row() {
        let sc = empty_scenario();
        let sample = sc.sample_from(&[f64::NAN; 25], &[false; 25]).unwrap();
        // Centre (2,2) = 12, heading east (2): east 13, NE 8, SE 18.
        let row: Vec<(usize, f64)> = sample.row(12, 2).iter().map(|o| (o.next, o.prob)).collect();
        assert_eq!(row, vec![(8, 0.1), (13, 0.8), (18, 0.1)]);
        assert!(sample.row(12, 2).iter().all(|o| o.cost == BASE_COST));
    }

    #[test]
    fn obstacle_target_mass_stays() {
        let sc = empty_scenario();
        let mut obstacle = [false; 25];
        obstacle[13] = true;
        let sample = sc.sample_from(&[f64::NAN; 25], &obstacle).unwrap();
        let row: Vec<(usize, f64)> = sample.row(12, 2).iter().map(|o| (o.next, o.prob)).collect();
        assert_eq!(row[0], (8, 0.1));
        assert_eq!(row[1].0, 12);
        assert!((row[1].1 - 0.75).abs() < 1e-12);
        assert_eq!(row[2], (13, 0.05));
    }

    #[test]
    fn corner_bump_stays() {
        let sc = empty_scenario();
        let sample = sc.sample_from(&[f64::NAN; 25], &[false; 25]).unwrap();
        let mass: f64 = sample.row(24, 3).iter().filter(|o| o.next == 24).map(|o| o.prob).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generated_umdp_is_valid_and_deterministic() {
        let spec = DisasterSpec {
            n_samples: 3,
            seed: 11,
            ..DisasterSpec::default()
        };
        let a = gen_disaster(&spec).unwrap();
        let b = gen_disaster(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_states(), 36);
        assert_eq!(a.initial(), 35);
    }
}
