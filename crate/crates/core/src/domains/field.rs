//! Ocean current fields on a regular grid.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream_rng;
use crate::error::{Error, Result};

/// Per-epoch current vectors (m/s) and optional water depth (m) per cell.
/// Cells are row-major: `y * width + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentField {
    pub width: usize,
    pub height: usize,
    pub epochs: Vec<Vec<[f64; 2]>>,
    pub depth: Option<Vec<f64>>,
}

/// File layout: `epochs[e][y][x] = [vx, vy]`, `depth[y][x]`.
#[derive(Serialize, Deserialize)]
struct RawField {
    epochs: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<Vec<Vec<f64>>>,
}

impl CurrentField {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawField = serde_json::from_str(text)?;
        let height = raw.epochs.first().map_or(0, |e| e.len());
        let width = raw.epochs.first().and_then(|e| e.first()).map_or(0, |r| r.len());
        if width == 0 || height == 0 {
            return Err(Error::Validation(vec!["current field has no cells".into()]));
        }
        let flatten = |grid: &[Vec<[f64; 2]>], e: usize| -> Result<Vec<[f64; 2]>> {
            if grid.len() != height || grid.iter().any(|r| r.len() != width) {
                return Err(Error::Validation(vec![format!("epoch {e} is not {width}x{height}")]));
            }
            Ok(grid.iter().flatten().copied().collect())
        };
        let epochs = raw
            .epochs
            .iter()
            .enumerate()
            .map(|(e, g)| flatten(g, e))
            .collect::<Result<Vec<_>>>()?;
        let depth = match raw.depth {
            Some(d) if d.len() != height || d.iter().any(|r| r.len() != width) => {
                return Err(Error::Validation(vec![format!("depth grid is not {width}x{height}")]));
            }
            Some(d) => Some(d.into_iter().flatten().collect()),
            None => None,
        };
        Ok(Self {
            width,
            height,
            epochs,
            depth,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let grid = |cells: &[[f64; 2]]| cells.chunks(self.width).map(|r| r.to_vec()).collect();
        let raw = RawField {
            epochs: self.epochs.iter().map(|e| grid(e)).collect(),
            depth: self.depth.as_ref().map(|d| d.chunks(self.width).map(|r| r.to_vec()).collect()),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn max_speed(&self) -> f64 {
        self.epochs
            .iter()
            .flatten()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Linear interpolation at fractional epoch `u ∈ [0, n_epochs − 1]`, with
    /// optional per-component Gaussian noise of `noise_frac` times the local speed.
    pub fn interpolate(&self, u: f64, noise_frac: f64, rng: &mut impl Rng) -> Vec<[f64; 2]> {
        let last = self.epochs.len() - 1;
        let u = u.clamp(0.0, last as f64);
        let lo = u.floor() as usize;
        let hi = (lo + 1).min(last);
        let w = u - lo as f64;
        self.epochs[lo]
            .iter()
            .zip(&self.epochs[hi])
            .map(|(a, b)| {
                let mut v = [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];
                let sd = noise_frac * v[0].hypot(v[1]);
                if sd > 0.0 {
                    let n = Normal::new(0.0, sd).expect("positive sd");
                    v[0] += n.sample(rng);
                    v[1] += n.sample(rng);
                }
                v
            })
            .collect()
    }
}

struct Vortex {
    centre: [f64; 2],
    drift: [f64; 2],
    radius: f64,
    strength: f64,
}

/// Smooth rotational current field: a sum of Gaussian stream-function
/// vortices whose centres drift slowly between epochs, scaled so the
/// largest speed equals `max_speed`. Also returns a smooth depth map
/// between 150 m and 450 m.
pub fn synthetic_current_field(
    seed: u64,
    width: usize,
    height: usize,
    epochs: usize,
    max_speed: f64,
    vortices: usize,
) -> CurrentField {
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let span = width.max(height) as f64;
    let kernels: Vec<Vortex> = (0..vortices)
        .map(|_| Vortex {
            centre: [rng.random_range(0.0..width as f64), rng.random_range(0.0..height as f64)],
            drift: [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)],
            radius: rng.random_range(0.15..0.35) * span + 1.0,
            strength: if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.5..1.0),
        })
        .collect();
    let mut fields: Vec<Vec<[f64; 2]>> = (0..epochs)
        .map(|e| {
            (0..width * height)
                .map(|c| {
                    let (x, y) = ((c % width) as f64 + 0.5, (c / width) as f64 + 0.5);
                    let mut v = [0.0, 0.0];
                    for k in &kernels {
                        let cx = k.centre[0] + k.drift[0] * e as f64;
                        let cy = k.centre[1] + k.drift[1] * e as f64;
                        let (dx, dy) = (x - cx, y - cy);
                        let g = k.strength * (-(dx * dx + dy * dy) / (2.0 * k.radius * k.radius)).exp() / k.radius;
                        // Velocity = (∂ψ/∂y, −∂ψ/∂x) for ψ = strength·r·exp(−d²/2r²).
                        v[0] += -g * dy;
                        v[1] += g * dx;
                    }
                    v
                })
                .collect()
        })
        .collect();
    let peak = fields
        .iter()
        .flatten()
        .map(|v| v[0].hypot(v[1]))
        .fold(0.0, f64::max);
    if peak > 0.0 {
        let scale = max_speed / peak;
        for v in fields.iter_mut().flatten() {
            v[0] *= scale;
            v[1] *= scale;
        }
    }
    let (ax, ay) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
    let depth = (0..width * height)
        .map(|c| {
            let (x, y) = ((c % width) as f64 / span, (c / width) as f64 / span);
            300.0 + 150.0 * (std::f64::consts::PI * x + ax).sin() * (std::f64::consts::PI * y + ay).cos()
        })
        .collect();
    CurrentField {
        width,
        height,
        epochs: fields,
        depth: Some(depth),
    }
}
