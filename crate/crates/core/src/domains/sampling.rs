//! Greedy k-center selection of a covering subset of samples.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::MdpSample;

/// Flattens every sample over the union of `(s, a, s')` keys into
/// `(probability, cost)` coordinates (zero where a transition is absent).
fn parameter_vectors(candidates: &[MdpSample]) -> Vec<Vec<f64>> {
    let mut keys: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let n_actions = candidates[0].n_actions();
    for sample in candidates {
        for s in 0..sample.n_states() {
            for a in sample.available_actions(s) {
                for o in sample.row(s, a) {
                    let next = keys.len();
                    keys.entry((s * n_actions + a, o.next)).or_insert(next);
                }
            }
        }
    }
    candidates
        .iter()
        .map(|sample| {
            let mut v = vec![0.0; 2 * keys.len()];
            for s in 0..sample.n_states() {
                for a in sample.available_actions(s) {
                    for o in sample.row(s, a) {
                        let k = keys[&(s * n_actions + a, o.next)];
                        v[2 * k] = o.prob;
                        v[2 * k + 1] = o.cost;
                    }
                }
            }
            v
        })
        .collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Indices (ascending) of `k` candidates chosen by farthest-first traversal
/// under the L∞ distance, starting from the candidate nearest the centroid.
/// Ties go to the lowest index.
pub fn select_sample_indices(candidates: &[MdpSample], k: usize) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Degenerate("no candidate samples".into()));
    }
    if k > candidates.len() {
        return Err(Error::Validation(vec![format!(
            "cannot select {k} of {} candidates",
            candidates.len()
        )]));
    }
    let vectors = parameter_vectors(candidates);
    let dim = vectors[0].len();
    let m = candidates.len() as f64;
    let centroid: Vec<f64> = (0..dim).map(|i| vectors.iter().map(|v| v[i]).sum::<f64>() / m).collect();
    let argmin_by = |score: &dyn Fn(usize) -> f64, better: fn(f64, f64) -> bool| {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..vectors.len() {
            let d = score(i);
            if best.is_none_or(|(_, b)| better(d, b)) {
                best = Some((i, d));
            }
        }
        best
    };
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return Ok(chosen);
    }
    let first = argmin_by(&|i| linf(&vectors[i], &centroid), |d, b| d < b).expect("non-empty").0;
    chosen.push(first);
    let mut nearest: Vec<f64> = vectors.iter().map(|v| linf(v, &vectors[first])).collect();
    let mut taken = vec![false; vectors.len()];
    taken[first] = true;
    while chosen.len() < k {
        let next = argmin_by(&|i| if taken[i] { f64::NEG_INFINITY } else { nearest[i] }, |d, b| d > b)
            .expect("non-empty")
            .0;
        taken[next] = true;
        chosen.push(next);
        for (i, v) in vectors.iter().enumerate() {
            nearest[i] = nearest[i].min(linf(v, &vectors[next]));
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// The `k` selected samples in their original order.
pub fn select_samples(candidates: &[MdpSample], k: usize) -> Result<Vec<MdpSample>> {
    Ok(select_sample_indices(candidates, k)?
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect())
}
