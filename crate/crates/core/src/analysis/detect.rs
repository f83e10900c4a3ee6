//! Offline detection of a group of outliers worth sampling as a block.

use serde::{Deserialize, Serialize};

use super::{pair_table, rate_lower_bound};
use crate::error::Result;
use crate::model::{AllocationState, BlockSet, Model, DEFAULT_ENUMERATION_LIMIT};
use crate::scalar::{normalize_log_weights, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionThresholds<T> {
    /// Ratio of the nearest to the second-nearest component mean distance needed to
    /// consider an observation at all.
    pub geometric_ratio: T,
    /// Minimum `p2/p1` of the two most likely labels in the single-site conditional.
    pub probability_ratio: T,
    /// Minimum pairwise rate bound for two observations to share a block.
    pub rho_min: T,
    /// Largest block returned; defaults to the largest size whose enumeration fits the guard.
    pub max_block_size: Option<usize>,
}

impl<T: Scalar> Default for DetectionThresholds<T> {
    fn default() -> Self {
        Self { geometric_ratio: T::of(0.7), probability_ratio: T::of(0.5), rho_min: T::of(0.5), max_block_size: None }
    }
}

fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

fn default_cap(k: usize) -> usize {
    if k <= 1 {
        return 1;
    }
    let mut b = 1;
    while (k as u128).pow(b as u32 + 1) <= DEFAULT_ENUMERATION_LIMIT {
        b += 1;
    }
    b
}

/// Observations roughly equidistant from their two nearest component means, each
/// mean computed without the observation itself.
fn geometric_candidates<T: Scalar>(model: &Model<T>, state: &AllocationState<T>, ratio: T) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..model.n() {
        let y = model.data().row(i);
        let mut dists: Vec<T> = Vec::new();
        for (k, s) in state.stats().iter().enumerate() {
            let own = state.label(i) == Some(k);
            let n = s.count() - usize::from(own);
            if n == 0 {
                continue;
            }
            let mean: Vec<T> = s
                .sum()
                .iter()
                .zip(y)
                .map(|(&t, &v)| (if own { t - v } else { t }) / T::of_usize(n))
                .collect();
            dists.push(distance(y, &mean));
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if dists.len() >= 2 && dists[1] > T::zero() && dists[0] / dists[1] >= ratio {
            out.push(i);
        }
    }
    out
}

/// Finds a group of outliers whose allocations are strongly coupled.
///
/// Candidates are observations nearly equidistant from two component means. Each is
/// kept if, with every candidate held out, its two most likely labels are comparably
/// probable. Kept observations whose pairwise rate bound reaches `rho_min` are linked,
/// and the largest linked group is returned, trimmed to the members nearest its best
/// connected member. Returns `None` when nothing qualifies.
pub fn detect_outlier_block<T: Scalar>(
    model: &Model<T>,
    state: &AllocationState<T>,
    thresholds: &DetectionThresholds<T>,
) -> Result<Option<BlockSet>> {
    let labels = state.labels()?;
    let candidates = geometric_candidates(model, state, thresholds.geometric_ratio);
    if candidates.is_empty() || model.k() < 2 {
        return Ok(None);
    }
    let mut held = state.clone();
    for &i in &candidates {
        model.remove_observation(&mut held, i)?;
    }
    let mut flagged = Vec::new();
    for &i in &candidates {
        let mut p = normalize_log_weights(&model.single_site_log_weights(&held, i)?);
        p.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        if p[0] > T::zero() && p[1] / p[0] >= thresholds.probability_ratio {
            flagged.push(i);
        }
    }
    if flagged.is_empty() {
        return Ok(None);
    }

    let mut complement: Vec<Option<usize>> = labels.iter().copied().map(Some).collect();
    for &i in &flagged {
        complement[i] = None;
    }
    let f = flagged.len();
    let mut adjacent = vec![vec![false; f]; f];
    for a in 0..f {
        for b in a + 1..f {
            let table = pair_table(model, &complement, flagged[a], flagged[b])?;
            if rate_lower_bound(&table).is_ok_and(|r| r.value >= thresholds.rho_min) {
                adjacent[a][b] = true;
                adjacent[b][a] = true;
            }
        }
    }

    // largest connected group; earlier groups win ties
    let mut group_of = vec![usize::MAX; f];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..f {
        if group_of[start] != usize::MAX {
            continue;
        }
        let g = groups.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        group_of[start] = g;
        while let Some(v) = stack.pop() {
            members.push(v);
            for w in 0..f {
                if adjacent[v][w] && group_of[w] == usize::MAX {
                    group_of[w] = g;
                    stack.push(w);
                }
            }
        }
        groups.push(members);
    }
    let best = groups.iter().enumerate().max_by_key(|(g, m)| (m.len(), std::cmp::Reverse(*g))).map(|(_, m)| m.clone()).unwrap_or_default();

    let cap = thresholds.max_block_size.unwrap_or_else(|| default_cap(model.k())).max(1);
    let mut chosen: Vec<usize> = best.iter().map(|&v| flagged[v]).collect();
    if chosen.len() > cap {
        let degree = |v: usize| adjacent[v].iter().filter(|&&e| e).count();
        let hub = *best.iter().max_by_key(|&&v| (degree(v), std::cmp::Reverse(v))).expect("non-empty group");
        let centre = model.data().row(flagged[hub]);
        chosen.sort_by(|&a, &b| {
            distance(model.data().row(a), centre)
                .partial_cmp(&distance(model.data().row(b), centre))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        chosen.truncate(cap);
    }
    Ok(Some(BlockSet::new(chosen)?))
}
