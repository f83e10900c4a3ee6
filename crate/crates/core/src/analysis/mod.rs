//! Exact joint distributions of small sets of allocations given the rest, their
//! correlations, and the convergence-rate lower bounds they imply.

mod detect;
mod surface;

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{block_assignment, enumeration_size, AllocationState, BlockSet, Model, DEFAULT_ENUMERATION_LIMIT};
use crate::scalar::Scalar;

pub use detect::{detect_outlier_block, DetectionThresholds};
pub use surface::{correlation_at, correlation_surface, linspace, Surface, SurfaceLayout, SurfaceSpec};

/// Marginal probabilities closer than this to 0 or 1 make a correlation undefined.
pub const DEGENERACY_TOL: f64 = 1e-14;

/// What a [`JointAllocationTable`] conditions on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conditioning {
    /// The pair `(i, j)` whose labels index rows and columns (0-based).
    pub pair: Option<(usize, usize)>,
    /// Block members summed out, when the table is marginalized.
    pub marginalized: Vec<usize>,
}

/// Normalized `K×K` joint distribution of two allocations; `probs[l*K + m] = P(C_i = l, C_j = m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointAllocationTable<T> {
    k: usize,
    probs: Vec<T>,
    conditioning: Conditioning,
}

impl<T: Scalar> JointAllocationTable<T> {
    /// Checks non-negativity and that the entries sum to one.
    pub fn new(k: usize, probs: Vec<T>) -> Result<Self> {
        Self::with_conditioning(k, probs, Conditioning { pair: None, marginalized: Vec::new() })
    }

    fn with_conditioning(k: usize, probs: Vec<T>, conditioning: Conditioning) -> Result<Self> {
        if k == 0 || probs.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, found: probs.len() });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::InvalidInput("table entries must be finite and non-negative".into()));
        }
        let total: T = probs.iter().copied().sum();
        let tol = T::of(1e-10).max(T::EPS * T::of(64.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!("table sums to {total}, not 1")));
        }
        Ok(Self { k, probs, conditioning })
    }

    fn from_log_weights(k: usize, log_w: &[T], conditioning: Conditioning) -> Result<Self> {
        let probs = crate::scalar::normalize_log_weights(log_w);
        Self::with_conditioning(k, probs, conditioning)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn get(&self, l: usize, m: usize) -> T {
        self.probs[l * self.k + m]
    }

    pub fn conditioning(&self) -> &Conditioning {
        &self.conditioning
    }

    /// Distribution of the row label.
    pub fn row_marginal(&self) -> Vec<T> {
        (0..self.k).map(|l| (0..self.k).map(|m| self.get(l, m)).sum()).collect()
    }

    /// Distribution of the column label.
    pub fn column_marginal(&self) -> Vec<T> {
        (0..self.k).map(|m| (0..self.k).map(|l| self.get(l, m)).sum()).collect()
    }

    /// Writes the table as a headerless `K×K` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for l in 0..self.k {
            out.write_record((0..self.k).map(|m| self.get(l, m).to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Quadrant sums of a table split at `k'`: label `≤ k'` (1-based) versus `> k'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionSplit<T> {
    pub k_prime: usize,
    pub p11: T,
    pub p12: T,
    pub p21: T,
    pub p22: T,
}

impl<T: Scalar> PartitionSplit<T> {
    /// Pearson correlation of the two indicators.
    pub fn correlation(&self) -> Result<T> {
        binary_correlation(self.p11, self.p12, self.p21, self.p22)
    }
}

fn binary_correlation<T: Scalar>(p11: T, p12: T, p21: T, p22: T) -> Result<T> {
    let row1 = p11 + p12;
    let row2 = p21 + p22;
    let col1 = p11 + p21;
    let col2 = p12 + p22;
    let tol = T::of(DEGENERACY_TOL);
    if [row1, row2, col1, col2].iter().any(|&m| m <= tol) {
        return Err(Error::DegenerateMarginal);
    }
    let cor = (p11 * p22 - p12 * p21) / (row1 * row2 * col1 * col2).sqrt();
    Ok(cor.max(-T::one()).min(T::one()))
}

/// Convergence-rate lower bound: the largest squared indicator correlation over all splits.
#[derive(Clone, Debug, PartialEq)]
pub struct RateBound<T> {
    pub value: T,
    /// Split attaining the bound (1-based).
    pub k_prime: usize,
    pub table: JointAllocationTable<T>,
}

#[derive(Serialize)]
struct RateBoundJson {
    bound: f64,
    k_prime: usize,
    pair: Option<[usize; 2]>,
}

impl<T: Scalar> RateBound<T> {
    /// `{"bound": .., "k_prime": .., "pair": [i, j]}` with 1-based observation numbers.
    pub fn to_json(&self) -> Result<String> {
        let pair = self.table.conditioning.pair.map(|(i, j)| [i + 1, j + 1]);
        Ok(serde_json::to_string(&RateBoundJson { bound: self.value.as_f64(), k_prime: self.k_prime, pair })?)
    }
}

fn check_pair<T: Scalar>(model: &Model<T>, i: usize, j: usize) -> Result<()> {
    model.check_index(i)?;
    model.check_index(j)?;
    if i == j {
        return Err(Error::InvalidBlock("pair members must differ".into()));
    }
    Ok(())
}

/// State for a complement allocation with statistics accumulated by batch formulas.
fn complement_state<T: Scalar>(model: &Model<T>, complement: &[Option<usize>]) -> Result<AllocationState<T>> {
    let mut state = model.state_from_partial(complement)?;
    for k in 0..model.k() {
        state.stats[k] = model.recompute_stats(&state, k)?;
    }
    Ok(state)
}

/// Joint distribution of `(C_i, C_j)` given the labels in `complement`.
///
/// `complement[i]` and `complement[j]` must be `None`; any other `None` entry is
/// left out of the model altogether.
pub fn pair_table<T: Scalar>(model: &Model<T>, complement: &[Option<usize>], i: usize, j: usize) -> Result<JointAllocationTable<T>> {
    check_pair(model, i, j)?;
    let state = complement_state(model, complement)?;
    let block = BlockSet::new(vec![i, j])?;
    let w = model.block_log_weights(&state, &block, DEFAULT_ENUMERATION_LIMIT)?;
    // block cells are ordered by ascending index; rows must follow i
    let w = if i < j { w } else { transpose(&w, model.k()) };
    JointAllocationTable::from_log_weights(model.k(), &w, Conditioning { pair: Some((i, j)), marginalized: Vec::new() })
}

fn transpose<T: Copy>(w: &[T], k: usize) -> Vec<T> {
    (0..k * k).map(|c| w[(c % k) * k + c / k]).collect()
}

/// Joint distribution of `(C_i, C_j)` with the other block members summed out.
///
/// Every block member must be `None` in `complement`. When all block members other
/// than `i` and `j` have bitwise identical values and `use_multiset` is set, the sum
/// runs over label counts with multinomial weights instead of over all `K^(B-2)`
/// labelings.
pub fn pair_table_marginalized<T: Scalar>(
    model: &Model<T>,
    complement: &[Option<usize>],
    block: &BlockSet,
    i: usize,
    j: usize,
    use_multiset: bool,
) -> Result<JointAllocationTable<T>> {
    check_pair(model, i, j)?;
    if !block.contains(i) || !block.contains(j) {
        return Err(Error::InvalidBlock("pair must belong to the block".into()));
    }
    let state = complement_state(model, complement)?;
    model.check_block_held_out(&state, block)?;
    let rest: Vec<usize> = block.indices().iter().copied().filter(|&x| x != i && x != j).collect();
    let conditioning = Conditioning { pair: Some((i, j)), marginalized: rest.clone() };
    let k = model.k();
    let identical = rest.windows(2).all(|w| {
        model.data().row(w[0]).iter().zip(model.data().row(w[1])).all(|(&a, &b)| same_bits(a, b))
    });
    let log_w = if use_multiset && identical && !rest.is_empty() {
        multiset_pair_weights(model, &state, &rest, i, j)?
    } else {
        enumeration_size(k, rest.len(), DEFAULT_ENUMERATION_LIMIT)?;
        full_pair_weights(model, &state, block, i, j)?
    };
    JointAllocationTable::from_log_weights(k, &log_w, conditioning)
}

fn full_pair_weights<T: Scalar>(model: &Model<T>, state: &AllocationState<T>, block: &BlockSet, i: usize, j: usize) -> Result<Vec<T>> {
    let k = model.k();
    let b = block.len();
    let w = model.block_log_weights(state, block, DEFAULT_ENUMERATION_LIMIT)?;
    let pi = block.position(i).expect("member");
    let pj = block.position(j).expect("member");
    let mut buckets: Vec<Vec<T>> = vec![Vec::new(); k * k];
    for (cell, &lw) in w.iter().enumerate() {
        let labels = block_assignment(cell, k, b);
        buckets[labels[pi] * k + labels[pj]].push(lw);
    }
    Ok(buckets.iter().map(|v| crate::scalar::log_sum_exp(v)).collect())
}

fn ln_multinomial<T: Scalar>(counts: &[usize]) -> T {
    let total: usize = counts.iter().sum();
    let mut v = T::of_usize(total + 1).lgamma();
    for &c in counts {
        v = v - T::of_usize(c + 1).lgamma();
    }
    v
}

/// All ways to write `total` as an ordered sum of `parts` non-negative counts.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut tail in compositions(total - first, parts - 1) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

fn multiset_pair_weights<T: Scalar>(
    model: &Model<T>,
    state: &AllocationState<T>,
    rest: &[usize],
    i: usize,
    j: usize,
) -> Result<Vec<T>> {
    let k = model.k();
    let r = rest.len();
    let rep = rest[0];
    // cache[(comp, count, with_i, with_j)]
    let mut cache: Vec<Option<T>> = vec![None; k * (r + 1) * 4];
    let mut term = |comp: usize, count: usize, with_i: bool, with_j: bool| -> Result<T> {
        let slot = ((comp * (r + 1) + count) * 2 + with_i as usize) * 2 + with_j as usize;
        if let Some(v) = cache[slot] {
            return Ok(v);
        }
        let mut members = vec![rep; count];
        if with_i {
            members.push(i);
        }
        if with_j {
            members.push(j);
        }
        let v = if members.is_empty() { T::zero() } else { model.component_delta(&state.stats[comp], &members)? };
        cache[slot] = Some(v);
        Ok(v)
    };
    let comps = compositions(r, k);
    let mut out = Vec::with_capacity(k * k);
    for l in 0..k {
        for m in 0..k {
            let mut terms = Vec::with_capacity(comps.len());
            for counts in &comps {
                let mut t = ln_multinomial::<T>(counts);
                for (comp, &c) in counts.iter().enumerate() {
                    t = t + term(comp, c, l == comp, m == comp)?;
                }
                terms.push(t);
            }
            out.push(crate::scalar::log_sum_exp(&terms));
        }
    }
    Ok(out)
}

/// Number of label-count vectors visited by the identical-value path: `C(K+B-3, B-2)`.
pub fn multiset_allocation_count(k: usize, b: usize) -> usize {
    compositions(b.saturating_sub(2), k).len()
}

/// Correlation of the two labels of a `K = 2` table.
pub fn pair_correlation<T: Scalar>(table: &JointAllocationTable<T>) -> Result<T> {
    if table.k != 2 {
        return Err(Error::InvalidInput(format!("pair correlation needs K = 2, table has K = {}", table.k)));
    }
    binary_correlation(table.get(0, 0), table.get(0, 1), table.get(1, 0), table.get(1, 1))
}

/// Quadrant sums for the split at `k_prime` (1-based, `1 ≤ k' < K`).
pub fn indicator_split<T: Scalar>(table: &JointAllocationTable<T>, k_prime: usize) -> Result<PartitionSplit<T>> {
    if k_prime == 0 || k_prime >= table.k {
        return Err(Error::InvalidInput(format!("split {k_prime} outside 1..{}", table.k)));
    }
    let mut q = [T::zero(); 4];
    for l in 0..table.k {
        for m in 0..table.k {
            let idx = 2 * usize::from(l >= k_prime) + usize::from(m >= k_prime);
            q[idx] = q[idx] + table.get(l, m);
        }
    }
    Ok(PartitionSplit { k_prime, p11: q[0], p12: q[1], p21: q[2], p22: q[3] })
}

/// Maximum squared indicator correlation over every split; degenerate splits are skipped.
pub fn rate_lower_bound<T: Scalar>(table: &JointAllocationTable<T>) -> Result<RateBound<T>> {
    let mut best: Option<(T, usize)> = None;
    for kp in 1..table.k {
        let Ok(c) = indicator_split(table, kp)?.correlation() else { continue };
        let v = c * c;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, kp));
        }
    }
    let (value, k_prime) = best.ok_or(Error::AllSplitsDegenerate)?;
    Ok(RateBound { value: value.min(T::one()), k_prime, table: table.clone() })
}

/// Bitwise-identical values: equal and of equal sign, so `0.0` and `-0.0` differ.
fn same_bits<T: Scalar>(a: T, b: T) -> bool {
    a == b && a.is_sign_negative() == b.is_sign_negative()
}
