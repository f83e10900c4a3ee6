//! Correlation of two allocations over a grid of positions relative to two component means.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{pair_correlation, Conditioning, JointAllocationTable};
use crate::error::{Error, Result};
use crate::model::{BlockSet, Dataset, Hyperparameters, Model, DEFAULT_ENUMERATION_LIMIT};
use crate::scalar::Scalar;
use crate::symmat::Matrix;

/// Where the pair and the two component means sit for a grid node `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceLayout<T> {
    /// `Y_i = Y_j = 0`, first mean at `-x·u`, second at `+y·u`.
    PairBetweenMeans,
    /// Means at `0` and `separation·u`; `Y_i = x·u`, `Y_j = y·u`.
    FixedSeparation { separation: T },
}

/// Synthetic two-component geometry, described by complement sufficient statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec<T> {
    /// Complement sizes of the two components.
    pub counts: [usize; 2],
    /// Complement centered scatters, as rows.
    pub scatters: [Vec<Vec<T>>; 2],
    /// Axis along which means and observations are placed; normalized before use.
    pub direction: Vec<T>,
    pub layout: SurfaceLayout<T>,
    pub x_axis: Vec<T>,
    pub y_axis: Vec<T>,
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * T::of_usize(i) / T::of_usize(n - 1)).collect(),
    }
}

impl<T: Scalar> SurfaceSpec<T> {
    /// Two one-dimensional components of `n` points each with centered scatter `ss`,
    /// pair placed between them, both axes spanning `[lo, hi]` with `points` nodes.
    pub fn between_means_1d(n: usize, ss: T, lo: T, hi: T, points: usize) -> Self {
        Self {
            counts: [n, n],
            scatters: [vec![vec![ss]], vec![vec![ss]]],
            direction: vec![T::one()],
            layout: SurfaceLayout::PairBetweenMeans,
            x_axis: linspace(lo, hi, points),
            y_axis: linspace(lo, hi, points),
        }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    fn unit(&self) -> Result<Vec<T>> {
        let norm = self.direction.iter().map(|&v| v * v).sum::<T>().sqrt();
        if self.direction.is_empty() || !(norm > T::zero()) {
            return Err(Error::InvalidInput("surface direction must be a non-zero vector".into()));
        }
        Ok(self.direction.iter().map(|&v| v / norm).collect())
    }

    fn scatter(&self, c: usize) -> Result<Matrix<T>> {
        let m = Matrix::from_rows(&self.scatters[c])?;
        if m.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: m.dim() });
        }
        Ok(m)
    }
}

/// Grid of correlations; `values[r * y_axis.len() + c]` is the node `(x_axis[r], y_axis[c])`.
/// Nodes where one allocation is certain hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Surface<T> {
    pub x_axis: Vec<T>,
    pub y_axis: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> Surface<T> {
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.y_axis.len() + c]
    }

    /// CSV with the `y` axis as header row and the `x` axis as first column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(std::iter::once("x\\y".to_string()).chain(self.y_axis.iter().map(|v| v.to_string())))?;
        for (r, x) in self.x_axis.iter().enumerate() {
            out.write_record(
                std::iter::once(x.to_string()).chain((0..self.y_axis.len()).map(|c| self.get(r, c).to_string())),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Correlation of the pair's allocations at one node, or [`Error::DegenerateMarginal`].
pub fn correlation_at<T: Scalar>(spec: &SurfaceSpec<T>, hp: &Hyperparameters<T>, x: T, y: T) -> Result<T> {
    if hp.k != 2 {
        return Err(Error::InvalidHyperparameters("surfaces need K = 2".into()));
    }
    let u = unit_checked(spec, hp)?;
    let along = |s: T| -> Vec<T> { u.iter().map(|&v| v * s).collect() };
    let (means, yi, yj) = match spec.layout {
        SurfaceLayout::PairBetweenMeans => ([along(-x), along(y)], along(T::zero()), along(T::zero())),
        SurfaceLayout::FixedSeparation { separation } => ([along(T::zero()), along(separation)], along(x), along(y)),
    };
    let model = Model::new(Dataset::new(vec![yi, yj])?, hp.clone())?;
    let mut state = model.empty_state();
    for c in 0..2 {
        state.stats[c] = model.stats_from_summary(spec.counts[c], &means[c], spec.scatter(c)?)?;
    }
    let block = BlockSet::new(vec![0, 1])?;
    let w = model.block_log_weights(&state, &block, DEFAULT_ENUMERATION_LIMIT)?;
    let table = JointAllocationTable::from_log_weights(2, &w, Conditioning { pair: Some((0, 1)), marginalized: Vec::new() })?;
    pair_correlation(&table)
}

fn unit_checked<T: Scalar>(spec: &SurfaceSpec<T>, hp: &Hyperparameters<T>) -> Result<Vec<T>> {
    if hp.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: hp.dim(), found: spec.dim() });
    }
    spec.unit()
}

/// Evaluates [`correlation_at`] on every grid node.
pub fn correlation_surface<T: Scalar>(spec: &SurfaceSpec<T>, hp: &Hyperparameters<T>) -> Result<Surface<T>> {
    let mut values = Vec::with_capacity(spec.x_axis.len() * spec.y_axis.len());
    for &x in &spec.x_axis {
        for &y in &spec.y_axis {
            values.push(match correlation_at(spec, hp, x, y) {
                Ok(v) => v,
                Err(Error::DegenerateMarginal) => T::nan(),
                Err(e) => return Err(e),
            });
        }
    }
    Ok(Surface { x_axis: spec.x_axis.clone(), y_axis: spec.y_axis.clone(), values })
}
