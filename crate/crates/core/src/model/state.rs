use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::symmat::{rank_one_update, DetFactorization, Matrix};

/// Sufficient statistics of one component, plus the factorized posterior scatter
/// `S0 + S_Y + κ0 n/(κ0+n) (ȳ − m0)(ȳ − m0)ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentStats<T> {
    pub(crate) count: usize,
    pub(crate) sum: Vec<T>,
    pub(crate) scatter: Matrix<T>,
    pub(crate) posterior: DetFactorization<T>,
}

impl<T: Scalar> ComponentStats<T> {
    pub(crate) fn empty(prior: &DetFactorization<T>) -> Self {
        let d = prior.dim();
        Self { count: 0, sum: vec![T::zero(); d], scatter: Matrix::zeros(d), posterior: prior.clone() }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> &[T] {
        &self.sum
    }

    /// Centered sum of squares of the member observations.
    pub fn scatter(&self) -> &Matrix<T> {
        &self.scatter
    }

    pub fn posterior_scatter(&self) -> &DetFactorization<T> {
        &self.posterior
    }

    /// Sample mean; `None` for an empty component.
    pub fn mean(&self) -> Option<Vec<T>> {
        (self.count > 0).then(|| {
            let n = T::of_usize(self.count);
            self.sum.iter().map(|&s| s / n).collect()
        })
    }

    /// Posterior mean `(κ0 m0 + Σy)/(κ0 + n)`, or `m0` when that weight is zero.
    pub fn posterior_mean(&self, m0: &[T], kappa0: T) -> Vec<T> {
        let w = kappa0 + T::of_usize(self.count);
        if w == T::zero() {
            return m0.to_vec();
        }
        m0.iter().zip(&self.sum).map(|(&m, &s)| (kappa0 * m + s) / w).collect()
    }

    pub(crate) fn with_added(&self, y: &[T], m0: &[T], kappa0: T) -> Result<Self> {
        let n = T::of_usize(self.count);
        let mut scatter = self.scatter.clone();
        if let Some(mean) = self.mean() {
            let d: Vec<T> = y.iter().zip(&mean).map(|(&a, &b)| a - b).collect();
            scatter.add_outer(&d, n / (n + T::one()));
        }
        let weight = kappa0 + n;
        let posterior = if weight > T::zero() {
            let m = self.posterior_mean(m0, kappa0);
            let v: Vec<T> = y.iter().zip(&m).map(|(&a, &b)| a - b).collect();
            rank_one_update(&self.posterior, &v, weight / (weight + T::one()))?
        } else {
            self.posterior.clone()
        };
        let sum = self.sum.iter().zip(y).map(|(&s, &v)| s + v).collect();
        Ok(Self { count: self.count + 1, sum, scatter, posterior })
    }

    pub(crate) fn with_removed(&self, y: &[T], m0: &[T], kappa0: T, prior: &DetFactorization<T>) -> Result<Self> {
        match self.count {
            0 => Err(Error::InvalidInput("cannot remove from an empty component".into())),
            1 => Ok(Self::empty(prior)),
            c => {
                let n = T::of_usize(c);
                let mean = self.mean().expect("nonempty");
                let d: Vec<T> = y.iter().zip(&mean).map(|(&a, &b)| a - b).collect();
                let mut scatter = self.scatter.clone();
                scatter.add_outer(&d, -n / (n - T::one()));
                let weight = kappa0 + n;
                let m = self.posterior_mean(m0, kappa0);
                let v: Vec<T> = y.iter().zip(&m).map(|(&a, &b)| a - b).collect();
                let posterior = rank_one_update(&self.posterior, &v, -weight / (weight - T::one()))?;
                let sum = self.sum.iter().zip(y).map(|(&s, &v)| s - v).collect();
                Ok(Self { count: c - 1, sum, scatter, posterior })
            }
        }
    }

    /// Largest absolute difference over every field, for cache-coherence checks.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        if self.count != other.count {
            return T::infinity();
        }
        let sum = self.sum.iter().zip(&other.sum).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        sum.max(self.scatter.max_abs_diff(&other.scatter))
            .max(self.posterior.matrix().matrix().max_abs_diff(other.posterior.matrix().matrix()))
            .max((self.posterior.log_det() - other.posterior.log_det()).abs())
            .max(self.posterior.inverse().max_abs_diff(other.posterior.inverse()))
    }
}

/// Allocation vector `C` plus per-component cached statistics.
///
/// `assignment[i] == None` marks observation `i` as held out of every component.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationState<T> {
    pub(crate) assignment: Vec<Option<usize>>,
    pub(crate) stats: Vec<ComponentStats<T>>,
}

impl<T: Scalar> AllocationState<T> {
    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    /// Labels of every observation; fails if any observation is held out.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, c)| c.ok_or(Error::IndexNotAssigned(i)))
            .collect()
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.assignment[i]
    }

    pub fn stats(&self) -> &[ComponentStats<T>] {
        &self.stats
    }

    pub fn n_components(&self) -> usize {
        self.stats.len()
    }

    pub fn n_assigned(&self) -> usize {
        self.assignment.iter().filter(|c| c.is_some()).count()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.stats.iter().map(|s| s.count).collect()
    }
}

/// Distinct observation indices sampled jointly, kept in ascending order.
///
/// Serialized as a list of 1-based observation numbers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockSet {
    indices: Vec<usize>,
}

impl BlockSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidBlock("block must contain at least one index".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidBlock("block indices must be distinct".into()));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.indices.binary_search(&i).ok()
    }
}

impl TryFrom<Vec<usize>> for BlockSet {
    type Error = Error;

    fn try_from(one_based: Vec<usize>) -> Result<Self> {
        let indices = one_based
            .into_iter()
            .map(|i| i.checked_sub(1).ok_or_else(|| Error::InvalidBlock("observation numbers start at 1".into())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices)
    }
}

impl From<BlockSet> for Vec<usize> {
    fn from(b: BlockSet) -> Self {
        b.indices.into_iter().map(|i| i + 1).collect()
    }
}
