//! The collapsed finite Gaussian mixture.
//!
//! Component means, covariances and mixing weights are integrated out under a
//! Gaussian-inverse-Wishart prior and a symmetric Dirichlet, leaving a density
//! over allocation vectors alone. All densities are unnormalized log values:
//! two allocations (or two block assignments) are compared by subtraction.

mod dataset;
mod hyper;
mod state;

pub use dataset::Dataset;
pub use hyper::Hyperparameters;
pub use state::{AllocationState, BlockSet, ComponentStats};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::symmat::{factorize, DetFactorization, Matrix};

/// Default cap on the number of enumerated block assignments, `K^B ≤ 2^20`.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 1 << 20;

/// Immutable dataset and prior, with the prior scatter factorized once.
#[derive(Clone, Debug)]
pub struct Model<T> {
    data: Dataset<T>,
    hp: Hyperparameters<T>,
    prior: DetFactorization<T>,
    ln_gamma_cache: Vec<T>,
}

/// The three terms of `S_Y{k} = S_Y{k\b} + between + within`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterDecomposition<T> {
    /// Centered sum of squares of the component without the block.
    pub base: Matrix<T>,
    /// `(n_k − n_{k\b}) (n_{k\b}/n_k) (ȳ_{k\b} − ȳ_{b_k})(ȳ_{k\b} − ȳ_{b_k})ᵀ`
    pub between: Matrix<T>,
    /// Centered sum of squares of the block members in the component.
    pub within: Matrix<T>,
}

impl<T: Scalar> ScatterDecomposition<T> {
    pub fn total(&self) -> Matrix<T> {
        self.base.add(&self.between).add(&self.within)
    }
}

impl<T: Scalar> Model<T> {
    pub fn new(data: Dataset<T>, hp: Hyperparameters<T>) -> Result<Self> {
        hp.validate()?;
        if data.dim() != hp.dim() {
            return Err(Error::DimensionMismatch { expected: hp.dim(), found: data.dim() });
        }
        if data.len() < hp.k {
            log::warn!("dataset has {} observations for K = {} components", data.len(), hp.k);
        }
        let prior = factorize(&hp.s0)?;
        // ln Γ(β + n) + Σ_d ln Γ(ν0 + n + 1 − d) for every reachable n
        let d = hp.dim();
        let ln_gamma_cache = (0..=data.len())
            .map(|n| {
                let n = T::of_usize(n);
                let mut acc = (hp.beta + n).lgamma();
                for i in 1..=d {
                    acc = acc + (hp.nu0 + n + T::one() - T::of_usize(i)).lgamma();
                }
                acc
            })
            .collect();
        Ok(Self { data, hp, prior, ln_gamma_cache })
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn hyperparameters(&self) -> &Hyperparameters<T> {
        &self.hp
    }

    pub fn k(&self) -> usize {
        self.hp.k
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn prior_factorization(&self) -> &DetFactorization<T> {
        &self.prior
    }

    /// State with every observation held out.
    pub fn empty_state(&self) -> AllocationState<T> {
        AllocationState {
            assignment: vec![None; self.n()],
            stats: vec![ComponentStats::empty(&self.prior); self.k()],
        }
    }

    /// State with the given labels (0-based), statistics accumulated in index order.
    pub fn state_from_labels(&self, labels: &[usize]) -> Result<AllocationState<T>> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: labels.len() });
        }
        let partial: Vec<Option<usize>> = labels.iter().copied().map(Some).collect();
        self.state_from_partial(&partial)
    }

    /// State where `None` entries are held out.
    pub fn state_from_partial(&self, assignment: &[Option<usize>]) -> Result<AllocationState<T>> {
        if assignment.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: assignment.len() });
        }
        let mut state = self.empty_state();
        for (i, c) in assignment.iter().enumerate() {
            if let Some(k) = *c {
                self.add_observation(&mut state, i, k)?;
            }
        }
        Ok(state)
    }

    /// Statistics recomputed from scratch for the members of component `k`.
    pub fn recompute_stats(&self, state: &AllocationState<T>, k: usize) -> Result<ComponentStats<T>> {
        let members = state.assignment.iter().enumerate().filter(|(_, c)| **c == Some(k)).map(|(i, _)| i);
        self.stats_for_members(members)
    }

    /// Builds statistics for an arbitrary member set by batch formulas.
    pub fn stats_for_members(&self, members: impl IntoIterator<Item = usize>) -> Result<ComponentStats<T>> {
        let members: Vec<usize> = members.into_iter().collect();
        let d = self.dim();
        let n = members.len();
        if n == 0 {
            return Ok(ComponentStats::empty(&self.prior));
        }
        let mut sum = vec![T::zero(); d];
        for &i in &members {
            for (s, &y) in sum.iter_mut().zip(self.data.row(i)) {
                *s = *s + y;
            }
        }
        let nt = T::of_usize(n);
        let mean: Vec<T> = sum.iter().map(|&s| s / nt).collect();
        let mut scatter = Matrix::zeros(d);
        for &i in &members {
            let c: Vec<T> = self.data.row(i).iter().zip(&mean).map(|(&a, &b)| a - b).collect();
            scatter.add_outer(&c, T::one());
        }
        let posterior = self.posterior_scatter(&scatter, n, &mean)?;
        Ok(ComponentStats { count: n, sum, scatter, posterior })
    }

    /// Statistics of a synthetic component given only its size, mean and centered scatter.
    pub fn stats_from_summary(&self, n: usize, mean: &[T], scatter: Matrix<T>) -> Result<ComponentStats<T>> {
        if mean.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: mean.len() });
        }
        if scatter.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: scatter.dim() });
        }
        if n == 0 {
            return Ok(ComponentStats::empty(&self.prior));
        }
        let posterior = self.posterior_scatter(&scatter, n, mean)?;
        let sum = mean.iter().map(|&m| m * T::of_usize(n)).collect();
        Ok(ComponentStats { count: n, sum, scatter, posterior })
    }

    /// Factorizes `S0 + scatter + κ0 n/(κ0+n) (mean − m0)(mean − m0)ᵀ`.
    pub fn posterior_scatter(&self, scatter: &Matrix<T>, n: usize, mean: &[T]) -> Result<DetFactorization<T>> {
        let mut m = self.hp.s0.matrix().add(scatter);
        let nt = T::of_usize(n);
        if n > 0 && self.hp.kappa0 > T::zero() {
            let diff: Vec<T> = mean.iter().zip(&self.hp.m0).map(|(&a, &b)| a - b).collect();
            m.add_outer(&diff, self.hp.kappa0 * nt / (self.hp.kappa0 + nt));
        }
        crate::symmat::factorize_matrix(m.symmetrized())
    }

    /// Assigns held-out observation `i` to component `k`.
    pub fn add_observation(&self, state: &mut AllocationState<T>, i: usize, k: usize) -> Result<()> {
        self.check_index(i)?;
        self.check_label(k)?;
        if state.assignment[i].is_some() {
            return Err(Error::IndexAlreadyAssigned(i));
        }
        let updated = state.stats[k].with_added(self.data.row(i), &self.hp.m0, self.hp.kappa0)?;
        state.stats[k] = updated;
        state.assignment[i] = Some(k);
        Ok(())
    }

    /// Holds observation `i` out; returns its former label.
    pub fn remove_observation(&self, state: &mut AllocationState<T>, i: usize) -> Result<usize> {
        self.check_index(i)?;
        let k = state.assignment[i].ok_or(Error::IndexNotAssigned(i))?;
        let updated = state.stats[k].with_removed(self.data.row(i), &self.hp.m0, self.hp.kappa0, &self.prior)?;
        state.stats[k] = updated;
        state.assignment[i] = None;
        Ok(k)
    }

    /// `ln Γ(β+n) + Σ_d ln Γ(ν0+n+1−d) − (ν0+n)/2 ln|S| − D/2 ln(κ0+n)`.
    ///
    /// The mean-precision factor is dropped when `κ0 + n = 0` (empty component
    /// under the flat-mean prior), where its prior counterpart cancels it.
    pub fn component_log_term(&self, n: usize, log_det: T) -> T {
        let nt = T::of_usize(n);
        let gamma = match self.ln_gamma_cache.get(n) {
            Some(&g) => g,
            None => {
                let mut acc = (self.hp.beta + nt).lgamma();
                for i in 1..=self.dim() {
                    acc = acc + (self.hp.nu0 + nt + T::one() - T::of_usize(i)).lgamma();
                }
                acc
            }
        };
        let half = T::of(0.5);
        let w = self.hp.kappa0 + nt;
        let precision = if w > T::zero() { half * T::of_usize(self.dim()) * w.ln() } else { T::zero() };
        gamma - half * (self.hp.nu0 + nt) * log_det - precision
    }

    pub(crate) fn stats_log_term(&self, s: &ComponentStats<T>) -> T {
        self.component_log_term(s.count, s.posterior.log_det())
    }

    /// Unnormalized log marginal density of the allocation, up to a constant fixed
    /// by the dataset and hyperparameters. Held-out observations are ignored.
    pub fn log_marginal_allocation(&self, state: &AllocationState<T>) -> T {
        state.stats.iter().map(|s| self.stats_log_term(s)).sum()
    }

    /// Log density of assigning the (held-out) block to `block_labels`, given the
    /// rest of the state, up to a constant shared by all `K^B` assignments.
    pub fn log_block_conditional(&self, state: &AllocationState<T>, block: &BlockSet, block_labels: &[usize]) -> Result<T> {
        self.check_block_held_out(state, block)?;
        if block_labels.len() != block.len() {
            return Err(Error::DimensionMismatch { expected: block.len(), found: block_labels.len() });
        }
        for &l in block_labels {
            self.check_label(l)?;
        }
        let mut total = T::zero();
        for k in 0..self.k() {
            let members: Vec<usize> = block
                .indices()
                .iter()
                .zip(block_labels)
                .filter(|(_, &l)| l == k)
                .map(|(&i, _)| i)
                .collect();
            if !members.is_empty() {
                total = total + self.component_delta(&state.stats[k], &members)?;
            }
        }
        Ok(total)
    }

    /// Change in a component's log term when `members` join it, by sequential rank-one updates.
    pub(crate) fn component_delta(&self, base: &ComponentStats<T>, members: &[usize]) -> Result<T> {
        let mut s = base.clone();
        for &i in members {
            s = s.with_added(self.data.row(i), &self.hp.m0, self.hp.kappa0)?;
        }
        Ok(self.stats_log_term(&s) - self.stats_log_term(base))
    }

    /// Log weights of assigning held-out observation `i` to each component, up to a
    /// shared constant. Uses the determinant lemma instead of touching the factors.
    pub fn single_site_log_weights(&self, state: &AllocationState<T>, i: usize) -> Result<Vec<T>> {
        self.check_index(i)?;
        if state.assignment[i].is_some() {
            return Err(Error::IndexAlreadyAssigned(i));
        }
        let y = self.data.row(i);
        let mut out = Vec::with_capacity(self.k());
        for s in &state.stats {
            let w = self.hp.kappa0 + T::of_usize(s.count);
            let log_det = if w > T::zero() {
                let m = s.posterior_mean(&self.hp.m0, self.hp.kappa0);
                let v: Vec<T> = y.iter().zip(&m).map(|(&a, &b)| a - b).collect();
                let q = s.posterior.inv_quad(&v);
                s.posterior.log_det() + (T::one() + w / (w + T::one()) * q).ln()
            } else {
                s.posterior.log_det()
            };
            out.push(self.component_log_term(s.count + 1, log_det) - self.stats_log_term(s));
        }
        Ok(out)
    }

    /// Log weights of all `K^B` block assignments, in [`block_assignment`] order.
    pub fn block_log_weights(&self, state: &AllocationState<T>, block: &BlockSet, limit: u128) -> Result<Vec<T>> {
        self.check_block_held_out(state, block)?;
        let k = self.k();
        let b = block.len();
        let cells = enumeration_size(k, b, limit)?;
        // delta per (component, subset of block positions), filled lazily
        let mut cache: Vec<Option<T>> = vec![None; k << b];
        let mut out = Vec::with_capacity(cells);
        let mut labels = vec![0usize; b];
        for cell in 0..cells {
            block_assignment_into(cell, k, &mut labels);
            let mut total = T::zero();
            for comp in 0..k {
                let mask = labels.iter().enumerate().filter(|(_, &l)| l == comp).fold(0usize, |m, (p, _)| m | (1 << p));
                if mask == 0 {
                    continue;
                }
                let slot = (comp << b) | mask;
                let delta = match cache[slot] {
                    Some(v) => v,
                    None => {
                        let members: Vec<usize> =
                            (0..b).filter(|p| mask & (1 << p) != 0).map(|p| block.indices()[p]).collect();
                        let v = self.component_delta(&state.stats[comp], &members)?;
                        cache[slot] = Some(v);
                        v
                    }
                };
                total = total + delta;
            }
            out.push(total);
        }
        Ok(out)
    }

    /// Splits `S_Y{k}` into the block-free scatter, the between-means term and the
    /// within-block scatter, for a state where block members are assigned.
    pub fn sum_of_squares_decomposition(
        &self,
        state: &AllocationState<T>,
        block: &BlockSet,
        k: usize,
    ) -> Result<ScatterDecomposition<T>> {
        self.check_label(k)?;
        let d = self.dim();
        let mut rest = Vec::new();
        let mut blocked = Vec::new();
        for (i, c) in state.assignment.iter().enumerate() {
            if *c == Some(k) {
                if block.contains(i) {
                    blocked.push(i);
                } else {
                    rest.push(i);
                }
            }
        }
        for &i in block.indices() {
            if state.assignment.get(i).copied().flatten().is_none() {
                return Err(Error::IndexNotAssigned(i));
            }
        }
        let (base, rest_mean) = self.batch_scatter(&rest);
        let (within, block_mean) = self.batch_scatter(&blocked);
        let mut between = Matrix::zeros(d);
        if let (Some(a), Some(b)) = (rest_mean, block_mean) {
            let nb = T::of_usize(blocked.len());
            let nr = T::of_usize(rest.len());
            let diff: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x - y).collect();
            between.add_outer(&diff, nb * nr / (nb + nr));
        }
        Ok(ScatterDecomposition { base, between, within })
    }

    /// The exact perturbation `S_k(with members) − S_k(without)` of the posterior scatter:
    /// `V + w·a/(w+a) (m − ȳ_b)(m − ȳ_b)ᵀ`, with `w = κ0 + n`, `m` the posterior mean and
    /// `a`, `ȳ_b`, `V` the count, mean and scatter of the joining points.
    pub fn posterior_perturbation(&self, base: &ComponentStats<T>, members: &[usize]) -> Matrix<T> {
        let (within, mean) = self.batch_scatter(members);
        let Some(mean) = mean else { return within };
        let a = T::of_usize(members.len());
        let w = self.hp.kappa0 + T::of_usize(base.count);
        let m = base.posterior_mean(&self.hp.m0, self.hp.kappa0);
        let diff: Vec<T> = m.iter().zip(&mean).map(|(&x, &y)| x - y).collect();
        let mut q = within;
        if w > T::zero() {
            q.add_outer(&diff, w * a / (w + a));
        }
        q
    }

    /// Centered scatter and mean of a set of rows.
    pub(crate) fn batch_scatter(&self, members: &[usize]) -> (Matrix<T>, Option<Vec<T>>) {
        let d = self.dim();
        let mut scatter = Matrix::zeros(d);
        if members.is_empty() {
            return (scatter, None);
        }
        let n = T::of_usize(members.len());
        let mut mean = vec![T::zero(); d];
        for &i in members {
            for (m, &y) in mean.iter_mut().zip(self.data.row(i)) {
                *m = *m + y / n;
            }
        }
        for &i in members {
            let c: Vec<T> = self.data.row(i).iter().zip(&mean).map(|(&a, &b)| a - b).collect();
            scatter.add_outer(&c, T::one());
        }
        (scatter, Some(mean))
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    pub(crate) fn check_label(&self, k: usize) -> Result<()> {
        if k >= self.k() {
            return Err(Error::LabelOutOfRange { label: k, k: self.k() });
        }
        Ok(())
    }

    pub(crate) fn check_block_held_out(&self, state: &AllocationState<T>, block: &BlockSet) -> Result<()> {
        for &i in block.indices() {
            self.check_index(i)?;
            if state.assignment[i].is_some() {
                return Err(Error::IndexAlreadyAssigned(i));
            }
        }
        Ok(())
    }
}

/// Number of block assignments `K^B`, or [`Error::EnumerationTooLarge`] past `limit`.
pub fn enumeration_size(k: usize, b: usize, limit: u128) -> Result<usize> {
    let mut cells: u128 = 1;
    for _ in 0..b {
        cells = cells.saturating_mul(k as u128);
        if cells > limit {
            return Err(Error::EnumerationTooLarge { cells, limit });
        }
    }
    Ok(cells as usize)
}

/// Decodes a cell index into block labels; the first block member is the most significant digit.
pub fn block_assignment(cell: usize, k: usize, b: usize) -> Vec<usize> {
    let mut labels = vec![0; b];
    block_assignment_into(cell, k, &mut labels);
    labels
}

pub(crate) fn block_assignment_into(mut cell: usize, k: usize, labels: &mut [usize]) {
    for slot in labels.iter_mut().rev() {
        *slot = cell % k;
        cell /= k;
    }
}

/// Inverse of [`block_assignment`].
pub fn block_cell(labels: &[usize], k: usize) -> usize {
    labels.iter().fold(0, |acc, &l| acc * k + l)
}
