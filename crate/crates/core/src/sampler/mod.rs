//! Markov chain generation: single-site collapsed Gibbs sweeps, exact blocked
//! moves, and approximate blocked moves corrected by an accept/reject step.

mod init;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{block_assignment, block_cell, enumeration_size, AllocationState, BlockSet, Model, DEFAULT_ENUMERATION_LIMIT};
use crate::scalar::{normalize_log_weights, Scalar};
use crate::symmat::approx_log_det_second_order;

pub use init::{initial_labels, InitStrategy};
pub use trace::{BlockMove, ChainTrace, TraceRecord};

/// The random stream used by every chain.
pub type ChainRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    #[default]
    Forward,
    /// Ascending pass followed by a descending pass over the same sites.
    Reversible,
}

/// How the block sites are refreshed when the block cadence fires.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockUpdate {
    /// One joint draw over all `K^B` assignments.
    #[default]
    Joint,
    /// The block sites updated one after another by single-site Gibbs.
    Sequential,
}

/// Accept/reject rule for approximate blocked proposals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptanceRule {
    /// `r = f/f̂` with both normalized over the enumeration; accept with probability
    /// `r / max r`. Accepted proposals are exact draws from the block conditional.
    #[default]
    Normalized,
    /// Exact `f` only at the proposal and the current block labels; accept with
    /// probability `min(1, r_prop / r_current)`.
    LazyMax,
    /// Accept when `r > u` with `r = f/f̂` normalized, no further scaling.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    pub sweep_mode: SweepMode,
    pub block: Option<BlockSet>,
    pub block_update: BlockUpdate,
    pub block_every: u64,
    /// Upper bound on the block size; the `K^B` enumeration guard applies regardless.
    pub max_block_size: Option<usize>,
    pub use_approximation: bool,
    pub acceptance: AcceptanceRule,
    pub max_retries: u32,
    pub thin: u64,
    pub iterations: u64,
    pub init: InitStrategy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sweep_mode: SweepMode::Forward,
            block: None,
            block_update: BlockUpdate::Joint,
            block_every: 1,
            max_block_size: None,
            use_approximation: false,
            acceptance: AcceptanceRule::Normalized,
            max_retries: 25,
            thin: 1,
            iterations: 1000,
            init: InitStrategy::Uniform,
        }
    }
}

impl SamplerConfig {
    pub fn validate<T: Scalar>(&self, model: &Model<T>) -> Result<()> {
        if self.block_every == 0 {
            return Err(Error::InvalidConfig("block_every must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidConfig("max_retries must be at least 1".into()));
        }
        if let Some(block) = &self.block {
            if let Some(&last) = block.indices().last() {
                model.check_index(last)?;
            }
            if let Some(max) = self.max_block_size {
                if block.len() > max {
                    return Err(Error::InvalidBlock(format!("block of {} exceeds max_block_size {max}", block.len())));
                }
            }
            if self.block_update == BlockUpdate::Joint {
                enumeration_size(model.k(), block.len(), DEFAULT_ENUMERATION_LIMIT)?;
            }
        }
        Ok(())
    }
}

/// Options of one approximate blocked move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApproxOptions {
    /// When false the proposal distribution is the exact conditional.
    pub use_approximation: bool,
    pub rule: AcceptanceRule,
    pub max_retries: u32,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self { use_approximation: true, rule: AcceptanceRule::Normalized, max_retries: 25 }
    }
}

/// Draws an index from unnormalized log weights with a single uniform.
pub fn draw_from_log_weights<T: Scalar, R: Rng + ?Sized>(log_w: &[T], rng: &mut R) -> Result<usize> {
    let p = normalize_log_weights(log_w);
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("conditional weights".into()));
    }
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        let pi = pi.as_f64();
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Redraws the label of assigned site `i` from its full conditional. Returns the new label.
pub fn gibbs_site<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    state: &mut AllocationState<T>,
    i: usize,
    rng: &mut R,
) -> Result<usize> {
    let old = model.remove_observation(state, i)?;
    let drawn = model.single_site_log_weights(state, i).and_then(|w| draw_from_log_weights(&w, rng));
    match drawn {
        Ok(k) => {
            model.add_observation(state, i, k)?;
            Ok(k)
        }
        Err(e) => {
            model.add_observation(state, i, old)?;
            Err(e)
        }
    }
}

/// Updates the sites of `order` in turn; in reversible mode the pass is followed
/// by the same sites in reverse, so the last site is updated twice in a row.
pub fn gibbs_sweep<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    state: &mut AllocationState<T>,
    order: &[usize],
    mode: SweepMode,
    rng: &mut R,
) -> Result<()> {
    for &i in order {
        gibbs_site(model, state, i, rng)?;
    }
    if mode == SweepMode::Reversible {
        for &i in order.iter().rev() {
            gibbs_site(model, state, i, rng)?;
        }
    }
    Ok(())
}

fn hold_out<T: Scalar>(model: &Model<T>, state: &mut AllocationState<T>, block: &BlockSet) -> Result<Vec<usize>> {
    let mut old = Vec::with_capacity(block.len());
    for &i in block.indices() {
        match model.remove_observation(state, i) {
            Ok(k) => old.push(k),
            Err(e) => {
                restore(model, state, block, &old)?;
                return Err(e);
            }
        }
    }
    Ok(old)
}

fn restore<T: Scalar>(model: &Model<T>, state: &mut AllocationState<T>, block: &BlockSet, labels: &[usize]) -> Result<()> {
    for (&i, &k) in block.indices().iter().zip(labels) {
        model.add_observation(state, i, k)?;
    }
    Ok(())
}

/// Draws the block labels jointly from their exact conditional given every other site.
pub fn blocked_step_exact<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    state: &mut AllocationState<T>,
    block: &BlockSet,
    rng: &mut R,
) -> Result<BlockMove> {
    enumeration_size(model.k(), block.len(), DEFAULT_ENUMERATION_LIMIT)?;
    let old = hold_out(model, state, block)?;
    let drawn = model
        .block_log_weights(state, block, DEFAULT_ENUMERATION_LIMIT)
        .and_then(|w| draw_from_log_weights(&w, rng));
    match drawn {
        Ok(cell) => {
            let labels = block_assignment(cell, model.k(), block.len());
            restore(model, state, block, &labels)?;
            Ok(BlockMove { proposal: labels, accepted: true, ratio: 1.0, attempts: Some(1) })
        }
        Err(e) => {
            restore(model, state, block, &old)?;
            Err(e)
        }
    }
}

/// Log weights of every block assignment with each component's determinant replaced
/// by its second-order expansion about the held-out posterior scatter.
///
/// The perturbation for component `k` is the exact change in its posterior scatter
/// when the block members labelled `k` join it. Where the expansion is not positive
/// the exact determinant is used instead.
pub fn approx_block_log_weights<T: Scalar>(model: &Model<T>, state: &AllocationState<T>, block: &BlockSet) -> Result<Vec<T>> {
    model.check_block_held_out(state, block)?;
    let k = model.k();
    let b = block.len();
    let cells = enumeration_size(k, b, DEFAULT_ENUMERATION_LIMIT)?;
    let mut cache: Vec<Option<T>> = vec![None; k << b];
    let mut out = Vec::with_capacity(cells);
    for cell in 0..cells {
        let labels = block_assignment(cell, k, b);
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
                    let members: Vec<usize> = (0..b).filter(|p| mask & (1 << p) != 0).map(|p| block.indices()[p]).collect();
                    let base = &state.stats()[comp];
                    let q = model.posterior_perturbation(base, &members);
                    let log_det = approx_log_det_second_order(base.posterior_scatter(), &q, T::one());
                    let v = if log_det.is_finite() {
                        model.component_log_term(base.count() + members.len(), log_det) - model.stats_log_term(base)
                    } else {
                        model.component_delta(base, &members)?
                    };
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

fn log_normalize<T: Scalar>(w: &[T]) -> Vec<f64> {
    let w: Vec<f64> = w.iter().map(|x| x.as_f64()).collect();
    let lse = crate::scalar::log_sum_exp(&w);
    w.iter().map(|x| x - lse).collect()
}

/// Proposes block labels from the approximate conditional and accepts them using
/// the exact conditional. Rejected proposals are redrawn up to `max_retries` times;
/// if every attempt fails the block keeps its labels and the move is recorded as rejected.
pub fn blocked_step_approx<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    state: &mut AllocationState<T>,
    block: &BlockSet,
    opts: ApproxOptions,
    rng: &mut R,
) -> Result<BlockMove> {
    if opts.max_retries == 0 {
        return Err(Error::InvalidConfig("max_retries must be at least 1".into()));
    }
    enumeration_size(model.k(), block.len(), DEFAULT_ENUMERATION_LIMIT)?;
    let old = hold_out(model, state, block)?;
    match approx_attempts(model, state, block, &old, opts, rng) {
        Ok((labels, mv)) => {
            restore(model, state, block, &labels)?;
            Ok(mv)
        }
        Err(e) => {
            restore(model, state, block, &old)?;
            Err(e)
        }
    }
}

fn approx_attempts<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    state: &AllocationState<T>,
    block: &BlockSet,
    old: &[usize],
    opts: ApproxOptions,
    rng: &mut R,
) -> Result<(Vec<usize>, BlockMove)> {
    let k = model.k();
    let b = block.len();
    let need_full_exact = !opts.use_approximation || opts.rule != AcceptanceRule::LazyMax;
    let exact = if need_full_exact { Some(model.block_log_weights(state, block, DEFAULT_ENUMERATION_LIMIT)?) } else { None };
    let proposal_w = match (&exact, opts.use_approximation) {
        (Some(e), false) => e.clone(),
        _ => approx_block_log_weights(model, state, block)?,
    };
    let log_fhat = log_normalize(&proposal_w);
    let log_f = exact.as_ref().map(|e| log_normalize(e));
    let log_max = log_f
        .as_ref()
        .map(|lf| lf.iter().zip(&log_fhat).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max));
    let exact_at = |labels: &[usize]| -> Result<f64> { Ok(model.log_block_conditional(state, block, labels)?.as_f64()) };
    let current_cell = block_cell(old, k);
    let log_r_current = if opts.rule == AcceptanceRule::LazyMax {
        match &log_f {
            Some(lf) => lf[current_cell] - log_fhat[current_cell],
            None => exact_at(old)? - log_fhat[current_cell],
        }
    } else {
        0.0
    };

    let mut last = BlockMove { proposal: old.to_vec(), accepted: false, ratio: 0.0, attempts: Some(opts.max_retries) };
    for attempt in 1..=opts.max_retries {
        let cell = draw_from_log_weights(&proposal_w, rng)?;
        let labels = block_assignment(cell, k, b);
        let log_r = match &log_f {
            Some(lf) => lf[cell] - log_fhat[cell],
            None => exact_at(&labels)? - log_fhat[cell],
        };
        let ratio = match opts.rule {
            AcceptanceRule::Normalized => (log_r - log_max.expect("full enumeration")).exp().min(1.0),
            AcceptanceRule::LazyMax => (log_r - log_r_current).exp().min(1.0),
            AcceptanceRule::Literal => log_r.exp(),
        };
        if ratio.is_nan() {
            return Err(Error::NonFinite("acceptance ratio".into()));
        }
        let accepted = ratio >= 1.0 || rng.random::<f64>() < ratio;
        last = BlockMove { proposal: labels.clone(), accepted, ratio, attempts: Some(attempt) };
        if accepted {
            return Ok((labels, last));
        }
    }
    Ok((old.to_vec(), last))
}

/// Runs one chain from labels chosen by `config.init`.
pub fn run_chain<T: Scalar>(model: &Model<T>, config: &SamplerConfig) -> Result<ChainTrace> {
    let mut rng = ChainRng::seed_from_u64(config.seed);
    let labels = initial_labels(model, config.init, &mut rng);
    run_chain_with(model, config, labels, rng)
}

/// Runs one chain from the supplied 0-based labels.
pub fn run_chain_from<T: Scalar>(model: &Model<T>, config: &SamplerConfig, labels: Vec<usize>) -> Result<ChainTrace> {
    run_chain_with(model, config, labels, ChainRng::seed_from_u64(config.seed))
}

/// Runs `chains` independent chains in parallel with seeds `seed + c`.
pub fn run_chains<T: Scalar>(model: &Model<T>, config: &SamplerConfig, chains: usize) -> Result<Vec<ChainTrace>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| {
                let cfg = SamplerConfig { seed: config.seed.wrapping_add(c as u64), ..config.clone() };
                scope.spawn(move || run_chain(model, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    })
}

fn run_chain_with<T: Scalar>(model: &Model<T>, config: &SamplerConfig, labels: Vec<usize>, mut rng: ChainRng) -> Result<ChainTrace> {
    config.validate(model)?;
    let mut state = model.state_from_labels(&labels)?;
    let sites: Vec<usize> = match &config.block {
        Some(block) => (0..model.n()).filter(|&i| !block.contains(i)).collect(),
        None => (0..model.n()).collect(),
    };
    let opts = ApproxOptions {
        use_approximation: config.use_approximation,
        rule: config.acceptance,
        max_retries: config.max_retries,
    };
    let mut trace = ChainTrace::default();
    trace.records.push(record(model, &state, 0, None)?);
    let mut accepted = 0u64;
    let mut moves = 0u64;
    for it in 1..=config.iterations {
        let step = |state: &mut AllocationState<T>, rng: &mut ChainRng| -> Result<Option<BlockMove>> {
            gibbs_sweep(model, state, &sites, config.sweep_mode, rng)?;
            let Some(block) = &config.block else { return Ok(None) };
            if it % config.block_every != 0 {
                return Ok(None);
            }
            let mv = match config.block_update {
                BlockUpdate::Sequential => {
                    gibbs_sweep(model, state, block.indices(), SweepMode::Forward, rng)?;
                    let proposal = block.indices().iter().map(|&i| state.label(i).expect("assigned")).collect();
                    BlockMove { proposal, accepted: true, ratio: 1.0, attempts: Some(1) }
                }
                BlockUpdate::Joint if config.use_approximation => blocked_step_approx(model, state, block, opts, rng)?,
                BlockUpdate::Joint => blocked_step_exact(model, state, block, rng)?,
            };
            Ok(Some(mv))
        };
        let mv = step(&mut state, &mut rng).map_err(|e| Error::Chain { iter: it, source: Box::new(e) })?;
        if let Some(m) = &mv {
            moves += 1;
            accepted += m.accepted as u64;
        }
        if it % config.thin == 0 {
            trace.records.push(record(model, &state, it, mv)?);
        }
    }
    if moves > 0 {
        log::info!("blocked moves accepted: {accepted}/{moves}");
    }
    Ok(trace)
}

fn record<T: Scalar>(model: &Model<T>, state: &AllocationState<T>, iter: u64, block_move: Option<BlockMove>) -> Result<TraceRecord> {
    let log_density = model.log_marginal_allocation(state).as_f64();
    if !log_density.is_finite() {
        return Err(Error::NonFinite(format!("log density at iteration {iter}")));
    }
    Ok(TraceRecord { iter, assignment: state.labels()?, log_density, block_move })
}
