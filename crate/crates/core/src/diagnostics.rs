//! Posterior similarity matrices, allocation-indicator autocorrelations and
//! blocked-move acceptance summaries computed from chain traces.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::ChainTrace;

/// Estimated co-clustering probabilities `P(C_i = C_j)`, dense and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Psm {
    n: usize,
    entries: Vec<f64>,
    samples: usize,
}

impl Psm {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Number of samples the estimate is based on.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Rows and columns reordered so that output row `r` is observation `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Psm> {
        let mut seen = vec![false; self.n];
        if order.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: order.len() });
        }
        for &i in order {
            if i >= self.n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput("ordering must be a permutation of the observations".into()));
            }
        }
        let entries = order.iter().flat_map(|&i| order.iter().map(move |&j| (i, j))).map(|(i, j)| self.get(i, j)).collect();
        Ok(Psm { n: self.n, entries, samples: self.samples })
    }

    /// Headerless `N×N` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.n {
            out.write_record((0..self.n).map(|j| self.get(i, j).to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads an ordering file: one 1-based observation number per line, blank lines ignored.
pub fn read_ordering<R: BufRead>(r: R) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t.parse().map_err(|_| Error::InvalidInput(format!("ordering line {}: {t:?}", n + 1)))?;
        out.push(v.checked_sub(1).ok_or_else(|| Error::InvalidInput(format!("ordering line {}: numbers start at 1", n + 1)))?);
    }
    Ok(out)
}

/// Co-clustering frequencies over records with `iter >= burn_in`, keeping every `thin`-th.
pub fn psm(trace: &ChainTrace, burn_in: u64, thin: usize) -> Result<Psm> {
    let mut samples = 0usize;
    let mut counts: Vec<u64> = Vec::new();
    let mut n = 0;
    for rec in trace.retained(burn_in, thin) {
        if samples == 0 {
            n = rec.assignment.len();
            counts = vec![0; n * n];
        } else if rec.assignment.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rec.assignment.len() });
        }
        let c = &rec.assignment;
        for i in 0..n {
            for j in i..n {
                if c[i] == c[j] {
                    counts[i * n + j] += 1;
                }
            }
        }
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::EmptyTrace);
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = counts[i * n + j] as f64 / samples as f64;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(Psm { n, entries, samples })
}

/// Autocorrelations of a scalar series; `values[0] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfSeries {
    pub max_lag: usize,
    pub values: Vec<f64>,
}

impl AcfSeries {
    /// Two columns, `lag,value`, with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lag", "value"])?;
        for (lag, v) in self.values.iter().enumerate() {
            out.write_record([lag.to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Biased (divide-by-n) sample autocorrelation up to `max_lag` (clipped to `len - 1`).
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<AcfSeries> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyTrace);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let max_lag = max_lag.min(n - 1);
    let values = (0..=max_lag)
        .map(|t| {
            let ct = centred[..n - t].iter().zip(&centred[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            (ct / c0).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AcfSeries { max_lag, values })
}

/// Indicator series `I(C_site ∈ components)` over records with `iter >= burn_in`.
pub fn indicator_series(trace: &ChainTrace, site: usize, components: &[usize], burn_in: u64) -> Result<Vec<f64>> {
    trace
        .retained(burn_in, 1)
        .map(|r| {
            r.assignment
                .get(site)
                .map(|c| if components.contains(c) { 1.0 } else { 0.0 })
                .ok_or(Error::IndexOutOfRange { index: site, n: r.assignment.len() })
        })
        .collect()
}

/// Autocorrelation of the indicator that observation `site` sits in `components` (0-based labels).
pub fn acf_binary(trace: &ChainTrace, site: usize, components: &[usize], max_lag: usize, burn_in: u64) -> Result<AcfSeries> {
    autocorrelation(&indicator_series(trace, site, components, burn_in)?, max_lag)
}

/// Summary of the blocked moves recorded in a trace.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub moves: usize,
    pub accepted: usize,
    /// `None` when there were no moves.
    pub rate: Option<f64>,
    /// Attempts per move, where known.
    pub retry_histogram: BTreeMap<u32, usize>,
    pub mean_ratio: Option<f64>,
}

pub fn acceptance_report(trace: &ChainTrace) -> AcceptanceReport {
    let mut rep = AcceptanceReport::default();
    let mut ratio_sum = 0.0;
    for mv in trace.records.iter().filter_map(|r| r.block_move.as_ref()) {
        rep.moves += 1;
        rep.accepted += usize::from(mv.accepted);
        ratio_sum += mv.ratio;
        if let Some(a) = mv.attempts {
            *rep.retry_histogram.entry(a).or_default() += 1;
        }
    }
    if rep.moves > 0 {
        rep.rate = Some(rep.accepted as f64 / rep.moves as f64);
        rep.mean_ratio = Some(ratio_sum / rep.moves as f64);
    }
    rep
}
