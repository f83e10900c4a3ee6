//! Chain records and their JSON-lines file format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of one blocked move.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMove {
    /// Labels of the last proposal (0-based).
    pub proposal: Vec<usize>,
    pub accepted: bool,
    /// Acceptance probability of the last attempt (the raw ratio under the literal rule).
    pub ratio: f64,
    /// Proposals drawn before acceptance or exhaustion. Not part of the file format.
    pub attempts: Option<u32>,
}

/// One retained iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: u64,
    /// Labels (0-based) of every observation.
    pub assignment: Vec<usize>,
    pub log_density: f64,
    pub block_move: Option<BlockMove>,
}

/// Ordered record of a chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainTrace {
    pub records: Vec<TraceRecord>,
}

// File layout: labels are 1-based, field order is fixed by declaration order.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    iter: u64,
    c: Vec<usize>,
    logf: f64,
    block: Option<BlockLine>,
}

#[derive(Serialize, Deserialize)]
struct BlockLine {
    proposal: Vec<usize>,
    accepted: bool,
    ratio: f64,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `iter >= burn_in`, keeping every `thin`-th.
    pub fn retained(&self, burn_in: u64, thin: usize) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.iter >= burn_in).step_by(thin.max(1))
    }

    pub fn concat(&self, other: &ChainTrace) -> ChainTrace {
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        ChainTrace { records }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = RecordLine {
                iter: r.iter,
                c: r.assignment.iter().map(|&c| c + 1).collect(),
                logf: r.log_density,
                block: r.block_move.as_ref().map(|b| BlockLine {
                    proposal: b.proposal.iter().map(|&c| c + 1).collect(),
                    accepted: b.accepted,
                    ratio: b.ratio,
                }),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        let mut last: Option<u64> = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine = serde_json::from_str(&line)?;
            if last.is_some_and(|l| rec.iter <= l) {
                return Err(Error::InvalidInput(format!("trace line {}: iterations must increase", n + 1)));
            }
            last = Some(rec.iter);
            let to_zero = |v: Vec<usize>| -> Result<Vec<usize>> {
                v.into_iter()
                    .map(|c| c.checked_sub(1).ok_or_else(|| Error::InvalidInput(format!("trace line {}: label 0", n + 1))))
                    .collect()
            };
            records.push(TraceRecord {
                iter: rec.iter,
                assignment: to_zero(rec.c)?,
                log_density: rec.logf,
                block_move: match rec.block {
                    Some(b) => Some(BlockMove {
                        proposal: to_zero(b.proposal)?,
                        accepted: b.accepted,
                        ratio: b.ratio,
                        attempts: None,
                    }),
                    None => None,
                },
            });
        }
        Ok(Self { records })
    }
}
