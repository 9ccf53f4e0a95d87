//! Greedy deadline-driven schedulers used for comparison.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dag::{DependencyDag, FrameId, FrameKind};
use crate::dp::LinkConfig;
use crate::error::{Error, Result};
use crate::sim::{simulate, SimulationResult};
use crate::units::Quality;
use crate::universal::{universal, TransmissionSequence, UniversalSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Optimal,
    Edf,
    Doedf,
    Pbedf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Optimal, Algorithm::Edf, Algorithm::Doedf, Algorithm::Pbedf];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Optimal => "optimal",
            Algorithm::Edf => "edf",
            Algorithm::Doedf => "doedf",
            Algorithm::Pbedf => "pbedf",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameters(format!("unknown algorithm {s:?}")))
    }
}

impl Serialize for Algorithm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineResult {
    pub algorithm: Algorithm,
    pub reward: Quality,
    /// Block size chosen by PBEDF.
    pub block_size: Option<usize>,
    pub simulation: SimulationResult,
}

impl BaselineResult {
    pub fn sequence(&self) -> &TransmissionSequence {
        self.simulation.sequence()
    }
}

/// Walks `order`, sending each frame back-to-back unless it would finish after
/// its deadline or one of its references was already skipped.
fn greedy(order: impl IntoIterator<Item = FrameId>, dag: &DependencyDag, link: &LinkConfig) -> Result<SimulationResult> {
    let mut skipped = vec![false; dag.len()];
    let mut sent = Vec::new();
    let mut t = 0u64;
    for f in order {
        let frame = dag.frame(f);
        let end = t + link.slots(frame.size_bits);
        if end > frame.deadline || dag.parents(f).iter().any(|&p| skipped[p]) {
            skipped[f] = true;
            continue;
        }
        sent.push(f);
        t = end;
    }
    simulate(&TransmissionSequence::new(sent)?, dag, link, None)
}

fn result(algorithm: Algorithm, simulation: SimulationResult, block_size: Option<usize>) -> BaselineResult {
    BaselineResult {
        algorithm,
        reward: simulation.reward,
        block_size,
        simulation,
    }
}

/// Earliest deadline first: display order.
pub fn edf(dag: &DependencyDag, link: &LinkConfig) -> Result<BaselineResult> {
    Ok(result(Algorithm::Edf, greedy(0..dag.len(), dag, link)?, None))
}

/// The same greedy rule in decoding order.
pub fn doedf(dag: &DependencyDag, link: &LinkConfig, universal: Option<&UniversalSequence>) -> Result<BaselineResult> {
    let order = decode_order(dag, universal)?;
    Ok(result(Algorithm::Doedf, greedy(order, dag, link)?, None))
}

/// The universal sequence when the structure has one, else the smallest-id
/// topological order.
pub fn decode_order(dag: &DependencyDag, known: Option<&UniversalSequence>) -> Result<Vec<FrameId>> {
    if let Some(u) = known {
        return Ok(u.order().to_vec());
    }
    match universal(dag) {
        Ok(u) => Ok(u.order().to_vec()),
        Err(Error::UnsupportedStructure(_)) => dag.topological_order(),
        Err(e) => Err(e),
    }
}

/// Display order cut into blocks of `block_size`; each block sends I-frames,
/// then P-frames, then B-frames.
pub fn pbedf_order(dag: &DependencyDag, block_size: usize) -> Result<Vec<FrameId>> {
    if block_size == 0 {
        return Err(Error::InvalidParameters("PBEDF block size must be at least 1".into()));
    }
    let mut order = Vec::with_capacity(dag.len());
    for block in (0..dag.len()).collect::<Vec<_>>().chunks(block_size) {
        for kind in [FrameKind::I, FrameKind::P, FrameKind::B] {
            order.extend(block.iter().copied().filter(|&f| dag.frame(f).kind == kind));
        }
    }
    Ok(order)
}

pub fn pbedf(dag: &DependencyDag, link: &LinkConfig, block_size: usize) -> Result<BaselineResult> {
    let order = pbedf_order(dag, block_size)?;
    Ok(result(Algorithm::Pbedf, greedy(order, dag, link)?, Some(block_size)))
}

/// PBEDF with the best block size in `1..=N`; ties go to the smallest size.
pub fn pbedf_best(dag: &DependencyDag, link: &LinkConfig) -> Result<BaselineResult> {
    let best = (1..=dag.len().max(1))
        .into_par_iter()
        .map(|m| Ok((pbedf_reward(dag, link, m)?, m)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by_key(|&(reward, m)| (std::cmp::Reverse(reward), m))
        .expect("at least one block size");
    pbedf(dag, link, best.1)
}

fn pbedf_reward(dag: &DependencyDag, link: &LinkConfig, block_size: usize) -> Result<Quality> {
    Ok(greedy(pbedf_order(dag, block_size)?, dag, link)?.reward)
}

/// Runs a baseline by name; `Optimal` is not a baseline.
pub fn run_baseline(
    algorithm: Algorithm,
    dag: &DependencyDag,
    link: &LinkConfig,
    universal: Option<&UniversalSequence>,
) -> Result<BaselineResult> {
    match algorithm {
        Algorithm::Edf => edf(dag, link),
        Algorithm::Doedf => doedf(dag, link, universal),
        Algorithm::Pbedf => pbedf_best(dag, link),
        Algorithm::Optimal => Err(Error::InvalidParameters("optimal is not a baseline".into())),
    }
}
