//! Exhaustive search over ordered frame selections, for small instances.

use crate::dag::{DependencyDag, FrameId};
use crate::dp::LinkConfig;
use crate::error::{Error, Result};
use crate::sim::simulate;
use crate::units::Quality;
use crate::universal::TransmissionSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_frames: usize,
    pub max_horizon: u64,
    /// Only extend sequences with frames whose references were already sent.
    pub dependency_pruning: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_frames: 9,
            max_horizon: 24,
            dependency_pruning: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub reward: Quality,
    pub sequence: TransmissionSequence,
    /// Sequences evaluated.
    pub explored: u64,
}

/// Best back-to-back transmission sequence by exhaustive search. Idle slots
/// are never inserted: delaying a transmission cannot make any frame arrive
/// earlier.
pub fn brute_force(dag: &DependencyDag, link: &LinkConfig, limits: &OracleLimits) -> Result<OracleResult> {
    if dag.len() > limits.max_frames {
        return Err(Error::OracleLimit(format!(
            "{} frames exceed the limit of {}",
            dag.len(),
            limits.max_frames
        )));
    }
    if dag.horizon() > limits.max_horizon {
        return Err(Error::OracleLimit(format!(
            "horizon {} exceeds the limit of {}",
            dag.horizon(),
            limits.max_horizon
        )));
    }
    let mut search = Search {
        dag,
        link,
        horizon: dag.horizon(),
        pruned: limits.dependency_pruning,
        sent: vec![false; dag.len()],
        decoded: vec![0; dag.len()],
        path: Vec::new(),
        best: (Quality::ZERO, Vec::new()),
        explored: 0,
    };
    search.extend(0, Quality::ZERO)?;
    let (reward, order) = search.best;
    Ok(OracleResult {
        reward,
        sequence: TransmissionSequence::new(order)?,
        explored: search.explored,
    })
}

struct Search<'a> {
    dag: &'a DependencyDag,
    link: &'a LinkConfig,
    horizon: u64,
    pruned: bool,
    sent: Vec<bool>,
    /// Decode slot of each sent frame (pruned mode).
    decoded: Vec<u64>,
    path: Vec<FrameId>,
    best: (Quality, Vec<FrameId>),
    explored: u64,
}

impl Search<'_> {
    fn extend(&mut self, t: u64, reward: Quality) -> Result<()> {
        self.explored += 1;
        let reward = if self.pruned {
            reward
        } else {
            let seq = TransmissionSequence::new(self.path.clone())?;
            simulate(&seq, self.dag, self.link, None)?.reward
        };
        if reward > self.best.0 {
            self.best = (reward, self.path.clone());
        }
        if t >= self.horizon {
            return Ok(());
        }
        for f in 0..self.dag.len() {
            if self.sent[f] {
                continue;
            }
            let parents = self.dag.parents(f);
            if self.pruned && !parents.iter().all(|&p| self.sent[p]) {
                continue;
            }
            let end = t + self.link.slots(self.dag.frame(f).size_bits);
            let mut gained = reward;
            if self.pruned {
                let decode = parents.iter().map(|&p| self.decoded[p]).fold(end, u64::max);
                self.decoded[f] = decode;
                if decode <= self.dag.frame(f).deadline {
                    gained += self.dag.frame(f).quality;
                }
            }
            self.sent[f] = true;
            self.path.push(f);
            self.extend(end, gained)?;
            self.path.pop();
            self.sent[f] = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{DagBuilder, FrameKind};

    fn chain(deadlines: &[u64], qualities: &[u64]) -> DependencyDag {
        let kinds = (0..deadlines.len())
            .map(|i| if i == 0 { FrameKind::I } else { FrameKind::P })
            .collect();
        let mut b = DagBuilder::new(kinds);
        for v in 1..deadlines.len() {
            b.add_edge(v - 1, v);
        }
        b.build_with(|id, _| (1, deadlines[id], Quality::from_units(qualities[id])))
            .unwrap()
    }

    #[test]
    fn single_frame() {
        let dag = chain(&[1], &[4]);
        let r = brute_force(&dag, &LinkConfig::new(1).unwrap(), &OracleLimits::default()).unwrap();
        assert_eq!(r.reward, Quality::from_units(4));
        assert_eq!(r.sequence.order(), &[0]);
    }

    #[test]
    fn chain_matches_hand_value() {
        let dag = chain(&[1, 2], &[5, 3]);
        let r = brute_force(&dag, &LinkConfig::new(1).unwrap(), &OracleLimits::default()).unwrap();
        assert_eq!(r.reward, Quality::from_units(8));
        let dag = chain(&[0, 2], &[5, 3]);
        let r = brute_force(&dag, &LinkConfig::new(1).unwrap(), &OracleLimits::default()).unwrap();
        assert_eq!(r.reward, Quality::from_units(3));
    }

    #[test]
    fn limits_are_enforced() {
        let dag = chain(&(1..=10).collect::<Vec<_>>(), &[1; 10]);
        assert!(matches!(
            brute_force(&dag, &LinkConfig::new(1).unwrap(), &OracleLimits::default()),
            Err(Error::OracleLimit(_))
        ));
        let dag = chain(&[30], &[1]);
        assert!(brute_force(&dag, &LinkConfig::new(1).unwrap(), &OracleLimits::default()).is_err());
    }

    #[test]
    fn unpruned_search_agrees() {
        let dag = chain(&[0, 2, 3], &[5, 3, 1]);
        let link = LinkConfig::new(1).unwrap();
        let pruned = brute_force(&dag, &link, &OracleLimits::default()).unwrap();
        let full = brute_force(
            &dag,
            &link,
            &OracleLimits {
                dependency_pruning: false,
                ..OracleLimits::default()
            },
        )
        .unwrap();
        assert_eq!(pruned.reward, full.reward);
        assert!(full.explored > pruned.explored);
    }
}
