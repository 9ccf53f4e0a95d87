//! Replays transmission sequences over a fixed-capacity slotted link.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::dag::{DependencyDag, FrameId};
use crate::dp::{FrameStatus, LinkConfig};
use crate::error::{Error, Result};
use crate::units::{slots_for, Quality};
use crate::universal::{universal, TransmissionSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulationResult {
    pub reward: Quality,
    pub status: Vec<FrameStatus>,
    /// Slot at which each sent frame starts transmitting.
    pub start: Vec<Option<u64>>,
    /// Slot at which each sent frame has fully arrived.
    pub finish: Vec<Option<u64>>,
    /// Earliest slot at which the frame and all its references are available.
    pub decoded: Vec<Option<u64>>,
    sequence: TransmissionSequence,
}

impl SimulationResult {
    pub fn sequence(&self) -> &TransmissionSequence {
        &self.sequence
    }

    pub fn successful(&self) -> impl Iterator<Item = FrameId> + '_ {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == FrameStatus::Successful)
            .map(|(f, _)| f)
    }

    pub fn is_lossless(&self) -> bool {
        self.status.iter().all(|s| *s == FrameStatus::Successful)
    }
}

impl Serialize for SimulationResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry {
            frame: FrameId,
            start: u64,
            end: u64,
            status: FrameStatus,
        }
        let schedule: Vec<Entry> = self
            .sequence
            .order()
            .iter()
            .map(|&f| Entry {
                frame: f,
                start: self.start[f].unwrap(),
                end: self.finish[f].unwrap(),
                status: self.status[f],
            })
            .collect();
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("reward", &self.reward)?;
        m.serialize_entry("schedule", &schedule)?;
        m.serialize_entry("status", &self.status)?;
        m.end()
    }
}

/// Sends `seq` in order. Without `start_times` frames go back-to-back from slot
/// 0; explicit start times may leave gaps but must not overlap.
pub fn simulate(
    seq: &TransmissionSequence,
    dag: &DependencyDag,
    link: &LinkConfig,
    start_times: Option<&[u64]>,
) -> Result<SimulationResult> {
    let n = dag.len();
    if let Some(times) = start_times {
        if times.len() != seq.len() {
            return Err(Error::InvalidSequence(format!(
                "{} start times for {} frames",
                times.len(),
                seq.len()
            )));
        }
    }
    let mut start = vec![None; n];
    let mut finish = vec![None; n];
    let mut busy_until = 0u64;
    for (i, &f) in seq.order().iter().enumerate() {
        if f >= n {
            return Err(Error::InvalidSequence(format!("unknown frame {f}")));
        }
        let t = match start_times {
            Some(times) => {
                if times[i] < busy_until {
                    return Err(Error::Overlap {
                        frame: f,
                        start: times[i],
                        busy_until,
                    });
                }
                times[i]
            }
            None => busy_until,
        };
        let end = t + slots_for(dag.frame(f).size_bits, link.capacity);
        start[f] = Some(t);
        finish[f] = Some(end);
        busy_until = end;
    }

    let mut decoded: Vec<Option<u64>> = vec![None; n];
    for v in dag.topological_order()? {
        decoded[v] = finish[v].and_then(|own| {
            dag.parents(v)
                .iter()
                .try_fold(own, |acc, &p| decoded[p].map(|d| acc.max(d)))
        });
    }

    let mut reward = Quality::ZERO;
    let status = (0..n)
        .map(|v| match (finish[v], decoded[v]) {
            (None, _) => FrameStatus::Dropped,
            (Some(_), Some(d)) if d <= dag.frame(v).deadline => {
                reward += dag.frame(v).quality;
                FrameStatus::Successful
            }
            _ => FrameStatus::TransmittedUnsuccessful,
        })
        .collect();

    Ok(SimulationResult {
        reward,
        status,
        start,
        finish,
        decoded,
        sequence: seq.clone(),
    })
}

/// Smallest capacity in `1..=upper` satisfying a predicate that is monotone in
/// capacity, or `None` if even `upper` fails.
pub fn min_capacity(upper: u64, mut ok: impl FnMut(u64) -> Result<bool>) -> Result<Option<u64>> {
    let upper = upper.max(1);
    if !ok(upper)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1u64, upper);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(hi))
}

/// Smallest capacity at which the optimal schedule delivers every frame, or
/// `None` if frames miss deadlines even at one slot per frame.
pub fn lossless_capacity(dag: &DependencyDag) -> Result<Option<u64>> {
    let order = TransmissionSequence::new(universal(dag)?.order().to_vec())?;
    let max_size = dag.frames().iter().map(|f| f.size_bits).max().unwrap_or(1);
    min_capacity(max_size, |c| {
        Ok(simulate(&order, dag, &LinkConfig::new(c)?, None)?.is_lossless())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{DagBuilder, FrameKind};

    fn chain(sizes: &[u64], deadlines: &[u64], qualities: &[u64]) -> DependencyDag {
        let kinds = (0..sizes.len()).map(|i| if i == 0 { FrameKind::I } else { FrameKind::P }).collect();
        let mut b = DagBuilder::new(kinds);
        for v in 1..sizes.len() {
            b.add_edge(v - 1, v);
        }
        b.build_with(|id, _| (sizes[id], deadlines[id], Quality::from_units(qualities[id])))
            .unwrap()
    }

    fn seq(order: &[FrameId]) -> TransmissionSequence {
        TransmissionSequence::new(order.to_vec()).unwrap()
    }

    #[test]
    fn back_to_back_success() {
        let dag = chain(&[2, 1], &[2, 3], &[5, 3]);
        let r = simulate(&seq(&[0, 1]), &dag, &LinkConfig::new(1).unwrap(), None).unwrap();
        assert_eq!(r.finish, vec![Some(2), Some(3)]);
        assert_eq!(r.reward, Quality::from_units(8));
    }

    #[test]
    fn empty_sequence() {
        let dag = chain(&[2, 1], &[2, 3], &[5, 3]);
        let r = simulate(&seq(&[]), &dag, &LinkConfig::new(1).unwrap(), None).unwrap();
        assert_eq!(r.reward, Quality::ZERO);
        assert!(r.status.iter().all(|s| *s == FrameStatus::Dropped));
    }

    #[test]
    fn late_reference_still_helps() {
        let dag = chain(&[2, 1], &[1, 3], &[5, 3]);
        let r = simulate(&seq(&[0, 1]), &dag, &LinkConfig::new(1).unwrap(), None).unwrap();
        assert_eq!(r.status, vec![FrameStatus::TransmittedUnsuccessful, FrameStatus::Successful]);
        assert_eq!(r.reward, Quality::from_units(3));
    }

    #[test]
    fn missing_reference_breaks_decoding() {
        let dag = chain(&[1, 1], &[5, 6], &[5, 3]);
        let r = simulate(&seq(&[1]), &dag, &LinkConfig::new(1).unwrap(), None).unwrap();
        assert_eq!(r.status[1], FrameStatus::TransmittedUnsuccessful);
        assert_eq!(r.reward, Quality::ZERO);
    }

    #[test]
    fn reference_after_child_delays_decoding() {
        let dag = chain(&[1, 1], &[1, 3], &[5, 3]);
        let r = simulate(&seq(&[1, 0]), &dag, &LinkConfig::new(1).unwrap(), None).unwrap();
        assert_eq!(r.decoded, vec![Some(2), Some(2)]);
        assert_eq!(r.status, vec![FrameStatus::TransmittedUnsuccessful, FrameStatus::Successful]);
    }

    #[test]
    fn explicit_start_times() {
        let dag = chain(&[2, 1], &[2, 9], &[5, 3]);
        let link = LinkConfig::new(1).unwrap();
        let r = simulate(&seq(&[0, 1]), &dag, &link, Some(&[0, 5])).unwrap();
        assert_eq!(r.finish[1], Some(6));
        assert!(matches!(
            simulate(&seq(&[0, 1]), &dag, &link, Some(&[0, 1])),
            Err(Error::Overlap { frame: 1, .. })
        ));
        assert!(simulate(&seq(&[0, 1]), &dag, &link, Some(&[0])).is_err());
    }

    #[test]
    fn lossless_capacity_examples() {
        let single = chain(&[1000], &[10], &[1]);
        assert_eq!(lossless_capacity(&single).unwrap(), Some(100));
        let pair = chain(&[4, 4], &[2, 4], &[1, 1]);
        assert_eq!(lossless_capacity(&pair).unwrap(), Some(2));
        let impossible = chain(&[4, 4], &[0, 1], &[1, 1]);
        assert_eq!(lossless_capacity(&impossible).unwrap(), None);
    }
}
