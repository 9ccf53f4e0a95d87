//! Universal transmission orders, canonical forms of frame subsets and the
//! canonical-order checker.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::dag::{partition_gops, DependencyDag, FrameId, GopPartition};
use crate::error::{Error, Result};
use crate::mbfs::{build_forest, classify, critical_nodes, ClassLabel, CriticalNodes, MbfsForest};

/// Frames chosen for transmission, in transmission order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct TransmissionSequence {
    order: Vec<FrameId>,
}

impl TransmissionSequence {
    pub fn new(order: Vec<FrameId>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &f in &order {
            if !seen.insert(f) {
                return Err(Error::InvalidSequence(format!("frame {f} appears twice")));
            }
        }
        Ok(TransmissionSequence { order })
    }

    pub fn empty() -> Self {
        TransmissionSequence::default()
    }

    pub fn order(&self) -> &[FrameId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn selected(&self) -> BTreeSet<FrameId> {
        self.order.iter().copied().collect()
    }

    pub fn into_order(self) -> Vec<FrameId> {
        self.order
    }

    /// True if every frame of `self` appears in `other` in the same relative order.
    pub fn is_subsequence_of(&self, other: &[FrameId]) -> bool {
        let mut it = other.iter();
        self.order.iter().all(|f| it.any(|g| g == f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniversalKind {
    Sio,
    QuasiSio,
}

/// A transmission order over all frames that contains an optimal schedule as
/// a subsequence, plus jump tables for the dynamic programs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniversalSequence {
    kind: UniversalKind,
    order: Vec<FrameId>,
    position: Vec<usize>,
    next_irrelevant: Vec<usize>,
    next_iframe: Vec<Option<usize>>,
    base_order: Vec<FrameId>,
    base_skip: Vec<usize>,
    partition: GopPartition,
    critical: CriticalNodes,
}

impl UniversalSequence {
    pub fn kind(&self) -> UniversalKind {
        self.kind
    }

    pub fn order(&self) -> &[FrameId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Rank of `frame` in the order.
    pub fn position(&self, frame: FrameId) -> usize {
        self.position[frame]
    }

    /// Smallest rank after `rank` holding a frame with no dependency relation to
    /// the frame at `rank`; `len()` if there is none.
    pub fn next_irrelevant(&self, rank: usize) -> usize {
        self.next_irrelevant[rank]
    }

    /// Rank of the next GOP's I-frame for an I-frame, if any.
    pub fn next_iframe(&self, frame: FrameId) -> Option<usize> {
        self.next_iframe[frame]
    }

    /// Pre-order walk of the backward-edge-stripped forest. Equal to `order()`
    /// for SIO inputs.
    pub fn base_order(&self) -> &[FrameId] {
        &self.base_order
    }

    /// For each rank of `base_order()`, the rank just past its subtree.
    pub fn base_skip(&self, rank: usize) -> usize {
        self.base_skip[rank]
    }

    pub fn partition(&self) -> &GopPartition {
        &self.partition
    }

    pub fn critical(&self) -> &CriticalNodes {
        &self.critical
    }
}

/// Pre-order walk of each tree, GOPs in display order, children ascending by
/// deadline. Returns the order and, per rank, the rank past the subtree.
fn preorder(forest: &MbfsForest) -> (Vec<FrameId>, Vec<usize>) {
    let mut order = Vec::new();
    let mut skip = Vec::new();
    for tree in forest.trees() {
        let mut stack = vec![tree.root()];
        while let Some(v) = stack.pop() {
            let rank = order.len();
            order.push(v);
            skip.push(rank + forest.range(v).size);
            stack.extend(tree.children(v).iter().rev());
        }
    }
    (order, skip)
}

fn positions(order: &[FrameId]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (rank, &f) in order.iter().enumerate() {
        pos[f] = rank;
    }
    pos
}

fn next_iframes(order: &[FrameId], position: &[usize], partition: &GopPartition) -> Vec<Option<usize>> {
    let mut next = vec![None; order.len()];
    for g in 0..partition.gop_count() {
        next[partition.gop_starts()[g]] = partition.next_iframe(g).map(|i| position[i]);
    }
    next
}

/// `next_irrelevant` by direct scan over ranks.
fn next_irrelevant_scan(dag: &DependencyDag, order: &[FrameId]) -> Vec<usize> {
    let reach = dag.reachability();
    (0..order.len())
        .map(|j| {
            (j + 1..order.len())
                .find(|&k| reach.irrelevant(order[j], order[k]))
                .unwrap_or(order.len())
        })
        .collect()
}

fn wrong_class(expected: &'static str, actual: &ClassLabel) -> Error {
    Error::WrongClass {
        expected,
        actual: actual.name(),
    }
}

/// Universal sequence of an SIO dag.
pub fn sio_universal(dag: &DependencyDag) -> Result<UniversalSequence> {
    let class = classify(dag);
    if class != ClassLabel::Sio {
        return Err(wrong_class("sio", &class));
    }
    let forest = build_forest(dag)?;
    let partition = partition_gops(dag)?;
    Ok(sio_from_parts(&forest, partition))
}

fn sio_from_parts(forest: &MbfsForest, partition: GopPartition) -> UniversalSequence {
    let (order, skip) = preorder(forest);
    let position = positions(&order);
    let next_iframe = next_iframes(&order, &position, &partition);
    let critical = critical_nodes(forest, &partition);
    UniversalSequence {
        kind: UniversalKind::Sio,
        next_irrelevant: skip.clone(),
        base_order: order.clone(),
        base_skip: skip,
        order,
        position,
        next_iframe,
        partition,
        critical,
    }
}

/// Universal sequence of a quasi-SIO dag: the stripped SIO order with each
/// GOP's successor I-frame moved immediately before the GOP's earliest shared frame.
pub fn quasi_sio_universal(dag: &DependencyDag) -> Result<UniversalSequence> {
    let class = classify(dag);
    if class != ClassLabel::QuasiSio {
        return Err(wrong_class("quasi_sio", &class));
    }
    Ok(quasi_from_dag(dag))
}

fn quasi_from_dag(dag: &DependencyDag) -> UniversalSequence {
    let forest = build_forest(dag).expect("classified dag");
    let partition = partition_gops(dag).expect("classified dag");
    let critical = critical_nodes(&forest, &partition);
    let (base_order, base_skip) = preorder(&forest);
    let order = hoist_iframes(&base_order, &partition, |_| true);
    let position = positions(&order);
    let next_iframe = next_iframes(&order, &position, &partition);
    let next_irrelevant = next_irrelevant_scan(dag, &order);
    UniversalSequence {
        kind: UniversalKind::QuasiSio,
        order,
        position,
        next_irrelevant,
        next_iframe,
        base_order,
        base_skip,
        partition,
        critical,
    }
}

/// Filters `base` by `keep`, then moves each kept I-frame right before the
/// first kept shared frame of the GOP preceding it.
fn hoist_iframes(base: &[FrameId], partition: &GopPartition, keep: impl Fn(FrameId) -> bool) -> Vec<FrameId> {
    let mut hoisted = vec![false; partition.gop_count()];
    let mut out = Vec::with_capacity(base.len());
    for &f in base.iter().filter(|&&f| keep(f)) {
        let g = partition.gop_of(f);
        if partition.is_shared(f) && !hoisted[g] {
            if let Some(next) = partition.next_iframe(g).filter(|&i| keep(i)) {
                hoisted[g] = true;
                out.push(next);
            }
        }
        let is_moved_iframe = partition.gop_starts()[g] == f && g > 0 && hoisted[g - 1];
        if !is_moved_iframe {
            out.push(f);
        }
    }
    out
}

/// Universal sequence for an SIO or quasi-SIO dag.
pub fn universal(dag: &DependencyDag) -> Result<UniversalSequence> {
    match classify(dag) {
        ClassLabel::Sio => sio_universal(dag),
        ClassLabel::QuasiSio => Ok(quasi_from_dag(dag)),
        ClassLabel::Neither { witness } => Err(Error::UnsupportedStructure(witness)),
    }
}

/// Canonical transmission order of `selected`: frames with an unselected
/// ancestor are pruned, and the rest follow the universal ordering rules.
pub fn canonical_form(
    selected: &BTreeSet<FrameId>,
    universal: &UniversalSequence,
    dag: &DependencyDag,
) -> TransmissionSequence {
    let keep = decodable_closure(selected, dag);
    let order = match universal.kind {
        UniversalKind::Sio => universal.order.iter().copied().filter(|&f| keep[f]).collect(),
        UniversalKind::QuasiSio => hoist_iframes(&universal.base_order, &universal.partition, |f| keep[f]),
    };
    TransmissionSequence { order }
}

/// Marks frames that are selected and whose whole ancestry is selected.
pub fn decodable_closure(selected: &BTreeSet<FrameId>, dag: &DependencyDag) -> Vec<bool> {
    let mut keep = vec![false; dag.len()];
    for v in dag.topological_order().expect("validated dag") {
        keep[v] = selected.contains(&v) && dag.parents(v).iter().all(|&p| keep[p]);
    }
    keep
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum CanonicalViolation {
    /// `frame` is scheduled but its reference `ancestor` is not scheduled before it.
    DependencyOrder { frame: FrameId, ancestor: FrameId },
    /// `later` has the earlier deadline, is unrelated to `earlier`, and nothing
    /// in between depends on or feeds `earlier`.
    DeadlineOrder { earlier: FrameId, later: FrameId },
}

impl fmt::Display for CanonicalViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalViolation::DependencyOrder { frame, ancestor } => {
                write!(f, "frame {frame} is sent without {ancestor} before it")
            }
            CanonicalViolation::DeadlineOrder { earlier, later } => {
                write!(f, "frame {later} should precede unrelated frame {earlier}")
            }
        }
    }
}

/// Result of [`check_canonical`]: the first violation of each property.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CanonicalReport {
    pub dependency: Option<CanonicalViolation>,
    pub ordering: Option<CanonicalViolation>,
}

impl CanonicalReport {
    pub fn passed(&self) -> bool {
        self.dependency.is_none() && self.ordering.is_none()
    }
}

pub fn check_canonical(seq: &TransmissionSequence, dag: &DependencyDag) -> CanonicalReport {
    let order = seq.order();
    let mut rank = vec![usize::MAX; dag.len()];
    for (r, &f) in order.iter().enumerate() {
        rank[f] = r;
    }
    let reach = dag.reachability();

    let dependency = order.iter().enumerate().find_map(|(r, &f)| {
        reach
            .ancestors_of(f)
            .find(|&a| rank[a] == usize::MAX || rank[a] > r)
            .map(|ancestor| CanonicalViolation::DependencyOrder { frame: f, ancestor })
    });

    let mut ordering = None;
    'outer: for a in 0..order.len() {
        let earlier = order[a];
        let mut bridged = false;
        for &later in &order[a + 1..] {
            if reach.irrelevant(earlier, later)
                && dag.frame(later).deadline < dag.frame(earlier).deadline
                && !bridged
            {
                ordering = Some(CanonicalViolation::DeadlineOrder { earlier, later });
                break 'outer;
            }
            bridged |= reach.related(earlier, later);
        }
    }

    CanonicalReport { dependency, ordering }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{build_dyadic, strip_backward_edges, DagBuilder, FrameKind};

    #[test]
    fn sio_g16b3_gop() {
        let dag = strip_backward_edges(&build_dyadic(16, 3, 1).unwrap());
        let u = sio_universal(&dag).unwrap();
        assert_eq!(u.order(), &[0, 4, 2, 1, 3, 8, 6, 5, 7, 12, 10, 9, 11, 14, 13, 15]);
        assert_eq!(u.next_irrelevant(0), 16);
        assert_eq!(u.next_irrelevant(1), 16);
        assert_eq!(u.next_irrelevant(2), 5);
        assert_eq!(u.next_irrelevant(u.position(3)), 5);
    }

    #[test]
    fn sio_chain() {
        let mut b = DagBuilder::new(vec![FrameKind::I, FrameKind::P, FrameKind::P, FrameKind::P]);
        for v in 1..4 {
            b.add_edge(v - 1, v);
        }
        let u = sio_universal(&b.build().unwrap()).unwrap();
        assert_eq!(u.order(), &[0, 1, 2, 3]);
        assert_eq!(u.next_irrelevant(1), 4);
    }

    #[test]
    fn sio_two_g4b1_gops_are_blocked() {
        let dag = strip_backward_edges(&build_dyadic(4, 1, 2).unwrap());
        let u = sio_universal(&dag).unwrap();
        assert_eq!(u.order(), &[0, 2, 1, 3, 4, 6, 5, 7]);
        assert_eq!(u.next_iframe(0), Some(4));
    }

    #[test]
    fn quasi_g16b3() {
        let dag = build_dyadic(16, 3, 2).unwrap();
        let u = quasi_sio_universal(&dag).unwrap();
        assert_eq!(
            &u.order()[..21],
            &[0, 4, 2, 1, 3, 8, 6, 5, 7, 12, 10, 9, 11, 16, 14, 13, 15, 20, 18, 17, 19]
        );
        assert_eq!(u.next_iframe(0), Some(13));
        assert!(sio_universal(&dag).is_err());
        assert!(quasi_sio_universal(&strip_backward_edges(&dag)).is_err());
    }

    #[test]
    fn next_irrelevant_matches_scan() {
        for dag in [
            strip_backward_edges(&build_dyadic(16, 3, 2).unwrap()),
            build_dyadic(8, 1, 3).unwrap(),
            build_dyadic(16, 15, 2).unwrap(),
        ] {
            let u = universal(&dag).unwrap();
            assert_eq!(u.next_irrelevant, next_irrelevant_scan(&dag, u.order()));
            for rank in 0..u.len() {
                assert!(u.next_irrelevant(rank) > rank);
            }
        }
    }

    #[test]
    fn canonical_form_filters() {
        let dag = strip_backward_edges(&build_dyadic(16, 3, 1).unwrap());
        let u = universal(&dag).unwrap();
        let all: BTreeSet<_> = (0..16).collect();
        assert_eq!(canonical_form(&all, &u, &dag).order(), u.order());
        let some: BTreeSet<_> = [0, 4, 8].into();
        assert_eq!(canonical_form(&some, &u, &dag).order(), &[0, 4, 8]);
        let orphan: BTreeSet<_> = [0, 8, 4, 6, 5, 7, 12].into();
        assert_eq!(canonical_form(&orphan, &u, &dag).order(), &[0, 4, 8, 6, 5, 7, 12]);
        let missing_root: BTreeSet<_> = [4, 8].into();
        assert!(canonical_form(&missing_root, &u, &dag).is_empty());
    }

    #[test]
    fn canonical_form_drops_blocks_behind_missing_iframe() {
        let dag = build_dyadic(16, 3, 2).unwrap();
        let u = universal(&dag).unwrap();
        let selected: BTreeSet<_> = (0..32).filter(|&f| f != 16).collect();
        let seq = canonical_form(&selected, &u, &dag);
        let expected: Vec<_> = (0..13).collect();
        assert_eq!(seq.selected(), expected.into_iter().collect());
        let everything: BTreeSet<_> = (0..32).collect();
        assert_eq!(canonical_form(&everything, &u, &dag).order(), u.order());
    }

    #[test]
    fn check_canonical_cases() {
        for dag in [build_dyadic(16, 3, 2).unwrap(), build_dyadic(8, 1, 1).unwrap()] {
            let u = universal(&dag).unwrap();
            let seq = TransmissionSequence::new(u.order().to_vec()).unwrap();
            assert!(check_canonical(&seq, &dag).passed());
        }
        let mut b = DagBuilder::new(vec![FrameKind::I, FrameKind::P]);
        b.add_edge(0, 1);
        let chain = b.build().unwrap();
        let report = check_canonical(&TransmissionSequence::new(vec![1, 0]).unwrap(), &chain);
        assert_eq!(
            report.dependency,
            Some(CanonicalViolation::DependencyOrder { frame: 1, ancestor: 0 })
        );
        let g4b1 = strip_backward_edges(&build_dyadic(4, 1, 1).unwrap());
        let report = check_canonical(&TransmissionSequence::new(vec![3, 1]).unwrap(), &g4b1);
        assert_eq!(
            report.ordering,
            Some(CanonicalViolation::DeadlineOrder { earlier: 3, later: 1 })
        );
    }

    #[test]
    fn check_canonical_allows_bridged_inversions() {
        // 4 precedes 2 and 1 in a universal order; 2 bridges 4 and 1.
        let dag = build_dyadic(4, 3, 2).unwrap();
        let u = universal(&dag).unwrap();
        assert_eq!(&u.order()[..5], &[0, 4, 2, 1, 3]);
        assert!(check_canonical(&TransmissionSequence::new(vec![0, 4, 2, 1, 3]).unwrap(), &dag).passed());
        let report = check_canonical(&TransmissionSequence::new(vec![0, 4, 1]).unwrap(), &dag);
        assert!(report.dependency.is_some());
    }

    #[test]
    fn duplicate_frames_rejected() {
        assert!(TransmissionSequence::new(vec![0, 1, 0]).is_err());
    }

    #[test]
    fn subsequence_check() {
        let s = TransmissionSequence::new(vec![0, 2]).unwrap();
        assert!(s.is_subsequence_of(&[0, 1, 2]));
        assert!(!s.is_subsequence_of(&[2, 0]));
    }
}
