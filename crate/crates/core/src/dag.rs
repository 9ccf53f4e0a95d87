//! Frames, the prediction DAG, GOP partitioning and dyadic `GnBm` generators.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::Quality;

/// Display index of a frame, starting at 0.
pub type FrameId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    I,
    P,
    B,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            FrameKind::I => "I",
            FrameKind::P => "P",
            FrameKind::B => "B",
        };
        f.write_str(c)
    }
}

impl FromStr for FrameKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" => Ok(FrameKind::I),
            "P" | "p" => Ok(FrameKind::P),
            "B" | "b" => Ok(FrameKind::B),
            other => Err(Error::InvalidParameters(format!("unknown frame kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub id: FrameId,
    pub kind: FrameKind,
    pub size_bits: u64,
    /// Display deadline in timeslots.
    pub deadline: u64,
    pub quality: Quality,
}

/// Frames plus direct prediction dependencies (`parent -> child`).
///
/// Parent and child lists are sorted by id. The structure is immutable once
/// built; every constructor validates the frame and edge invariants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyDag {
    frames: Vec<Frame>,
    parents: Vec<Vec<FrameId>>,
    children: Vec<Vec<FrameId>>,
    /// GOP index per frame; `None` only for frames preceding the first I-frame.
    gop_of: Vec<Option<usize>>,
    iframes: Vec<FrameId>,
}

impl DependencyDag {
    pub fn new(frames: Vec<Frame>, edges: impl IntoIterator<Item = (FrameId, FrameId)>) -> Result<Self> {
        let n = frames.len();
        let mut parents = vec![BTreeSet::new(); n];
        for (parent, child) in edges {
            if parent >= n || child >= n {
                return Err(Error::InvalidEdge {
                    parent,
                    child,
                    reason: format!("frame id out of range (have {n} frames)"),
                });
            }
            if parent == child {
                return Err(Error::InvalidEdge {
                    parent,
                    child,
                    reason: "self dependency".into(),
                });
            }
            parents[child].insert(parent);
        }
        Self::from_parent_sets(frames, parents.into_iter().map(|s| s.into_iter().collect()).collect())
    }

    fn from_parent_sets(frames: Vec<Frame>, parents: Vec<Vec<FrameId>>) -> Result<Self> {
        let n = frames.len();
        let mut previous: Option<u64> = None;
        for (i, frame) in frames.iter().enumerate() {
            if frame.id != i {
                return Err(Error::InvalidFrame {
                    frame: frame.id,
                    reason: format!("ids must be contiguous display indices, expected {i}"),
                });
            }
            if frame.size_bits == 0 {
                return Err(Error::InvalidFrame {
                    frame: i,
                    reason: "size_bits must be positive".into(),
                });
            }
            if let Some(prev) = previous {
                if frame.deadline <= prev {
                    return Err(Error::DeadlineOrder {
                        frame: i,
                        deadline: frame.deadline,
                        previous: prev,
                    });
                }
            }
            previous = Some(frame.deadline);
        }

        let iframes: Vec<FrameId> = frames.iter().filter(|f| f.kind == FrameKind::I).map(|f| f.id).collect();
        let mut gop_of = vec![None; n];
        let mut gop = None;
        for frame in &frames {
            if frame.kind == FrameKind::I {
                gop = Some(gop.map_or(0, |g| g + 1));
            }
            gop_of[frame.id] = gop;
        }

        let mut children = vec![Vec::new(); n];
        for (child, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(child);
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }

        let dag = DependencyDag {
            frames,
            parents,
            children,
            gop_of,
            iframes,
        };
        dag.validate_edges()?;
        dag.topological_order()?;
        Ok(dag)
    }

    fn validate_edges(&self) -> Result<()> {
        for frame in &self.frames {
            let id = frame.id;
            let ps = &self.parents[id];
            let edge_err = |parent: FrameId, reason: &str| Error::InvalidEdge {
                parent,
                child: id,
                reason: reason.to_string(),
            };
            match frame.kind {
                FrameKind::I => {
                    if let Some(&p) = ps.first() {
                        return Err(edge_err(p, "I-frames have no dependencies"));
                    }
                }
                FrameKind::P => {
                    if ps.len() != 1 {
                        return Err(Error::InvalidFrame {
                            frame: id,
                            reason: format!("P-frames need exactly one reference, found {}", ps.len()),
                        });
                    }
                    let p = ps[0];
                    if p > id || self.frames[p].kind == FrameKind::B {
                        return Err(edge_err(p, "P-frames reference a preceding non-B frame"));
                    }
                    if self.gop_of[p] != self.gop_of[id] {
                        return Err(edge_err(p, "P-frame reference outside its GOP"));
                    }
                }
                FrameKind::B => {
                    let before: Vec<_> = ps.iter().filter(|&&p| p < id).collect();
                    let after: Vec<_> = ps.iter().filter(|&&p| p > id).collect();
                    if before.len() != 1 || after.len() > 1 {
                        return Err(Error::InvalidFrame {
                            frame: id,
                            reason: "B-frames reference one preceding and at most one succeeding frame".into(),
                        });
                    }
                    let p = *before[0];
                    if self.gop_of[p] != self.gop_of[id] {
                        return Err(edge_err(p, "B-frame forward reference outside its GOP"));
                    }
                    if let Some(&&s) = after.first() {
                        let same_gop = self.gop_of[s] == self.gop_of[id];
                        let next_i = self.frames[s].kind == FrameKind::I
                            && match (self.gop_of[s], self.gop_of[id]) {
                                (Some(a), Some(b)) => a == b + 1,
                                _ => false,
                            };
                        if !same_gop && !next_i {
                            return Err(edge_err(s, "backward reference must stay in the GOP or be the next I-frame"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Kahn's algorithm, smallest id first. Errors on cycles.
    pub fn topological_order(&self) -> Result<Vec<FrameId>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut heap: BinaryHeap<Reverse<FrameId>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = heap.pop() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    heap.push(Reverse(c));
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap();
            return Err(Error::Cycle(stuck));
        }
        Ok(order)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, id: FrameId) -> &Frame {
        &self.frames[id]
    }

    pub fn parents(&self, id: FrameId) -> &[FrameId] {
        &self.parents[id]
    }

    pub fn children(&self, id: FrameId) -> &[FrameId] {
        &self.children[id]
    }

    pub fn iframes(&self) -> &[FrameId] {
        &self.iframes
    }

    pub fn gop_of(&self, id: FrameId) -> Option<usize> {
        self.gop_of[id]
    }

    pub fn total_quality(&self) -> Quality {
        self.frames.iter().map(|f| f.quality).sum()
    }

    pub fn horizon(&self) -> u64 {
        self.frames.last().map_or(0, |f| f.deadline)
    }

    /// All edges as `(parent, child)`, ascending by parent then child.
    pub fn edges(&self) -> Vec<(FrameId, FrameId)> {
        let mut edges: Vec<_> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Same edges, new per-frame attributes. `f` receives the current frame and
    /// returns `(size_bits, deadline, quality)`.
    pub fn map_frames(&self, mut f: impl FnMut(&Frame) -> (u64, u64, Quality)) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|frame| {
                let (size_bits, deadline, quality) = f(frame);
                Frame {
                    id: frame.id,
                    kind: frame.kind,
                    size_bits,
                    deadline,
                    quality,
                }
            })
            .collect();
        Self::from_parent_sets(frames, self.parents.clone())
    }

    /// True if `edge` goes from an I-frame into the GOP before it.
    pub fn is_backward_edge(&self, parent: FrameId, child: FrameId) -> bool {
        self.frames[parent].kind == FrameKind::I
            && match (self.gop_of[parent], self.gop_of[child]) {
                (Some(gp), Some(gc)) => gc + 1 == gp,
                _ => false,
            }
    }

    pub fn has_backward_edges(&self) -> bool {
        self.edges().iter().any(|&(p, c)| self.is_backward_edge(p, c))
    }

    /// Transitive ancestor sets.
    pub fn reachability(&self) -> Reachability {
        Reachability::new(self)
    }
}

/// Removes every edge from an I-frame into the preceding GOP; all other edges are kept.
pub fn strip_backward_edges(dag: &DependencyDag) -> DependencyDag {
    let parents = (0..dag.len())
        .map(|c| dag.parents(c).iter().copied().filter(|&p| !dag.is_backward_edge(p, c)).collect())
        .collect();
    DependencyDag::from_parent_sets(dag.frames.clone(), parents)
        .expect("removing backward edges keeps a valid dag")
}

/// Ancestor bitsets: `is_ancestor(a, b)` iff `b` depends on `a` transitively.
#[derive(Clone, Debug)]
pub struct Reachability {
    words: usize,
    ancestors: Vec<u64>,
}

impl Reachability {
    fn new(dag: &DependencyDag) -> Self {
        let n = dag.len();
        let words = n.div_ceil(64).max(1);
        let mut ancestors = vec![0u64; n * words];
        let order = dag.topological_order().expect("validated dag is acyclic");
        for v in order {
            for &p in dag.parents(v) {
                let (lo, hi) = if p < v { (p, v) } else { (v, p) };
                let (head, tail) = ancestors.split_at_mut(hi * words);
                let (src, dst) = if p < v {
                    (&head[lo * words..(lo + 1) * words], &mut tail[..words])
                } else {
                    (&tail[..words], &mut head[lo * words..(lo + 1) * words])
                };
                for (d, s) in dst.iter_mut().zip(src) {
                    *d |= *s;
                }
                ancestors[v * words + p / 64] |= 1 << (p % 64);
            }
        }
        Reachability { words, ancestors }
    }

    pub fn is_ancestor(&self, ancestor: FrameId, of: FrameId) -> bool {
        self.ancestors[of * self.words + ancestor / 64] & (1 << (ancestor % 64)) != 0
    }

    pub fn related(&self, a: FrameId, b: FrameId) -> bool {
        a == b || self.is_ancestor(a, b) || self.is_ancestor(b, a)
    }

    /// No ancestor/descendant relation in either direction.
    pub fn irrelevant(&self, a: FrameId, b: FrameId) -> bool {
        !self.related(a, b)
    }

    pub fn ancestors_of(&self, of: FrameId) -> impl Iterator<Item = FrameId> + '_ {
        let row = &self.ancestors[of * self.words..(of + 1) * self.words];
        row.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b)
        })
    }
}

/// GOP boundaries, plus each GOP's non-I and shared frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GopPartition {
    gop_starts: Vec<FrameId>,
    gop_of: Vec<usize>,
    non_iframes: Vec<Vec<FrameId>>,
    shared: Vec<Vec<FrameId>>,
    is_shared: Vec<bool>,
    len: usize,
}

impl GopPartition {
    pub fn gop_count(&self) -> usize {
        self.gop_starts.len()
    }

    /// First frame of each GOP, in display order.
    pub fn gop_starts(&self) -> &[FrameId] {
        &self.gop_starts
    }

    pub fn gop_of(&self, id: FrameId) -> usize {
        self.gop_of[id]
    }

    /// Display range of the GOP.
    pub fn gop_range(&self, gop: usize) -> std::ops::Range<FrameId> {
        let end = self.gop_starts.get(gop + 1).copied().unwrap_or(self.len);
        self.gop_starts[gop]..end
    }

    /// I-frame of the following GOP, if any.
    pub fn next_iframe(&self, gop: usize) -> Option<FrameId> {
        self.gop_starts.get(gop + 1).copied()
    }

    /// Non-I frames of the GOP.
    pub fn non_iframes(&self, gop: usize) -> &[FrameId] {
        &self.non_iframes[gop]
    }

    /// Frames of the GOP descending from both its own and the next I-frame.
    pub fn shared(&self, gop: usize) -> &[FrameId] {
        &self.shared[gop]
    }

    pub fn is_shared(&self, id: FrameId) -> bool {
        self.is_shared[id]
    }

    /// Non-I frames of the GOP followed by the next GOP's I-frame, if any.
    pub fn merged(&self, gop: usize) -> Vec<FrameId> {
        let mut m = self.non_iframes[gop].clone();
        m.extend(self.next_iframe(gop));
        m
    }
}

pub fn partition_gops(dag: &DependencyDag) -> Result<GopPartition> {
    match dag.frames.first() {
        None => return Err(Error::InvalidParameters("empty frame sequence".into())),
        Some(f) if f.kind != FrameKind::I => {
            return Err(Error::InvalidFrame {
                frame: 0,
                reason: "sequence must start with an I-frame".into(),
            })
        }
        _ => {}
    }
    let reach = dag.reachability();
    let gop_starts = dag.iframes.clone();
    let gop_of: Vec<usize> = dag.gop_of.iter().map(|g| g.expect("first frame is an I-frame")).collect();
    let gops = gop_starts.len();
    let mut non_iframes = vec![Vec::new(); gops];
    let mut shared = vec![Vec::new(); gops];
    let mut is_shared = vec![false; dag.len()];
    for frame in &dag.frames {
        if frame.kind == FrameKind::I {
            continue;
        }
        let g = gop_of[frame.id];
        non_iframes[g].push(frame.id);
        if let Some(&next) = gop_starts.get(g + 1) {
            if reach.is_ancestor(gop_starts[g], frame.id) && reach.is_ancestor(next, frame.id) {
                shared[g].push(frame.id);
                is_shared[frame.id] = true;
            }
        }
    }
    Ok(GopPartition {
        gop_starts,
        gop_of,
        non_iframes,
        shared,
        is_shared,
        len: dag.len(),
    })
}

/// Hierarchical dyadic pattern `GnBm`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GopPattern {
    pub gop_size: usize,
    pub b_run: usize,
}

impl GopPattern {
    pub fn new(gop_size: usize, b_run: usize) -> Result<Self> {
        if gop_size == 0 || !gop_size.is_power_of_two() {
            return Err(Error::InvalidParameters(format!("GOP size {gop_size} is not a power of two")));
        }
        if !(b_run + 1).is_power_of_two() {
            return Err(Error::InvalidParameters(format!("B-run length {b_run} is not 2^w - 1")));
        }
        if !gop_size.is_multiple_of(b_run + 1) {
            return Err(Error::InvalidParameters(format!(
                "B-run length {b_run} + 1 does not divide GOP size {gop_size}"
            )));
        }
        Ok(GopPattern { gop_size, b_run })
    }

    /// Kind of the frame at display index `id`.
    pub fn kind_at(&self, id: FrameId) -> FrameKind {
        let r = id % self.gop_size;
        if r == 0 {
            FrameKind::I
        } else if r.is_multiple_of(self.b_run + 1) {
            FrameKind::P
        } else {
            FrameKind::B
        }
    }
}

impl fmt::Display for GopPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}B{}", self.gop_size, self.b_run)
    }
}

impl FromStr for GopPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameters(format!("pattern {s:?} is not of the form GnBm"));
        let rest = s.trim().strip_prefix(['G', 'g']).ok_or_else(bad)?;
        let (n, m) = rest.split_once(['B', 'b']).ok_or_else(bad)?;
        GopPattern::new(n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for GopPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GopPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Mutable frame kinds and parent sets, for generators. Edges touching frames
/// outside `0..len` are silently omitted (a missing next I-frame, a truncated
/// trace).
#[derive(Clone, Debug)]
pub struct DagBuilder {
    kinds: Vec<FrameKind>,
    parents: Vec<BTreeSet<FrameId>>,
}

impl DagBuilder {
    pub fn new(kinds: Vec<FrameKind>) -> Self {
        let parents = vec![BTreeSet::new(); kinds.len()];
        DagBuilder { kinds, parents }
    }

    pub fn from_dag(dag: &DependencyDag) -> Self {
        DagBuilder {
            kinds: dag.frames.iter().map(|f| f.kind).collect(),
            parents: dag.parents.iter().map(|ps| ps.iter().copied().collect()).collect(),
        }
    }

    pub fn add_edge(&mut self, parent: FrameId, child: FrameId) {
        if parent < self.kinds.len() && child < self.kinds.len() {
            self.parents[child].insert(parent);
        }
    }

    pub fn parents(&self, id: FrameId) -> impl Iterator<Item = FrameId> + '_ {
        self.parents[id].iter().copied()
    }

    /// Midpoint recursion filling the B-run strictly between `i` and `j`.
    pub fn dyadic_build(&mut self, i: FrameId, j: FrameId) {
        let span = i.abs_diff(j);
        if span <= 1 || !span.is_power_of_two() {
            return;
        }
        let mid = (i + j) / 2;
        self.add_edge(i, mid);
        self.add_edge(j, mid);
        self.dyadic_build(i, mid);
        self.dyadic_build(mid, j);
    }

    /// Finishes with unit attributes: size 1 bit, deadline = id, quality 1.
    pub fn build(self) -> Result<DependencyDag> {
        self.build_with(|id, _| (1, id as u64, Quality::from_units(1)))
    }

    /// Finishes with `(size_bits, deadline, quality)` from `attrs(id, kind)`.
    pub fn build_with(self, mut attrs: impl FnMut(FrameId, FrameKind) -> (u64, u64, Quality)) -> Result<DependencyDag> {
        let frames: Vec<Frame> = self
            .kinds
            .iter()
            .enumerate()
            .map(|(id, &kind)| {
                let (size_bits, deadline, quality) = attrs(id, kind);
                Frame {
                    id,
                    kind,
                    size_bits,
                    deadline,
                    quality,
                }
            })
            .collect();
        let parents = self.parents.into_iter().map(|s| s.into_iter().collect()).collect();
        DependencyDag::from_parent_sets(frames, parents)
    }
}

/// Adds the dyadic B-run edges between `i` and `j` to a copy of `dag`.
pub fn dyadic_build(i: FrameId, j: FrameId, dag: &DependencyDag) -> Result<DependencyDag> {
    let mut builder = DagBuilder::from_dag(dag);
    builder.dyadic_build(i, j);
    let parents = builder.parents.into_iter().map(|s| s.into_iter().collect()).collect();
    DependencyDag::from_parent_sets(dag.frames.clone(), parents)
}

/// `num_gops` complete GOPs of `GnBm`, with unit frame attributes.
pub fn build_dyadic(gop_size: usize, b_run: usize, num_gops: usize) -> Result<DependencyDag> {
    if num_gops == 0 {
        return Err(Error::InvalidParameters("need at least one GOP".into()));
    }
    let pattern = GopPattern::new(gop_size, b_run)?;
    pattern_builder(pattern, gop_size * num_gops).build()
}

/// `frame_count` frames following `pattern`; the last GOP may be partial, and
/// references to frames past the end are omitted.
pub fn pattern_builder(pattern: GopPattern, frame_count: usize) -> DagBuilder {
    let kinds = (0..frame_count).map(|id| pattern.kind_at(id)).collect();
    let mut builder = DagBuilder::new(kinds);
    let step = pattern.b_run + 1;
    let mut anchor = 0;
    while anchor < frame_count {
        let next = anchor + step;
        if pattern.kind_at(anchor) == FrameKind::P {
            builder.add_edge(anchor - step, anchor);
        }
        builder.dyadic_build(anchor, next);
        anchor = next;
    }
    builder
}

#[derive(Serialize, Deserialize)]
struct DagDocument {
    frames: Vec<Frame>,
    edges: Vec<[FrameId; 2]>,
}

impl Serialize for DependencyDag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DagDocument {
            frames: self.frames.clone(),
            edges: self.edges().into_iter().map(|(p, c)| [p, c]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DependencyDag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = DagDocument::deserialize(d)?;
        DependencyDag::new(doc.frames, doc.edges.into_iter().map(|[p, c]| (p, c))).map_err(serde::de::Error::custom)
    }
}
