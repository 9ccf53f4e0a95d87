//! Per-GOP MBFS trees, subtree deadline ranges, structure classification and
//! critical nodes.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::dag::{partition_gops, strip_backward_edges, DependencyDag, FrameId, FrameKind, GopPartition};
use crate::error::{Error, Result};

/// Breadth-first tree over one GOP where a frame is only attached once all of
/// its references have been dequeued.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbfsTree {
    root: FrameId,
    /// Visit order.
    nodes: Vec<FrameId>,
    children: BTreeMap<FrameId, Vec<FrameId>>,
    parent: BTreeMap<FrameId, FrameId>,
}

impl MbfsTree {
    pub fn root(&self) -> FrameId {
        self.root
    }

    pub fn nodes(&self) -> &[FrameId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: FrameId) -> bool {
        id == self.root || self.parent.contains_key(&id)
    }

    /// Children in ascending deadline order.
    pub fn children(&self, id: FrameId) -> &[FrameId] {
        self.children.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn parent(&self, id: FrameId) -> Option<FrameId> {
        self.parent.get(&id).copied()
    }

    /// Tree edges, parents in visit order and children in stored order.
    pub fn edges(&self) -> Vec<(FrameId, FrameId)> {
        self.nodes
            .iter()
            .flat_map(|&p| self.children(p).iter().map(move |&c| (p, c)))
            .collect()
    }
}

/// Runs MBFS from `root`. Only references inside the root's GOP are
/// considered, so backward edges from the next I-frame never block a frame.
pub fn mbfs(dag: &DependencyDag, root: FrameId) -> Result<MbfsTree> {
    if root >= dag.len() || dag.frame(root).kind != FrameKind::I {
        return Err(Error::InvalidParameters(format!("MBFS root {root} is not an I-frame")));
    }
    let gop = dag.gop_of(root);
    let mut dequeued = vec![false; dag.len()];
    let mut discovered = vec![false; dag.len()];
    let mut tree = MbfsTree {
        root,
        nodes: Vec::new(),
        children: BTreeMap::new(),
        parent: BTreeMap::new(),
    };
    let mut queue = VecDeque::from([root]);
    discovered[root] = true;
    while let Some(x) = queue.pop_front() {
        dequeued[x] = true;
        tree.nodes.push(x);
        for &child in dag.children(x) {
            if discovered[child] || dag.gop_of(child) != gop {
                continue;
            }
            let ready = dag
                .parents(child)
                .iter()
                .all(|&p| dequeued[p] || dag.gop_of(p) != gop);
            if ready {
                discovered[child] = true;
                tree.children.entry(x).or_default().push(child);
                tree.parent.insert(child, x);
                queue.push_back(child);
            }
        }
    }
    Ok(tree)
}

/// Deadline span and size of the subtree rooted at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SubtreeRange {
    pub min_deadline: u64,
    pub max_deadline: u64,
    pub size: usize,
}

/// One MBFS tree per I-frame of the backward-edge-stripped dag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbfsForest {
    trees: Vec<MbfsTree>,
    tree_of: Vec<Option<usize>>,
    ranges: Vec<SubtreeRange>,
}

impl MbfsForest {
    pub fn trees(&self) -> &[MbfsTree] {
        &self.trees
    }

    pub fn tree_of(&self, id: FrameId) -> Option<&MbfsTree> {
        self.tree_of[id].map(|t| &self.trees[t])
    }

    pub fn covers_all(&self) -> bool {
        self.tree_of.iter().all(Option::is_some)
    }

    pub fn children(&self, id: FrameId) -> &[FrameId] {
        self.tree_of(id).map_or(&[], |t| t.children(id))
    }

    pub fn parent(&self, id: FrameId) -> Option<FrameId> {
        self.tree_of(id).and_then(|t| t.parent(id))
    }

    pub fn range(&self, id: FrameId) -> SubtreeRange {
        self.ranges[id]
    }

    /// Tree ancestors of `id`, nearest first.
    pub fn root_path(&self, id: FrameId) -> impl Iterator<Item = FrameId> + '_ {
        std::iter::successors(self.parent(id), move |&p| self.parent(p))
    }
}

impl Serialize for MbfsForest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Tree<'a>(&'a MbfsTree);
        impl Serialize for Tree<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("root", &self.0.root)?;
                let edges: Vec<[FrameId; 2]> = self.0.edges().into_iter().map(|(p, c)| [p, c]).collect();
                m.serialize_entry("edges", &edges)?;
                m.end()
            }
        }
        struct Trees<'a>(&'a [MbfsTree]);
        impl Serialize for Trees<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for t in self.0 {
                    seq.serialize_element(&Tree(t))?;
                }
                seq.end()
            }
        }
        let mut m = s.serialize_map(Some(1))?;
        m.serialize_entry("trees", &Trees(&self.trees))?;
        m.end()
    }
}

/// Strips backward edges and runs MBFS from every I-frame in display order.
pub fn build_forest(dag: &DependencyDag) -> Result<MbfsForest> {
    let stripped = strip_backward_edges(dag);
    forest_of_stripped(&stripped)
}

fn forest_of_stripped(dag: &DependencyDag) -> Result<MbfsForest> {
    let n = dag.len();
    let trees = dag
        .iframes()
        .iter()
        .map(|&root| mbfs(dag, root))
        .collect::<Result<Vec<_>>>()?;
    let mut tree_of = vec![None; n];
    for (t, tree) in trees.iter().enumerate() {
        for &v in &tree.nodes {
            tree_of[v] = Some(t);
        }
    }
    let mut ranges: Vec<SubtreeRange> = dag
        .frames()
        .iter()
        .map(|f| SubtreeRange {
            min_deadline: f.deadline,
            max_deadline: f.deadline,
            size: 1,
        })
        .collect();
    for tree in &trees {
        for &v in tree.nodes.iter().rev() {
            if let Some(p) = tree.parent(v) {
                let child = ranges[v];
                let r = &mut ranges[p];
                r.min_deadline = r.min_deadline.min(child.min_deadline);
                r.max_deadline = r.max_deadline.max(child.max_deadline);
                r.size += child.size;
            }
        }
    }
    Ok(MbfsForest {
        trees,
        tree_of,
        ranges,
    })
}

/// First reason a dag fails the SIO conditions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// The frame is not reachable by MBFS from its GOP's I-frame.
    NotCovered { frame: FrameId },
    /// `ancestor` is a dependency of `frame` but not on its tree root path.
    NotSequential { frame: FrameId, ancestor: FrameId },
    /// Adjacent children whose subtree deadline ranges interleave.
    NotIsoOrdered { node: FrameId, left: FrameId, right: FrameId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotCovered { frame } => write!(f, "frame {frame} is not covered by the MBFS forest"),
            Violation::NotSequential { frame, ancestor } => {
                write!(f, "frame {frame} depends on {ancestor}, which is off its tree root path")
            }
            Violation::NotIsoOrdered { node, left, right } => write!(
                f,
                "children {left} and {right} of frame {node} have overlapping subtree deadlines"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ClassLabel {
    Sio,
    QuasiSio,
    Neither { witness: Violation },
}

impl ClassLabel {
    pub fn name(&self) -> &'static str {
        match self {
            ClassLabel::Sio => "sio",
            ClassLabel::QuasiSio => "quasi_sio",
            ClassLabel::Neither { .. } => "neither",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::Sio => f.write_str("SIO"),
            ClassLabel::QuasiSio => f.write_str("quasi-SIO"),
            ClassLabel::Neither { witness } => write!(f, "neither ({witness})"),
        }
    }
}

/// SIO check for a dag with no backward edges, against its own forest.
fn sio_violation(dag: &DependencyDag, forest: &MbfsForest) -> Option<Violation> {
    if let Some(frame) = (0..dag.len()).find(|&v| forest.tree_of[v].is_none()) {
        return Some(Violation::NotCovered { frame });
    }
    let reach = dag.reachability();
    let mut on_path = vec![false; dag.len()];
    for v in 0..dag.len() {
        let path: Vec<FrameId> = forest.root_path(v).collect();
        for &p in &path {
            on_path[p] = true;
        }
        let bad = reach.ancestors_of(v).find(|&a| !on_path[a]);
        for &p in &path {
            on_path[p] = false;
        }
        if let Some(ancestor) = bad {
            return Some(Violation::NotSequential { frame: v, ancestor });
        }
    }
    for node in 0..dag.len() {
        for pair in forest.children(node).windows(2) {
            if forest.range(pair[0]).max_deadline >= forest.range(pair[1]).min_deadline {
                return Some(Violation::NotIsoOrdered {
                    node,
                    left: pair[0],
                    right: pair[1],
                });
            }
        }
    }
    None
}

pub fn classify(dag: &DependencyDag) -> ClassLabel {
    let stripped = strip_backward_edges(dag);
    let forest = match forest_of_stripped(&stripped) {
        Ok(f) => f,
        Err(_) => unreachable!("roots are I-frames by construction"),
    };
    match sio_violation(&stripped, &forest) {
        Some(witness) => ClassLabel::Neither { witness },
        None if dag.has_backward_edges() => ClassLabel::QuasiSio,
        None => ClassLabel::Sio,
    }
}

/// Per GOP: the shared frames with no other shared frame above them in the
/// tree, ascending by deadline, and the earliest of them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CriticalNodes {
    per_gop: Vec<Vec<FrameId>>,
}

impl CriticalNodes {
    pub fn critical(&self, gop: usize) -> &[FrameId] {
        &self.per_gop[gop]
    }

    pub fn earliest(&self, gop: usize) -> Option<FrameId> {
        self.per_gop[gop].first().copied()
    }

    pub fn is_critical(&self, gop: usize, id: FrameId) -> bool {
        self.per_gop[gop].binary_search(&id).is_ok()
    }
}

pub fn critical_nodes(forest: &MbfsForest, partition: &GopPartition) -> CriticalNodes {
    let per_gop = (0..partition.gop_count())
        .map(|g| {
            partition
                .shared(g)
                .iter()
                .copied()
                .filter(|&f| !forest.root_path(f).any(|a| partition.is_shared(a)))
                .collect()
        })
        .collect();
    CriticalNodes { per_gop }
}

/// Convenience: partition plus critical nodes straight from a dag.
pub fn critical_nodes_of(dag: &DependencyDag) -> Result<CriticalNodes> {
    let forest = build_forest(dag)?;
    let partition = partition_gops(dag)?;
    Ok(critical_nodes(&forest, &partition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{build_dyadic, DagBuilder};

    fn tree_children(tree: &MbfsTree) -> Vec<(FrameId, Vec<FrameId>)> {
        tree.nodes()
            .iter()
            .filter(|&&v| !tree.children(v).is_empty())
            .map(|&v| (v, tree.children(v).to_vec()))
            .collect()
    }

    #[test]
    fn mbfs_reproduces_g16b3_tree() {
        let dag = strip_backward_edges(&build_dyadic(16, 3, 2).unwrap());
        let tree = mbfs(&dag, 0).unwrap();
        assert_eq!(
            tree_children(&tree),
            vec![
                (0, vec![4]),
                (4, vec![2, 8]),
                (2, vec![1, 3]),
                (8, vec![6, 12]),
                (6, vec![5, 7]),
                (12, vec![10, 14]),
                (10, vec![9, 11]),
                (14, vec![13, 15]),
            ]
        );
        assert_eq!(tree.len(), 16);
    }

    #[test]
    fn mbfs_ignores_next_gop_on_unstripped_input() {
        let dag = build_dyadic(16, 3, 2).unwrap();
        let stripped = strip_backward_edges(&dag);
        assert_eq!(mbfs(&dag, 0).unwrap(), mbfs(&stripped, 0).unwrap());
    }

    #[test]
    fn mbfs_g8b3() {
        let dag = build_dyadic(8, 3, 1).unwrap();
        let tree = mbfs(&dag, 0).unwrap();
        assert_eq!(
            tree_children(&tree),
            vec![(0, vec![4]), (4, vec![2, 6]), (2, vec![1, 3]), (6, vec![5, 7])]
        );
    }

    #[test]
    fn mbfs_rejects_non_iframe_root() {
        let dag = build_dyadic(4, 1, 1).unwrap();
        assert!(mbfs(&dag, 1).is_err());
    }

    #[test]
    fn iframe_only_dag() {
        let dag = DagBuilder::new(vec![FrameKind::I; 3]).build().unwrap();
        let forest = build_forest(&dag).unwrap();
        assert_eq!(forest.trees().len(), 3);
        assert!(forest.trees().iter().all(|t| t.len() == 1));
        assert_eq!(classify(&dag), ClassLabel::Sio);
    }

    #[test]
    fn forest_shapes() {
        let forest = build_forest(&build_dyadic(16, 3, 2).unwrap()).unwrap();
        assert_eq!(forest.trees().len(), 2);
        assert_eq!(forest.trees()[1].root(), 16);
        let mut nodes = forest.trees()[1].nodes().to_vec();
        nodes.sort_unstable();
        assert_eq!(nodes, (16..32).collect::<Vec<_>>());
        let forest = build_forest(&build_dyadic(4, 1, 3).unwrap()).unwrap();
        assert!(forest.trees().iter().all(|t| t.len() == 4));
        assert_eq!(forest.range(0).size, 4);
    }

    #[test]
    fn subtree_ranges() {
        let forest = build_forest(&build_dyadic(16, 3, 1).unwrap()).unwrap();
        let r = forest.range(8);
        assert_eq!((r.min_deadline, r.max_deadline, r.size), (5, 15, 11));
        assert_eq!(forest.range(14).size, 3);
    }

    #[test]
    fn classification() {
        let dag = build_dyadic(16, 3, 2).unwrap();
        assert_eq!(classify(&dag), ClassLabel::QuasiSio);
        assert_eq!(classify(&strip_backward_edges(&dag)), ClassLabel::Sio);
        let chain = {
            let mut b = DagBuilder::new(vec![FrameKind::I, FrameKind::P, FrameKind::P, FrameKind::P]);
            for v in 1..4 {
                b.add_edge(v - 1, v);
            }
            b.build().unwrap()
        };
        assert_eq!(classify(&chain), ClassLabel::Sio);
    }

    #[test]
    fn neither_witness() {
        use FrameKind::*;
        let mut b = DagBuilder::new(vec![I, P, P, P]);
        b.add_edge(0, 1);
        b.add_edge(0, 2);
        b.add_edge(1, 3);
        let dag = b.build().unwrap();
        assert_eq!(
            classify(&dag),
            ClassLabel::Neither {
                witness: Violation::NotIsoOrdered { node: 0, left: 1, right: 2 }
            }
        );
    }

    #[test]
    fn not_sequential_witness() {
        use FrameKind::*;
        // B-frame 2 references 1 and 3, both P-frames hanging off 0; it gets
        // attached under 3 with 1 off its path.
        let mut b = DagBuilder::new(vec![I, P, B, P]);
        b.add_edge(0, 1);
        b.add_edge(1, 2);
        b.add_edge(3, 2);
        b.add_edge(0, 3);
        let dag = b.build().unwrap();
        assert_eq!(
            classify(&dag),
            ClassLabel::Neither {
                witness: Violation::NotSequential { frame: 2, ancestor: 1 }
            }
        );
    }

    #[test]
    fn critical_nodes_g16b3() {
        let dag = build_dyadic(16, 3, 2).unwrap();
        let critical = critical_nodes_of(&dag).unwrap();
        assert_eq!(critical.critical(0), &[14]);
        assert_eq!(critical.earliest(0), Some(14));
        assert_eq!(critical.critical(1), &[] as &[FrameId]);
        assert_eq!(critical.earliest(1), None);
    }

    #[test]
    fn critical_nodes_g8b1() {
        let dag = build_dyadic(8, 1, 2).unwrap();
        let critical = critical_nodes_of(&dag).unwrap();
        assert_eq!(critical.critical(0), &[7]);
    }

    #[test]
    fn forest_json() {
        let forest = build_forest(&build_dyadic(4, 1, 1).unwrap()).unwrap();
        let text = serde_json::to_string(&forest).unwrap();
        assert_eq!(text, r#"{"trees":[{"root":0,"edges":[[0,2],[2,1],[2,3]]}]}"#);
    }
}
