//! Structural summary of a dag: class, GOP sets, critical nodes, universal order.

use serde::Serialize;

use crate::dag::{partition_gops, DependencyDag, FrameId};
use crate::error::Result;
use crate::mbfs::{build_forest, classify, critical_nodes, ClassLabel, MbfsForest};
use crate::universal::{universal, UniversalSequence};

#[derive(Clone, Debug, Serialize)]
pub struct GopSummary {
    pub iframe: FrameId,
    pub frames: usize,
    pub shared: Vec<FrameId>,
    pub critical: Vec<FrameId>,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub class: ClassLabel,
    pub forest: MbfsForest,
    pub gops: Vec<GopSummary>,
    pub universal: Option<UniversalSequence>,
}

impl Analysis {
    pub fn new(dag: &DependencyDag) -> Result<Self> {
        let class = classify(dag);
        let forest = build_forest(dag)?;
        let partition = partition_gops(dag)?;
        let critical = critical_nodes(&forest, &partition);
        let gops = (0..partition.gop_count())
            .map(|g| GopSummary {
                iframe: partition.gop_starts()[g],
                frames: partition.gop_range(g).len(),
                shared: partition.shared(g).to_vec(),
                critical: critical.critical(g).to_vec(),
            })
            .collect();
        let universal = match class {
            ClassLabel::Neither { .. } => None,
            _ => Some(universal(dag)?),
        };
        Ok(Analysis {
            class,
            forest,
            gops,
            universal,
        })
    }
}

impl Serialize for Analysis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            #[serde(flatten)]
            class: &'a ClassLabel,
            gops: &'a [GopSummary],
            #[serde(skip_serializing_if = "Option::is_none")]
            universal: Option<&'a [FrameId]>,
        }
        View {
            class: &self.class,
            gops: &self.gops,
            universal: self.universal.as_ref().map(|u| u.order()),
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::build_dyadic;

    #[test]
    fn summary_json() {
        let analysis = Analysis::new(&build_dyadic(4, 1, 2).unwrap()).unwrap();
        let v = serde_json::to_value(&analysis).unwrap();
        assert_eq!(v["class"], "quasi_sio");
        assert_eq!(v["gops"][0]["shared"], serde_json::json!([3]));
        assert_eq!(v["universal"], serde_json::json!([0, 2, 1, 4, 3, 6, 5, 7]));
    }
}
