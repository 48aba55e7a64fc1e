use serde::Serialize;

use super::{ClusteringError, ClusteringModel, Linkage, Merge, MergeTrace};

/// Binary merge tree. Internal nodes carry their cluster reference
/// (`n + step`) so a client can map a clicked subtree back to the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DendrogramNode {
    Leaf {
        id: usize,
        label: String,
    },
    Internal {
        id: usize,
        height: f64,
        size: usize,
        children: Box<[DendrogramNode; 2]>,
    },
}

impl DendrogramNode {
    pub fn height(&self) -> f64 {
        match self {
            DendrogramNode::Leaf { .. } => 0.0,
            DendrogramNode::Internal { height, .. } => *height,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            DendrogramNode::Leaf { .. } => 1,
            DendrogramNode::Internal { size, .. } => *size,
        }
    }

    /// Leaf ids in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                DendrogramNode::Leaf { id, .. } => out.push(*id),
                DendrogramNode::Internal { children, .. } => {
                    stack.push(&children[1]);
                    stack.push(&children[0]);
                }
            }
        }
        out
    }

    fn min_leaf(&self) -> usize {
        match self {
            DendrogramNode::Leaf { id, .. } => *id,
            DendrogramNode::Internal { children, .. } => children[0].min_leaf(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
    pub tree: DendrogramNode,
}

/// Builds the tree for `trace`. In every internal node the child whose
/// subtree holds the smaller original index comes first.
pub fn build_dendrogram(trace: &MergeTrace, labels: &[String]) -> Result<Dendrogram, ClusteringError> {
    let n = trace.n();
    if labels.len() != n {
        return Err(ClusteringError::Shape(format!(
            "{} labels for {n} observations",
            labels.len()
        )));
    }
    let mut nodes: Vec<Option<DendrogramNode>> = labels
        .iter()
        .enumerate()
        .map(|(id, label)| {
            Some(DendrogramNode::Leaf {
                id,
                label: label.clone(),
            })
        })
        .collect();
    for (t, m) in trace.steps().iter().enumerate() {
        let a = nodes[m.left].take().expect("trace validated");
        let b = nodes[m.right].take().expect("trace validated");
        let children = if a.min_leaf() <= b.min_leaf() { [a, b] } else { [b, a] };
        nodes.push(Some(DendrogramNode::Internal {
            id: n + t,
            height: m.height,
            size: m.size,
            children: Box::new(children),
        }));
    }
    let tree = nodes.pop().flatten().expect("n >= 1 leaves a root");
    Ok(Dendrogram {
        n,
        merges: trace.steps().to_vec(),
        tree,
    })
}

/// JSON shape served to dashboards:
/// `{ "n", "merges": [[left, right, height, size], …], "tree", "linkage", "ac" }`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DendrogramWire {
    pub n: usize,
    pub merges: Vec<Merge>,
    pub tree: DendrogramNode,
    pub linkage: Linkage,
    pub ac: f64,
}

impl DendrogramWire {
    pub fn from_model(model: &ClusteringModel, labels: &[String]) -> Result<Self, ClusteringError> {
        let d = build_dendrogram(&model.trace, labels)?;
        Ok(DendrogramWire {
            n: d.n,
            merges: d.merges,
            tree: d.tree,
            linkage: model.linkage,
            ac: model.ac.value,
        })
    }
}
