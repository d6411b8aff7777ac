//! Typed heterogeneous graph: node types, relations, per-relation adjacency,
//! per-type features, and partial labels with splits on the target type.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    /// Relation holding the reversed edges, when known. A symmetric
    /// self-relation is its own inverse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<usize>,
}

/// Node types and relations, addressed by dense 0-based ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeteroSchema {
    pub node_types: Vec<NodeType>,
    pub relations: Vec<Relation>,
}

impl HeteroSchema {
    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    /// Inverse of a relation: the declared one, else the unique relation
    /// running the opposite way. Ambiguous cases have no inverse.
    pub fn inverse_of(&self, rel: usize) -> Option<usize> {
        let r = &self.relations[rel];
        if r.inverse.is_some() {
            return r.inverse;
        }
        let mut candidates = self
            .relations
            .iter()
            .enumerate()
            .filter(|(_, o)| o.src == r.dst && o.dst == r.src);
        let first = candidates.next()?;
        if candidates.next().is_some() {
            return None;
        }
        Some(first.0)
    }

    /// Number of relations from `src` to `dst`.
    pub fn relations_between(&self, src: usize, dst: usize) -> usize {
        self.relations
            .iter()
            .filter(|r| r.src == src && r.dst == dst)
            .count()
    }

    /// Offset of each node type in the global (type-blind) node indexing.
    pub fn type_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.node_types.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for t in &self.node_types {
            acc += t.count;
            offsets.push(acc);
        }
        offsets
    }

    pub fn total_nodes(&self) -> usize {
        self.node_types.iter().map(|t| t.count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "none" => Some(Split::None),
            _ => None,
        }
    }
}

/// Label sentinel for unlabeled target nodes.
pub const UNLABELED: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub schema: HeteroSchema,
    /// One matrix per relation, shaped `count(src) x count(dst)`.
    pub adjacency: Vec<CsrMatrix>,
    /// One `count x feature_dim` matrix per node type.
    pub features: Vec<Array2<f32>>,
    /// Labels of target-type nodes, [`UNLABELED`] where unknown.
    pub labels: Vec<i64>,
    /// Split membership of target-type nodes.
    pub splits: Vec<Split>,
    pub target_type: usize,
    pub num_classes: usize,
}

/// A single failed invariant, naming the offending field and index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn violation(field: impl Into<String>, index: Option<usize>, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        index,
        message: message.into(),
    }
}

impl HeteroGraph {
    pub fn target_count(&self) -> usize {
        self.schema.node_types[self.target_type].count
    }

    pub fn target_features(&self) -> &Array2<f32> {
        &self.features[self.target_type]
    }

    pub fn is_train(&self, node: usize) -> bool {
        self.splits[node] == Split::Train && self.labels[node] >= 0
    }

    /// Checks every structural invariant and reports all failures; never
    /// returns early.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let schema = &self.schema;
        let n_types = schema.node_types.len();

        for (rid, rel) in schema.relations.iter().enumerate() {
            if rel.src >= n_types || rel.dst >= n_types {
                out.push(violation(
                    "relations",
                    Some(rid),
                    format!("relation '{}' references a missing node type", rel.name),
                ));
            }
            if let Some(inv) = rel.inverse {
                if inv >= schema.relations.len() {
                    out.push(violation("relations", Some(rid), "inverse relation id out of range"));
                }
            }
        }
        for (i, a) in schema.relations.iter().enumerate() {
            if schema.relations[..i].iter().any(|b| b.name == a.name) {
                out.push(violation("relations", Some(i), format!("duplicate relation name '{}'", a.name)));
            }
        }

        if self.adjacency.len() != schema.relations.len() {
            out.push(violation(
                "adjacency",
                None,
                format!(
                    "{} matrices for {} relations",
                    self.adjacency.len(),
                    schema.relations.len()
                ),
            ));
        }
        for (rid, (rel, adj)) in schema.relations.iter().zip(&self.adjacency).enumerate() {
            if rel.src >= n_types || rel.dst >= n_types {
                continue;
            }
            let rows = schema.node_types[rel.src].count;
            let cols = schema.node_types[rel.dst].count;
            if let Some(problem) = adj.check_canonical() {
                out.push(violation(
                    "adjacency",
                    Some(rid),
                    format!("relation '{}': {problem}", rel.name),
                ));
            } else if adj.n_rows() != rows || adj.n_cols() != cols {
                out.push(violation(
                    "adjacency",
                    Some(rid),
                    format!(
                        "relation '{}' is {}x{}, node counts give {rows}x{cols}",
                        rel.name,
                        adj.n_rows(),
                        adj.n_cols()
                    ),
                ));
            }
        }

        if self.features.len() != n_types {
            out.push(violation(
                "features",
                None,
                format!("{} feature matrices for {} node types", self.features.len(), n_types),
            ));
        }
        for (tid, (t, x)) in schema.node_types.iter().zip(&self.features).enumerate() {
            if x.nrows() != t.count || x.ncols() != t.feature_dim {
                out.push(violation(
                    "features",
                    Some(tid),
                    format!(
                        "type '{}' features are {}x{}, expected {}x{}",
                        t.name,
                        x.nrows(),
                        x.ncols(),
                        t.count,
                        t.feature_dim
                    ),
                ));
            }
        }

        if self.target_type >= n_types {
            out.push(violation("target_type", None, "target type does not exist"));
            return out;
        }
        let n = self.target_count();
        if self.labels.len() != n {
            out.push(violation(
                "labels",
                None,
                format!("{} labels for {} target nodes", self.labels.len(), n),
            ));
        }
        for (i, &y) in self.labels.iter().enumerate() {
            if y != UNLABELED && (y < 0 || y as usize >= self.num_classes) {
                out.push(violation(
                    "labels",
                    Some(i),
                    format!("label {y} outside [0, {})", self.num_classes),
                ));
            }
        }
        if self.splits.len() != n {
            out.push(violation(
                "splits",
                None,
                format!("{} split entries for {} target nodes", self.splits.len(), n),
            ));
        }
        for (i, (&s, &y)) in self.splits.iter().zip(&self.labels).enumerate() {
            if s == Split::Train && y == UNLABELED {
                out.push(violation("splits", Some(i), "training node has no label"));
            }
        }
        out
    }

    /// Runs [`HeteroGraph::validate`] and turns the first violation into an
    /// error.
    pub fn ensure_valid(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidInput(v.to_string())),
        }
    }

    /// Type-blind union of every relation over the global node indexing.
    /// No self-loops are added.
    pub fn homogeneous_adjacency(&self) -> Result<CsrMatrix> {
        let offsets = self.schema.type_offsets();
        let n = self.schema.total_nodes();
        let edges = self
            .schema
            .relations
            .iter()
            .zip(&self.adjacency)
            .flat_map(|(rel, adj)| {
                let (so, dof) = (offsets[rel.src], offsets[rel.dst]);
                adj.iter_entries().map(move |(r, c)| (so + r, dof + c))
            });
        CsrMatrix::from_edges(n, n, edges)
    }

    /// Adds a relation with the given adjacency, rejecting name collisions.
    pub fn add_relation(&mut self, rel: Relation, adj: CsrMatrix) -> Result<usize> {
        if self.schema.relation_id(&rel.name).is_some() {
            return Err(Error::NameCollision(rel.name));
        }
        let rows = self.schema.node_types[rel.src].count;
        let cols = self.schema.node_types[rel.dst].count;
        if adj.n_rows() != rows || adj.n_cols() != cols {
            return Err(Error::DimensionMismatch {
                op: "add_relation",
                detail: format!("{}x{} for {rows}x{cols}", adj.n_rows(), adj.n_cols()),
            });
        }
        self.schema.relations.push(rel);
        self.adjacency.push(adj);
        Ok(self.schema.relations.len() - 1)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two papers, one author; p0-a0 and p1-a0 in both directions.
    pub(crate) fn toy_graph() -> HeteroGraph {
        let schema = HeteroSchema {
            node_types: vec![
                NodeType { name: "P".into(), count: 2, feature_dim: 2 },
                NodeType { name: "A".into(), count: 1, feature_dim: 1 },
            ],
            relations: vec![
                Relation { name: "writes_by".into(), src: 0, dst: 1, inverse: Some(1) },
                Relation { name: "writes".into(), src: 1, dst: 0, inverse: Some(0) },
            ],
        };
        HeteroGraph {
            adjacency: vec![
                CsrMatrix::from_edges(2, 1, [(0, 0), (1, 0)]).unwrap(),
                CsrMatrix::from_edges(1, 2, [(0, 0), (0, 1)]).unwrap(),
            ],
            features: vec![
                Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                Array2::from_shape_vec((1, 1), vec![0.5]).unwrap(),
            ],
            labels: vec![0, 1],
            splits: vec![Split::Train, Split::Test],
            target_type: 0,
            num_classes: 2,
            schema,
        }
    }

    #[test]
    fn well_formed_graph_has_no_violations() {
        assert_eq!(toy_graph().validate(), vec![]);
    }

    #[test]
    fn out_of_range_edge_names_relation() {
        let mut g = toy_graph();
        g.adjacency[0] = CsrMatrix::from_edges(2, 3, [(0, 2)]).unwrap();
        let v = g.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "adjacency");
        assert_eq!(v[0].index, Some(0));
    }

    #[test]
    fn label_equal_to_class_count_is_reported() {
        let mut g = toy_graph();
        g.labels[1] = 2;
        let v = g.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "labels");
        assert_eq!(v[0].index, Some(1));
    }

    #[test]
    fn unlabeled_train_node_is_reported() {
        let mut g = toy_graph();
        g.labels[0] = UNLABELED;
        let v = g.validate();
        assert_eq!(v[0].field, "splits");
    }

    #[test]
    fn homogeneous_union_uses_global_indexing() {
        let g = toy_graph();
        let a = g.homogeneous_adjacency().unwrap();
        assert_eq!(
            a.iter_entries().collect::<Vec<_>>(),
            vec![(0, 2), (1, 2), (2, 0), (2, 1)]
        );
    }

    #[test]
    fn inverse_lookup() {
        let mut s = toy_graph().schema;
        assert_eq!(s.inverse_of(0), Some(1));
        s.relations[0].inverse = None;
        s.relations[1].inverse = None;
        assert_eq!(s.inverse_of(0), Some(1));
        s.relations.push(Relation { name: "edits".into(), src: 1, dst: 0, inverse: None });
        assert_eq!(s.inverse_of(0), None);
    }
}
