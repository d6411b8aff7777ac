//! Meta-paths over a heterogeneous schema, composition of their subgraphs on
//! the target type, and the edge homophily metrics built on them.

use rayon::prelude::*;

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, HeteroSchema};

/// An ordered, type-compatible sequence of relation ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetaPath {
    relations: Vec<usize>,
}

impl MetaPath {
    /// Checked constructor.
    pub fn new(schema: &HeteroSchema, relations: Vec<usize>) -> Result<Self> {
        let p = Self { relations };
        p.check(schema)?;
        Ok(p)
    }

    /// Unchecked constructor; [`compose_metapath`] still validates.
    pub fn from_relations(relations: Vec<usize>) -> Self {
        Self { relations }
    }

    /// Parses a comma-separated list of relation names.
    pub fn parse(schema: &HeteroSchema, spec: &str) -> Result<Self> {
        let rels = spec
            .split(',')
            .map(|name| {
                let name = name.trim();
                schema
                    .relation_id(name)
                    .ok_or_else(|| Error::InvalidPath(format!("unknown relation '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, rels)
    }

    pub fn relations(&self) -> &[usize] {
        &self.relations
    }

    /// Number of relations, i.e. hops.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn check(&self, schema: &HeteroSchema) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::InvalidPath("a meta-path needs at least one relation".into()));
        }
        for &r in &self.relations {
            if r >= schema.relations.len() {
                return Err(Error::InvalidPath(format!("relation id {r} does not exist")));
            }
        }
        for w in self.relations.windows(2) {
            let (a, b) = (&schema.relations[w[0]], &schema.relations[w[1]]);
            if a.dst != b.src {
                return Err(Error::TypeIncompatible {
                    prev: w[0],
                    prev_dst: a.dst,
                    next: w[1],
                    next_src: b.src,
                });
            }
        }
        Ok(())
    }

    pub fn start_type(&self, schema: &HeteroSchema) -> usize {
        schema.relations[self.relations[0]].src
    }

    pub fn end_type(&self, schema: &HeteroSchema) -> usize {
        schema.relations[*self.relations.last().unwrap()].dst
    }

    /// Node-type sequence visited by the path (one longer than the path).
    pub fn node_types(&self, schema: &HeteroSchema) -> Vec<usize> {
        let mut out = vec![self.start_type(schema)];
        out.extend(self.relations.iter().map(|&r| schema.relations[r].dst));
        out
    }

    /// Human-readable name such as `PAP`. A relation that is not the only
    /// one between its two types is spelled out in brackets: `P[cite]P`.
    pub fn label(&self, schema: &HeteroSchema) -> String {
        let mut s = schema.node_types[self.start_type(schema)].name.clone();
        for &r in &self.relations {
            let rel = &schema.relations[r];
            if schema.relations_between(rel.src, rel.dst) > 1 {
                s.push('[');
                s.push_str(&rel.name);
                s.push(']');
            }
            s.push_str(&schema.node_types[rel.dst].name);
        }
        s
    }

    /// The path walked backwards, if every relation has a known inverse.
    pub fn reversed(&self, schema: &HeteroSchema) -> Option<Self> {
        let relations = self
            .relations
            .iter()
            .rev()
            .map(|&r| schema.inverse_of(r))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { relations })
    }
}

/// Homogeneous graph over the target type induced by a meta-path.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathSubgraph {
    pub path: MetaPath,
    pub adjacency: CsrMatrix,
    pub symmetric: bool,
}

impl MetaPathSubgraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.n_rows()
    }

    /// Stored (directed) entries; a symmetric subgraph stores each edge twice.
    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz()
    }
}

/// Boolean composition of the path's relation matrices, diagonal removed,
/// optionally unioned with its transpose.
pub fn compose_metapath(g: &HeteroGraph, path: &MetaPath, symmetrize: bool) -> Result<MetaPathSubgraph> {
    path.check(&g.schema)?;
    let start = path.start_type(&g.schema);
    let end = path.end_type(&g.schema);
    if start != g.target_type || end != g.target_type {
        return Err(Error::NotAnchored {
            target: g.target_type,
            start,
            end,
        });
    }
    let rels = path.relations();
    let mut acc = g.adjacency[rels[0]].to_boolean();
    for &r in &rels[1..] {
        acc = acc.bool_spgemm(&g.adjacency[r])?;
    }
    let mut adjacency = acc.without_diagonal();
    if symmetrize {
        adjacency = adjacency.symmetrized()?;
    }
    Ok(MetaPathSubgraph {
        path: path.clone(),
        adjacency,
        symmetric: symmetrize,
    })
}

/// All type-compatible paths of 1..=`max_len` relations that start and end
/// at `target`, in lexicographic relation-id order. When a path's reverse is
/// known and differs, only the lexicographically smaller of the two is kept.
pub fn enumerate_metapaths(schema: &HeteroSchema, target: usize, max_len: usize) -> Vec<MetaPath> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    walk(schema, target, target, max_len, &mut stack, &mut out);
    out.sort();
    out.retain(|p| match p.reversed(schema) {
        Some(rev) => rev >= *p,
        None => true,
    });
    out
}

fn walk(
    schema: &HeteroSchema,
    at: usize,
    target: usize,
    remaining: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<MetaPath>,
) {
    if remaining == 0 {
        return;
    }
    for (rid, rel) in schema.relations.iter().enumerate() {
        if rel.src != at {
            continue;
        }
        stack.push(rid);
        if rel.dst == target {
            out.push(MetaPath::from_relations(stack.clone()));
        }
        walk(schema, rel.dst, target, remaining - 1, stack, out);
        stack.pop();
    }
}

/// Edge-homophily tally for one subgraph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomophilyStats {
    pub ratio: f64,
    /// Entries whose endpoints share a label.
    pub same: usize,
    /// Entries with both endpoints labeled.
    pub counted: usize,
    /// All stored entries.
    pub total: usize,
}

impl HomophilyStats {
    /// Fraction of entries that entered the ratio.
    pub fn coverage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counted as f64 / self.total as f64
        }
    }
}

/// Homophily tally over the stored entries of a square adjacency. Entries
/// with an unlabeled endpoint (negative label) are left out of both counts.
pub fn homophily_stats(adj: &CsrMatrix, labels: &[i64]) -> Result<HomophilyStats> {
    if adj.n_rows() != labels.len() || adj.n_cols() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "homophily_ratio",
            detail: format!("{}x{} adjacency for {} labels", adj.n_rows(), adj.n_cols(), labels.len()),
        });
    }
    let (mut same, mut counted) = (0usize, 0usize);
    for (i, j) in adj.iter_entries() {
        let (a, b) = (labels[i], labels[j]);
        if a < 0 || b < 0 {
            continue;
        }
        counted += 1;
        if a == b {
            same += 1;
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(HomophilyStats {
        ratio: same as f64 / counted as f64,
        same,
        counted,
        total: adj.nnz(),
    })
}

/// Fraction of labeled edges joining same-label endpoints.
pub fn homophily_ratio(sub: &MetaPathSubgraph, labels: &[i64]) -> Result<f64> {
    homophily_stats(&sub.adjacency, labels).map(|s| s.ratio)
}

/// Maximum homophily ratio over all meta-paths of at most `max_len` hops,
/// with the path attaining it (first in enumeration order on ties).
pub fn hg_homophily(g: &HeteroGraph, max_len: usize) -> Result<(f64, MetaPath)> {
    let paths = enumerate_metapaths(&g.schema, g.target_type, max_len);
    hg_homophily_over(g, &paths)
}

/// As [`hg_homophily`] over an explicit path list. Paths whose subgraph has
/// no labeled edge are skipped.
pub fn hg_homophily_over(g: &HeteroGraph, paths: &[MetaPath]) -> Result<(f64, MetaPath)> {
    let ratios: Vec<Option<f64>> = paths
        .par_iter()
        .map(|p| -> Result<Option<f64>> {
            let sub = compose_metapath(g, p, true)?;
            match homophily_ratio(&sub, &g.labels) {
                Ok(r) => Ok(Some(r)),
                Err(Error::UndefinedRatio) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, &MetaPath)> = None;
    for (r, p) in ratios.into_iter().zip(paths) {
        if let Some(r) = r {
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, p));
            }
        }
    }
    best.map(|(r, p)| (r, p.clone())).ok_or(Error::NoValidMetaPath)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy_graph;
    use crate::graph::{NodeType, Relation, Split};
    use ndarray::Array2;

    fn schema(types: &[&str], rels: &[(&str, usize, usize)]) -> HeteroSchema {
        HeteroSchema {
            node_types: types
                .iter()
                .map(|n| NodeType { name: n.to_string(), count: 1, feature_dim: 1 })
                .collect(),
            relations: rels
                .iter()
                .map(|&(n, s, d)| Relation { name: n.into(), src: s, dst: d, inverse: None })
                .collect(),
        }
    }

    fn homogeneous(n: usize, edges: &[(usize, usize)], labels: Vec<i64>) -> HeteroGraph {
        HeteroGraph {
            schema: HeteroSchema {
                node_types: vec![NodeType { name: "P".into(), count: n, feature_dim: 1 }],
                relations: vec![Relation { name: "pp".into(), src: 0, dst: 0, inverse: Some(0) }],
            },
            adjacency: vec![CsrMatrix::from_edges(n, n, edges.iter().copied()).unwrap()],
            features: vec![Array2::zeros((n, 1))],
            splits: vec![Split::None; n],
            labels,
            target_type: 0,
            num_classes: 2,
        }
    }

    #[test]
    fn self_relation_composes_to_itself_without_diagonal() {
        let g = homogeneous(3, &[(0, 0), (0, 1), (2, 1)], vec![0, 0, 1]);
        let sub = compose_metapath(&g, &MetaPath::from_relations(vec![0]), false).unwrap();
        assert_eq!(sub.adjacency.iter_entries().collect::<Vec<_>>(), vec![(0, 1), (2, 1)]);
    }

    #[test]
    fn pap_links_coauthored_papers() {
        let g = toy_graph();
        let sub = compose_metapath(&g, &MetaPath::from_relations(vec![0, 1]), true).unwrap();
        assert_eq!(sub.adjacency.iter_entries().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert!(sub.adjacency.is_pattern_symmetric());
    }

    #[test]
    fn mismatched_and_unanchored_paths_error() {
        let g = toy_graph();
        let err = compose_metapath(&g, &MetaPath::from_relations(vec![0, 0]), true).unwrap_err();
        assert!(matches!(err, Error::TypeIncompatible { .. }));
        let err = compose_metapath(&g, &MetaPath::from_relations(vec![0]), true).unwrap_err();
        assert!(matches!(err, Error::NotAnchored { .. }));
    }

    #[test]
    fn enumerate_relation_and_inverse() {
        let s = schema(&["P", "A"], &[("pa", 0, 1), ("ap", 1, 0)]);
        let paths = enumerate_metapaths(&s, 0, 2);
        assert_eq!(paths, vec![MetaPath::from_relations(vec![0, 1])]);
        assert_eq!(paths[0].label(&s), "PAP");
        assert!(enumerate_metapaths(&s, 0, 1).is_empty());
    }

    #[test]
    fn enumerate_acm_like_schema() {
        let s = schema(
            &["P", "A", "S"],
            &[("pa", 0, 1), ("ap", 1, 0), ("ps", 0, 2), ("sp", 2, 0), ("cite", 0, 0)],
        );
        let labels: Vec<String> = enumerate_metapaths(&s, 0, 2).iter().map(|p| p.label(&s)).collect();
        for want in ["PP", "PAP", "PSP"] {
            assert!(labels.contains(&want.to_string()), "{labels:?}");
        }
        // cite is its own unique inverse; [cite, cite] survives as a palindrome
        assert_eq!(labels.len(), 4);
    }

    #[test]
    fn reversed_duplicates_collapse() {
        let mut s = schema(&["P"], &[("a", 0, 0), ("b", 0, 0)]);
        s.relations[0].inverse = Some(0);
        s.relations[1].inverse = Some(1);
        let paths: Vec<Vec<usize>> = enumerate_metapaths(&s, 0, 2)
            .into_iter()
            .map(|p| p.relations().to_vec())
            .collect();
        assert_eq!(paths, vec![vec![0], vec![0, 0], vec![0, 1], vec![1], vec![1, 1]]);
        assert_eq!(enumerate_metapaths(&s, 0, 2)[2].label(&s), "P[a]P[b]P");
    }

    #[test]
    fn homophily_ratio_hand_example() {
        let g = homogeneous(4, &[(0, 1), (0, 2), (1, 2), (2, 3)], vec![0, 0, 1, 1]);
        let sub = compose_metapath(&g, &MetaPath::from_relations(vec![0]), false).unwrap();
        assert_eq!(homophily_ratio(&sub, &g.labels).unwrap(), 0.5);
        let sym = compose_metapath(&g, &MetaPath::from_relations(vec![0]), true).unwrap();
        assert_eq!(homophily_ratio(&sym, &g.labels).unwrap(), 0.5);
    }

    #[test]
    fn homophily_all_same_and_empty() {
        let g = homogeneous(3, &[(0, 1), (1, 2)], vec![1, 1, 1]);
        let sub = compose_metapath(&g, &MetaPath::from_relations(vec![0]), true).unwrap();
        assert_eq!(homophily_ratio(&sub, &g.labels).unwrap(), 1.0);
        let empty = homogeneous(3, &[], vec![0, 1, 1]);
        let sub = compose_metapath(&empty, &MetaPath::from_relations(vec![0]), true).unwrap();
        assert!(matches!(homophily_ratio(&sub, &empty.labels), Err(Error::UndefinedRatio)));
    }

    #[test]
    fn unlabeled_endpoints_are_excluded() {
        let g = homogeneous(3, &[(0, 1), (1, 2)], vec![0, 0, -1]);
        let sub = compose_metapath(&g, &MetaPath::from_relations(vec![0]), true).unwrap();
        let s = homophily_stats(&sub.adjacency, &g.labels).unwrap();
        assert_eq!((s.same, s.counted, s.total), (2, 2, 4));
        assert_eq!(s.coverage(), 0.5);
    }

    #[test]
    fn hg_homophily_picks_the_best_path() {
        // two self relations: "a" with HR 0.5, "b" with HR 0.75
        let n = 8;
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let a = [(0, 1), (0, 4), (2, 3), (2, 6)];
        let b = [(0, 1), (1, 2), (5, 6), (3, 4)];
        let mut g = homogeneous(n, &a, labels);
        g.schema.relations[0].name = "a".into();
        g.add_relation(
            Relation { name: "b".into(), src: 0, dst: 0, inverse: Some(1) },
            CsrMatrix::from_edges(n, n, b).unwrap(),
        )
        .unwrap();
        let (mh, path) = hg_homophily(&g, 1).unwrap();
        assert_eq!(mh, 0.75);
        assert_eq!(path.relations(), &[1]);
        let (single, _) = hg_homophily_over(&g, &[MetaPath::from_relations(vec![0])]).unwrap();
        assert_eq!(single, 0.5);
    }
}
