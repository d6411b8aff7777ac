//! Similarity-driven rewiring of meta-path subgraphs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, HeteroSchema, Relation};
use crate::metapath::MetaPathSubgraph;
use crate::msl::EncodedModel;

/// Which node pairs may gain an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Every pair of target nodes.
    All,
    /// Pairs within two hops in the meta-path subgraph.
    TwoHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    /// Most additions proposed per node.
    pub edge_budget: usize,
    /// Additions need a similarity strictly above this.
    pub epsilon: f64,
    /// Edges with a similarity strictly below this are removed.
    pub gamma: f64,
    /// Rows scored together; peak memory is `block_size x N`.
    pub block_size: usize,
    pub candidate_pool: CandidatePool,
}

impl Default for RewireConfig {
    fn default() -> Self {
        Self {
            edge_budget: 6,
            epsilon: 0.6,
            gamma: -1.0,
            block_size: 256,
            candidate_pool: CandidatePool::All,
        }
    }
}

impl RewireConfig {
    /// Thresholds may sit slightly outside `[-1, 1]` to express "never" and
    /// "always".
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("gamma", self.gamma)] {
            if !v.is_finite() || v.abs() > 1.5 {
                return Err(Error::InvalidInput(format!("{name} = {v} is outside the cosine range")));
            }
        }
        if self.block_size == 0 {
            return Err(Error::InvalidInput("block_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// Top-scoring partners per target node, best first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Candidates {
    pub lists: Vec<Vec<(usize, f64)>>,
}

impl Candidates {
    pub fn total(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Edge changes applied to one meta-path subgraph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewirePlan {
    pub label: String,
    /// Directed proposals before symmetrization.
    pub additions: Vec<ScoredPair>,
    /// Directed existing edges before symmetrization.
    pub removals: Vec<ScoredPair>,
}

/// Keeps the `k` best `(j, score)` entries, ties by ascending `j`.
fn top_k(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if scored.len() > k && k > 0 {
        scored.select_nth_unstable_by(k - 1, order);
    }
    scored.truncate(k);
    scored.sort_unstable_by(order);
    scored
}

/// Block-wise scan for each target node's best partners under path `p`.
pub fn score_candidates(enc: &EncodedModel, p: usize, sub: &MetaPathSubgraph, cfg: &RewireConfig) -> Result<Candidates> {
    cfg.validate()?;
    let n = enc.node_count();
    if sub.adjacency.n_rows() != n {
        return Err(Error::DimensionMismatch {
            op: "score_candidates",
            detail: format!("subgraph has {} nodes, model {}", sub.adjacency.n_rows(), n),
        });
    }
    if cfg.edge_budget == 0 {
        return Ok(Candidates { lists: vec![Vec::new(); n] });
    }
    let pool = match cfg.candidate_pool {
        CandidatePool::All => None,
        CandidatePool::TwoHop => {
            let a = sub.adjacency.to_boolean();
            Some(a.union(&a.bool_spgemm(&a)?)?)
        }
    };
    let blocks: Vec<Vec<usize>> = (0..n)
        .step_by(cfg.block_size)
        .map(|lo| (lo..(lo + cfg.block_size).min(n)).collect())
        .collect();
    let lists = blocks
        .par_iter()
        .map(|rows| {
            let sims = enc.similarity_rows(p, rows);
            rows.iter()
                .enumerate()
                .map(|(a, &i)| {
                    let row = sims.row(a);
                    let keep = |&(j, s): &(usize, f64)| j != i && s > cfg.epsilon;
                    let scored: Vec<(usize, f64)> = match &pool {
                        None => row.iter().copied().enumerate().filter(keep).collect(),
                        Some(pool) => pool.row(i).iter().map(|&j| (j, row[j])).filter(keep).collect(),
                    };
                    top_k(scored, cfg.edge_budget)
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(Candidates { lists })
}

/// Applies the candidates and similarity pruning to one subgraph.
pub fn rewire_metapath(
    sub: &MetaPathSubgraph,
    candidates: &Candidates,
    enc: &EncodedModel,
    p: usize,
    cfg: &RewireConfig,
    label: impl Into<String>,
) -> Result<(MetaPathSubgraph, RewirePlan)> {
    cfg.validate()?;
    let adj = &sub.adjacency;
    let n = adj.n_rows();
    if candidates.lists.len() != n || enc.node_count() != n {
        return Err(Error::DimensionMismatch {
            op: "rewire_metapath",
            detail: "candidates, model and subgraph cover different node counts".into(),
        });
    }

    let mut additions = Vec::new();
    for (i, list) in candidates.lists.iter().enumerate() {
        for &(j, score) in list {
            if i != j && !adj.contains(i, j) {
                additions.push(ScoredPair { i, j, score });
            }
        }
    }
    let mut removals = Vec::new();
    for (i, j) in adj.iter_entries() {
        if i == j {
            continue;
        }
        let score = enc.similarity(p, i, j);
        if score < cfg.gamma {
            removals.push(ScoredPair { i, j, score });
        }
    }

    let both = |pairs: &[ScoredPair]| -> Result<CsrMatrix> {
        CsrMatrix::from_edges(n, n, pairs.iter().flat_map(|e| [(e.i, e.j), (e.j, e.i)]))
    };
    let rewired = adj
        .to_boolean()
        .union(&both(&additions)?)?
        .difference(&both(&removals)?)?
        .without_diagonal();
    let symmetric = rewired.is_pattern_symmetric();
    Ok((
        MetaPathSubgraph {
            path: sub.path.clone(),
            adjacency: rewired,
            symmetric,
        },
        RewirePlan {
            label: label.into(),
            additions,
            removals,
        },
    ))
}

/// Relation name given to a rewired subgraph.
pub fn rewired_relation_name(sub: &MetaPathSubgraph, schema: &HeteroSchema) -> String {
    format!("rw:{}", sub.path.label(schema))
}

/// Adds each rewired subgraph to a copy of `g` as a target-to-target
/// relation named `rw:<path label>`.
pub fn merge_into_graph(g: &HeteroGraph, rewired: &[MetaPathSubgraph]) -> Result<HeteroGraph> {
    let mut out = g.clone();
    let t = g.target_type;
    for sub in rewired {
        let (start, end) = (sub.path.start_type(&g.schema), sub.path.end_type(&g.schema));
        if start != t || end != t {
            return Err(Error::NotAnchored { target: t, start, end });
        }
        let id = out.schema.relations.len();
        let rel = Relation {
            name: rewired_relation_name(sub, &g.schema),
            src: t,
            dst: t,
            inverse: sub.adjacency.is_pattern_symmetric().then_some(id),
        };
        out.add_relation(rel, sub.adjacency.clone())?;
    }
    Ok(out)
}

/// Audit log: `metapath  op  i  j  score`, one line per directed change.
pub fn write_plan_tsv(w: &mut impl Write, plans: &[RewirePlan]) -> Result<()> {
    writeln!(w, "metapath\top\ti\tj\tscore")?;
    for plan in plans {
        for (op, pairs) in [("add", &plan.additions), ("del", &plan.removals)] {
            for e in pairs {
                writeln!(w, "{}\t{op}\t{}\t{}\t{}", plan.label, e.i, e.j, e.score)?;
            }
        }
    }
    Ok(())
}
