//! Planted-homophily generator.
//!
//! Target nodes (type `P`) get balanced labels and Gaussian features around
//! class means `(mu / sqrt 2) e_c`, so every pair of means is `mu` apart.
//! Each target self-relation `r<k>` draws undirected edges whose endpoints
//! share a class with probability `relation_homophily[k]`. Optional
//! auxiliary types `A<k>` carry latent classes and link to target nodes
//! through a relation and its inverse.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use ndarray::Array2;

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, HeteroSchema, NodeType, Relation, Split};

/// Edge draws allowed per requested edge before giving up.
const ATTEMPTS_PER_EDGE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub nodes: usize,
    pub classes: usize,
    /// Same-class probability of each target self-relation.
    pub relation_homophily: Vec<f64>,
    /// Sizes of auxiliary node types.
    pub aux_sizes: Vec<usize>,
    /// Same-latent-class probability of target-auxiliary links.
    pub aux_homophily: f64,
    /// Auxiliary links per target node, per auxiliary type.
    pub aux_links: usize,
    pub feature_dim: usize,
    /// Average number of neighbors per target node in each relation.
    pub mean_degree: f64,
    /// Distance between any two class means.
    pub mean_separation: f64,
    /// Per-coordinate noise standard deviation.
    pub noise: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 500,
            classes: 2,
            relation_homophily: vec![0.3, 0.3],
            aux_sizes: Vec::new(),
            aux_homophily: 0.5,
            aux_links: 1,
            feature_dim: 4,
            mean_degree: 10.0,
            mean_separation: 2.0,
            noise: 1.0,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.classes < 2 {
            return bad("at least two classes are required".into());
        }
        if self.nodes < self.classes {
            return bad(format!("{} nodes cannot hold {} classes", self.nodes, self.classes));
        }
        if self.feature_dim < self.classes {
            return bad(format!("feature_dim {} must be at least the class count", self.feature_dim));
        }
        if self.relation_homophily.is_empty() {
            return bad("at least one relation is required".into());
        }
        if let Some(p) = self
            .relation_homophily
            .iter()
            .chain([&self.aux_homophily])
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return bad(format!("homophily {p} is not a probability"));
        }
        if !(self.mean_degree >= 0.0) || !(self.noise >= 0.0) || !self.mean_separation.is_finite() {
            return bad("degree, noise and separation must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return bad("train_fraction must lie in [0, 1]".into());
        }
        if self.aux_sizes.contains(&0) {
            return bad("auxiliary types need at least one node".into());
        }
        Ok(())
    }
}

/// Undirected same/cross-class edge sampler over a fixed labeling.
fn planted_edges(
    labels: &[usize],
    by_class: &[Vec<usize>],
    homophily: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let n = labels.len();
    let mut seen = HashSet::with_capacity(count * 2);
    let mut edges = Vec::with_capacity(count * 2);
    let mut attempts = 0;
    while seen.len() < count {
        attempts += 1;
        if attempts > count * ATTEMPTS_PER_EDGE {
            return Err(Error::Infeasible(format!(
                "only {} of {count} edges placed at homophily {homophily}",
                seen.len()
            )));
        }
        let u = rng.gen_range(0..n);
        let same = rng.gen_bool(homophily);
        let pool = if same {
            &by_class[labels[u]]
        } else {
            let others: Vec<usize> = (0..by_class.len()).filter(|&c| c != labels[u]).collect();
            &by_class[others[rng.gen_range(0..others.len())]]
        };
        let v = pool[rng.gen_range(0..pool.len())];
        if u == v || !seen.insert((u.min(v), u.max(v))) {
            continue;
        }
        edges.push((u, v));
        edges.push((v, u));
    }
    Ok(edges)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<HeteroGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, c) = (cfg.nodes, cfg.classes);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);
    let mut by_class = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }

    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let offset = cfg.mean_separation / std::f64::consts::SQRT_2;
    let target_x = Array2::from_shape_fn((n, cfg.feature_dim), |(i, d)| {
        let mean = if d == labels[i] { offset } else { 0.0 };
        (mean + noise.sample(&mut rng)) as f32
    });

    let mut node_types = vec![NodeType {
        name: "P".into(),
        count: n,
        feature_dim: cfg.feature_dim,
    }];
    let mut relations = Vec::new();
    let mut adjacency = Vec::new();
    let mut features = vec![target_x];

    let edge_count = (n as f64 * cfg.mean_degree / 2.0).round() as usize;
    let max_pairs = n * (n - 1) / 2;
    for (k, &p) in cfg.relation_homophily.iter().enumerate() {
        if edge_count > max_pairs {
            return Err(Error::Infeasible(format!("{edge_count} edges exceed the {max_pairs} possible pairs")));
        }
        let edges = planted_edges(&labels, &by_class, p, edge_count, &mut rng)?;
        let id = relations.len();
        relations.push(Relation {
            name: format!("r{k}"),
            src: 0,
            dst: 0,
            inverse: Some(id),
        });
        adjacency.push(CsrMatrix::from_edges(n, n, edges)?);
    }

    for (k, &size) in cfg.aux_sizes.iter().enumerate() {
        let t = node_types.len();
        let latent: Vec<usize> = (0..size).map(|a| a % c).collect();
        let mut aux_by_class = vec![Vec::new(); c];
        for (a, &l) in latent.iter().enumerate() {
            aux_by_class[l].push(a);
        }
        let mut links = HashSet::new();
        for (i, &li) in labels.iter().enumerate() {
            for _ in 0..cfg.aux_links {
                let class = if rng.gen_bool(cfg.aux_homophily) { li } else { rng.gen_range(0..c) };
                let pool = if aux_by_class[class].is_empty() { &aux_by_class[0] } else { &aux_by_class[class] };
                links.insert((i, pool[rng.gen_range(0..pool.len())]));
            }
        }
        let name = format!("A{k}");
        node_types.push(NodeType {
            name: name.clone(),
            count: size,
            feature_dim: cfg.feature_dim,
        });
        features.push(Array2::from_shape_fn((size, cfg.feature_dim), |(a, d)| {
            let mean = if d == latent[a] { offset } else { 0.0 };
            (mean + noise.sample(&mut rng)) as f32
        }));
        let fwd = relations.len();
        relations.push(Relation {
            name: format!("p_a{k}"),
            src: 0,
            dst: t,
            inverse: Some(fwd + 1),
        });
        relations.push(Relation {
            name: format!("a{k}_p"),
            src: t,
            dst: 0,
            inverse: Some(fwd),
        });
        adjacency.push(CsrMatrix::from_edges(n, size, links.iter().copied())?);
        adjacency.push(CsrMatrix::from_edges(size, n, links.iter().map(|&(i, a)| (a, i)))?);
    }

    // stratified split: train fraction per class, the rest halved into val and test
    let mut splits = vec![Split::Test; n];
    for members in &by_class {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        let train = (members.len() as f64 * cfg.train_fraction).round() as usize;
        let val = (members.len() - train) / 2;
        for (r, &i) in members.iter().enumerate() {
            splits[i] = if r < train {
                Split::Train
            } else if r < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    let g = HeteroGraph {
        schema: HeteroSchema { node_types, relations },
        adjacency,
        features,
        labels: labels.into_iter().map(|l| l as i64).collect(),
        splits,
        target_type: 0,
        num_classes: c,
    };
    g.ensure_valid()?;
    Ok(g)
}
