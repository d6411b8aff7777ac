//! End-to-end rewiring: select meta-paths, build targets, train the
//! learner, rewire every subgraph and merge the results.

use rayon::prelude::*;

use crate::diagnostics::{homophily_report, HomophilyReport};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metapath::{compose_metapath, enumerate_metapaths, MetaPath, MetaPathSubgraph};
use crate::moo::MooConfig;
use crate::msl::{train, LossRecord, MslConfig, MslContext, MslModel};
use crate::rewire::{merge_into_graph, rewire_metapath, score_candidates, RewireConfig, RewirePlan};
use crate::targets::{SimilarityTargets, TargetsConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub max_path_len: usize,
    /// Explicit meta-paths to use instead of enumeration.
    pub paths: Option<Vec<MetaPath>>,
    pub symmetrize: bool,
    pub targets: TargetsConfig,
    pub msl: MslConfig,
    pub moo: MooConfig,
    pub rewire: RewireConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_path_len: 2,
            paths: None,
            symmetrize: true,
            targets: TargetsConfig::default(),
            msl: MslConfig::default(),
            moo: MooConfig::default(),
            rewire: RewireConfig::default(),
        }
    }
}

/// Meta-path subgraphs and their similarity targets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub subgraphs: Vec<MetaPathSubgraph>,
    pub targets: Vec<SimilarityTargets>,
}

impl Prepared {
    pub fn paths(&self) -> Vec<MetaPath> {
        self.subgraphs.iter().map(|s| s.path.clone()).collect()
    }
}

/// Candidate meta-paths: the explicit list, or every anchored path up to
/// `max_len` whose subgraph has at least one edge.
pub fn select_metapaths(g: &HeteroGraph, explicit: Option<&[MetaPath]>, max_len: usize, symmetrize: bool) -> Result<Vec<MetaPathSubgraph>> {
    let paths = match explicit {
        Some(p) => p.to_vec(),
        None => enumerate_metapaths(&g.schema, g.target_type, max_len),
    };
    let subs = paths
        .par_iter()
        .map(|p| compose_metapath(g, p, symmetrize))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<_> = subs.into_iter().filter(|s| s.edge_count() > 0).collect();
    if kept.is_empty() {
        return Err(Error::NoValidMetaPath);
    }
    Ok(kept)
}

/// Subgraphs and targets for the given (or enumerated) meta-paths.
pub fn prepare(g: &HeteroGraph, cfg: &PipelineConfig) -> Result<Prepared> {
    g.ensure_valid()?;
    cfg.targets.validate()?;
    if cfg.targets.num_hops != cfg.msl.num_hops {
        return Err(Error::InvalidInput(format!(
            "targets use {} hops but the learner uses {}",
            cfg.targets.num_hops, cfg.msl.num_hops
        )));
    }
    let subgraphs = select_metapaths(g, cfg.paths.as_deref(), cfg.max_path_len, cfg.symmetrize)?;
    let targets = subgraphs
        .par_iter()
        .map(|s| SimilarityTargets::build(s, g, &cfg.targets))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { subgraphs, targets })
}

/// Rewires every prepared subgraph with a trained model. Subgraphs that
/// rewiring changed are merged into the graph as new relations; unchanged
/// ones are left out so an identity configuration reproduces the input.
pub fn rewire_graph(
    g: &HeteroGraph,
    model: &MslModel,
    prepared: &Prepared,
    cfg: &RewireConfig,
) -> Result<(HeteroGraph, Vec<MetaPathSubgraph>, Vec<RewirePlan>)> {
    let ctx = MslContext::new(g, &model.config, &prepared.targets)?;
    let enc = model.encode_targets(&ctx);
    let mut rewired = Vec::with_capacity(prepared.subgraphs.len());
    let mut plans = Vec::with_capacity(prepared.subgraphs.len());
    for sub in &prepared.subgraphs {
        let p = model
            .path_index(&sub.path)
            .ok_or_else(|| Error::InvalidPath(format!("model has no meta-path {}", sub.path.label(&g.schema))))?;
        let candidates = score_candidates(&enc, p, sub, cfg)?;
        let (out, plan) = rewire_metapath(sub, &candidates, &enc, p, cfg, sub.path.label(&g.schema))?;
        rewired.push(out);
        plans.push(plan);
    }
    let changed: Vec<MetaPathSubgraph> = rewired
        .iter()
        .zip(&prepared.subgraphs)
        .filter(|(after, before)| after.adjacency != before.adjacency)
        .map(|(after, _)| after.clone())
        .collect();
    let merged = merge_into_graph(g, &changed)?;
    Ok((merged, rewired, plans))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub paths: Vec<MetaPath>,
    pub model: MslModel,
    pub history: Vec<LossRecord>,
    pub rewired_graph: HeteroGraph,
    pub rewired: Vec<MetaPathSubgraph>,
    pub plans: Vec<RewirePlan>,
    pub report: HomophilyReport,
}

pub fn run_pipeline(g: &HeteroGraph, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let prepared = prepare(g, cfg)?;
    let paths = prepared.paths();
    let trained = train(g, &paths, &prepared.targets, &cfg.msl, &cfg.moo)?;
    let (rewired_graph, rewired, plans) = rewire_graph(g, &trained.model, &prepared, &cfg.rewire)?;
    let report = homophily_report(g, &rewired_graph, &paths)?;
    Ok(PipelineOutput {
        paths,
        model: trained.model,
        history: trained.history,
        rewired_graph,
        rewired,
        plans,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{synth_generate, SynthConfig};

    fn quick(seed: u64) -> PipelineConfig {
        PipelineConfig {
            msl: MslConfig { hidden_dim: 8, epochs_attr: 20, epochs_label: 5, seed, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn identity_configuration_changes_nothing() {
        let g = synth_generate(&SynthConfig { nodes: 80, seed: 1, ..Default::default() }).unwrap();
        let mut cfg = quick(0);
        cfg.rewire = RewireConfig { edge_budget: 0, gamma: -1.0, ..Default::default() };
        let out = run_pipeline(&g, &cfg).unwrap();
        for (sub, before) in out.rewired.iter().zip(prepare(&g, &cfg).unwrap().subgraphs) {
            assert_eq!(sub.adjacency, before.adjacency);
        }
        for r in &out.report.paths {
            assert_eq!(r.hr_before, r.hr_after);
        }
        assert_eq!(out.rewired_graph, g);
    }

    #[test]
    fn empty_schema_has_no_paths() {
        let mut g = synth_generate(&SynthConfig { nodes: 20, ..Default::default() }).unwrap();
        g.adjacency = vec![crate::csr::CsrMatrix::zeros(20, 20); 2];
        assert!(matches!(prepare(&g, &quick(0)), Err(Error::NoValidMetaPath)));
    }

    #[test]
    fn hop_mismatch_is_rejected() {
        let g = synth_generate(&SynthConfig { nodes: 20, ..Default::default() }).unwrap();
        let mut cfg = quick(0);
        cfg.targets.num_hops = 3;
        assert!(prepare(&g, &cfg).is_err());
    }
}
