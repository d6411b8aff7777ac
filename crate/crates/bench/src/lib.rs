//! Fixtures shared by the benchmarks.

use hgrw_core::io::{synth_generate, SynthConfig};
use hgrw_core::metapath::compose_metapath;
use hgrw_core::msl::{EncodedModel, MslContext};
use hgrw_core::pipeline::{prepare, PipelineConfig};
use hgrw_core::{HeteroGraph, MetaPathSubgraph, MslModel};
use ndarray::Array2;

/// Planted graph with `n` target nodes, two relations of mean degree 10.
pub fn graph(n: usize) -> HeteroGraph {
    synth_generate(&SynthConfig {
        nodes: n,
        seed: 1,
        ..Default::default()
    })
    .expect("valid synth config")
}

/// Dense `n x d` matrix with a deterministic pattern.
pub fn dense(n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(i, j)| ((i * 31 + j * 17) % 97) as f64 / 97.0)
}

/// An untrained model encoding of the first relation's subgraph.
pub fn encoded(g: &HeteroGraph) -> (MetaPathSubgraph, EncodedModel) {
    let cfg = PipelineConfig {
        max_path_len: 1,
        ..Default::default()
    };
    let prepared = prepare(g, &cfg).expect("paths exist");
    let model = MslModel::new(g, prepared.paths(), cfg.msl.clone()).expect("valid model");
    let ctx = MslContext::new(g, &model.config, &prepared.targets).expect("context");
    let sub = compose_metapath(g, &prepared.subgraphs[0].path, true).expect("path composes");
    (sub, model.encode_targets(&ctx))
}
