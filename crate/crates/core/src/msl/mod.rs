//! The meta-path similarity learner.
//!
//! A linear encoder maps every node type into a shared hidden space, the
//! whole graph is treated as one homogeneous graph and mean-propagated for
//! `K` hops, and a per-meta-path, per-hop projection produces the vectors
//! whose centered cosines (multiplied across hops) give the learned
//! similarity of two target nodes.
//!
//! Parameters are flattened in a fixed order wherever a single vector is
//! needed: the input projection of each node type in type-id order, then for
//! each meta-path in training order its hop projections `1..=K`; every
//! matrix row-major.

mod checkpoint;
mod grad;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, schema_hash, write_loss_csv, Checkpoint};
pub use grad::{full_batch_loss, gradients, pair_loss, Batch, PathLoss};
pub use train::{train, LambdaSchedule, LossRecord, Phase, TrainOutput, WindowSampler};

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metapath::MetaPath;
use crate::targets::{gather_rows, SimilarityTargets, ZERO_NORM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MslConfig {
    pub hidden_dim: usize,
    pub num_hops: usize,
    pub epochs_attr: usize,
    pub epochs_label: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_rows: usize,
    pub batch_cols: usize,
    /// Windows (optimizer steps) per epoch.
    pub windows_per_epoch: usize,
    pub concat_distribution_features: bool,
    /// Keep the attribute loss active while fine-tuning on labels.
    pub keep_attr_loss: bool,
    pub lambda_schedule: LambdaSchedule,
    pub seed: u64,
}

impl Default for MslConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            num_hops: 2,
            epochs_attr: 200,
            epochs_label: 30,
            learning_rate: 5e-4,
            weight_decay: 1e-4,
            batch_rows: 1000,
            batch_cols: 1000,
            windows_per_epoch: 1,
            concat_distribution_features: false,
            keep_attr_loss: true,
            lambda_schedule: LambdaSchedule::PerStep,
            seed: 0,
        }
    }
}

impl MslConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden_dim", self.hidden_dim),
            ("num_hops", self.num_hops),
            ("batch_rows", self.batch_rows),
            ("batch_cols", self.batch_cols),
            ("windows_per_epoch", self.windows_per_epoch),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        if self.epochs_attr + self.epochs_label == 0 {
            return Err(Error::InvalidInput("at least one training epoch is required".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidInput("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Trainable tensors, also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `input[t]` is `feature_dim(t) x hidden_dim`.
    pub input: Vec<Array2<f64>>,
    /// `path[p][k]` is the `hidden_dim x hidden_dim` projection of hop `k+1`.
    pub path: Vec<Vec<Array2<f64>>>,
}

impl Params {
    pub fn zeros(input_dims: &[usize], hidden: usize, paths: usize, hops: usize) -> Self {
        Self {
            input: input_dims.iter().map(|&d| Array2::zeros((d, hidden))).collect(),
            path: (0..paths)
                .map(|_| (0..hops).map(|_| Array2::zeros((hidden, hidden))).collect())
                .collect(),
        }
    }

    /// Glorot-uniform initialization from a seed.
    pub fn init(input_dims: &[usize], hidden: usize, paths: usize, hops: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input_dims, hidden, paths, hops);
        for t in p.tensors_mut() {
            let bound = (6.0 / (t.nrows() + t.ncols()) as f64).sqrt();
            t.mapv_inplace(|_| rng.gen_range(-bound..=bound));
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            input: self.input.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
            path: self
                .path
                .iter()
                .map(|hops| hops.iter().map(|t| Array2::zeros(t.raw_dim())).collect())
                .collect(),
        }
    }

    /// Tensors in flattening order.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        self.input.iter().chain(self.path.iter().flatten()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.input
            .iter_mut()
            .chain(self.path.iter_mut().flatten())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for t in self.tensors() {
            out.extend(t.iter().copied());
        }
        out
    }

    /// Overwrites every entry from a flat vector in flattening order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::DimensionMismatch {
                op: "assign_flat",
                detail: format!("{} values for {} parameters", flat.len(), self.len()),
            });
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = flat[at];
                at += 1;
            }
        }
        Ok(())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }
}

/// Trained (or freshly initialized) learner.
#[derive(Debug, Clone, PartialEq)]
pub struct MslModel {
    pub config: MslConfig,
    pub paths: Vec<MetaPath>,
    pub params: Params,
}

impl MslModel {
    pub fn new(g: &HeteroGraph, paths: Vec<MetaPath>, config: MslConfig) -> Result<Self> {
        config.validate()?;
        if paths.is_empty() {
            return Err(Error::InvalidInput("the learner needs at least one meta-path".into()));
        }
        let dims: Vec<usize> = g.schema.node_types.iter().map(|t| t.feature_dim).collect();
        let params = Params::init(&dims, config.hidden_dim, paths.len(), config.num_hops, config.seed);
        Ok(Self {
            config,
            paths,
            params,
        })
    }

    /// Checks parameter shapes against a graph.
    pub fn check_shapes(&self, g: &HeteroGraph) -> Result<()> {
        let d = self.config.hidden_dim;
        if self.params.input.len() != g.schema.node_types.len() {
            return Err(Error::DimensionMismatch {
                op: "msl",
                detail: format!(
                    "{} input projections for {} node types",
                    self.params.input.len(),
                    g.schema.node_types.len()
                ),
            });
        }
        for (t, w) in g.schema.node_types.iter().zip(&self.params.input) {
            if w.dim() != (t.feature_dim, d) {
                return Err(Error::DimensionMismatch {
                    op: "msl",
                    detail: format!("input projection of '{}' is {:?}", t.name, w.dim()),
                });
            }
        }
        if self.params.path.len() != self.paths.len()
            || self
                .params
                .path
                .iter()
                .any(|h| h.len() != self.config.num_hops || h.iter().any(|w| w.dim() != (d, d)))
        {
            return Err(Error::DimensionMismatch {
                op: "msl",
                detail: "meta-path projections do not match the configuration".into(),
            });
        }
        Ok(())
    }

    /// Replaces the parameters; previously encoded snapshots become stale.
    pub fn set_params(&mut self, params: Params) {
        self.params = params;
    }

    pub fn path_index(&self, path: &MetaPath) -> Option<usize> {
        self.paths.iter().position(|p| p == path)
    }

    /// Evaluates the current parameters into per-path, per-hop unit vectors
    /// for every target node. The result is a snapshot: it must be rebuilt
    /// after any parameter change.
    pub fn encode_targets(&self, ctx: &MslContext) -> EncodedModel {
        let z = ctx.target_encodings(&self.params);
        let units = (0..self.paths.len())
            .map(|p| {
                (0..self.config.num_hops)
                    .map(|k| centered_units(&ctx.hop_vectors(&self.params, &z, p, k)).0)
                    .collect()
            })
            .collect();
        EncodedModel { units }
    }
}

/// Graph-derived inputs of the learner that do not depend on parameters.
#[derive(Debug, Clone)]
pub struct MslContext {
    /// `propagated[k][t]`: target rows of `(D^-1 A)^(k+1)` applied to the
    /// type-`t` features embedded in the global node indexing.
    propagated: Vec<Vec<Array2<f64>>>,
    /// `concat[p][k]`: distribution features appended to hop vectors.
    concat: Option<Vec<Vec<Array2<f64>>>>,
    n_target: usize,
    hidden_dim: usize,
}

impl MslContext {
    /// `targets` must follow the model's path order; they are only read when
    /// concatenation is enabled.
    pub fn new(g: &HeteroGraph, config: &MslConfig, targets: &[SimilarityTargets]) -> Result<Self> {
        config.validate()?;
        let prop = g.homogeneous_adjacency()?.row_normalize();
        let offsets = g.schema.type_offsets();
        let n_all = g.schema.total_nodes();
        let (t_lo, t_hi) = (offsets[g.target_type], offsets[g.target_type + 1]);
        let target_rows: Vec<usize> = (t_lo..t_hi).collect();

        let mut propagated = vec![Vec::with_capacity(g.features.len()); config.num_hops];
        for (t, x) in g.features.iter().enumerate() {
            let mut m = Array2::<f64>::zeros((n_all, x.ncols()));
            m.slice_mut(ndarray::s![offsets[t]..offsets[t + 1], ..])
                .assign(&x.mapv(f64::from));
            for hop in propagated.iter_mut() {
                m = prop.spmm(&m.view())?;
                hop.push(m.select(Axis(0), &target_rows));
            }
        }

        let concat = if config.concat_distribution_features {
            let per_path = targets
                .iter()
                .map(|t| {
                    if t.features().num_hops() < config.num_hops {
                        return Err(Error::InvalidInput(
                            "targets have fewer hops than the learner".into(),
                        ));
                    }
                    Ok(t.features().attr[..config.num_hops].to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            Some(per_path)
        } else {
            None
        };

        Ok(Self {
            propagated,
            concat,
            n_target: t_hi - t_lo,
            hidden_dim: config.hidden_dim,
        })
    }

    pub fn target_count(&self) -> usize {
        self.n_target
    }

    pub fn num_hops(&self) -> usize {
        self.propagated.len()
    }

    /// Per-hop encodings of the target nodes, `N_target x hidden`.
    pub fn target_encodings(&self, params: &Params) -> Vec<Array2<f64>> {
        self.propagated
            .iter()
            .map(|per_type| {
                let mut z = Array2::<f64>::zeros((self.n_target, self.hidden_dim));
                for (f, w) in per_type.iter().zip(&params.input) {
                    if f.ncols() > 0 {
                        z += &f.dot(w);
                    }
                }
                z
            })
            .collect()
    }

    /// Hop vectors of meta-path `p` before centering, with distribution
    /// features appended when enabled.
    pub(crate) fn hop_vectors(&self, params: &Params, z: &[Array2<f64>], p: usize, k: usize) -> Array2<f64> {
        let h = z[k].dot(&params.path[p][k]);
        match &self.concat {
            Some(c) => ndarray::concatenate(Axis(1), &[h.view(), c[p][k].view()]).expect("row counts agree"),
            None => h,
        }
    }

    pub(crate) fn propagated(&self) -> &[Vec<Array2<f64>>] {
        &self.propagated
    }
}

/// Centers rows by their column mean and scales them to unit length.
/// Returns the unit rows and the centered norms; rows with norm below
/// [`ZERO_NORM`] are zeroed.
pub(crate) fn centered_units(h: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mean = h.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(h.ncols()));
    let mut u = h - &mean;
    let mut norms = Array1::zeros(h.nrows());
    for (i, mut row) in u.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        norms[i] = n;
        if n < ZERO_NORM {
            row.fill(0.0);
        } else {
            row /= n;
        }
    }
    (u, norms)
}

/// Snapshot of the learner's similarity function for all target nodes.
#[derive(Debug, Clone)]
pub struct EncodedModel {
    units: Vec<Vec<Array2<f64>>>,
}

impl EncodedModel {
    /// Snapshot from per-path, per-hop unit rows.
    pub fn from_units(units: Vec<Vec<Array2<f64>>>) -> Self {
        Self { units }
    }

    pub fn path_count(&self) -> usize {
        self.units.len()
    }

    pub fn node_count(&self) -> usize {
        self.units.first().and_then(|h| h.first()).map_or(0, |u| u.nrows())
    }

    /// Learned similarity of target nodes `i` and `j` under path `p`.
    pub fn similarity(&self, p: usize, i: usize, j: usize) -> f64 {
        self.units[p]
            .iter()
            .map(|u| u.row(i).dot(&u.row(j)).clamp(-1.0, 1.0))
            .product()
    }

    /// Similarities of `rows` against every target node, `rows x N`.
    pub fn similarity_rows(&self, p: usize, rows: &[usize]) -> Array2<f64> {
        let n = self.node_count();
        let mut out = Array2::<f64>::ones((rows.len(), n));
        for u in &self.units[p] {
            let a = gather_rows(u, rows);
            out *= &a.dot(&u.t()).mapv(|v| v.clamp(-1.0, 1.0));
        }
        out
    }
}

/// Per-hop encodings over every node of the graph: the per-type features
/// mapped by the input projections and stacked in global order, then
/// mean-propagated over the type-blind union adjacency `k` times.
pub fn encode(g: &HeteroGraph, m: &MslModel) -> Result<Vec<Array2<f64>>> {
    m.check_shapes(g)?;
    let prop = g.homogeneous_adjacency()?.row_normalize();
    let offsets = g.schema.type_offsets();
    let mut h = Array2::<f64>::zeros((g.schema.total_nodes(), m.config.hidden_dim));
    for (t, (x, w)) in g.features.iter().zip(&m.params.input).enumerate() {
        if x.ncols() > 0 {
            h.slice_mut(ndarray::s![offsets[t]..offsets[t + 1], ..])
                .assign(&x.mapv(f64::from).dot(w));
        }
    }
    let mut out = Vec::with_capacity(m.config.num_hops);
    for _ in 0..m.config.num_hops {
        h = prop.spmm(&h.view())?;
        out.push(h.clone());
    }
    Ok(out)
}

/// Learned similarity of two target nodes under one of the model's paths.
pub fn model_similarity(m: &MslModel, ctx: &MslContext, path: &MetaPath, i: usize, j: usize) -> Result<f64> {
    let p = m
        .path_index(path)
        .ok_or_else(|| Error::InvalidPath("meta-path is not part of the model".into()))?;
    Ok(m.encode_targets(ctx).similarity(p, i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csr::CsrMatrix;
    use crate::graph::{HeteroSchema, NodeType, Relation, Split};
    use crate::metapath::compose_metapath;
    use crate::targets::TargetsConfig;
    use ndarray::array;

    fn homogeneous(n: usize, d: usize, edges: &[(usize, usize)], x: Array2<f32>) -> HeteroGraph {
        HeteroGraph {
            schema: HeteroSchema {
                node_types: vec![NodeType { name: "P".into(), count: n, feature_dim: d }],
                relations: vec![Relation { name: "pp".into(), src: 0, dst: 0, inverse: Some(0) }],
            },
            adjacency: vec![CsrMatrix::from_edges(n, n, edges.iter().copied()).unwrap()],
            features: vec![x],
            labels: vec![0; n],
            splits: vec![Split::Train; n],
            target_type: 0,
            num_classes: 1,
        }
    }

    fn config(d: usize, k: usize) -> MslConfig {
        MslConfig { hidden_dim: d, num_hops: k, ..Default::default() }
    }

    #[test]
    fn empty_graph_encodes_to_zero() {
        let g = homogeneous(3, 2, &[], array![[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let m = MslModel::new(&g, vec![MetaPath::from_relations(vec![0])], config(2, 1)).unwrap();
        let z = encode(&g, &m).unwrap();
        assert!(z[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_projection_is_plain_propagation() {
        let x = array![[1.0f32, 0.0], [0.0, 2.0], [3.0, 1.0]];
        let g = homogeneous(3, 2, &[(0, 1), (0, 2), (2, 1)], x.clone());
        let mut m = MslModel::new(&g, vec![MetaPath::from_relations(vec![0])], config(2, 1)).unwrap();
        m.params.input[0] = Array2::eye(2);
        let z = encode(&g, &m).unwrap();
        let want = g.adjacency[0].row_normalize().spmm(&x.mapv(f64::from).view()).unwrap();
        assert_eq!(z[0], want);
    }

    #[test]
    fn context_encodings_agree_with_direct_encoding() {
        let schema = HeteroSchema {
            node_types: vec![
                NodeType { name: "P".into(), count: 3, feature_dim: 2 },
                NodeType { name: "A".into(), count: 2, feature_dim: 3 },
            ],
            relations: vec![
                Relation { name: "pa".into(), src: 0, dst: 1, inverse: Some(1) },
                Relation { name: "ap".into(), src: 1, dst: 0, inverse: Some(0) },
            ],
        };
        let g = HeteroGraph {
            adjacency: vec![
                CsrMatrix::from_edges(3, 2, [(0, 0), (1, 0), (2, 1)]).unwrap(),
                CsrMatrix::from_edges(2, 3, [(0, 0), (0, 1), (1, 2)]).unwrap(),
            ],
            features: vec![
                array![[1.0f32, 0.5], [0.0, 1.0], [2.0, -1.0]],
                array![[1.0f32, 2.0, 3.0], [-1.0, 0.0, 1.0]],
            ],
            labels: vec![0, 1, 0],
            splits: vec![Split::Train; 3],
            target_type: 0,
            num_classes: 2,
            schema,
        };
        let m = MslModel::new(&g, vec![MetaPath::from_relations(vec![0, 1])], config(4, 2)).unwrap();
        let full = encode(&g, &m).unwrap();
        let ctx = MslContext::new(&g, &m.config, &[]).unwrap();
        let z = ctx.target_encodings(&m.params);
        for k in 0..2 {
            assert_eq!(z[k].dim(), (3, 4));
            for i in 0..3 {
                for c in 0..4 {
                    assert!((z[k][[i, c]] - full[k][[i, c]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn antipodal_encodings_give_minus_one() {
        // propagated rows are [1,0], [0,1], [0,1], [1,0]: nodes 0 and 1
        // sit on opposite sides of the mean
        let x = array![[0.0f32, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let g = homogeneous(4, 2, &[(0, 2), (1, 3), (2, 3), (3, 2)], x);
        let path = MetaPath::from_relations(vec![0]);
        let mut m = MslModel::new(&g, vec![path.clone()], config(2, 1)).unwrap();
        m.params.input[0] = Array2::eye(2);
        m.params.path[0][0] = Array2::eye(2);
        let ctx = MslContext::new(&g, &m.config, &[]).unwrap();
        assert!((model_similarity(&m, &ctx, &path, 0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert!((model_similarity(&m, &ctx, &path, 0, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_symmetric_and_bounded_on_random_parameters() {
        let x = Array2::from_shape_fn((10, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f32 - 2.0);
        let edges: Vec<_> = (0..10).flat_map(|i| [(i, (i + 1) % 10), (i, (i + 3) % 10)]).collect();
        let g = homogeneous(10, 3, &edges, x);
        let path = MetaPath::from_relations(vec![0]);
        let sub = compose_metapath(&g, &path, true).unwrap();
        let tcfg = TargetsConfig { num_hops: 2, ..Default::default() };
        let t = SimilarityTargets::build(&sub, &g, &tcfg).unwrap();
        for concat in [false, true] {
            for seed in 0..3 {
                let cfg = MslConfig { seed, concat_distribution_features: concat, ..config(5, 2) };
                let m = MslModel::new(&g, vec![path.clone()], cfg).unwrap();
                let ctx = MslContext::new(&g, &m.config, std::slice::from_ref(&t)).unwrap();
                let enc = m.encode_targets(&ctx);
                let block = enc.similarity_rows(0, &[0, 4]);
                for i in 0..10 {
                    for j in 0..10 {
                        let s = enc.similarity(0, i, j);
                        assert!((-1.0..=1.0).contains(&s));
                        assert!((s - enc.similarity(0, j, i)).abs() < 1e-15);
                    }
                    assert!((block[[1, i]] - enc.similarity(0, 4, i)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn params_flatten_round_trip() {
        let p = Params::init(&[2, 3], 4, 2, 2, 9);
        let mut q = p.zeros_like();
        q.assign_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.len(), 2 * 4 + 3 * 4 + 2 * 2 * 16);
    }
}
