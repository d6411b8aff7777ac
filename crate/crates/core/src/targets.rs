//! Supervision for the similarity learner: multi-hop neighborhood attribute
//! and label distributions on a meta-path subgraph, the centered-cosine
//! target similarities built from them, and the label-coverage mask.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metapath::MetaPathSubgraph;

/// Centered vectors shorter than this are treated as having no direction.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetsConfig {
    pub num_hops: usize,
    /// A node's label distribution is used only when strictly more than
    /// this fraction of its neighbors are training nodes.
    pub alpha: f64,
    /// Largest target-node count for which full similarity matrices may be
    /// materialized.
    pub dense_cutoff: usize,
}

impl Default for TargetsConfig {
    fn default() -> Self {
        Self {
            num_hops: 2,
            alpha: 0.6,
            dense_cutoff: 20_000,
        }
    }
}

impl TargetsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_hops == 0 {
            return Err(Error::InvalidInput("num_hops must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Per-hop neighborhood distributions of one meta-path subgraph.
#[derive(Debug, Clone)]
pub struct DistributionFeatures {
    /// `attr[k-1]` is the k-hop attribute distribution, `N x d_in`.
    pub attr: Vec<Array2<f64>>,
    /// `label[k-1]` is the k-hop label distribution, `N x c`.
    pub label: Vec<Array2<f64>>,
    /// Fraction of each node's 1-hop neighbors that are training nodes.
    pub labeled_fraction: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DistributionFeatures {
    pub fn num_hops(&self) -> usize {
        self.attr.len()
    }

    pub fn node_count(&self) -> usize {
        self.labeled_fraction.len()
    }
}

/// Repeated row-stochastic propagation of the target features and of the
/// one-hot training labels over the subgraph.
pub fn neighborhood_distributions(
    sub: &MetaPathSubgraph,
    g: &HeteroGraph,
    cfg: &TargetsConfig,
) -> Result<DistributionFeatures> {
    cfg.validate()?;
    let n = g.target_count();
    if sub.node_count() != n {
        return Err(Error::DimensionMismatch {
            op: "neighborhood_distributions",
            detail: format!("subgraph has {} nodes, target type has {n}", sub.node_count()),
        });
    }
    let prop = sub.adjacency.row_normalize();
    let x = g.target_features().mapv(f64::from);
    let mut y = Array2::<f64>::zeros((n, g.num_classes));
    for i in 0..n {
        if g.is_train(i) {
            y[[i, g.labels[i] as usize]] = 1.0;
        }
    }

    let mut attr = Vec::with_capacity(cfg.num_hops);
    let mut label = Vec::with_capacity(cfg.num_hops);
    let (mut ax, mut ly) = (x, y);
    for _ in 0..cfg.num_hops {
        ax = prop.spmm(&ax.view())?;
        ly = prop.spmm(&ly.view())?;
        attr.push(ax.clone());
        label.push(ly.clone());
    }

    let labeled_fraction: Vec<f64> = (0..n)
        .map(|i| {
            let nbrs = sub.adjacency.row(i);
            if nbrs.is_empty() {
                0.0
            } else {
                nbrs.iter().filter(|&&j| g.is_train(j)).count() as f64 / nbrs.len() as f64
            }
        })
        .collect();
    let mask = mask_from_fraction(&labeled_fraction, cfg.alpha);
    Ok(DistributionFeatures {
        attr,
        label,
        labeled_fraction,
        mask,
    })
}

fn mask_from_fraction(fraction: &[f64], alpha: f64) -> Vec<bool> {
    fraction.iter().map(|&r| r > alpha).collect()
}

/// `mask[i]` is set iff the labeled-neighbor fraction strictly exceeds `alpha`.
pub fn label_mask(df: &DistributionFeatures, alpha: f64) -> Vec<bool> {
    mask_from_fraction(&df.labeled_fraction, alpha)
}

/// Cosine of `x - mean` and `y - mean`; `0.0` when either centered vector
/// has (near) zero norm.
pub fn centered_cosine(x: ArrayView1<f64>, y: ArrayView1<f64>, mean: ArrayView1<f64>) -> f64 {
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for ((a, b), m) in x.iter().zip(y.iter()).zip(mean.iter()) {
        let (a, b) = (a - m, b - m);
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    let (nx, ny) = (nx.sqrt(), ny.sqrt());
    if nx < ZERO_NORM || ny < ZERO_NORM {
        return 0.0;
    }
    (dot / (nx * ny)).clamp(-1.0, 1.0)
}

/// Rows of `m` centered by the column mean and scaled to unit length;
/// degenerate rows become zero.
pub(crate) fn centered_unit_rows(m: &Array2<f64>) -> Array2<f64> {
    let mean = m.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(m.ncols()));
    let mut out = m - &mean;
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm < ZERO_NORM {
            row.fill(0.0);
        } else {
            row /= norm;
        }
    }
    out
}

/// Lazily evaluated target similarities of one meta-path.
///
/// Pairwise values are products over hops of dot products between
/// pre-centered unit rows, so nothing of size `N x N` is held unless
/// explicitly materialized.
#[derive(Debug, Clone)]
pub struct SimilarityTargets {
    features: DistributionFeatures,
    attr_units: Vec<Array2<f64>>,
    label_units: Vec<Array2<f64>>,
    dense_cutoff: usize,
}

impl SimilarityTargets {
    pub fn new(features: DistributionFeatures, cfg: &TargetsConfig) -> Self {
        let attr_units = features.attr.iter().map(centered_unit_rows).collect();
        let label_units = features.label.iter().map(centered_unit_rows).collect();
        Self {
            features,
            attr_units,
            label_units,
            dense_cutoff: cfg.dense_cutoff,
        }
    }

    /// Convenience: distributions plus targets for one subgraph.
    pub fn build(sub: &MetaPathSubgraph, g: &HeteroGraph, cfg: &TargetsConfig) -> Result<Self> {
        Ok(Self::new(neighborhood_distributions(sub, g, cfg)?, cfg))
    }

    /// Targets given directly by per-hop unit rows.
    #[cfg(test)]
    pub(crate) fn from_units(features: DistributionFeatures, attr_units: Vec<Array2<f64>>, label_units: Vec<Array2<f64>>) -> Self {
        Self {
            features,
            attr_units,
            label_units,
            dense_cutoff: usize::MAX,
        }
    }

    pub fn features(&self) -> &DistributionFeatures {
        &self.features
    }

    pub fn node_count(&self) -> usize {
        self.features.node_count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.features.mask
    }

    pub fn pair_mask(&self, i: usize, j: usize) -> bool {
        self.features.mask[i] && self.features.mask[j]
    }

    pub fn attr_target(&self, i: usize, j: usize) -> f64 {
        hop_product(&self.attr_units, i, j)
    }

    pub fn label_target(&self, i: usize, j: usize) -> f64 {
        hop_product(&self.label_units, i, j)
    }

    /// Attribute targets for every `(rows[a], cols[b])` pair.
    pub fn attr_window(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        window_product(&self.attr_units, rows, cols)
    }

    /// Label targets for every `(rows[a], cols[b])` pair.
    pub fn label_window(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        window_product(&self.label_units, rows, cols)
    }

    /// Full `N x N` attribute target matrix; refused above the dense cutoff.
    pub fn materialize_attr(&self) -> Result<Array2<f64>> {
        self.check_dense()?;
        let all: Vec<usize> = (0..self.node_count()).collect();
        Ok(self.attr_window(&all, &all))
    }

    pub fn materialize_label(&self) -> Result<Array2<f64>> {
        self.check_dense()?;
        let all: Vec<usize> = (0..self.node_count()).collect();
        Ok(self.label_window(&all, &all))
    }

    fn check_dense(&self) -> Result<()> {
        if self.node_count() > self.dense_cutoff {
            return Err(Error::InvalidInput(format!(
                "{} target nodes exceed the dense cutoff {}",
                self.node_count(),
                self.dense_cutoff
            )));
        }
        Ok(())
    }
}

fn hop_product(units: &[Array2<f64>], i: usize, j: usize) -> f64 {
    units
        .iter()
        .map(|u| u.row(i).dot(&u.row(j)).clamp(-1.0, 1.0))
        .product()
}

pub(crate) fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

fn window_product(units: &[Array2<f64>], rows: &[usize], cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::ones((rows.len(), cols.len()));
    for u in units {
        let a = gather_rows(u, rows);
        let b = gather_rows(u, cols);
        let c = a.dot(&b.t()).mapv(|v| v.clamp(-1.0, 1.0));
        out *= &c;
    }
    out
}

/// Column means of each hop's attribute distribution.
pub fn attr_means(df: &DistributionFeatures) -> Vec<Array1<f64>> {
    df.attr
        .iter()
        .map(|m| m.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(m.ncols())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csr::CsrMatrix;
    use crate::graph::{HeteroSchema, NodeType, Relation, Split};
    use crate::metapath::{compose_metapath, MetaPath};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)], labels: Vec<i64>, splits: Vec<Split>, x: Array2<f32>) -> HeteroGraph {
        HeteroGraph {
            schema: HeteroSchema {
                node_types: vec![NodeType { name: "P".into(), count: n, feature_dim: x.ncols() }],
                relations: vec![Relation { name: "pp".into(), src: 0, dst: 0, inverse: Some(0) }],
            },
            adjacency: vec![CsrMatrix::from_edges(n, n, edges.iter().copied()).unwrap()],
            features: vec![x],
            labels,
            splits,
            target_type: 0,
            num_classes: 2,
        }
    }

    fn row_sum(m: &Array2<f64>, i: usize) -> f64 {
        m.row(i).sum()
    }

    fn sub_of(g: &HeteroGraph) -> MetaPathSubgraph {
        compose_metapath(g, &MetaPath::from_relations(vec![0]), true).unwrap()
    }

    fn star() -> HeteroGraph {
        graph(
            4,
            &[(0, 1), (0, 2), (0, 3)],
            vec![-1, 0, 0, -1],
            vec![Split::None, Split::Train, Split::Train, Split::None],
            Array2::zeros((4, 1)),
        )
    }

    #[test]
    fn star_label_distribution_and_fraction() {
        let g = star();
        let cfg = TargetsConfig { num_hops: 1, alpha: 0.6, ..Default::default() };
        let df = neighborhood_distributions(&sub_of(&g), &g, &cfg).unwrap();
        let row = df.label[0].row(0).to_vec();
        assert!((row[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(row[1], 0.0);
        assert!((df.labeled_fraction[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(df.mask[0]);
        assert_eq!(label_mask(&df, 1.0), vec![false; 4]);
    }

    #[test]
    fn edgeless_graph_gives_zero_distributions() {
        let x = array![[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let g = graph(3, &[], vec![0, 1, 0], vec![Split::Train; 3], x);
        let cfg = TargetsConfig { num_hops: 2, ..Default::default() };
        let df = neighborhood_distributions(&sub_of(&g), &g, &cfg).unwrap();
        for k in 0..2 {
            assert!(df.attr[k].iter().all(|&v| v == 0.0));
            assert!(df.label[k].iter().all(|&v| v == 0.0));
        }
        assert_eq!(df.labeled_fraction, vec![0.0; 3]);
        assert_eq!(df.mask, vec![false; 3]);
    }

    #[test]
    fn fully_labeled_rows_are_stochastic() {
        let g = graph(
            4,
            &[(0, 1), (1, 2), (2, 3)],
            vec![0, 1, 1, 0],
            vec![Split::Train; 4],
            Array2::zeros((4, 1)),
        );
        let cfg = TargetsConfig { num_hops: 3, alpha: 0.0, ..Default::default() };
        let df = neighborhood_distributions(&sub_of(&g), &g, &cfg).unwrap();
        for k in 0..3 {
            for i in 0..4 {
                assert!((row_sum(&df.label[k], i) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(df.mask, vec![true; 4]);
    }

    #[test]
    fn centered_cosine_cases() {
        let x = array![1.0, 0.0];
        let y = array![0.0, 1.0];
        let mean = array![0.5, 0.5];
        assert!((centered_cosine(x.view(), y.view(), mean.view()) + 1.0).abs() < 1e-15);
        assert!((centered_cosine(x.view(), x.view(), mean.view()) - 1.0).abs() < 1e-15);
        assert_eq!(centered_cosine(mean.view(), x.view(), mean.view()), 0.0);
    }

    #[test]
    fn targets_from_two_antipodal_nodes() {
        // 1-hop distributions are [1,0], [0,1], [0,1], [1,0]
        let x = array![[0.0f32, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let g = graph(4, &[(0, 2), (1, 3), (2, 3), (3, 2)], vec![-1; 4], vec![Split::None; 4], x);
        let cfg = TargetsConfig { num_hops: 1, ..Default::default() };
        let sub = compose_metapath(&g, &MetaPath::from_relations(vec![0]), false).unwrap();
        let t = SimilarityTargets::build(&sub, &g, &cfg).unwrap();
        // column means are [0.5, 0.5]; centered rows 0 and 1 are antipodal
        assert!((t.attr_target(0, 1) + 1.0).abs() < 1e-12);
        assert!((t.attr_target(0, 0) - 1.0).abs() < 1e-12);
    }

    fn random_instance(seed: u64, n: usize) -> HeteroGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<_> = (0..3 * n).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let labels: Vec<i64> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let splits = (0..n)
            .map(|_| if rng.gen_bool(0.5) { Split::Train } else { Split::Test })
            .collect();
        // dyadic values so integer shifts are exact in f32
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1024i32..1024) as f32 / 1024.0);
        graph(n, &edges, labels, splits, x)
    }

    #[test]
    fn window_matches_pairwise() {
        let g = random_instance(5, 30);
        let cfg = TargetsConfig { num_hops: 2, alpha: 0.3, ..Default::default() };
        let t = SimilarityTargets::build(&sub_of(&g), &g, &cfg).unwrap();
        let rows = [3, 7, 7, 29];
        let cols = [0, 1, 28];
        let w = t.attr_window(&rows, &cols);
        let l = t.label_window(&rows, &cols);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                assert!((w[[a, b]] - t.attr_target(i, j)).abs() < 1e-14);
                assert!((l[[a, b]] - t.label_target(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dense_cutoff_is_enforced() {
        let g = random_instance(1, 20);
        let cfg = TargetsConfig { num_hops: 1, alpha: 0.5, dense_cutoff: 10 };
        let t = SimilarityTargets::build(&sub_of(&g), &g, &cfg).unwrap();
        assert!(t.materialize_attr().is_err());
    }

    proptest! {
        #[test]
        fn targets_symmetric_bounded_and_translation_invariant(seed in any::<u64>(), shift in -5i32..5) {
            let mut g = random_instance(seed, 15);
            // a ring keeps every node non-isolated, so walk mass is always 1
            let ring = CsrMatrix::from_edges(15, 15, (0..15).map(|i| (i, (i + 1) % 15))).unwrap();
            g.adjacency[0] = g.adjacency[0].union(&ring).unwrap();
            let cfg = TargetsConfig { num_hops: 2, alpha: 0.4, ..Default::default() };
            let t = SimilarityTargets::build(&sub_of(&g), &g, &cfg).unwrap();
            let mut shifted = g.clone();
            shifted.features[0].mapv_inplace(|v| v + shift as f32);
            let ts = SimilarityTargets::build(&sub_of(&shifted), &shifted, &cfg).unwrap();
            for i in 0..15 {
                prop_assert!(t.features().label[0].row(i).iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(row_sum(&t.features().label[1], i) <= 1.0 + 1e-12);
                for j in 0..15 {
                    let a = t.attr_target(i, j);
                    prop_assert!((-1.0..=1.0).contains(&a));
                    prop_assert!((a - t.attr_target(j, i)).abs() < 1e-15);
                    prop_assert!((t.label_target(i, j) - t.label_target(j, i)).abs() < 1e-15);
                    prop_assert!((a - ts.attr_target(i, j)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn mask_monotone_in_alpha(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let g = random_instance(seed, 20);
            let cfg = TargetsConfig { num_hops: 1, alpha: 0.5, ..Default::default() };
            let df = neighborhood_distributions(&sub_of(&g), &g, &cfg).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let m_lo = label_mask(&df, lo);
            let m_hi = label_mask(&df, hi);
            for (x, y) in m_lo.iter().zip(&m_hi) {
                prop_assert!(*x || !*y);
            }
        }
    }
}
