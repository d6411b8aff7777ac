//! Homophily reports, the class-separation complexity measure and the
//! average relative improvement metric.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metapath::{compose_metapath, homophily_stats, MetaPath};
use crate::rewire::rewired_relation_name;

/// Centroid distances below this count as coincident.
const COINCIDENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub metapath: String,
    pub hr_before: f64,
    pub hr_after: f64,
    pub edges_before: usize,
    pub edges_after: usize,
    pub coverage_before: f64,
    /// Fraction of rewired edges with both endpoints labeled.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub paths: Vec<PathReport>,
    pub mh_before: f64,
    pub mh_after: f64,
}

impl HomophilyReport {
    /// Row of the path with the highest ratio after rewiring; ties keep the
    /// earlier path.
    pub fn best_after(&self) -> Option<&PathReport> {
        self.paths
            .iter()
            .reduce(|best, r| if r.hr_after > best.hr_after { r } else { best })
    }

    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "metapath\thr_before\thr_after\tedges_before\tedges_after\tcoverage")?;
        for r in &self.paths {
            writeln!(
                w,
                "{}\t{:.6}\t{:.6}\t{}\t{}\t{:.6}",
                r.metapath, r.hr_before, r.hr_after, r.edges_before, r.edges_after, r.coverage
            )?;
        }
        writeln!(w, "MH\t{:.6}\t{:.6}\t\t\t", self.mh_before, self.mh_after)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Subgraph of `path` after rewiring: the merged `rw:` relation when
/// present, otherwise the path composed on `after`.
fn after_adjacency(after: &HeteroGraph, path: &MetaPath, symmetrize: bool) -> Result<CsrMatrix> {
    let sub = compose_metapath(after, path, symmetrize)?;
    let name = rewired_relation_name(&sub, &after.schema);
    Ok(match after.schema.relation_id(&name) {
        Some(id) => after.adjacency[id].clone(),
        None => sub.adjacency,
    })
}

/// Per-path homophily before and after rewiring, plus the maxima.
pub fn homophily_report(before: &HeteroGraph, after: &HeteroGraph, paths: &[MetaPath]) -> Result<HomophilyReport> {
    if before.target_type != after.target_type || before.labels != after.labels {
        return Err(Error::InvalidInput("graphs differ in target type or labels".into()));
    }
    let mut rows = Vec::with_capacity(paths.len());
    for path in paths {
        let sub = compose_metapath(before, path, true)?;
        let b = homophily_stats(&sub.adjacency, &before.labels)?;
        let a = homophily_stats(&after_adjacency(after, path, true)?, &after.labels)?;
        rows.push(PathReport {
            metapath: path.label(&before.schema),
            hr_before: b.ratio,
            hr_after: a.ratio,
            edges_before: b.total,
            edges_after: a.total,
            coverage_before: b.coverage(),
            coverage: a.coverage(),
        });
    }
    let max = |f: fn(&PathReport) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    if rows.is_empty() {
        return Err(Error::NoValidMetaPath);
    }
    Ok(HomophilyReport {
        mh_before: max(|r| r.hr_before),
        mh_after: max(|r| r.hr_after),
        paths: rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityVariant {
    /// `(S_i + S_j) / M_ij`
    Linear,
    /// `(S_i^2 + S_j^2) / M_ij^2`
    Squared,
}

#[derive(Debug, Clone)]
pub struct ComplexityInputs<'a> {
    pub representations: ArrayView2<'a, f64>,
    /// Class of each row, `0..k`.
    pub classes: &'a [usize],
    pub p: f64,
    pub variant: ComplexityVariant,
}

impl<'a> ComplexityInputs<'a> {
    pub fn new(representations: ArrayView2<'a, f64>, classes: &'a [usize]) -> Self {
        Self {
            representations,
            classes,
            p: 2.0,
            variant: ComplexityVariant::Linear,
        }
    }
}

fn p_norm_pow(v: impl Iterator<Item = f64>, p: f64) -> f64 {
    v.map(|x| x.abs().powf(p)).sum()
}

/// Davies-Bouldin style ratio of intra-class spread to centroid separation,
/// averaged over classes using each class's worst partner. Lower is better.
pub fn complexity_measure(input: &ComplexityInputs) -> Result<f64> {
    let x = input.representations;
    if x.nrows() != input.classes.len() {
        return Err(Error::DimensionMismatch {
            op: "complexity_measure",
            detail: format!("{} rows but {} class entries", x.nrows(), input.classes.len()),
        });
    }
    if !(input.p >= 1.0) {
        return Err(Error::InvalidInput(format!("norm order {} must be at least 1", input.p)));
    }
    let k = input.classes.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::InvalidInput("at least two classes are required".into()));
    }
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &c) in x.rows().into_iter().zip(input.classes) {
        sums.row_mut(c).scaled_add(1.0, &row);
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!("class {empty} has no samples")));
    }
    let centroids = sums / &Array1::from_iter(counts.iter().map(|&c| c as f64)).insert_axis(Axis(1));

    let p = input.p;
    let mut spread_pow = vec![0.0; k];
    for (row, &c) in x.rows().into_iter().zip(input.classes) {
        spread_pow[c] += p_norm_pow(row.iter().zip(centroids.row(c)).map(|(a, b)| a - b), p);
    }
    let spread: Vec<f64> = spread_pow
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (s / n as f64).powf(1.0 / p))
        .collect();

    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let m = p_norm_pow(centroids.row(i).iter().zip(centroids.row(j)).map(|(a, b)| a - b), p).powf(1.0 / p);
            if m < COINCIDENT {
                return Err(Error::CoincidentCentroids(i.min(j), i.max(j)));
            }
            let r = match input.variant {
                ComplexityVariant::Linear => (spread[i] + spread[j]) / m,
                ComplexityVariant::Squared => (spread[i].powi(2) + spread[j].powi(2)) / (m * m),
            };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// One mean-aggregation layer: each row becomes the average of its
/// neighbors' rows.
pub fn mean_aggregate(adj: &CsrMatrix, x: &Array2<f64>) -> Result<Array2<f64>> {
    adj.row_normalize().spmm(&x.view())
}

/// Complexity of the labeled target nodes' representations after one mean
/// aggregation over `adj`, or of the raw target features when `adj` is
/// `None`.
pub fn target_complexity(
    g: &HeteroGraph,
    adj: Option<&CsrMatrix>,
    variant: ComplexityVariant,
    p: f64,
) -> Result<f64> {
    let x = g.target_features().mapv(f64::from);
    let reps = match adj {
        Some(a) => mean_aggregate(a, &x)?,
        None => x,
    };
    let labeled: Vec<usize> = (0..g.target_count()).filter(|&i| g.labels[i] >= 0).collect();
    let rows = reps.select(Axis(0), &labeled);
    let classes: Vec<usize> = labeled.iter().map(|&i| g.labels[i] as usize).collect();
    complexity_measure(&ComplexityInputs {
        representations: rows.view(),
        classes: &classes,
        p,
        variant,
    })
}

/// Average relative improvement in percent, `100 * mean((after - before) / before)`.
pub fn ari(before: &[f64], after: &[f64]) -> Result<f64> {
    if before.len() != after.len() || before.is_empty() {
        return Err(Error::DimensionMismatch {
            op: "ari",
            detail: format!("{} baseline and {} rewired scores", before.len(), after.len()),
        });
    }
    if before.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidInput("baseline accuracies must be positive".into()));
    }
    let sum: f64 = before.iter().zip(after).map(|(b, a)| (a - b) / b).sum();
    Ok(100.0 * sum / before.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy_graph;
    use ndarray::array;
    use proptest::prelude::*;

    fn measure(x: &Array2<f64>, classes: &[usize], variant: ComplexityVariant) -> Result<f64> {
        let mut input = ComplexityInputs::new(x.view(), classes);
        input.variant = variant;
        complexity_measure(&input)
    }

    #[test]
    fn point_masses_have_zero_complexity() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]];
        assert_eq!(measure(&x, &[0, 0, 1], ComplexityVariant::Linear).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_one_dimensional_classes() {
        for mu in [0.5, 1.0, 3.0] {
            let x = array![[-mu - 1.0], [-mu + 1.0], [mu - 1.0], [mu + 1.0]];
            let c = measure(&x, &[0, 0, 1, 1], ComplexityVariant::Linear).unwrap();
            assert!((c - 1.0 / mu).abs() < 1e-12);
            let c2 = measure(&x, &[0, 0, 1, 1], ComplexityVariant::Squared).unwrap();
            assert!((c2 - 2.0 / (4.0 * mu * mu)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_classes_are_rejected() {
        let x = array![[1.0], [-1.0], [1.0], [-1.0]];
        assert!(matches!(
            measure(&x, &[0, 0, 1, 1], ComplexityVariant::Linear),
            Err(Error::CoincidentCentroids(0, 1))
        ));
        assert!(measure(&x, &[0, 0, 0, 0], ComplexityVariant::Linear).is_err());
        assert!(measure(&x, &[0, 0, 2, 2], ComplexityVariant::Linear).is_err());
    }

    #[test]
    fn target_complexity_skips_unlabeled_rows() {
        let mut g = toy_graph();
        let raw = target_complexity(&g, None, ComplexityVariant::Linear, 2.0).unwrap();
        // two point masses: zero spread
        assert_eq!(raw, 0.0);
        let agg = target_complexity(&g, Some(&CsrMatrix::identity(2)), ComplexityVariant::Linear, 2.0).unwrap();
        assert_eq!(agg, raw);
        g.labels[1] = crate::graph::UNLABELED;
        assert!(target_complexity(&g, None, ComplexityVariant::Linear, 2.0).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[0.5, 0.7], &[0.5, 0.7]).unwrap(), 0.0);
        assert!((ari(&[50.0], &[55.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(ari(&[0.0], &[1.0]).is_err());
        assert!(ari(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn identity_rewiring_reports_equal_columns() {
        let g = toy_graph();
        let paths = vec![MetaPath::from_relations(vec![0, 1])];
        let r = homophily_report(&g, &g, &paths).unwrap();
        assert_eq!(r.paths[0].hr_before, r.paths[0].hr_after);
        assert_eq!(r.mh_before, r.mh_after);
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["mh_before", "mh_after"] {
            assert!(json.get(key).is_some());
        }
        for key in ["metapath", "hr_before", "hr_after", "coverage"] {
            assert!(json["paths"][0].get(key).is_some());
        }
    }

    proptest! {
        #[test]
        fn invariant_under_rigid_motion_and_scaling(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6..20),
            angle in 0.0f64..6.3,
            shift in (-10.0f64..10.0, -10.0f64..10.0),
            scale in 0.1f64..10.0,
        ) {
            let n = pts.len();
            let classes: Vec<usize> = (0..n).map(|i| i % 3).collect();
            // keep the centroids apart
            let x = Array2::from_shape_fn((n, 2), |(i, c)| {
                let base = if c == 0 { pts[i].0 } else { pts[i].1 };
                base + 20.0 * classes[i] as f64 * (c as f64 + 1.0)
            });
            let (s, co) = angle.sin_cos();
            let moved = Array2::from_shape_fn((n, 2), |(i, c)| {
                let (a, b) = (x[[i, 0]], x[[i, 1]]);
                if c == 0 { co * a - s * b + shift.0 } else { s * a + co * b + shift.1 }
            });
            let base = measure(&x, &classes, ComplexityVariant::Linear).unwrap();
            let rigid = measure(&moved, &classes, ComplexityVariant::Linear).unwrap();
            let scaled = measure(&(&x * scale), &classes, ComplexityVariant::Linear).unwrap();
            prop_assert!((base - rigid).abs() < 1e-9 * base.max(1.0));
            prop_assert!((base - scaled).abs() < 1e-9 * base.max(1.0));
        }

        #[test]
        fn ari_is_linear_in_each_after_entry(
            before in prop::collection::vec(0.1f64..1.0, 1..8),
            delta in -1.0f64..1.0,
            at in 0usize..8,
        ) {
            let after = before.clone();
            let at = at % before.len();
            let mut moved = after.clone();
            moved[at] += delta;
            let base = ari(&before, &after).unwrap();
            let shifted = ari(&before, &moved).unwrap();
            let slope = 100.0 / (before[at] * before.len() as f64);
            prop_assert!((shifted - base - slope * delta).abs() < 1e-9);
        }
    }
}
