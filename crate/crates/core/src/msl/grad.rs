//! Window losses and their exact analytic gradients.

use ndarray::{Array1, Array2, Axis, Zip};

use super::{centered_units, MslContext, MslModel, Params};
use crate::error::{Error, Result};
use crate::targets::{gather_rows, SimilarityTargets, ZERO_NORM};

/// A rectangular set of target-node pairs: every `(rows[a], cols[b])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Batch {
    pub fn full(n: usize) -> Self {
        Self {
            rows: (0..n).collect(),
            cols: (0..n).collect(),
        }
    }

    pub fn pair_count(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if let Some(&bad) = self.rows.iter().chain(&self.cols).find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("batch node {bad} out of range for {n} targets")));
        }
        Ok(())
    }
}

/// The two loss terms of one meta-path over one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub attr: f64,
    pub label: f64,
}

impl PathLoss {
    pub fn total(&self) -> f64 {
        self.attr + self.label
    }
}

/// Which loss terms are differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Objective {
    pub attr: bool,
    pub label: bool,
}

/// Loss of path `p` on `batch`, plus the gradient of the selected objective
/// when `objective` is given. `z` are the current target encodings.
pub(crate) fn path_window(
    ctx: &MslContext,
    params: &Params,
    z: &[Array2<f64>],
    p: usize,
    batch: &Batch,
    targets: &SimilarityTargets,
    objective: Option<Objective>,
) -> (PathLoss, Option<Params>) {
    let hops = z.len();
    let n = ctx.target_count();
    let (rows, cols) = (&batch.rows, &batch.cols);

    let mut units = Vec::with_capacity(hops);
    let mut norms = Vec::with_capacity(hops);
    let mut cos = Vec::with_capacity(hops);
    for k in 0..hops {
        let (u, nrm) = centered_units(&ctx.hop_vectors(params, z, p, k));
        cos.push(gather_rows(&u, rows).dot(&gather_rows(&u, cols).t()));
        units.push(u);
        norms.push(nrm);
    }
    let mut s = Array2::<f64>::ones((rows.len(), cols.len()));
    for c in &cos {
        s *= c;
    }

    let tx = targets.attr_window(rows, cols);
    let ty = targets.label_window(rows, cols);
    let mask = targets.mask();
    let r1 = &s - &tx;
    let mut r2 = &s - &ty;
    for (a, mut row) in r2.rows_mut().into_iter().enumerate() {
        if !mask[rows[a]] {
            row.fill(0.0);
            continue;
        }
        for (b, v) in row.iter_mut().enumerate() {
            if !mask[cols[b]] {
                *v = 0.0;
            }
        }
    }
    let loss = PathLoss {
        attr: r1.iter().map(|v| v * v).sum(),
        label: r2.iter().map(|v| v * v).sum(),
    };

    let Some(obj) = objective else {
        return (loss, None);
    };
    let mut g = Array2::<f64>::zeros(s.raw_dim());
    if obj.attr {
        g.scaled_add(2.0, &r1);
    }
    if obj.label {
        g.scaled_add(2.0, &r2);
    }

    let mut grads = params.zeros_like();
    for k in 0..hops {
        let mut q = g.clone();
        for (k2, c) in cos.iter().enumerate() {
            if k2 != k {
                q *= c;
            }
        }
        let u = &units[k];
        let a = gather_rows(u, rows);
        let b = gather_rows(u, cols);
        let mut du = Array2::<f64>::zeros(u.raw_dim());
        for (ai, row) in q.dot(&b).rows().into_iter().enumerate() {
            du.row_mut(rows[ai]).scaled_add(1.0, &row);
        }
        for (bi, row) in q.t().dot(&a).rows().into_iter().enumerate() {
            du.row_mut(cols[bi]).scaled_add(1.0, &row);
        }

        // through the row normalization
        let mut dc = du;
        for (i, mut row) in dc.rows_mut().into_iter().enumerate() {
            let nrm = norms[k][i];
            if nrm < ZERO_NORM {
                row.fill(0.0);
                continue;
            }
            let ui = u.row(i);
            let along = row.dot(&ui);
            Zip::from(&mut row).and(&ui).for_each(|d, &uv| *d = (*d - along * uv) / nrm);
        }
        // through the centering
        let mean: Array1<f64> = dc.sum_axis(Axis(0)) / n as f64;
        dc -= &mean;

        let d = params.path[p][k].ncols();
        let dh = dc.slice(ndarray::s![.., ..d]);
        grads.path[p][k] = z[k].t().dot(&dh);
        let dz = dh.dot(&params.path[p][k].t());
        for (t, f) in ctx.propagated()[k].iter().enumerate() {
            if f.ncols() > 0 {
                grads.input[t] += &f.t().dot(&dz);
            }
        }
    }
    (loss, Some(grads))
}

fn checked_index(m: &MslModel, ctx: &MslContext, p: usize, batch: &Batch, targets: &SimilarityTargets) -> Result<()> {
    if p >= m.paths.len() {
        return Err(Error::InvalidPath(format!("path index {p} out of range")));
    }
    if targets.node_count() != ctx.target_count() {
        return Err(Error::DimensionMismatch {
            op: "pair_loss",
            detail: format!("targets cover {} nodes, model {}", targets.node_count(), ctx.target_count()),
        });
    }
    if ctx.num_hops() != m.config.num_hops {
        return Err(Error::DimensionMismatch {
            op: "pair_loss",
            detail: "context and model disagree on the number of hops".into(),
        });
    }
    batch.check(ctx.target_count())
}

/// `(l1, l2)` of path `p` over `batch`.
pub fn pair_loss(m: &MslModel, ctx: &MslContext, p: usize, batch: &Batch, targets: &SimilarityTargets) -> Result<PathLoss> {
    checked_index(m, ctx, p, batch, targets)?;
    let z = ctx.target_encodings(&m.params);
    Ok(path_window(ctx, &m.params, &z, p, batch, targets, None).0)
}

/// Gradient of `l1 + l2` (or of the selected terms) of path `p` over `batch`.
pub fn gradients(
    m: &MslModel,
    ctx: &MslContext,
    p: usize,
    batch: &Batch,
    targets: &SimilarityTargets,
    attr: bool,
    label: bool,
) -> Result<Params> {
    checked_index(m, ctx, p, batch, targets)?;
    let z = ctx.target_encodings(&m.params);
    let objective = Objective { attr, label };
    Ok(path_window(ctx, &m.params, &z, p, batch, targets, Some(objective))
        .1
        .expect("gradient requested"))
}

/// Losses of every path over all target pairs.
pub fn full_batch_loss(m: &MslModel, ctx: &MslContext, targets: &[SimilarityTargets]) -> Result<Vec<PathLoss>> {
    let batch = Batch::full(ctx.target_count());
    (0..m.paths.len())
        .map(|p| pair_loss(m, ctx, p, &batch, &targets[p]))
        .collect()
}
