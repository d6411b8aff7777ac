//! Two-phase mini-batch training with per-step objective weighting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{path_window, Batch, Objective, PathLoss};
use super::{MslConfig, MslContext, MslModel};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metapath::MetaPath;
use crate::moo::{min_norm_point, MooConfig, SimplexWeights};
use crate::targets::SimilarityTargets;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// How often the objective weights are recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    PerStep,
    /// Once per epoch, on that epoch's first window.
    PerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Attr,
    Label,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Attr => "attr",
            Phase::Label => "label",
        }
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub phase: Phase,
    /// Optimized loss of each path, summed over the epoch's windows.
    pub losses: Vec<f64>,
    /// Weights used on the epoch's last step.
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: MslModel,
    pub history: Vec<LossRecord>,
}

/// Tiles the `N x N` pair grid into `k1 x k2` windows over seeded row and
/// column permutations, handing out one window per call. A new pair of
/// permutations is drawn whenever every tile has been used. When a window
/// covers every node the identity order is kept.
#[derive(Debug, Clone)]
pub struct WindowSampler {
    n: usize,
    k1: usize,
    k2: usize,
    rng: ChaCha8Rng,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    cursor: usize,
}

impl WindowSampler {
    pub fn new(n: usize, k1: usize, k2: usize, seed: u64) -> Self {
        let mut s = Self {
            n,
            k1: k1.clamp(1, n.max(1)),
            k2: k2.clamp(1, n.max(1)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            row_perm: (0..n).collect(),
            col_perm: (0..n).collect(),
            cursor: 0,
        };
        s.reshuffle();
        s
    }

    fn row_tiles(&self) -> usize {
        self.n.div_ceil(self.k1)
    }

    fn col_tiles(&self) -> usize {
        self.n.div_ceil(self.k2)
    }

    /// Number of windows in one sweep over all pairs.
    pub fn tiles_per_sweep(&self) -> usize {
        self.row_tiles() * self.col_tiles()
    }

    fn reshuffle(&mut self) {
        if self.k1 < self.n {
            self.row_perm.shuffle(&mut self.rng);
        }
        if self.k2 < self.n {
            self.col_perm.shuffle(&mut self.rng);
        }
        self.cursor = 0;
    }

    pub fn next_window(&mut self) -> Batch {
        if self.cursor == self.tiles_per_sweep() {
            self.reshuffle();
        }
        let (r, c) = (self.cursor / self.col_tiles(), self.cursor % self.col_tiles());
        self.cursor += 1;
        let rows = self.row_perm[r * self.k1..((r + 1) * self.k1).min(self.n)].to_vec();
        let cols = self.col_perm[c * self.k2..((c + 1) * self.k2).min(self.n)].to_vec();
        Batch { rows, cols }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Weight decay enters as an L2 term added to the gradient.
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i] + weight_decay * theta[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Trains a fresh model on `paths` with one target set per path.
///
/// Each step draws one window shared by every path, differentiates each
/// path's loss, weights the gradients with the min-norm simplex point and
/// applies `(1/M) sum_p lambda_p grad_p` through Adam. The first
/// `epochs_attr` epochs use only the attribute loss.
pub fn train(
    g: &HeteroGraph,
    paths: &[MetaPath],
    targets: &[SimilarityTargets],
    cfg: &MslConfig,
    moo: &MooConfig,
) -> Result<TrainOutput> {
    if paths.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            op: "train",
            detail: format!("{} meta-paths but {} target sets", paths.len(), targets.len()),
        });
    }
    for p in paths {
        p.check(&g.schema)?;
    }
    let mut model = MslModel::new(g, paths.to_vec(), cfg.clone())?;
    let ctx = MslContext::new(g, cfg, targets)?;
    if let Some(t) = targets.iter().find(|t| t.node_count() != ctx.target_count()) {
        return Err(Error::DimensionMismatch {
            op: "train",
            detail: format!("targets cover {} nodes, graph has {}", t.node_count(), ctx.target_count()),
        });
    }
    let labels: Vec<String> = paths.iter().map(|p| p.label(&g.schema)).collect();
    let history = fit(&mut model, &ctx, targets, moo, &labels)?;
    Ok(TrainOutput { model, history })
}

fn fit(
    model: &mut MslModel,
    ctx: &MslContext,
    targets: &[SimilarityTargets],
    moo: &MooConfig,
    labels: &[String],
) -> Result<Vec<LossRecord>> {
    let cfg = model.config.clone();
    let m = model.paths.len();
    let mut sampler = WindowSampler::new(ctx.target_count(), cfg.batch_rows, cfg.batch_cols, cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(model.params.len());
    let mut theta = model.params.flatten();
    let mut lambda = SimplexWeights::uniform(m);
    let mut history = Vec::with_capacity(cfg.epochs_attr + cfg.epochs_label);

    for epoch in 0..cfg.epochs_attr + cfg.epochs_label {
        let phase = if epoch < cfg.epochs_attr { Phase::Attr } else { Phase::Label };
        let objective = match phase {
            Phase::Attr => Objective { attr: true, label: false },
            Phase::Label => Objective { attr: cfg.keep_attr_loss, label: true },
        };
        let mut epoch_losses = vec![0.0; m];
        for window in 0..cfg.windows_per_epoch {
            let batch = sampler.next_window();
            let z = ctx.target_encodings(&model.params);
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(m);
            for (p, t) in targets.iter().enumerate() {
                let (loss, grad) = path_window(ctx, &model.params, &z, p, &batch, t, Some(objective));
                let value = optimized(loss, objective);
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        phase: phase.as_str(),
                        path: labels[p].clone(),
                    });
                }
                epoch_losses[p] += value;
                grads.push(grad.expect("gradient requested").flatten());
            }
            if cfg.lambda_schedule == LambdaSchedule::PerStep || window == 0 {
                lambda = min_norm_point(&grads, moo)?;
            }
            let mut combined = vec![0.0; theta.len()];
            for (grad, &l) in grads.iter().zip(lambda.as_slice()) {
                let w = l / m as f64;
                for (c, g) in combined.iter_mut().zip(grad) {
                    *c += w * g;
                }
            }
            adam.step(&mut theta, &combined, cfg.learning_rate, cfg.weight_decay);
            model.params.assign_flat(&theta)?;
        }
        history.push(LossRecord {
            epoch,
            phase,
            losses: epoch_losses,
            lambda: lambda.as_slice().to_vec(),
        });
    }
    Ok(history)
}

fn optimized(loss: PathLoss, obj: Objective) -> f64 {
    let mut v = 0.0;
    if obj.attr {
        v += loss.attr;
    }
    if obj.label {
        v += loss.label;
    }
    v
}
