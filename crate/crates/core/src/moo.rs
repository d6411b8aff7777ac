//! Min-norm-point weighting of per-meta-path objectives on the simplex,
//! solved with Frank-Wolfe and an exact two-point line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared norms at or below this count as zero.
const DEGENERATE: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MooConfig {
    pub max_iters: usize,
    /// Stop once the Frank-Wolfe duality gap falls below this.
    pub tol: f64,
}

impl Default for MooConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    lambda: Vec<f64>,
}

impl SimplexWeights {
    pub fn uniform(m: usize) -> Self {
        Self {
            lambda: vec![1.0 / m as f64; m],
        }
    }

    pub fn one_hot(m: usize, at: usize) -> Self {
        let mut lambda = vec![0.0; m];
        lambda[at] = 1.0;
        Self { lambda }
    }

    /// Checked constructor.
    pub fn from_vec(lambda: Vec<f64>) -> Result<Self> {
        let sum: f64 = lambda.iter().sum();
        if lambda.is_empty() || lambda.iter().any(|&l| !(l >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("{lambda:?} is not on the simplex")));
        }
        Ok(Self { lambda })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Step toward `g_a` from `g_b` minimizing `|gamma g_a + (1 - gamma) g_b|^2`,
/// given the three inner products. Coincident points give `0.5`.
pub fn two_point_gamma(aa: f64, ab: f64, bb: f64) -> f64 {
    let denom = aa + bb - 2.0 * ab;
    if denom <= DEGENERATE * (aa + bb).max(1.0) {
        return 0.5;
    }
    ((bb - ab) / denom).clamp(0.0, 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad(gram: &[Vec<f64>], lambda: &[f64]) -> f64 {
    let mut f = 0.0;
    for (i, li) in lambda.iter().enumerate() {
        for (j, lj) in lambda.iter().enumerate() {
            f += li * lj * gram[i][j];
        }
    }
    f
}

/// Weights approximately minimizing `|sum_i lambda_i g_i|^2` over the simplex.
///
/// Degenerate inputs follow fixed conventions: a zero gradient takes all the
/// weight (the first one if several), and a set of identical gradients is
/// weighted uniformly.
pub fn min_norm_point<G: AsRef<[f64]>>(grads: &[G], cfg: &MooConfig) -> Result<SimplexWeights> {
    let m = grads.len();
    if m == 0 {
        return Err(Error::InvalidInput("min_norm_point needs at least one gradient".into()));
    }
    let dim = grads[0].as_ref().len();
    if let Some(bad) = grads.iter().position(|g| g.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            op: "min_norm_point",
            detail: format!("gradient {bad} has length {}, expected {dim}", grads[bad].as_ref().len()),
        });
    }
    if m == 1 {
        return Ok(SimplexWeights::one_hot(1, 0));
    }

    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(grads[i].as_ref(), grads[j].as_ref())).collect())
        .collect();

    if let Some(zero) = (0..m).find(|&i| gram[i][i] <= DEGENERATE) {
        return Ok(SimplexWeights::one_hot(m, zero));
    }
    let scale = (0..m).map(|i| gram[i][i]).fold(0.0, f64::max);
    let identical = |i: usize, j: usize| gram[i][i] + gram[j][j] - 2.0 * gram[i][j] <= DEGENERATE * scale.max(1.0);
    if (1..m).all(|j| identical(0, j)) {
        return Ok(SimplexWeights::uniform(m));
    }

    // Start from the best two-gradient solution.
    let mut best = (f64::INFINITY, 0, 1, 0.5);
    for i in 0..m {
        for j in (i + 1)..m {
            let gamma = two_point_gamma(gram[i][i], gram[i][j], gram[j][j]);
            let f = gamma * gamma * gram[i][i]
                + 2.0 * gamma * (1.0 - gamma) * gram[i][j]
                + (1.0 - gamma) * (1.0 - gamma) * gram[j][j];
            if f < best.0 {
                best = (f, i, j, gamma);
            }
        }
    }
    let mut lambda = vec![0.0; m];
    lambda[best.1] = best.3;
    lambda[best.2] = 1.0 - best.3;
    if m == 2 {
        return SimplexWeights::from_vec(lambda);
    }

    for _ in 0..cfg.max_iters {
        let v: Vec<f64> = (0..m).map(|r| dot(&gram[r], &lambda)).collect();
        let f = dot(&lambda, &v);
        let t = (0..m)
            .min_by(|&a, &b| v[a].total_cmp(&v[b]))
            .expect("m >= 2");
        if 2.0 * (f - v[t]) < cfg.tol {
            break;
        }
        let gamma = two_point_gamma(gram[t][t], v[t], f);
        if gamma <= 0.0 {
            break;
        }
        for l in lambda.iter_mut() {
            *l *= 1.0 - gamma;
        }
        lambda[t] += gamma;
    }
    // renormalize away accumulated rounding
    let sum: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= sum);
    SimplexWeights::from_vec(lambda)
}

/// Norm of the weighted combination, `|sum_i lambda_i g_i|`.
pub fn combined_norm<G: AsRef<[f64]>>(grads: &[G], lambda: &SimplexWeights) -> f64 {
    let m = grads.len();
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(grads[i].as_ref(), grads[j].as_ref())).collect())
        .collect();
    quad(&gram, lambda.as_slice()).max(0.0).sqrt()
}

/// Scalar objective `(1/M) sum_i lambda_i L_i`.
pub fn weighted_loss(losses: &[f64], lambda: &SimplexWeights) -> Result<f64> {
    if losses.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            op: "weighted_loss",
            detail: format!("{} losses for {} weights", losses.len(), lambda.len()),
        });
    }
    let m = losses.len() as f64;
    Ok(losses.iter().zip(lambda.as_slice()).map(|(l, w)| l * w).sum::<f64>() / m)
}
