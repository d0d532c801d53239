//! Gradient-boosted regression trees with squared-error loss.
//!
//! Splits are exact: every distinct threshold of every feature is scored.
//! Ties between candidate splits go to the lowest feature index and then the
//! lowest threshold, so a fit is fully deterministic.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Row fraction drawn (without replacement) for each tree.
    pub subsample: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 5,
            subsample: 1.0,
        }
    }
}

pub trait Regressor {
    fn predict_one(&self, x: &[f64]) -> f64;

    fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_one(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub version: u32,
    pub base: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Mean squared error on the training rows after the base prediction
    /// and after each boosting round.
    pub train_loss: Vec<f64>,
}

impl Regressor for GradientBoosting {
    fn predict_one(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl GradientBoosting {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Mismatch(format!("model format version {}", m.version)));
        }
        Ok(m)
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    grad: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.grad[i]).sum::<f64>() / idx.len() as f64
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let total: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x[idx[0]].len() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += self.grad[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let (xa, xb) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if xa == xb {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: xa + (xb - xa) / 2.0,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let split = if depth < self.max_depth {
            self.best_split(idx)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[slot] = TreeNode::Leaf {
                    value: self.leaf_value(idx),
                }
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][s.feature] <= s.threshold);
                let left = self.build(&l, depth + 1);
                let right = self.build(&r, depth + 1);
                self.nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        slot
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Fit a boosted ensemble to `targets`.
pub fn fit(x: &[Vec<f64>], targets: &[f64], params: &GbdtParams, seed: u64) -> Result<GradientBoosting> {
    if x.len() != targets.len() {
        return Err(Error::InvalidParam(format!(
            "{} rows but {} targets",
            x.len(),
            targets.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParam("need at least two rows to fit".into()));
    }
    let n_features = x[0].len();
    for (r, row) in x.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::InvalidParam(format!(
                "row {r} has {} features, expected {n_features}",
                row.len()
            )));
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: r, col: c });
        }
    }
    if let Some(r) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: r,
            col: n_features,
        });
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) || params.min_leaf == 0 {
        return Err(Error::InvalidParam(
            "subsample must lie in (0, 1] and min_leaf >= 1".into(),
        ));
    }

    let n = x.len();
    let base = targets.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut train_loss = vec![mse(&pred, targets)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut rng = rng_from(seed);
    let all: Vec<usize> = (0..n).collect();
    let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    for _ in 0..params.n_trees {
        let grad: Vec<f64> = targets.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let mut rows = if take == n {
            all.clone()
        } else {
            index::sample(&mut rng, n, take).into_vec()
        };
        rows.sort_unstable();
        let mut b = Builder {
            x,
            grad: &grad,
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            nodes: Vec::new(),
        };
        b.build(&rows, 0);
        let tree = Tree { nodes: b.nodes };
        for (p, row) in pred.iter_mut().zip(x) {
            *p += params.learning_rate * tree.predict(row);
        }
        train_loss.push(mse(&pred, targets));
        trees.push(tree);
    }
    Ok(GradientBoosting {
        version: MODEL_FORMAT_VERSION,
        base,
        learning_rate: params.learning_rate,
        n_features,
        trees,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn r2(pred: &[f64], y: &[f64]) -> f64 {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (v - p).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn constant_target() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = vec![0.37; 30];
        let m = fit(&x, &y, &GbdtParams::default(), 0).unwrap();
        for p in m.predict(&x) {
            assert!((p - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_features_give_mean() {
        let x = vec![vec![1.0, 1.0]; 20];
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = fit(&x, &y, &GbdtParams::default(), 0).unwrap();
        assert!((m.predict_one(&[1.0, 1.0]) - 9.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_nan_and_tiny_inputs() {
        let x = vec![vec![1.0], vec![f64::NAN], vec![2.0]];
        assert!(matches!(
            fit(&x, &[1.0, 2.0, 3.0], &GbdtParams::default(), 0),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
        assert!(fit(&[vec![1.0]], &[1.0], &GbdtParams::default(), 0).is_err());
        assert!(fit(&[vec![1.0], vec![2.0]], &[1.0], &GbdtParams::default(), 0).is_err());
    }

    #[test]
    fn learns_identity_on_held_out_rows() {
        let mut rng = rng_from(3);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let m = fit(&x[..160], &y[..160], &GbdtParams::default(), 1).unwrap();
        let score = r2(&m.predict(&x[160..]), &y[160..]);
        assert!(score >= 0.9, "R^2 = {score}");
    }

    #[test]
    fn fit_is_deterministic_and_dump_round_trips() {
        let mut rng = rng_from(5);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random::<f64>(); 3]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0).collect();
        let params = GbdtParams {
            subsample: 0.7,
            ..Default::default()
        };
        let a = fit(&x, &y, &params, 9).unwrap();
        let b = fit(&x, &y, &params, 9).unwrap();
        assert_eq!(a, b);
        let back = GradientBoosting::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
