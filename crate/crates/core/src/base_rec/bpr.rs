//! Bayesian Personalized Ranking with SGD on the pairwise objective
//! `sum ln sigmoid(x_ui - x_uj) - reg * ||theta||^2`, `x_ui = <w_u, h_i>`.
//! Positives are the rated items of a user, negatives are drawn uniformly from
//! the items the user has not rated.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{unrated, Submatrix};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct BprParams {
    pub d: usize,
    pub epochs: usize,
    pub learn_rate: f64,
    pub reg: f64,
    pub neg_samples: usize,
    /// Standard deviation of the Gaussian factor initialisation.
    pub init_std: f64,
}

impl Default for BprParams {
    fn default() -> Self {
        BprParams {
            d: 16,
            epochs: 30,
            learn_rate: 0.05,
            reg: 0.01,
            neg_samples: 1,
            init_std: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BprModel {
    d: usize,
    /// Row-major, one row per present user.
    user_factors: Vec<f64>,
    /// Row-major, one row per item of the full catalogue.
    item_factors: Vec<f64>,
    /// Items rated by some sampled user, ascending.
    candidates: Vec<u32>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-triple loss `-ln sigmoid(<w, h_i - h_j>) + reg (|w|^2 + |h_i|^2 + |h_j|^2)`.
pub fn bpr_triple_loss(w: &[f64], hi: &[f64], hj: &[f64], reg: f64) -> f64 {
    let x = dot(w, hi) - dot(w, hj);
    // -ln sigmoid(x) = softplus(-x)
    let nll = if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    };
    nll + reg * (dot(w, w) + dot(hi, hi) + dot(hj, hj))
}

/// Analytic gradient of [`bpr_triple_loss`] with respect to `(w, h_i, h_j)`.
pub fn bpr_triple_grad(w: &[f64], hi: &[f64], hj: &[f64], reg: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = dot(w, hi) - dot(w, hj);
    let g = sigmoid(-x);
    let gw = (0..w.len()).map(|k| -g * (hi[k] - hj[k]) + 2.0 * reg * w[k]).collect();
    let ghi = (0..w.len()).map(|k| -g * w[k] + 2.0 * reg * hi[k]).collect();
    let ghj = (0..w.len()).map(|k| g * w[k] + 2.0 * reg * hj[k]).collect();
    (gw, ghi, ghj)
}

impl BprModel {
    pub(super) fn train(sub: Submatrix<'_>, users: &[u32], p: &BprParams, seed: u64) -> Result<Self> {
        let valid = p.d > 0 && p.learn_rate > 0.0 && p.reg >= 0.0 && p.init_std >= 0.0;
        if !valid {
            return Err(Error::invalid(format!("invalid BPR parameters {p:?}")));
        }
        let m = sub.matrix.n_items();
        let d = p.d;
        let mut rng = seed::stream(seed, 0);
        let normal = Normal::new(0.0, p.init_std).map_err(|e| Error::invalid(e.to_string()))?;
        let mut user_factors: Vec<f64> = (0..users.len() * d).map(|_| normal.sample(&mut rng)).collect();
        let mut item_factors: Vec<f64> = (0..m * d).map(|_| normal.sample(&mut rng)).collect();

        let mut positives: Vec<(u32, u32)> = Vec::new();
        for (pos, &u) in users.iter().enumerate() {
            positives.extend(sub.matrix.row(u).iter().map(|&(i, _)| (pos as u32, i)));
        }

        let mut w = vec![0f64; d];
        let mut hi = vec![0f64; d];
        let mut hj = vec![0f64; d];
        for _ in 0..p.epochs {
            for _ in 0..positives.len() {
                let (pos, i) = positives[rng.random_range(0..positives.len())];
                let row = sub.matrix.row(users[pos as usize]);
                if row.len() >= m {
                    continue;
                }
                for _ in 0..p.neg_samples {
                    let j = loop {
                        let j = rng.random_range(0..m as u32);
                        if row.binary_search_by_key(&j, |&(x, _)| x).is_err() {
                            break j;
                        }
                    };
                    let (us, is, js) = (pos as usize * d, i as usize * d, j as usize * d);
                    w.copy_from_slice(&user_factors[us..us + d]);
                    hi.copy_from_slice(&item_factors[is..is + d]);
                    hj.copy_from_slice(&item_factors[js..js + d]);
                    let g = sigmoid(-(dot(&w, &hi) - dot(&w, &hj)));
                    for k in 0..d {
                        user_factors[us + k] -= p.learn_rate * (-g * (hi[k] - hj[k]) + 2.0 * p.reg * w[k]);
                        item_factors[is + k] -= p.learn_rate * (-g * w[k] + 2.0 * p.reg * hi[k]);
                        item_factors[js + k] -= p.learn_rate * (g * w[k] + 2.0 * p.reg * hj[k]);
                    }
                }
            }
        }
        Ok(BprModel {
            d,
            user_factors,
            item_factors,
            candidates: sub.seen_items(),
        })
    }

    /// Predicted preference of present user at position `pos` for item `i`.
    pub fn predict(&self, pos: usize, i: u32) -> f64 {
        let d = self.d;
        dot(
            &self.user_factors[pos * d..(pos + 1) * d],
            &self.item_factors[i as usize * d..(i as usize + 1) * d],
        )
    }

    pub(super) fn scores(&self, pos: usize, rated: &[u32]) -> Vec<(u32, f64)> {
        unrated(&self.candidates, rated)
            .map(|(_, i)| (i, self.predict(pos, i)))
            .collect()
    }
}
