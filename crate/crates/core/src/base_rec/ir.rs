//! Item-based recommendation.
//!
//! Similarities are computed between item rating columns of the submatrix.
//! The predicted score of an unrated item `i` for user `u` is
//! `sum_j sim(i, j) * score(u, j)` over the items `j` rated by `u` that are in
//! the retained neighbourhood of `i`.

use super::{unrated, Submatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Similarity {
    /// Cosine of the rating columns.
    Cosine,
    /// Co-occurrence count over the union of raters.
    Jaccard,
}

impl std::str::FromStr for Similarity {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "jaccard" => Ok(Similarity::Jaccard),
            other => Err(crate::Error::invalid(format!("unknown similarity '{other}'"))),
        }
    }
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Similarity::Cosine => "cosine",
            Similarity::Jaccard => "jaccard",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrParams {
    pub similarity: Similarity,
    /// Neighbours kept per item; 0 keeps all.
    pub k: usize,
}

impl Default for IrParams {
    fn default() -> Self {
        IrParams {
            similarity: Similarity::Jaccard,
            k: 0,
        }
    }
}

/// Dense similarity table over the items seen in the submatrix.
#[derive(Clone, Debug)]
pub struct IrModel {
    /// Seen items, ascending; position is the local index.
    items: Vec<u32>,
    /// `local[i]` is the local index of global item `i`, or `u32::MAX`.
    local: Vec<u32>,
    /// Row `j` holds `sim(i, j)` for every target `i` whose neighbourhood
    /// contains `j`.
    weights: Vec<f32>,
    /// Per present user: `(local item, score)`.
    profiles: Vec<Vec<(u32, f32)>>,
}

impl IrModel {
    pub(super) fn train(sub: Submatrix<'_>, users: &[u32], params: &IrParams) -> Self {
        let items = sub.seen_items();
        let ms = items.len();
        let mut local = vec![u32::MAX; sub.matrix.n_items()];
        for (k, &i) in items.iter().enumerate() {
            local[i as usize] = k as u32;
        }
        let profiles: Vec<Vec<(u32, f32)>> = users
            .iter()
            .map(|&u| {
                sub.matrix
                    .row(u)
                    .iter()
                    .map(|&(i, s)| (local[i as usize], s as f32))
                    .collect()
            })
            .collect();

        let mut sim = match params.similarity {
            Similarity::Jaccard => jaccard(&profiles, ms),
            Similarity::Cosine => cosine(sub, users, &local, ms),
        };
        // an item never scores itself: its own column is always rated
        for a in 0..ms {
            sim[a * ms + a] = 0.0;
        }
        let weights = if params.k == 0 || params.k + 1 >= ms {
            // symmetric table: row j already holds sim(i, j) for all i
            sim
        } else {
            truncate(&sim, ms, params.k)
        };
        IrModel {
            items,
            local,
            weights,
            profiles,
        }
    }

    /// Similarity of items `i` and `j` (global ids); 0 for unseen items or
    /// pairs outside the retained neighbourhood of `i`.
    pub fn similarity(&self, i: u32, j: u32) -> f32 {
        let (a, b) = (self.local[i as usize], self.local[j as usize]);
        if a == u32::MAX || b == u32::MAX {
            return 0.0;
        }
        self.weights[b as usize * self.items.len() + a as usize]
    }

    pub(super) fn scores(&self, pos: usize, rated: &[u32]) -> Vec<(u32, f64)> {
        let ms = self.items.len();
        let mut acc = vec![0f32; ms];
        for &(j, r) in &self.profiles[pos] {
            let row = &self.weights[j as usize * ms..(j as usize + 1) * ms];
            for (a, w) in acc.iter_mut().zip(row) {
                *a += r * w;
            }
        }
        unrated(&self.items, rated)
            .map(|(k, i)| (i, acc[k] as f64))
            .collect()
    }
}

fn jaccard(profiles: &[Vec<(u32, f32)>], ms: usize) -> Vec<f32> {
    let mut co = vec![0u32; ms * ms];
    for p in profiles {
        for &(a, _) in p {
            let row = &mut co[a as usize * ms..(a as usize + 1) * ms];
            for &(b, _) in p {
                row[b as usize] += 1;
            }
        }
    }
    let deg: Vec<u32> = (0..ms).map(|a| co[a * ms + a]).collect();
    let mut sim = vec![0f32; ms * ms];
    for a in 0..ms {
        for b in 0..ms {
            let c = co[a * ms + b];
            if c > 0 {
                sim[a * ms + b] = (c as f64 / (deg[a] + deg[b] - c) as f64) as f32;
            }
        }
    }
    sim
}

fn cosine(sub: Submatrix<'_>, users: &[u32], local: &[u32], ms: usize) -> Vec<f32> {
    let mut dot = vec![0f64; ms * ms];
    for &u in users {
        let row = sub.matrix.row(u);
        for &(i, ri) in row {
            let a = local[i as usize] as usize;
            let out = &mut dot[a * ms..(a + 1) * ms];
            for &(j, rj) in row {
                out[local[j as usize] as usize] += ri * rj;
            }
        }
    }
    let norm: Vec<f64> = (0..ms).map(|a| dot[a * ms + a].sqrt()).collect();
    let mut sim = vec![0f32; ms * ms];
    for a in 0..ms {
        for b in 0..ms {
            let d = dot[a * ms + b];
            if d != 0.0 && norm[a] > 0.0 && norm[b] > 0.0 {
                sim[a * ms + b] = (d / (norm[a] * norm[b])) as f32;
            }
        }
    }
    sim
}

/// Keeps, for each target item `i`, its `k` most similar other items and
/// writes them transposed: `out[j * ms + i] = sim(i, j)`.
fn truncate(sim: &[f32], ms: usize, k: usize) -> Vec<f32> {
    let mut out = vec![0f32; ms * ms];
    let mut nbrs: Vec<(u32, f32)> = Vec::with_capacity(ms);
    for i in 0..ms {
        nbrs.clear();
        nbrs.extend(
            (0..ms)
                .filter(|&j| j != i && sim[i * ms + j] > 0.0)
                .map(|j| (j as u32, sim[i * ms + j])),
        );
        let by_sim = |a: &(u32, f32), b: &(u32, f32)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if nbrs.len() > k {
            nbrs.select_nth_unstable_by(k - 1, by_sim);
            nbrs.truncate(k);
        }
        for &(j, s) in &nbrs {
            out[j as usize * ms + i] = s;
        }
    }
    out
}
