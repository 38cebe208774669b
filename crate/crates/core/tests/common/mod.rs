#![allow(dead_code)]

use std::path::PathBuf;

use pore::ratings::{RatingDomain, RatingMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random `n x m` matrix where each cell is rated with probability
/// `density` using a score from `levels`; every user gets at least one rating.
pub fn random_matrix(n: usize, m: usize, density: f64, levels: &[f64], rng: &mut impl Rng) -> RatingMatrix {
    let rows = (0..n)
        .map(|_| {
            let mut row = Vec::new();
            for i in 0..m as u32 {
                if rng.random_bool(density) {
                    row.push((i, levels[rng.random_range(0..levels.len())]));
                }
            }
            if row.is_empty() {
                row.push((rng.random_range(0..m as u32), levels[0]));
            }
            row
        })
        .collect();
    RatingMatrix::from_rows(m, RatingDomain::Levels(levels.to_vec()), rows).unwrap()
}

/// MovieLens-100k `u.data`, from `PORE_ML100K` or `data/ml-100k/u.data`
/// under the workspace root.
pub fn ml100k_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("PORE_ML100K") {
        let p = PathBuf::from(p);
        return p.exists().then_some(p);
    }
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data");
    p.exists().then_some(p)
}
