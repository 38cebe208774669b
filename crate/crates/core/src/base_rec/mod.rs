//! Base recommender algorithms.
//!
//! A base model is trained on the rows of a sampled submatrix and recommends
//! the top-`N'` items to the users of that submatrix. Users outside the sample
//! (or with an empty profile inside it) get no recommendation. Only items rated
//! by at least one sampled user are candidates, and a user's own rated items
//! are never recommended. Score ties go to the lower item id.

mod bpr;
mod ir;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

pub use bpr::{bpr_triple_grad, bpr_triple_loss, BprModel, BprParams};
pub use ir::{IrModel, IrParams, Similarity};

use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

/// Base algorithm with its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Algo {
    Ir(IrParams),
    Bpr(BprParams),
}

impl Algo {
    pub fn tag(&self) -> &'static str {
        match self {
            Algo::Ir(_) => "ir",
            Algo::Bpr(_) => "bpr",
        }
    }

    /// Default hyperparameters for a tag.
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "ir" => Ok(Algo::Ir(IrParams::default())),
            "bpr" => Ok(Algo::Bpr(BprParams::default())),
            other => Err(Error::invalid(format!("unknown algorithm '{other}' (expected ir or bpr)"))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::from_tag(s)
    }
}

/// Rows of `matrix` restricted to `users` (sorted, distinct).
#[derive(Clone, Copy, Debug)]
pub struct Submatrix<'a> {
    pub matrix: &'a RatingMatrix,
    pub users: &'a [u32],
}

impl<'a> Submatrix<'a> {
    pub fn new(matrix: &'a RatingMatrix, users: &'a [u32]) -> Self {
        debug_assert!(users.windows(2).all(|w| w[0] < w[1]));
        Submatrix { matrix, users }
    }

    /// Sampled users that rated at least one item.
    fn present_users(&self) -> Vec<u32> {
        self.users
            .iter()
            .copied()
            .filter(|&u| !self.matrix.row(u).is_empty())
            .collect()
    }

    /// Items rated by at least one sampled user, ascending.
    fn seen_items(&self) -> Vec<u32> {
        let mut seen = vec![false; self.matrix.n_items()];
        for &u in self.users {
            for &(i, _) in self.matrix.row(u) {
                seen[i as usize] = true;
            }
        }
        (0..seen.len() as u32).filter(|&i| seen[i as usize]).collect()
    }
}

#[derive(Clone, Debug)]
enum ModelState {
    Ir(IrModel),
    Bpr(BprModel),
}

/// A trained base recommender. Immutable; safe to query from many threads.
#[derive(Clone, Debug)]
pub struct BaseModel {
    /// Present users, ascending.
    users: Vec<u32>,
    /// Rated items of each present user, ascending.
    profiles: Vec<Vec<u32>>,
    state: ModelState,
}

impl BaseModel {
    pub fn train(sub: Submatrix<'_>, algo: &Algo, seed: u64) -> Result<Self> {
        if sub.users.is_empty() {
            return Err(Error::invalid("cannot train a base model on an empty submatrix"));
        }
        let users = sub.present_users();
        let profiles = users
            .iter()
            .map(|&u| sub.matrix.row(u).iter().map(|&(i, _)| i).collect())
            .collect();
        let state = match algo {
            Algo::Ir(p) => ModelState::Ir(IrModel::train(sub, &users, p)),
            Algo::Bpr(p) => ModelState::Bpr(BprModel::train(sub, &users, p, seed)?),
        };
        Ok(BaseModel { users, profiles, state })
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn contains_user(&self, user: u32) -> bool {
        self.users.binary_search(&user).is_ok()
    }

    pub fn as_ir(&self) -> Option<&IrModel> {
        match &self.state {
            ModelState::Ir(m) => Some(m),
            ModelState::Bpr(_) => None,
        }
    }

    pub fn as_bpr(&self) -> Option<&BprModel> {
        match &self.state {
            ModelState::Bpr(m) => Some(m),
            ModelState::Ir(_) => None,
        }
    }

    /// Top-`n_prime` unrated candidate items for `user`, best first.
    pub fn recommend(&self, user: u32, n_prime: usize) -> Vec<u32> {
        let Ok(pos) = self.users.binary_search(&user) else {
            return Vec::new();
        };
        if n_prime == 0 {
            return Vec::new();
        }
        let rated = &self.profiles[pos];
        let scored: Vec<(u32, f64)> = match &self.state {
            ModelState::Ir(m) => m.scores(pos, rated),
            ModelState::Bpr(m) => m.scores(pos, rated),
        };
        top_n(scored, n_prime)
    }
}

/// Orders by score descending, then item id ascending.
pub(crate) fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// The `n` best `(item, score)` pairs under [`rank_order`].
pub(crate) fn top_n(mut scored: Vec<(u32, f64)>, n: usize) -> Vec<u32> {
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, rank_order);
        scored.truncate(n);
    }
    scored.sort_unstable_by(rank_order);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Iterates over `candidates` minus the sorted list `rated`.
pub(crate) fn unrated<'a>(candidates: &'a [u32], rated: &'a [u32]) -> impl Iterator<Item = (usize, u32)> + 'a {
    let mut r = 0usize;
    candidates.iter().copied().enumerate().filter(move |&(_, i)| {
        while r < rated.len() && rated[r] < i {
            r += 1;
        }
        !(r < rated.len() && rated[r] == i)
    })
}
