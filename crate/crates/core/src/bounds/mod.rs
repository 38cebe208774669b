//! Confidence bounds on item probabilities and the binomial arithmetic used
//! to certify them.

pub mod beta;
pub mod combinatorics;
pub mod cp;

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};

pub use beta::{beta_quantile, beta_quantile_bracket, ln_gamma, reg_inc_beta};
pub use combinatorics::{
    binomial, make_context, round_lower_star, round_lower_star_exact, round_upper_star, round_upper_star_exact,
    CombinatoricContext,
};
pub use cp::{cp_lower, cp_upper, CpTable, UpperConvention};

use crate::ensemble::VoteCounts;
use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

/// Number type that certification runs on: `f64` for real data, exact
/// rationals for the oracle.
pub trait Prob:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn zero() -> Self;
    fn from_u64(k: u64) -> Self;
    fn floor_star(&self, ctx: &CombinatoricContext) -> Self;
    fn ceil_star(&self, ctx: &CombinatoricContext) -> Self;
    /// Attack slack of `ctx` in this number type.
    fn sigma(ctx: &CombinatoricContext) -> Result<Self>;
    fn to_f64(&self) -> f64;
}

impl Prob for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_u64(k: u64) -> Self {
        k as f64
    }
    fn floor_star(&self, ctx: &CombinatoricContext) -> Self {
        round_lower_star(*self, ctx)
    }
    fn ceil_star(&self, ctx: &CombinatoricContext) -> Self {
        round_upper_star(*self, ctx)
    }
    fn sigma(ctx: &CombinatoricContext) -> Result<Self> {
        Ok(ctx.sigma)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Prob for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_u64(k: u64) -> Self {
        BigRational::from_integer(BigInt::from(k))
    }
    fn floor_star(&self, ctx: &CombinatoricContext) -> Self {
        round_lower_star_exact(self, ctx).expect("exact context")
    }
    fn ceil_star(&self, ctx: &CombinatoricContext) -> Self {
        round_upper_star_exact(self, ctx).expect("exact context")
    }
    fn sigma(ctx: &CombinatoricContext) -> Result<Self> {
        ctx.exact
            .as_ref()
            .map(|x| x.sigma.clone())
            .ok_or_else(|| Error::invalid("exact certification needs an exact-mode context"))
    }
    fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact rational with the same value as a finite `f64`.
pub fn exact_from_f64(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite probability bound")
}

/// Per-user bounds: lower bounds on the target items `I_u`, upper bounds on
/// the competing items. Competitors are the items outside `I_u` that the
/// user has not rated; base models never recommend a rated item, so those
/// have probability zero before and after any injection of fake users.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbBounds<X = f64> {
    pub user: u32,
    /// `I_u`, ascending.
    pub targets: Vec<u32>,
    pub lower: Vec<X>,
    /// Competing items, ascending.
    pub outside: Vec<u32>,
    pub upper: Vec<X>,
    /// Simultaneous error budget of this user.
    pub alpha_u: f64,
    pub n_items: usize,
}

impl ProbBounds<f64> {
    pub fn to_exact(&self) -> ProbBounds<BigRational> {
        ProbBounds {
            user: self.user,
            targets: self.targets.clone(),
            lower: self.lower.iter().map(|&x| exact_from_f64(x)).collect(),
            outside: self.outside.clone(),
            upper: self.upper.iter().map(|&x| exact_from_f64(x)).collect(),
            alpha_u: self.alpha_u,
            n_items: self.n_items,
        }
    }
}

/// Splits the unrated items of `user` into sorted targets and competitors.
pub fn partition_items(n_items: usize, rated: &[(u32, f64)], targets: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut t = targets.to_vec();
    t.sort_unstable();
    t.dedup();
    let mut is_target = vec![false; n_items];
    for &i in &t {
        is_target[i as usize] = true;
    }
    let mut is_rated = vec![false; n_items];
    for &(i, _) in rated {
        is_rated[i as usize] = true;
    }
    let outside = (0..n_items as u32)
        .filter(|&i| !is_target[i as usize] && !is_rated[i as usize])
        .collect();
    (t, outside)
}

/// Bounds for one user from a shared per-count table.
pub fn estimate_bounds_with(
    table: &CpTable,
    alpha_u: f64,
    counts: &VoteCounts,
    train: &RatingMatrix,
    user: u32,
    targets: &[u32],
) -> ProbBounds {
    let row = counts.row(user);
    let (targets, outside) = partition_items(counts.n_items(), train.row(user), targets);
    ProbBounds {
        user,
        lower: targets.iter().map(|&i| table.lower(row[i as usize])).collect(),
        upper: outside.iter().map(|&j| table.upper(row[j as usize])).collect(),
        targets,
        outside,
        alpha_u,
        n_items: counts.n_items(),
    }
}

/// Per-item level `alpha_u / m` for a user budget `alpha_u`.
pub fn per_item_level(alpha_u: f64, n_items: usize) -> Result<f64> {
    if !(alpha_u > 0.0 && alpha_u < 1.0) {
        return Err(Error::invalid(format!("user error budget {alpha_u} must lie in (0, 1)")));
    }
    Ok(alpha_u / n_items as f64)
}

/// Clopper-Pearson bounds for `user` at simultaneous level `1 - alpha_u`,
/// split evenly over the `m` items.
pub fn estimate_bounds(
    counts: &VoteCounts,
    train: &RatingMatrix,
    user: u32,
    targets: &[u32],
    alpha_u: f64,
    convention: UpperConvention,
) -> Result<ProbBounds> {
    if targets.is_empty() {
        return Err(Error::invalid(format!("user {user} has an empty target set")));
    }
    let table = CpTable::new(counts.t_total(), per_item_level(alpha_u, counts.n_items())?, convention)?;
    Ok(estimate_bounds_with(&table, alpha_u, counts, train, user, targets))
}
