//! Ground truth on tiny instances.
//!
//! Every `s`-subset of users is enumerated in lexicographic order, so item
//! probabilities are exact rationals over `C(n, s)`. Concrete poisoning
//! attacks are then replayed against the exact poisoned ensemble to try to
//! falsify certified sizes. A violation is always a bug.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::base_rec::{Algo, BaseModel, Submatrix};
use crate::bounds::{exact_from_f64, make_context, partition_items, ProbBounds};
use crate::certify::Prepared;
use crate::ensemble::{top_by_votes, SubmatrixSample};
use crate::error::{Error, Result};
use crate::ratings::{RatingDomain, RatingMatrix};
use crate::seed;

/// Largest number of subsets an exhaustive enumeration may visit.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// All `s`-subsets of `0..n` in lexicographic order.
pub fn subsets_lex(n: usize, s: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if s > n {
        return out;
    }
    let mut cur: Vec<u32> = (0..s as u32).collect();
    loop {
        out.push(cur.clone());
        // rightmost position that can still move
        let Some(k) = (0..s).rev().find(|&k| (cur[k] as usize) < n - s + k) else {
            return out;
        };
        cur[k] += 1;
        for j in k + 1..s {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Members of the exhaustive ensemble: subset `k` in lexicographic order
/// with sample seed `derive(master_seed, k)`.
pub fn exhaustive_members(n: usize, s: usize, master_seed: u64) -> Result<Vec<(u64, SubmatrixSample)>> {
    let total = crate::bounds::combinatorics::binomial_u64(n as u64, s as u64).unwrap_or(u64::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!("C({n},{s}) exceeds {ENUMERATION_LIMIT} subsets")));
    }
    Ok(subsets_lex(n, s)
        .into_iter()
        .enumerate()
        .map(|(k, users)| {
            let k = k as u64;
            (
                k,
                SubmatrixSample {
                    users,
                    seed: seed::derive(master_seed, k),
                },
            )
        })
        .collect())
}

/// Exact item probabilities `count / C(n, s)` for every (user, item).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactProbs {
    pub n_users: usize,
    pub n_items: usize,
    pub s: usize,
    pub n_prime: usize,
    /// `C(n, s)`.
    pub denom: u64,
    /// Row-major recommendation counts over all subsets.
    pub counts: Vec<u64>,
}

impl ExactProbs {
    pub fn count(&self, u: u32, i: u32) -> u64 {
        self.counts[u as usize * self.n_items + i as usize]
    }

    pub fn row(&self, u: u32) -> &[u64] {
        &self.counts[u as usize * self.n_items..(u as usize + 1) * self.n_items]
    }

    pub fn prob(&self, u: u32, i: u32) -> BigRational {
        BigRational::new(BigInt::from(self.count(u, i)), BigInt::from(self.denom))
    }

    /// Exact ensemble top-`N` of `user` on `matrix` (rated items excluded,
    /// ties by ascending item id).
    pub fn top_n(&self, matrix: &RatingMatrix, user: u32, n_top: usize) -> Vec<u32> {
        let row = self.row(user);
        let scored = (0..self.n_items as u32)
            .filter(|&i| !matrix.has_rated(user, i))
            .map(|i| (i, row[i as usize]))
            .collect();
        top_by_votes(scored, n_top)
    }

    /// Bounds equal to the exact probabilities, for certification without
    /// estimation error.
    pub fn exact_bounds(&self, train: &RatingMatrix, user: u32, targets: &[u32]) -> ProbBounds<BigRational> {
        let (targets, outside) = partition_items(self.n_items, train.row(user), targets);
        ProbBounds {
            user,
            lower: targets.iter().map(|&i| self.prob(user, i)).collect(),
            upper: outside.iter().map(|&j| self.prob(user, j)).collect(),
            targets,
            outside,
            alpha_u: 0.0,
            n_items: self.n_items,
        }
    }
}

/// Enumerates all `C(n, s)` subsets of `matrix`'s users, trains one base model
/// on each and counts recommendations. Model seeds follow
/// [`exhaustive_members`] with `master_seed`.
pub fn exact_item_probs(
    matrix: &RatingMatrix,
    algo: &Algo,
    s: usize,
    n_prime: usize,
    master_seed: u64,
) -> Result<ExactProbs> {
    let n = matrix.n_users();
    let m = matrix.n_items();
    if s == 0 || s > n {
        return Err(Error::invalid(format!("subsample size s={s} must lie in 1..={n}")));
    }
    if n_prime == 0 {
        return Err(Error::invalid("N' must be at least 1"));
    }
    let members = exhaustive_members(n, s, master_seed)?;
    let denom = members.len() as u64;
    let chunk = members.len().div_ceil(4 * rayon::current_num_threads()).max(1);
    let partials: Vec<Result<Vec<u64>>> = members
        .par_chunks(chunk)
        .map(|block| {
            let mut counts = vec![0u64; n * m];
            for (_, sample) in block {
                let model = BaseModel::train(Submatrix::new(matrix, &sample.users), algo, sample.training_seed())?;
                for &u in &sample.users {
                    for i in model.recommend(u, n_prime) {
                        counts[u as usize * m + i as usize] += 1;
                    }
                }
            }
            Ok(counts)
        })
        .collect();
    let mut counts = vec![0u64; n * m];
    for part in partials {
        for (acc, c) in counts.iter_mut().zip(part?) {
            *acc += c;
        }
    }
    Ok(ExactProbs {
        n_users: n,
        n_items: m,
        s,
        n_prime,
        denom,
        counts,
    })
}

/// Certified sizes computed in exact arithmetic with the exact probabilities
/// as both lower and upper bounds. Users with an empty target get 0.
pub fn certify_with_exact_probs(
    probs: &ExactProbs,
    train: &RatingMatrix,
    targets: &[Vec<u32>],
    n_top: usize,
    e: u64,
) -> Result<Vec<usize>> {
    let ctx = make_context(probs.n_users as u64, e, probs.s as u64, true)?;
    let sigma = ctx.exact.as_ref().expect("exact context").sigma.clone();
    Ok((0..probs.n_users as u32)
        .map(|u| {
            let t = &targets[u as usize];
            if t.is_empty() {
                return 0;
            }
            let b = probs.exact_bounds(train, u, t);
            Prepared::new(&b, n_top, probs.n_prime).search(&sigma, &ctx)
        })
        .collect())
}

/// Whether every lower bound is at most, and every upper bound at least, the
/// exact probability of its item.
pub fn bounds_cover(bounds: &ProbBounds, probs: &ExactProbs) -> bool {
    let u = bounds.user;
    let lower_ok = bounds
        .targets
        .iter()
        .zip(&bounds.lower)
        .all(|(&i, &low)| exact_from_f64(low) <= probs.prob(u, i));
    let upper_ok = bounds
        .outside
        .iter()
        .zip(&bounds.upper)
        .all(|(&j, &up)| exact_from_f64(up) >= probs.prob(u, j));
    lower_ok && upper_ok
}

/// Fake-user generators for [`attack_soundness_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attack {
    /// A random nonempty item set with random scores.
    RandomRatings,
    /// The `k` most popular genuine items (random `k`) at the top score.
    CopyPopular,
    /// A random nonempty item set, all at the top score.
    AllMaxOnRandomItems,
}

impl Attack {
    pub const ALL: [Attack; 3] = [Attack::RandomRatings, Attack::CopyPopular, Attack::AllMaxOnRandomItems];
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attack::RandomRatings => "random-ratings",
            Attack::CopyPopular => "copy-popular",
            Attack::AllMaxOnRandomItems => "all-max-on-random-items",
        })
    }
}

impl FromStr for Attack {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Attack::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown attack '{s}'")))
    }
}

/// Scores an attacker may use: the listed levels, or the integers inside a
/// narrow interval domain. Wide intervals fall back to their ends, clamped
/// to `1..=5`.
pub fn attack_levels(domain: &RatingDomain) -> Vec<f64> {
    match domain {
        RatingDomain::Levels(l) => l.clone(),
        RatingDomain::Interval { min, max } => {
            let (lo, hi) = (min.ceil().max(1.0), max.floor());
            if hi >= lo && hi - lo <= 100.0 {
                return (lo as i64..=hi as i64).map(|k| k as f64).collect();
            }
            let mut ends = vec![1f64.clamp(*min, *max), 5f64.clamp(*min, *max)];
            ends.dedup();
            ends
        }
    }
}

/// `e` fake rating rows drawn by `attack`.
pub fn fake_users(matrix: &RatingMatrix, attack: Attack, e: usize, rng: &mut impl Rng) -> Vec<Vec<(u32, f64)>> {
    let m = matrix.n_items();
    let levels = attack_levels(matrix.domain());
    let top = levels.iter().copied().fold(f64::MIN, f64::max);
    let mut by_popularity: Vec<u32> = (0..m as u32).collect();
    let pop = matrix.item_popularity();
    by_popularity.sort_by_key(|&i| (std::cmp::Reverse(pop[i as usize]), i));
    (0..e)
        .map(|_| {
            let k = rng.random_range(1..=m);
            let mut items: Vec<u32> = match attack {
                Attack::CopyPopular => by_popularity[..k].to_vec(),
                _ => index::sample(rng, m, k).into_iter().map(|i| i as u32).collect(),
            };
            items.sort_unstable();
            items
                .into_iter()
                .map(|i| {
                    let score = match attack {
                        Attack::RandomRatings => levels[rng.random_range(0..levels.len())],
                        _ => top,
                    };
                    (i, score)
                })
                .collect()
        })
        .collect()
}

/// One observed break of a certified size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub trial: usize,
    pub user: u32,
    pub r: usize,
    pub intersection: usize,
}

/// Outcome of replaying attacks against certified sizes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SoundnessReport {
    pub trials: usize,
    /// (trial, user) pairs checked.
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Smallest intersection seen per user over all trials.
    pub min_intersection: Vec<usize>,
}

struct Checker<'a> {
    matrix: &'a RatingMatrix,
    algo: &'a Algo,
    s: usize,
    n_prime: usize,
    n_top: usize,
    targets: &'a [Vec<u32>],
    r: &'a [usize],
    seed: u64,
}

impl Checker<'_> {
    /// Intersections `|I_u ∩ T(M', u)|` for every genuine user with a target.
    fn intersections(&self, fakes: Vec<Vec<(u32, f64)>>) -> Result<Vec<Option<usize>>> {
        let poisoned = self.matrix.with_appended_users(fakes)?;
        let probs = exact_item_probs(&poisoned, self.algo, self.s, self.n_prime, self.seed)?;
        Ok((0..self.matrix.n_users() as u32)
            .map(|u| {
                let t = &self.targets[u as usize];
                (!t.is_empty()).then(|| {
                    probs
                        .top_n(&poisoned, u, self.n_top)
                        .iter()
                        .filter(|i| t.binary_search(i).is_ok())
                        .count()
                })
            })
            .collect())
    }

    fn run(&self, attacks: Vec<Vec<Vec<(u32, f64)>>>) -> Result<SoundnessReport> {
        let n = self.matrix.n_users();
        let outcomes: Vec<Result<Vec<Option<usize>>>> =
            attacks.into_par_iter().map(|fakes| self.intersections(fakes)).collect();
        let mut report = SoundnessReport {
            min_intersection: vec![usize::MAX; n],
            ..SoundnessReport::default()
        };
        for (trial, outcome) in outcomes.into_iter().enumerate() {
            report.trials += 1;
            for (u, x) in outcome?.into_iter().enumerate() {
                let Some(x) = x else { continue };
                report.checks += 1;
                report.min_intersection[u] = report.min_intersection[u].min(x);
                if x < self.r[u] {
                    report.violations.push(Violation {
                        trial,
                        user: u as u32,
                        r: self.r[u],
                        intersection: x,
                    });
                }
            }
        }
        Ok(report)
    }
}

/// Replays `trials` attacks of `e` fake users each and checks
/// `|I_u ∩ T(M', u)| >= r_u` for every genuine user. `r` must come from
/// exact-probability certification at the same `e`.
#[allow(clippy::too_many_arguments)]
pub fn attack_soundness_check(
    matrix: &RatingMatrix,
    algo: &Algo,
    s: usize,
    n_prime: usize,
    n_top: usize,
    e: usize,
    attack: Attack,
    trials: usize,
    seed: u64,
    targets: &[Vec<u32>],
    r: &[usize],
) -> Result<SoundnessReport> {
    check_shapes(matrix, targets, r)?;
    let attacks = (0..trials)
        .map(|k| fake_users(matrix, attack, e, &mut seed::stream(seed, k as u64)))
        .collect();
    Checker {
        matrix,
        algo,
        s,
        n_prime,
        n_top,
        targets,
        r,
        seed,
    }
    .run(attacks)
}

/// Tries every assignment of `{unrated} ∪ levels` to every item for each of
/// the `e` fake users (as a multiset of rows).
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_adversary(
    matrix: &RatingMatrix,
    algo: &Algo,
    s: usize,
    n_prime: usize,
    n_top: usize,
    e: usize,
    levels: &[f64],
    targets: &[Vec<u32>],
    r: &[usize],
) -> Result<SoundnessReport> {
    check_shapes(matrix, targets, r)?;
    let m = matrix.n_items();
    let base = levels.len() + 1;
    let patterns = (base as u64).checked_pow(m as u32).filter(|&p| p <= 100_000).ok_or_else(|| {
        Error::TooLarge(format!("{base}^{m} rating patterns per fake user"))
    })?;
    let row = |mut code: u64| -> Vec<(u32, f64)> {
        let mut out = Vec::new();
        for i in 0..m as u32 {
            let digit = (code % base as u64) as usize;
            code /= base as u64;
            if digit > 0 {
                out.push((i, levels[digit - 1]));
            }
        }
        out
    };
    // nondecreasing tuples of pattern codes
    let mut attacks = Vec::new();
    let mut tuple = vec![0u64; e];
    loop {
        attacks.push(tuple.iter().map(|&c| row(c)).collect::<Vec<_>>());
        if attacks.len() > 1_000_000 {
            return Err(Error::TooLarge("too many fake-user combinations".into()));
        }
        let Some(k) = (0..e).rev().find(|&k| tuple[k] + 1 < patterns) else {
            break;
        };
        tuple[k] += 1;
        for j in k + 1..e {
            tuple[j] = tuple[k];
        }
    }
    Checker {
        matrix,
        algo,
        s,
        n_prime,
        n_top,
        targets,
        r,
        seed: 0,
    }
    .run(attacks)
}

fn check_shapes(matrix: &RatingMatrix, targets: &[Vec<u32>], r: &[usize]) -> Result<()> {
    if targets.len() != matrix.n_users() || r.len() != matrix.n_users() {
        return Err(Error::Mismatch("targets and certified sizes must cover every user".into()));
    }
    Ok(())
}
