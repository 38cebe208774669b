//! Certified intersection sizes.
//!
//! For a user with target set `I_u` and bounds on every item probability,
//! `r'` is certified against `e` fake users when the `r'`-th largest lower
//! bound in `I_u` (rounded down onto the `1/C(n,s)` grid) beats the best
//! joint upper bound any `N - r' + 1` competitors can reach after the attack.
//! The largest such `r'` is found by binary search.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_rational::BigRational;
use rayon::prelude::*;

use crate::bounds::{
    estimate_bounds_with, make_context, per_item_level, CombinatoricContext, CpTable, Prob, ProbBounds,
    UpperConvention,
};
use crate::ensemble::{ensemble_recommend, VoteCounts};
use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

/// Arithmetic used for the certification inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Big rationals and exact binomials.
    Exact,
    /// Doubles with log-space binomials.
    #[default]
    Approx,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Approx => "approx",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "approx" => Ok(Mode::Approx),
            other => Err(Error::invalid(format!("unknown mode '{other}' (expected exact or approx)"))),
        }
    }
}

/// One certification question: can `r'` items of `I_u` be guaranteed
/// against `e` fake users?
#[derive(Clone, Copy, Debug)]
pub struct CertQuery<'a, X> {
    pub bounds: &'a ProbBounds<X>,
    pub e: u64,
    /// Ensemble list length `N`.
    pub n_top: usize,
    /// Base-model list length `N'`.
    pub n_prime: usize,
    pub ctx: &'a CombinatoricContext,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertResult {
    pub user: u32,
    pub e: u64,
    pub r: usize,
    pub alpha: f64,
    pub mode: Mode,
}

/// Bounds of one user sorted the way the constraint consumes them.
#[derive(Clone, Debug)]
pub struct Prepared<X> {
    /// Lower bounds of `I_u`, descending.
    lows_desc: Vec<X>,
    /// Upper bounds of competitors, descending, ties by ascending item id.
    ranked_upper: Vec<X>,
    /// `max(0, N' - sum of lower bounds)`.
    cap: X,
    n_prime: X,
    max_r: usize,
    n_top: usize,
}

impl<X: Prob> Prepared<X> {
    pub fn new(bounds: &ProbBounds<X>, n_top: usize, n_prime: usize) -> Self {
        let mut lows_desc = bounds.lower.clone();
        lows_desc.sort_by(|a, b| b.partial_cmp(a).expect("comparable bounds"));
        let mut order: Vec<usize> = (0..bounds.outside.len()).collect();
        order.sort_by(|&a, &b| {
            bounds.upper[b]
                .partial_cmp(&bounds.upper[a])
                .expect("comparable bounds")
                .then(bounds.outside[a].cmp(&bounds.outside[b]))
        });
        let ranked_upper = order.into_iter().map(|k| bounds.upper[k].clone()).collect();
        let sum_low = bounds.lower.iter().cloned().fold(X::zero(), |a, b| a + b);
        let n_prime_x = X::from_u64(n_prime as u64);
        let slack = n_prime_x.clone() - sum_low;
        let cap = if slack > X::zero() { slack } else { X::zero() };
        Prepared {
            lows_desc,
            ranked_upper,
            cap,
            n_prime: n_prime_x,
            max_r: bounds.lower.len().min(n_top),
            n_top,
        }
    }

    /// Largest `r'` the search may return, `min(|I_u|, N)`.
    pub fn max_r(&self) -> usize {
        self.max_r
    }

    /// Whether `r_prime` satisfies the certification constraint at slack `sigma`.
    pub fn verify(&self, r_prime: usize, sigma: &X, ctx: &CombinatoricContext) -> bool {
        assert!(r_prime >= 1 && r_prime <= self.max_r, "r' = {r_prime} outside 1..={}", self.max_r);
        let lhs = self.lows_desc[r_prime - 1].floor_star(ctx);
        let width = (self.n_top - r_prime + 1).min(self.ranked_upper.len());
        if width == 0 {
            // no competitor can take a slot
            return true;
        }
        // the competitor set, smallest upper bound first
        let smallest_first = self.ranked_upper[..width].iter().rev();
        let v1 = &self.ranked_upper[width - 1];
        let mut rhs = v1.ceil_star(ctx) + sigma.clone();
        let mut sum = X::zero();
        for (c, upper) in smallest_first.enumerate() {
            sum = sum + upper.clone();
            let joint = if sum < self.cap { sum.clone() } else { self.cap.clone() };
            let joint_star = (joint / self.n_prime.clone()).ceil_star(ctx);
            let term = self.n_prime.clone() * (joint_star + sigma.clone()) / X::from_u64(c as u64 + 1);
            if term < rhs {
                rhs = term;
            }
        }
        lhs > rhs
    }

    /// Largest certified `r'`, or 0.
    pub fn search(&self, sigma: &X, ctx: &CombinatoricContext) -> usize {
        if self.max_r == 0 || !self.verify(1, sigma, ctx) {
            return 0;
        }
        let (mut lo, mut hi) = (1, self.max_r);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.verify(mid, sigma, ctx) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }
}

/// Evaluates the certification constraint for a single `r'`.
pub fn verify_constraint<X: Prob>(r_prime: usize, q: &CertQuery<'_, X>) -> Result<bool> {
    let p = Prepared::new(q.bounds, q.n_top, q.n_prime);
    if r_prime == 0 || r_prime > p.max_r() {
        return Err(Error::invalid(format!("r' = {r_prime} outside 1..={}", p.max_r())));
    }
    Ok(p.verify(r_prime, &X::sigma(q.ctx)?, q.ctx))
}

/// Certified intersection size for one query.
pub fn binary_search_r<X: Prob>(q: &CertQuery<'_, X>) -> Result<usize> {
    if q.n_top == 0 || q.n_prime == 0 {
        return Err(Error::invalid("N and N' must be at least 1"));
    }
    let p = Prepared::new(q.bounds, q.n_top, q.n_prime);
    Ok(p.search(&X::sigma(q.ctx)?, q.ctx))
}

/// Lazily computed slack for `e' = 0..=cap` fake users.
pub struct SigmaLadder<X> {
    n: u64,
    s: u64,
    exact: bool,
    values: Vec<OnceLock<(X, CombinatoricContext)>>,
}

impl<X: Prob> SigmaLadder<X> {
    pub fn new(n: u64, s: u64, cap: u64, exact: bool) -> Result<Self> {
        make_context(n, 0, s, exact)?;
        Ok(SigmaLadder {
            n,
            s,
            exact,
            values: (0..=cap).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn cap(&self) -> u64 {
        self.values.len() as u64 - 1
    }

    pub fn get(&self, e: u64) -> &(X, CombinatoricContext) {
        self.values[e as usize].get_or_init(|| {
            let ctx = make_context(self.n, e, self.s, self.exact).expect("validated sizes");
            (X::sigma(&ctx).expect("context mode matches number type"), ctx)
        })
    }
}

/// Per-item fake-user tolerance of the bagging baseline: the largest `e'`
/// with `floor*(lower_i) > ceil*(max competitor upper) + sigma(e')`, or
/// `None` when even `e' = 0` fails. Found by doubling then bisection.
pub fn bagging_tolerances<X: Prob>(bounds: &ProbBounds<X>, ladder: &SigmaLadder<X>) -> Vec<Option<u64>> {
    let top_upper = bounds
        .upper
        .iter()
        .cloned()
        .fold(X::zero(), |a, b| if b > a { b } else { a });
    bounds
        .lower
        .iter()
        .map(|low| {
            let holds = |e: u64| {
                let (sigma, ctx) = ladder.get(e);
                low.floor_star(ctx) > top_upper.ceil_star(ctx) + sigma.clone()
            };
            if !holds(0) {
                return None;
            }
            let cap = ladder.cap();
            let (mut good, mut probe) = (0u64, 1u64);
            while probe <= cap && holds(probe) {
                good = probe;
                probe *= 2;
            }
            if probe > cap {
                if holds(cap) {
                    return Some(cap);
                }
                probe = cap;
            }
            // holds(good) and !holds(probe)
            while probe - good > 1 {
                let mid = good + (probe - good) / 2;
                if holds(mid) {
                    good = mid;
                } else {
                    probe = mid;
                }
            }
            Some(good)
        })
        .collect()
}

/// Baseline certified size `min(#{i : Z_i >= e}, N)`.
pub fn bagging_r(tolerances: &[Option<u64>], e: u64, n_top: usize) -> usize {
    tolerances.iter().filter(|z| z.is_some_and(|z| z >= e)).count().min(n_top)
}

/// Baseline certified size for one query (requires `N' = 1`).
pub fn bagging_baseline_r<X: Prob>(q: &CertQuery<'_, X>) -> Result<usize> {
    if q.n_prime != 1 {
        return Err(Error::invalid("the bagging baseline is defined for N' = 1"));
    }
    let ladder = SigmaLadder::new(q.ctx.n, q.ctx.s, bagging_cap(q.ctx.n).max(q.e), q.ctx.is_exact())?;
    Ok(bagging_r(&bagging_tolerances(q.bounds, &ladder), q.e, q.n_top))
}

/// Search cap on `e'` for the baseline, `10 n`.
pub fn bagging_cap(n: u64) -> u64 {
    10 * n
}

/// Settings of a certification sweep.
#[derive(Clone, Debug)]
pub struct CertifyConfig {
    pub alpha: f64,
    pub n_top: usize,
    pub es: Vec<u64>,
    pub mode: Mode,
    pub convention: UpperConvention,
    pub bagging: bool,
}

/// Per-user results of a sweep, ordered by user then by position in `es`.
#[derive(Clone, Debug, Default)]
pub struct CertReport {
    pub pore: Vec<CertResult>,
    pub bagging: Option<Vec<CertResult>>,
    /// Users left out because their target set is empty.
    pub skipped: Vec<u32>,
}

/// Ensemble top-`N` of every user, the target for stability certification.
pub fn clean_topn_targets(counts: &VoteCounts, train: &RatingMatrix, n_top: usize) -> Vec<Vec<u32>> {
    (0..counts.n_users() as u32)
        .map(|u| {
            let mut t = ensemble_recommend(counts, train, u, n_top);
            t.sort_unstable();
            t
        })
        .collect()
}

fn certify_one<X: Prob>(
    bounds: &ProbBounds<X>,
    cfg: &CertifyConfig,
    n_prime: usize,
    contexts: &[(X, CombinatoricContext)],
    ladder: Option<&SigmaLadder<X>>,
) -> (Vec<usize>, Option<Vec<usize>>) {
    let prepared = Prepared::new(bounds, cfg.n_top, n_prime);
    let pore = contexts.iter().map(|(sigma, ctx)| prepared.search(sigma, ctx)).collect();
    let bagging = ladder.map(|ladder| {
        let z = bagging_tolerances(bounds, ladder);
        cfg.es.iter().map(|&e| bagging_r(&z, e, cfg.n_top)).collect()
    });
    (pore, bagging)
}

/// Certifies every user with a nonempty target set for every `e` in the
/// sweep. Each user gets the budget `alpha / n`, split over the `m` items.
pub fn compute_all_r(
    train: &RatingMatrix,
    counts: &VoteCounts,
    targets: &[Vec<u32>],
    cfg: &CertifyConfig,
) -> Result<CertReport> {
    let n = counts.n_users();
    if train.n_users() != n || train.n_items() != counts.n_items() || targets.len() != n {
        return Err(Error::Mismatch("training matrix, votes and target sets disagree in shape".into()));
    }
    if cfg.n_top == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    if cfg.bagging && counts.n_prime() != 1 {
        return Err(Error::invalid("the bagging baseline is defined for N' = 1"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {} must lie in (0, 1)", cfg.alpha)));
    }
    let alpha_u = cfg.alpha / n as f64;
    let table = CpTable::new(counts.t_total(), per_item_level(alpha_u, counts.n_items())?, cfg.convention)?;
    let exact = cfg.mode == Mode::Exact;
    let (n64, s64) = (n as u64, counts.s() as u64);

    let users: Vec<u32> = (0..n as u32).filter(|&u| !targets[u as usize].is_empty()).collect();
    let skipped = (0..n as u32).filter(|&u| targets[u as usize].is_empty()).collect();
    let bounds_of = |u: u32| estimate_bounds_with(&table, alpha_u, counts, train, u, &targets[u as usize]);

    let cap = bagging_cap(n64).max(cfg.es.iter().copied().max().unwrap_or(0));
    let per_user: Vec<(Vec<usize>, Option<Vec<usize>>)> = if exact {
        let contexts = contexts_for::<BigRational>(n64, s64, &cfg.es, true)?;
        let ladder = cfg.bagging.then(|| SigmaLadder::new(n64, s64, cap, true)).transpose()?;
        users
            .par_iter()
            .map(|&u| certify_one(&bounds_of(u).to_exact(), cfg, counts.n_prime(), &contexts, ladder.as_ref()))
            .collect()
    } else {
        let contexts = contexts_for::<f64>(n64, s64, &cfg.es, false)?;
        let ladder = cfg.bagging.then(|| SigmaLadder::new(n64, s64, cap, false)).transpose()?;
        users
            .par_iter()
            .map(|&u| certify_one(&bounds_of(u), cfg, counts.n_prime(), &contexts, ladder.as_ref()))
            .collect()
    };

    let mut report = CertReport {
        skipped,
        bagging: cfg.bagging.then(Vec::new),
        ..CertReport::default()
    };
    let row = |user, e, r| CertResult {
        user,
        e,
        r,
        alpha: cfg.alpha,
        mode: cfg.mode,
    };
    for (&u, (pore, bagging)) in users.iter().zip(per_user) {
        for (k, &e) in cfg.es.iter().enumerate() {
            report.pore.push(row(u, e, pore[k]));
            if let (Some(out), Some(b)) = (report.bagging.as_mut(), bagging.as_ref()) {
                out.push(row(u, e, b[k]));
            }
        }
    }
    Ok(report)
}

fn contexts_for<X: Prob>(n: u64, s: u64, es: &[u64], exact: bool) -> Result<Vec<(X, CombinatoricContext)>> {
    es.iter()
        .map(|&e| {
            let ctx = make_context(n, e, s, exact)?;
            Ok((X::sigma(&ctx)?, ctx))
        })
        .collect()
}
