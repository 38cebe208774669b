//! Binomial-coefficient arithmetic shared by certification: the attack slack
//! `sigma = s/n' * C(n',s)/C(n,s) - s/n` with `n' = n + e`, and the rounding
//! of probabilities onto the grid of multiples of `1/C(n,s)`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Relative upward guard applied to the floating-point slack.
pub const SIGMA_GUARD: f64 = 1e-13;

/// `C(n, k)` as a big integer.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for j in 0..k {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

/// `C(n, k)` if it fits in a `u64`.
pub fn binomial_u64(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.checked_mul((n - j) as u128)? / (j + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Exact companions of a [`CombinatoricContext`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExactBinomials {
    pub c_n_s: BigInt,
    pub c_np_s: BigInt,
    pub sigma: BigRational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinatoricContext {
    pub n: u64,
    pub e: u64,
    pub s: u64,
    /// `ln(C(n+e, s) / C(n, s))`.
    pub log_ratio: f64,
    /// Slack in floating point, rounded up by [`SIGMA_GUARD`]; `+inf` on overflow.
    pub sigma: f64,
    /// `C(n, s)` when it is exactly representable in an `f64`.
    pub grid: Option<u64>,
    pub exact: Option<ExactBinomials>,
}

/// `ln(C(n+e, s) / C(n, s))` as a sum of `min(e, s)` well-conditioned terms.
pub fn log_binomial_ratio(n: u64, e: u64, s: u64) -> f64 {
    if e <= s {
        // prod_{k=1..e} (n+k) / (n+k-s)
        (1..=e).map(|k| (s as f64 / (n + k - s) as f64).ln_1p()).sum()
    } else {
        // prod_{j=0..s-1} (n+e-j) / (n-j)
        (0..s).map(|j| (e as f64 / (n - j) as f64).ln_1p()).sum()
    }
}

fn sigma_from_log(n: u64, e: u64, s: u64, log_ratio: f64) -> f64 {
    if e == 0 {
        return 0.0;
    }
    // s/n' * ratio - s/n = (s/n) * (ratio * n/n' - 1)
    let v = (s as f64 / n as f64) * (log_ratio - (e as f64 / n as f64).ln_1p()).exp_m1();
    let v = v * (1.0 + SIGMA_GUARD);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Builds the context for `n` genuine users, `e` fake users and subsample
/// size `s`. With `exact`, big-integer binomials and the exact slack are kept.
pub fn make_context(n: u64, e: u64, s: u64, exact: bool) -> Result<CombinatoricContext> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!("subsample size s={s} must lie in 1..={n}")));
    }
    let log_ratio = log_binomial_ratio(n, e, s);
    let sigma = sigma_from_log(n, e, s, log_ratio);
    let grid = binomial_u64(n, s).filter(|&c| c <= 1u64 << 53);
    let exact = exact.then(|| {
        let c_n_s = binomial(n, s);
        let c_np_s = binomial(n + e, s);
        let np = n + e;
        let sigma = BigRational::new(BigInt::from(s) * &c_np_s, BigInt::from(np) * &c_n_s)
            - BigRational::new(BigInt::from(s), BigInt::from(n));
        ExactBinomials { c_n_s, c_np_s, sigma }
    });
    Ok(CombinatoricContext {
        n,
        e,
        s,
        log_ratio,
        sigma,
        grid,
        exact,
    })
}

impl CombinatoricContext {
    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// `C(n+e, s) / C(n, s)` from the log-space path.
    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }

    /// Slack recomputed from the exact binomials, converted to `f64`.
    pub fn exact_sigma_f64(&self) -> Option<f64> {
        self.exact.as_ref().and_then(|x| x.sigma.to_f64())
    }

    /// Exact ratio converted to `f64`.
    pub fn exact_ratio_f64(&self) -> Option<f64> {
        self.exact
            .as_ref()
            .and_then(|x| BigRational::new(x.c_np_s.clone(), x.c_n_s.clone()).to_f64())
    }
}

/// `floor(p * C) / C` where `C = C(n, s)`. Applied only when `C` fits the
/// `f64` mantissa; above that the grid spacing is below double resolution
/// and `p` is returned unchanged.
pub fn round_lower_star(p: f64, ctx: &CombinatoricContext) -> f64 {
    let Some(c) = ctx.grid else { return p };
    let c = c as f64;
    let mut k = (p * c).floor();
    if p.mul_add(c, -k) < 0.0 {
        k -= 1.0;
    }
    k / c
}

/// `ceil(p * C) / C`, the upward counterpart of [`round_lower_star`].
pub fn round_upper_star(p: f64, ctx: &CombinatoricContext) -> f64 {
    let Some(c) = ctx.grid else { return p };
    let c = c as f64;
    let mut k = (p * c).ceil();
    if p.mul_add(c, -k) > 0.0 {
        k += 1.0;
    }
    k / c
}

fn exact_grid(ctx: &CombinatoricContext) -> Result<&BigInt> {
    ctx.exact
        .as_ref()
        .map(|x| &x.c_n_s)
        .ok_or_else(|| Error::invalid("exact rounding needs an exact-mode context"))
}

/// Exact `floor(p * C) / C`.
pub fn round_lower_star_exact(p: &BigRational, ctx: &CombinatoricContext) -> Result<BigRational> {
    let c = exact_grid(ctx)?;
    let scaled = p * BigRational::from_integer(c.clone());
    Ok(BigRational::new(scaled.numer().div_floor(scaled.denom()), c.clone()))
}

/// Exact `ceil(p * C) / C`.
pub fn round_upper_star_exact(p: &BigRational, ctx: &CombinatoricContext) -> Result<BigRational> {
    let c = exact_grid(ctx)?;
    let scaled = p * BigRational::from_integer(c.clone());
    Ok(BigRational::new(scaled.numer().div_ceil(scaled.denom()), c.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn no_attack_no_slack() {
        let ctx = make_context(943, 0, 200, true).unwrap();
        assert_eq!(ctx.sigma, 0.0);
        assert_eq!(ctx.log_ratio, 0.0);
        assert!(ctx.exact.unwrap().sigma.is_zero());
    }

    #[test]
    fn five_choose_two_example() {
        let ctx = make_context(5, 1, 2, true).unwrap();
        let x = ctx.exact.as_ref().unwrap();
        assert_eq!(x.c_n_s, BigInt::from(10));
        assert_eq!(x.c_np_s, BigInt::from(15));
        assert_eq!(x.sigma, q(1, 10));
        assert!((ctx.ratio() - 1.5).abs() < 1e-15);
        assert!((ctx.sigma - 0.1).abs() < 1e-14);
        assert!(ctx.sigma >= 0.1);
    }

    #[test]
    fn log_and_exact_paths_agree() {
        for e in [1, 2, 7, 50, 300] {
            let ctx = make_context(943, e, 200, true).unwrap();
            let exact = ctx.exact_sigma_f64().unwrap();
            assert!((ctx.sigma - exact).abs() <= 1e-12 * exact, "e={e}");
            let r = ctx.exact_ratio_f64().unwrap();
            assert!((ctx.ratio() - r).abs() <= 1e-12 * r, "e={e}");
        }
    }

    #[test]
    fn huge_ratio_overflows_to_infinity() {
        let ctx = make_context(1000, 1_000_000, 900, false).unwrap();
        assert_eq!(ctx.sigma, f64::INFINITY);
    }

    #[test]
    fn star_rounding_on_a_coarse_grid() {
        let ctx = make_context(5, 0, 2, true).unwrap();
        assert_eq!(round_lower_star(0.5, &ctx), 0.5);
        assert_eq!(round_lower_star(0.51, &ctx), 0.5);
        assert_eq!(round_upper_star(0.51, &ctx), 0.6);
        // the double nearest 0.3 lies just below 3/10
        assert_eq!(round_lower_star(0.3, &ctx), 0.2);
        assert_eq!(round_upper_star(0.3, &ctx), 0.3);
        assert_eq!(round_upper_star(0.7, &ctx), 0.7);
        for p in [0.0, 1.0] {
            assert_eq!(round_lower_star(p, &ctx), p);
            assert_eq!(round_upper_star(p, &ctx), p);
        }
        assert_eq!(round_lower_star_exact(&q(51, 100), &ctx).unwrap(), q(1, 2));
        assert_eq!(round_upper_star_exact(&q(51, 100), &ctx).unwrap(), q(3, 5));
        assert_eq!(round_upper_star_exact(&q(3, 10), &ctx).unwrap(), q(3, 10));
    }

    #[test]
    fn large_grid_is_identity() {
        let ctx = make_context(943, 0, 200, false).unwrap();
        assert_eq!(ctx.grid, None);
        assert_eq!(round_lower_star(0.123, &ctx), 0.123);
        assert_eq!(round_upper_star(0.123, &ctx), 0.123);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), BigInt::from(120));
        assert_eq!(binomial_u64(10, 3), Some(120));
        assert_eq!(binomial_u64(3, 5), Some(0));
        assert_eq!(binomial_u64(200, 100), None);
        assert_eq!(binomial_u64(62, 31), Some(465_428_353_255_261_088));
    }
}
