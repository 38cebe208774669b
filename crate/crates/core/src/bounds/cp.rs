//! Clopper-Pearson bounds on item probabilities.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use super::beta::beta_quantile_bracket;
use crate::error::{Error, Result};

/// Shape pair used for the upper bound of an item seen `k` times out of `T`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpperConvention {
    /// `Beta(1 - beta; k, T - k + 1)`, the shapes of the lower bound.
    #[default]
    SameShape,
    /// `Beta(1 - beta; k + 1, T - k)`, the usual exact binomial interval.
    Textbook,
}

impl fmt::Display for UpperConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpperConvention::SameShape => "same-shape",
            UpperConvention::Textbook => "textbook",
        })
    }
}

impl FromStr for UpperConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same-shape" => Ok(UpperConvention::SameShape),
            "textbook" => Ok(UpperConvention::Textbook),
            other => Err(Error::invalid(format!("unknown upper-bound convention '{other}'"))),
        }
    }
}

fn check_counts(k: u64, t: u64) -> Result<()> {
    if t == 0 || k > t {
        return Err(Error::invalid(format!("count {k} out of T={t}")));
    }
    Ok(())
}

/// One-sided lower bound at level `beta` for `k` successes out of `t`.
/// Returns the low end of the bisection bracket so the bound never overshoots.
pub fn cp_lower(k: u64, t: u64, beta: f64) -> Result<f64> {
    check_counts(k, t)?;
    if k == 0 {
        return Ok(0.0);
    }
    Ok(beta_quantile_bracket(beta, k as f64, (t - k + 1) as f64)?.0)
}

/// One-sided upper bound at level `beta` for `k` successes out of `t`.
/// Returns the high end of the bisection bracket.
pub fn cp_upper(k: u64, t: u64, beta: f64, convention: UpperConvention) -> Result<f64> {
    check_counts(k, t)?;
    if k == t {
        return Ok(1.0);
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("quantile level {beta} must lie in (0, 1)")));
    }
    // k = 0 uses Beta(1, T) under both conventions, whose quantile is the
    // zero-count bound 1 - beta^(1/T)
    let (a, b) = match convention {
        UpperConvention::SameShape => (k.max(1) as f64, (t - k.max(1) + 1) as f64),
        UpperConvention::Textbook => ((k + 1) as f64, (t - k) as f64),
    };
    Ok(beta_quantile_bracket(1.0 - beta, a, b)?.1)
}

/// Lazily filled lower/upper bounds for every count `0..=T` at one per-item
/// level. Safe to share between threads.
#[derive(Debug)]
pub struct CpTable {
    t: u64,
    beta: f64,
    convention: UpperConvention,
    lower: Vec<OnceLock<f64>>,
    upper: Vec<OnceLock<f64>>,
}

impl CpTable {
    pub fn new(t: u64, beta: f64, convention: UpperConvention) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!("per-item level {beta} must lie in (0, 1)")));
        }
        let len = t as usize + 1;
        Ok(CpTable {
            t,
            beta,
            convention,
            lower: (0..len).map(|_| OnceLock::new()).collect(),
            upper: (0..len).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lower(&self, k: u32) -> f64 {
        *self.lower[k as usize].get_or_init(|| cp_lower(k as u64, self.t, self.beta).expect("validated level"))
    }

    pub fn upper(&self, k: u32) -> f64 {
        *self.upper[k as usize]
            .get_or_init(|| cp_upper(k as u64, self.t, self.beta, self.convention).expect("validated level"))
    }
}
