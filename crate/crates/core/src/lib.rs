//! Provably robust ensemble recommenders.
//!
//! The pipeline is: load a rating matrix ([`ratings`]), split it per user,
//! train `T` base recommenders on random `s`-user submatrices and count how
//! often each item is recommended to each user ([`ensemble`]), turn those vote
//! counts into simultaneous Clopper-Pearson bounds on the item probabilities
//! ([`bounds`]), and finally compute, per user, the certified intersection size
//! `r` that survives any injection of at most `e` fake users ([`certify`]).
//! [`metrics`] turns `r` into certified Precision/Recall/F1@N and [`oracle`]
//! provides exhaustive ground truth on tiny instances.

pub mod base_rec;
pub mod bounds;
pub mod certify;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod ratings;
pub mod seed;

pub use error::{Error, Result};
