//! Ensemble construction: sample `s`-user submatrices, train one base model on
//! each and count how often every item lands in each user's top-`N'`.
//!
//! Member `t` (0-based) draws its users and trains with seeds derived from
//! `(master_seed, t)`, so the counts depend only on the member range and not
//! on how members are scheduled over threads.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use crate::base_rec::{Algo, BaseModel, Submatrix};
use crate::error::{Error, Result};
use crate::ratings::{header_field, parse_header, RatingMatrix};
use crate::seed;

/// Users of one ensemble member, ascending, with the seed they were drawn from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmatrixSample {
    pub users: Vec<u32>,
    pub seed: u64,
}

impl SubmatrixSample {
    /// Seed handed to the base model trained on this sample.
    pub fn training_seed(&self) -> u64 {
        seed::derive(self.seed, 1)
    }
}

/// Uniform `s`-subset of `0..n`, drawn without replacement.
pub fn sample_submatrix(n: usize, s: usize, seed: u64) -> Result<SubmatrixSample> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!("subsample size s={s} must lie in 1..={n}")));
    }
    let mut rng = seed::stream(seed, 0);
    let mut users: Vec<u32> = index::sample(&mut rng, n, s).into_iter().map(|u| u as u32).collect();
    users.sort_unstable();
    Ok(SubmatrixSample { users, seed })
}

/// Sample for member `t` of an ensemble keyed by `master_seed`.
pub fn member_sample(n: usize, s: usize, master_seed: u64, t: u64) -> Result<SubmatrixSample> {
    sample_submatrix(n, s, seed::derive(master_seed, t))
}

/// Top-`n_prime` lists of every member, as `(user, item)` votes.
fn member_votes(
    train: &RatingMatrix,
    algo: &Algo,
    n_prime: usize,
    sample: &SubmatrixSample,
) -> Result<Vec<(u32, u32)>> {
    let model = BaseModel::train(Submatrix::new(train, &sample.users), algo, sample.training_seed())?;
    let mut votes = Vec::with_capacity(model.users().len() * n_prime);
    for &u in model.users() {
        votes.extend(model.recommend(u, n_prime).into_iter().map(|i| (u, i)));
    }
    Ok(votes)
}

/// Dense `n x m` vote tally of the given members. Members are trained in
/// parallel; the sum does not depend on the schedule. The first failing
/// member (in slice order) is reported.
pub fn tally(
    train: &RatingMatrix,
    algo: &Algo,
    n_prime: usize,
    members: &[(u64, SubmatrixSample)],
) -> Result<Vec<u32>> {
    let m = train.n_items();
    let mut counts = vec![0u32; train.n_users() * m];
    tally_into(&mut counts, m, train, algo, n_prime, members)?;
    Ok(counts)
}

fn tally_into(
    counts: &mut [u32],
    m: usize,
    train: &RatingMatrix,
    algo: &Algo,
    n_prime: usize,
    members: &[(u64, SubmatrixSample)],
) -> Result<()> {
    let results: Vec<Result<Vec<(u32, u32)>>> = members
        .par_iter()
        .map(|(t, sample)| {
            member_votes(train, algo, n_prime, sample).map_err(|e| Error::BaseTraining {
                t: *t,
                msg: e.to_string(),
            })
        })
        .collect();
    for votes in results {
        for (u, i) in votes? {
            counts[u as usize * m + i as usize] += 1;
        }
    }
    Ok(())
}

/// Per-user, per-item vote counts of an ensemble of `t_total` members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteCounts {
    n_users: usize,
    n_items: usize,
    t_total: u64,
    n_prime: usize,
    s: usize,
    master_seed: u64,
    algo: String,
    counts: Vec<u32>,
}

/// Members trained per parallel batch; bounds the memory held by pending votes.
const BATCH: u64 = 256;

impl VoteCounts {
    /// Zero-member ensemble.
    pub fn new(n_users: usize, n_items: usize, s: usize, n_prime: usize, master_seed: u64, algo: &str) -> Self {
        VoteCounts {
            n_users,
            n_items,
            t_total: 0,
            n_prime,
            s,
            master_seed,
            algo: algo.to_string(),
            counts: vec![0; n_users * n_items],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_dense(
        n_users: usize,
        n_items: usize,
        t_total: u64,
        s: usize,
        n_prime: usize,
        master_seed: u64,
        algo: &str,
        counts: Vec<u32>,
    ) -> Result<Self> {
        if counts.len() != n_users * n_items {
            return Err(Error::invalid("vote table has the wrong shape"));
        }
        if counts.iter().any(|&c| c as u64 > t_total) {
            return Err(Error::invalid("a vote count exceeds the number of members"));
        }
        Ok(VoteCounts {
            n_users,
            n_items,
            t_total,
            n_prime,
            s,
            master_seed,
            algo: algo.to_string(),
            counts,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of members `T`.
    pub fn t_total(&self) -> u64 {
        self.t_total
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn algo(&self) -> &str {
        &self.algo
    }

    pub fn row(&self, u: u32) -> &[u32] {
        let m = self.n_items;
        &self.counts[u as usize * m..(u as usize + 1) * m]
    }

    pub fn get(&self, u: u32, i: u32) -> u32 {
        self.counts[u as usize * self.n_items + i as usize]
    }

    pub fn as_dense(&self) -> &[u32] {
        &self.counts
    }

    /// Trains members `T..t_target` and adds their votes. `on_batch` is called
    /// with the new `T` after every batch.
    pub fn extend_to(
        &mut self,
        train: &RatingMatrix,
        algo: &Algo,
        t_target: u64,
        mut on_batch: impl FnMut(u64),
    ) -> Result<()> {
        if train.n_users() != self.n_users || train.n_items() != self.n_items {
            return Err(Error::Mismatch(format!(
                "votes are {}x{} but the training matrix is {}x{}",
                self.n_users,
                self.n_items,
                train.n_users(),
                train.n_items()
            )));
        }
        if algo.tag() != self.algo {
            return Err(Error::Mismatch(format!("votes use algo {} but {} was requested", self.algo, algo.tag())));
        }
        if self.n_prime == 0 {
            return Err(Error::invalid("N' must be at least 1"));
        }
        while self.t_total < t_target {
            let end = (self.t_total + BATCH).min(t_target);
            let members = (self.t_total..end)
                .map(|t| Ok((t, member_sample(self.n_users, self.s, self.master_seed, t)?)))
                .collect::<Result<Vec<_>>>()?;
            tally_into(&mut self.counts, self.n_items, train, algo, self.n_prime, &members)?;
            self.t_total = end;
            on_batch(end);
        }
        Ok(())
    }

    /// Writes `#votes v1 ...` followed by `u,i,count` rows for nonzero counts.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(
            w,
            "#votes v1 n={} m={} T={} s={} nprime={} algo={} seed={}",
            self.n_users, self.n_items, self.t_total, self.s, self.n_prime, self.algo, self.master_seed
        )?;
        let mut line = String::new();
        for u in 0..self.n_users as u32 {
            for (i, &c) in self.row(u).iter().enumerate() {
                if c > 0 {
                    line.clear();
                    let _ = writeln!(line, "{u},{i},{c}");
                    w.write_all(line.as_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().and_then(|l| parse_header(l, "votes")).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "missing '#votes v1' header".into(),
        })?;
        let n: usize = header_field(&header, "n", path)?;
        let m: usize = header_field(&header, "m", path)?;
        let t_total: u64 = header_field(&header, "T", path)?;
        let s: usize = header_field(&header, "s", path)?;
        let n_prime: usize = header_field(&header, "nprime", path)?;
        let algo: String = header_field(&header, "algo", path)?;
        let master_seed: u64 = header_field(&header, "seed", path)?;
        let mut counts = vec![0u32; n * m];
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: k + 2,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(perr("expected 'u,i,count'"));
            }
            let u: usize = f[0].parse().ok().filter(|&u| u < n).ok_or_else(|| perr("bad user id"))?;
            let i: usize = f[1].parse().ok().filter(|&i| i < m).ok_or_else(|| perr("bad item id"))?;
            let c: u32 = f[2]
                .parse()
                .ok()
                .filter(|&c| c as u64 <= t_total)
                .ok_or_else(|| perr("bad count"))?;
            counts[u * m + i] = c;
        }
        VoteCounts::from_dense(n, m, t_total, s, n_prime, master_seed, &algo, counts)
    }
}

/// Trains `t_total` members on `train` and returns their vote counts.
pub fn build_vote_counts(
    train: &RatingMatrix,
    algo: &Algo,
    t_total: u64,
    s: usize,
    n_prime: usize,
    master_seed: u64,
) -> Result<VoteCounts> {
    if t_total == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    if s == 0 || s > train.n_users() {
        return Err(Error::invalid(format!("subsample size s={s} must lie in 1..={}", train.n_users())));
    }
    let mut votes = VoteCounts::new(train.n_users(), train.n_items(), s, n_prime, master_seed, algo.tag());
    votes.extend_to(train, algo, t_total, |_| {})?;
    Ok(votes)
}

/// Ranks `(item, votes)` by votes descending, then item id ascending, and keeps `n`.
pub fn top_by_votes(mut scored: Vec<(u32, u64)>, n: usize) -> Vec<u32> {
    scored.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Ensemble top-`N` for `user`: the unrated items with the most votes, ties by
/// ascending item id. Zero-vote items fill the tail, so the list is shorter
/// than `N` only when the user has fewer than `N` unrated items.
pub fn ensemble_recommend(counts: &VoteCounts, train: &RatingMatrix, user: u32, n: usize) -> Vec<u32> {
    let row = counts.row(user);
    let rated = train.row(user);
    let mut r = 0;
    let mut scored = Vec::with_capacity(row.len());
    for (i, &c) in row.iter().enumerate() {
        let i = i as u32;
        while r < rated.len() && rated[r].0 < i {
            r += 1;
        }
        if r < rated.len() && rated[r].0 == i {
            continue;
        }
        scored.push((i, c as u64));
    }
    top_by_votes(scored, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::RatingDomain;

    #[test]
    fn full_sample_when_s_equals_n() {
        let s = sample_submatrix(7, 7, 3).unwrap();
        assert_eq!(s.users, (0..7).collect::<Vec<_>>());
        assert!(sample_submatrix(3, 4, 0).is_err());
        assert!(sample_submatrix(3, 0, 0).is_err());
    }

    #[test]
    fn recommend_breaks_ties_by_id() {
        let train = RatingMatrix::empty(1, 4, RatingDomain::stars());
        let v = VoteCounts::from_dense(1, 4, 9, 1, 1, 0, "ir", vec![5, 9, 9, 0]).unwrap();
        assert_eq!(ensemble_recommend(&v, &train, 0, 2), vec![1, 2]);
        // zero-vote items fill the tail
        assert_eq!(ensemble_recommend(&v, &train, 0, 4), vec![1, 2, 0, 3]);
    }

    #[test]
    fn recommend_skips_rated_items() {
        let train = RatingMatrix::from_rows(4, RatingDomain::stars(), vec![vec![(1, 4.0)]]).unwrap();
        let v = VoteCounts::from_dense(1, 4, 9, 1, 1, 0, "ir", vec![5, 9, 9, 0]).unwrap();
        assert_eq!(ensemble_recommend(&v, &train, 0, 2), vec![2, 0]);
        assert_eq!(ensemble_recommend(&v, &train, 0, 9), vec![2, 0, 3]);
    }

    #[test]
    fn votes_file_round_trip() {
        let v = VoteCounts::from_dense(2, 3, 4, 1, 2, 11, "bpr", vec![0, 4, 1, 2, 0, 3]).unwrap();
        let dir = std::env::temp_dir().join(format!("pore-votes-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("votes.csv");
        v.write(&p).unwrap();
        assert_eq!(VoteCounts::read(&p).unwrap(), v);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("#votes v1 n=2 m=3 T=4 s=1 nprime=2 algo=bpr seed=11\n0,1,4\n"));
    }

    #[test]
    fn rejects_counts_above_t() {
        assert!(VoteCounts::from_dense(1, 2, 3, 1, 1, 0, "ir", vec![4, 0]).is_err());
    }
}
