//! Rating data: the sparse user x item score matrix, input parsers, and the
//! per-user train/test split.
//!
//! Scores are never zero; a missing entry means "not rated". Internal user and
//! item ids are contiguous and 0-based; the original identifiers are kept in an
//! [`IdMap`] so results can be reported in the input's vocabulary.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Set of admissible nonzero rating scores.
#[derive(Clone, Debug, PartialEq)]
pub enum RatingDomain {
    /// Closed interval `[min, max]`, `min > 0`.
    Interval { min: f64, max: f64 },
    /// Finite set of levels, sorted ascending, all nonzero.
    Levels(Vec<f64>),
}

impl RatingDomain {
    /// Integer stars `1..=5`, the MovieLens convention.
    pub fn stars() -> Self {
        RatingDomain::Levels(vec![1.0, 2.0, 3.0, 4.0, 5.0])
    }

    /// Any positive finite score.
    pub fn positive() -> Self {
        RatingDomain::Interval {
            min: f64::MIN_POSITIVE,
            max: f64::MAX,
        }
    }

    pub fn contains(&self, score: f64) -> bool {
        if score == 0.0 || !score.is_finite() {
            return false;
        }
        match self {
            RatingDomain::Interval { min, max } => score >= *min && score <= *max,
            RatingDomain::Levels(levels) => levels.contains(&score),
        }
    }

    pub fn min_score(&self) -> f64 {
        match self {
            RatingDomain::Interval { min, .. } => *min,
            RatingDomain::Levels(levels) => levels[0],
        }
    }

    pub fn max_score(&self) -> f64 {
        match self {
            RatingDomain::Interval { max, .. } => *max,
            RatingDomain::Levels(levels) => *levels.last().unwrap(),
        }
    }
}

impl fmt::Display for RatingDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingDomain::Interval { min, max } => write!(f, "{min}..{max}"),
            RatingDomain::Levels(levels) => {
                let parts: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}

impl FromStr for RatingDomain {
    type Err = Error;

    /// `"1..5"` is an interval, `"1;2;3"` (or `"1,2,3"`) a level set.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse rating domain '{s}'"));
        if let Some((lo, hi)) = s.split_once("..") {
            let min: f64 = lo.trim().parse().map_err(|_| bad())?;
            let max: f64 = hi.trim().parse().map_err(|_| bad())?;
            if !(min > 0.0 && min <= max) {
                return Err(bad());
            }
            return Ok(RatingDomain::Interval { min, max });
        }
        let mut levels = s
            .split([';', ','])
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if levels.is_empty() || levels.iter().any(|&l| l == 0.0 || !l.is_finite()) {
            return Err(bad());
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        Ok(RatingDomain::Levels(levels))
    }
}

/// Sparse rating matrix stored row-wise; each row is sorted by item id.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingMatrix {
    n_items: usize,
    rows: Vec<Vec<(u32, f64)>>,
    domain: RatingDomain,
}

impl RatingMatrix {
    /// Empty matrix with the given shape.
    pub fn empty(n_users: usize, n_items: usize, domain: RatingDomain) -> Self {
        RatingMatrix {
            n_items,
            rows: vec![Vec::new(); n_users],
            domain,
        }
    }

    /// Builds a matrix from `(user, item, score)` triples, enforcing every
    /// structural invariant.
    pub fn from_triples(
        n_users: usize,
        n_items: usize,
        domain: RatingDomain,
        triples: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut m = RatingMatrix::empty(n_users, n_items, domain);
        for (u, i, score) in triples {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(Error::invalid(format!(
                    "entry ({u},{i}) outside a {n_users}x{n_items} matrix"
                )));
            }
            if !m.domain.contains(score) {
                return Err(Error::invalid(format!(
                    "score {score} for ({u},{i}) outside domain {}",
                    m.domain
                )));
            }
            m.rows[u as usize].push((i, score));
        }
        for (u, row) in m.rows.iter_mut().enumerate() {
            row.sort_by_key(|&(i, _)| i);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!("duplicate entry ({u},{})", w[0].0)));
            }
        }
        Ok(m)
    }

    /// Builds a matrix from per-user rows (each `(item, score)`), validating
    /// exactly like [`RatingMatrix::from_triples`].
    pub fn from_rows(n_items: usize, domain: RatingDomain, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let n = rows.len();
        let triples = rows
            .into_iter()
            .enumerate()
            .flat_map(|(u, r)| r.into_iter().map(move |(i, s)| (u as u32, i, s)));
        RatingMatrix::from_triples(n, n_items, domain, triples)
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn domain(&self) -> &RatingDomain {
        &self.domain
    }

    pub fn n_ratings(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Ratings of user `u`, sorted by item.
    pub fn row(&self, u: u32) -> &[(u32, f64)] {
        &self.rows[u as usize]
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn score(&self, u: u32, i: u32) -> Option<f64> {
        let row = &self.rows[u as usize];
        row.binary_search_by_key(&i, |&(j, _)| j).ok().map(|k| row[k].1)
    }

    pub fn has_rated(&self, u: u32, i: u32) -> bool {
        self.score(u, i).is_some()
    }

    /// Number of ratings per item.
    pub fn item_popularity(&self) -> Vec<u32> {
        let mut pop = vec![0u32; self.n_items];
        for row in &self.rows {
            for &(i, _) in row {
                pop[i as usize] += 1;
            }
        }
        pop
    }

    /// Returns `M'`: this matrix with extra rows appended (fake users get ids
    /// `n_users..`). Rows must satisfy the same invariants.
    pub fn with_appended_users(&self, extra: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let mut rows = self.rows.clone();
        rows.extend(extra);
        RatingMatrix::from_rows(self.n_items, self.domain.clone(), rows)
    }
}

/// Held-out items per user (`E_u`), each list sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestSets {
    sets: Vec<Vec<u32>>,
}

impl TestSets {
    pub fn new(mut sets: Vec<Vec<u32>>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        TestSets { sets }
    }

    pub fn get(&self, u: u32) -> &[u32] {
        &self.sets[u as usize]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.sets.iter().map(Vec::as_slice)
    }

    pub fn sets(&self) -> &[Vec<u32>] {
        &self.sets
    }
}

/// Input layouts understood by [`load_ratings`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (MovieLens-100k `u.data`).
    MovieLens100k,
    /// `user::item::rating::timestamp` (MovieLens-1M/10M `ratings.dat`).
    MovieLensDat,
    /// Headerless `user,item,rating`.
    GenericCsv,
}

impl InputFormat {
    pub fn default_domain(self) -> RatingDomain {
        match self {
            InputFormat::MovieLens100k | InputFormat::MovieLensDat => RatingDomain::stars(),
            InputFormat::GenericCsv => RatingDomain::positive(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputFormat::MovieLens100k => "movielens-100k-tab",
            InputFormat::MovieLensDat => "movielens-dat-double-colon",
            InputFormat::GenericCsv => "generic-csv",
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-100k-tab" | "ml100k" => Ok(InputFormat::MovieLens100k),
            "movielens-dat-double-colon" | "mldat" => Ok(InputFormat::MovieLensDat),
            "generic-csv" | "csv" => Ok(InputFormat::GenericCsv),
            other => Err(Error::invalid(format!("unknown input format '{other}'"))),
        }
    }
}

/// Bidirectional map between external identifiers and internal ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

impl IdMap {
    /// Assigns internal ids in ascending external order (numeric when every
    /// identifier is an integer, lexicographic otherwise).
    pub fn from_external(users: Vec<String>, items: Vec<String>) -> Self {
        let users = sorted_unique(users);
        let items = sorted_unique(items);
        let user_index = users.iter().enumerate().map(|(k, s)| (s.clone(), k as u32)).collect();
        let item_index = items.iter().enumerate().map(|(k, s)| (s.clone(), k as u32)).collect();
        IdMap {
            users,
            items,
            user_index,
            item_index,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_external(&self, u: u32) -> &str {
        &self.users[u as usize]
    }

    pub fn item_external(&self, i: u32) -> &str {
        &self.items[i as usize]
    }

    pub fn user_internal(&self, external: &str) -> Option<u32> {
        self.user_index.get(external).copied()
    }

    pub fn item_internal(&self, external: &str) -> Option<u32> {
        self.item_index.get(external).copied()
    }

    /// `kind,internal,external` rows under a `#ids v1` header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "#ids v1 n={} m={}", self.users.len(), self.items.len())?;
        for (k, s) in self.users.iter().enumerate() {
            writeln!(w, "user,{k},{s}")?;
        }
        for (k, s) in self.items.iter().enumerate() {
            writeln!(w, "item,{k},{s}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut users = Vec::new();
        let mut items = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.splitn(3, ',');
            let kind = parts.next().ok_or_else(|| parse_err("missing kind"))?;
            let idx: usize = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| parse_err("bad internal id"))?;
            let ext = parts.next().ok_or_else(|| parse_err("missing external id"))?;
            let target = match kind {
                "user" => &mut users,
                "item" => &mut items,
                _ => return Err(parse_err("kind must be user or item")),
            };
            if idx != target.len() {
                return Err(parse_err("ids must be listed in order"));
            }
            target.push(ext.to_string());
        }
        let user_index = users.iter().enumerate().map(|(k, s)| (s.clone(), k as u32)).collect();
        let item_index = items.iter().enumerate().map(|(k, s)| (s.clone(), k as u32)).collect();
        Ok(IdMap {
            users,
            items,
            user_index,
            item_index,
        })
    }
}

fn sorted_unique(mut ids: Vec<String>) -> Vec<String> {
    ids.sort();
    ids.dedup();
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    ids
}

/// A parsed ratings file.
#[derive(Clone, Debug)]
pub struct LoadedRatings {
    pub matrix: RatingMatrix,
    pub ids: IdMap,
}

/// Parses a ratings file. `domain` defaults to the format's convention
/// (1..5 stars for MovieLens, any positive score for generic CSV).
pub fn load_ratings(path: &Path, format: InputFormat, domain: Option<RatingDomain>) -> Result<LoadedRatings> {
    let domain = domain.unwrap_or_else(|| format.default_domain());
    let reader = BufReader::new(fs::File::open(path)?);
    let mut raw: Vec<(String, String, f64, usize)> = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = ln + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            InputFormat::MovieLens100k => trimmed.split_whitespace().collect(),
            InputFormat::MovieLensDat => trimmed.split("::").map(str::trim).collect(),
            InputFormat::GenericCsv => trimmed.split(',').map(str::trim).collect(),
        };
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        if fields.len() < 3 || fields.len() > 4 {
            return Err(perr(format!(
                "expected user, item, rating[, timestamp] but found {} field(s)",
                fields.len()
            )));
        }
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| perr(format!("rating '{}' is not a number", fields[2])))?;
        if let Some(ts) = fields.get(3) {
            // timestamps are validated, then dropped
            ts.parse::<f64>()
                .map_err(|_| perr(format!("timestamp '{ts}' is not a number")))?;
        }
        if !domain.contains(score) {
            return Err(Error::OutOfDomain {
                path: path.to_path_buf(),
                line: lineno,
                score,
                domain: domain.to_string(),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(perr("empty user or item id".into()));
        }
        raw.push((fields[0].to_string(), fields[1].to_string(), score, lineno));
    }
    if raw.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let ids = IdMap::from_external(
        raw.iter().map(|r| r.0.clone()).collect(),
        raw.iter().map(|r| r.1.clone()).collect(),
    );
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ids.n_users()];
    let mut lines_of: HashMap<(u32, u32), usize> = HashMap::with_capacity(raw.len());
    for (user, item, score, lineno) in raw {
        let u = ids.user_internal(&user).unwrap();
        let i = ids.item_internal(&item).unwrap();
        if let Some(first) = lines_of.insert((u, i), lineno) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("duplicate rating for user {user} item {item} (first on line {first})"),
            });
        }
        rows[u as usize].push((i, score));
    }
    let matrix = RatingMatrix::from_rows(ids.n_items(), domain, rows)?;
    Ok(LoadedRatings { matrix, ids })
}

/// Number of training ratings for a user with `count` ratings: the floor of
/// `fraction * count`, raised to 1 so every user keeps a profile.
pub fn train_count(count: usize, fraction: f64) -> usize {
    let k = (fraction * count as f64 + 1e-9).floor() as usize;
    k.clamp(1.min(count), count)
}

/// Per-user uniform random split. Each user's ratings are shuffled by a
/// generator derived from `(seed, user)`, the first [`train_count`] go to the
/// training matrix and the rest become `E_u`.
pub fn split_train_test(matrix: &RatingMatrix, train_fraction: f64, seed: u64) -> Result<(RatingMatrix, TestSets)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} not in (0,1]")));
    }
    let mut train_rows = Vec::with_capacity(matrix.n_users());
    let mut test_sets = Vec::with_capacity(matrix.n_users());
    for u in 0..matrix.n_users() as u32 {
        let row = matrix.row(u);
        if row.is_empty() {
            return Err(Error::invalid(format!("user {u} has no ratings")));
        }
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.shuffle(&mut seed::stream(seed, u as u64));
        let k = train_count(row.len(), train_fraction);
        let mut train: Vec<(u32, f64)> = order[..k].iter().map(|&j| row[j]).collect();
        train.sort_by_key(|&(i, _)| i);
        let test: Vec<u32> = order[k..].iter().map(|&j| row[j].0).collect();
        train_rows.push(train);
        test_sets.push(test);
    }
    let train = RatingMatrix {
        n_items: matrix.n_items(),
        rows: train_rows,
        domain: matrix.domain().clone(),
    };
    Ok((train, TestSets::new(test_sets)))
}

/// Contents of a persisted split file.
#[derive(Clone, Debug)]
pub struct SplitFile {
    pub train: RatingMatrix,
    pub tests: TestSets,
    pub seed: u64,
    pub fraction: f64,
}

/// Writes the split as `#split v1 ...` followed by `train,u,i,score` and
/// `test,u,i` rows.
pub fn write_split(path: &Path, train: &RatingMatrix, tests: &TestSets, seed: u64, fraction: f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "#split v1 n={} m={} seed={} fraction={} domain={}",
        train.n_users(),
        train.n_items(),
        seed,
        fraction,
        train.domain()
    )?;
    for u in 0..train.n_users() as u32 {
        for &(i, s) in train.row(u) {
            writeln!(w, "train,{u},{i},{s}")?;
        }
    }
    for (u, set) in tests.iter().enumerate() {
        for &i in set {
            writeln!(w, "test,{u},{i}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses `key=value` pairs from a `#<tag> v1 ...` header line.
pub fn parse_header(line: &str, tag: &str) -> Option<HashMap<String, String>> {
    let rest = line.strip_prefix(&format!("#{tag} v1"))?;
    Some(
        rest.split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    )
}

pub(crate) fn header_field<T: FromStr>(h: &HashMap<String, String>, key: &str, path: &Path) -> Result<T> {
    h.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header field '{key}' missing or malformed"),
        })
}

pub fn read_split(path: &Path) -> Result<SplitFile> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().and_then(|l| parse_header(l, "split")).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "missing '#split v1' header".into(),
    })?;
    let n: usize = header_field(&header, "n", path)?;
    let m: usize = header_field(&header, "m", path)?;
    let seed: u64 = header_field(&header, "seed", path)?;
    let fraction: f64 = header_field(&header, "fraction", path)?;
    let domain: RatingDomain = match header.get("domain") {
        Some(d) => d.parse()?,
        None => RatingDomain::positive(),
    };
    let mut triples = Vec::new();
    let mut tests = vec![Vec::new(); n];
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let perr = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: msg.to_string(),
        };
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let uid = |s: &str| s.parse::<u32>().ok().filter(|&u| (u as usize) < n);
        let iid = |s: &str| s.parse::<u32>().ok().filter(|&i| (i as usize) < m);
        match (f.first().copied(), f.len()) {
            (Some("train"), 4) => {
                let u = uid(f[1]).ok_or_else(|| perr("bad user id"))?;
                let i = iid(f[2]).ok_or_else(|| perr("bad item id"))?;
                let s: f64 = f[3].parse().map_err(|_| perr("bad score"))?;
                triples.push((u, i, s));
            }
            (Some("test"), 3) => {
                let u = uid(f[1]).ok_or_else(|| perr("bad user id"))?;
                let i = iid(f[2]).ok_or_else(|| perr("bad item id"))?;
                tests[u as usize].push(i);
            }
            _ => return Err(perr("expected 'train,u,i,score' or 'test,u,i'")),
        }
    }
    let train = RatingMatrix::from_triples(n, m, domain, triples)?;
    Ok(SplitFile {
        train,
        tests: TestSets::new(tests),
        seed,
        fraction,
    })
}

/// Conventional location of a file inside an output directory.
pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
