use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pore::base_rec::{Algo, BaseModel, Submatrix};
use pore::certify::{clean_topn_targets, compute_all_r, CertResult, CertifyConfig};
use pore::ensemble::{ensemble_recommend, VoteCounts};
use pore::metrics::{average_over_users, certified_rows, metric_rows_csv, standard_metrics, MetricRow, Prf};
use pore::oracle::{
    attack_soundness_check, certify_with_exact_probs, exact_item_probs, exhaustive_adversary, Attack, SoundnessReport,
};
use pore::ratings::{
    load_ratings, read_split, split_train_test, write_split, IdMap, LoadedRatings, RatingMatrix, SplitFile,
};
use serde_json::{json, Value};

use crate::config::{algo_params, Settings};
use crate::workspace::{header_line, write_atomic, Workspace, IDS_FILE, SPLIT_FILE, VOTES_FILE};
use crate::Target;

/// Sweep used by `certify` and `baseline` when no `e` list is given.
fn default_sweep() -> Vec<u64> {
    (0..=30).collect()
}

type Params = BTreeMap<String, Value>;

fn params<const K: usize>(pairs: [(&str, Value); K]) -> Params {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn workspace(settings: &Settings) -> Result<Workspace> {
    Workspace::create(settings.out()?)
}

fn load_data(settings: &Settings) -> Result<LoadedRatings> {
    let path = settings.data().context("no ratings file (use --data or 'data' in the config)")?;
    Ok(load_ratings(path, settings.format()?, settings.domain()?)?)
}

fn split_params(settings: &Settings, loaded: &LoadedRatings) -> Result<Params> {
    let m = &loaded.matrix;
    Ok(params([
        ("data", json!(settings.data().map(|p| p.display().to_string()))),
        ("format", json!(settings.format()?.name())),
        ("domain", json!(m.domain().to_string())),
        ("fraction", json!(settings.fraction())),
        ("split_seed", json!(settings.split_seed())),
        ("n_users", json!(m.n_users())),
        ("n_items", json!(m.n_items())),
        ("n_ratings", json!(m.n_ratings())),
    ]))
}

pub fn ingest(settings: &Settings) -> Result<()> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let loaded = load_data(settings)?;
    let (train, tests) = split_train_test(&loaded.matrix, settings.fraction(), settings.split_seed())?;
    write_atomic(&ws.path(SPLIT_FILE), |tmp| {
        Ok(write_split(tmp, &train, &tests, settings.split_seed(), settings.fraction())?)
    })?;
    write_atomic(&ws.path(IDS_FILE), |tmp| Ok(loaded.ids.write(tmp)?))?;
    let p = split_params(settings, &loaded)?;
    ws.record("ingest", p, &[SPLIT_FILE, IDS_FILE], start.elapsed().as_secs_f64())?;
    eprintln!(
        "{} users, {} items, {} training ratings",
        train.n_users(),
        train.n_items(),
        train.n_ratings()
    );
    Ok(())
}

/// Reads the split of the workspace, creating it from `--data` first if needed.
fn ensure_split(settings: &Settings, ws: &Workspace) -> Result<(SplitFile, IdMap)> {
    if !ws.path(SPLIT_FILE).exists() {
        if settings.data().is_none() {
            bail!("{} has no split; run `pore ingest` or pass --data", ws.dir.display());
        }
        ingest(settings)?;
    }
    let split = read_split(&ws.path(SPLIT_FILE))?;
    let layer = &settings.layer;
    if layer.fraction.is_some_and(|f| f != split.fraction) || layer.split_seed.is_some_and(|s| s != split.seed) {
        return Err(pore::Error::Mismatch(format!(
            "existing split uses fraction={} split_seed={}; remove it or drop the flags",
            split.fraction, split.seed
        ))
        .into());
    }
    let ids = IdMap::read(&ws.path(IDS_FILE))?;
    Ok((split, ids))
}

fn load_split(ws: &Workspace) -> Result<(SplitFile, IdMap)> {
    let path = ws.path(SPLIT_FILE);
    if !path.exists() {
        bail!("{} not found; run `pore ingest` and `pore train` first", path.display());
    }
    Ok((read_split(&path)?, IdMap::read(&ws.path(IDS_FILE))?))
}

fn train_params(settings: &Settings, algo: &Algo, votes: &VoteCounts) -> Params {
    let mut p = params([
        ("s", json!(votes.s())),
        ("T", json!(votes.t_total())),
        ("nprime", json!(votes.n_prime())),
        ("seed", json!(votes.master_seed())),
        ("chunk", json!(settings.chunk())),
    ]);
    for (k, v) in algo_params(algo) {
        p.insert(k, json!(v));
    }
    p
}

pub fn train(settings: &Settings, resume: bool) -> Result<()> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let (split, _) = ensure_split(settings, &ws)?;
    let train = &split.train;
    let algo = settings.algo()?;
    let (s, t_target, n_prime, seed) = (settings.s(), settings.t(), settings.n_prime(), settings.seed());
    if s == 0 || s > train.n_users() {
        bail!("s={s} must lie in 1..={}", train.n_users());
    }
    if t_target == 0 || n_prime == 0 {
        bail!("T and nprime must be at least 1");
    }
    let votes_path = ws.path(VOTES_FILE);
    let mut votes = if resume && votes_path.exists() {
        let v = VoteCounts::read(&votes_path)?;
        let same = v.n_users() == train.n_users()
            && v.n_items() == train.n_items()
            && v.s() == s
            && v.n_prime() == n_prime
            && v.master_seed() == seed
            && v.algo() == algo.tag();
        if !same {
            return Err(pore::Error::Mismatch(format!(
                "{} was trained with s={} nprime={} seed={} algo={}",
                votes_path.display(),
                v.s(),
                v.n_prime(),
                v.master_seed(),
                v.algo()
            ))
            .into());
        }
        if let Some(prev) = ws.recorded("train") {
            for (k, val) in algo_params(&algo) {
                if prev.get(&k).is_some_and(|p| p != &json!(val)) {
                    return Err(pore::Error::Mismatch(format!("votes were trained with a different {k}")).into());
                }
            }
        }
        if v.t_total() > t_target {
            bail!("{} already holds T={} > {t_target}", votes_path.display(), v.t_total());
        }
        eprintln!("resuming at T={}", v.t_total());
        v
    } else {
        VoteCounts::new(train.n_users(), train.n_items(), s, n_prime, seed, algo.tag())
    };
    let chunk = settings.chunk();
    while votes.t_total() < t_target {
        let next = ((votes.t_total() / chunk + 1) * chunk).min(t_target);
        votes.extend_to(train, &algo, next, |_| {})?;
        write_atomic(&votes_path, |tmp| Ok(votes.write(tmp)?))?;
        ws.record(
            "train",
            train_params(settings, &algo, &votes),
            &[VOTES_FILE],
            start.elapsed().as_secs_f64(),
        )?;
        eprintln!("trained {next}/{t_target} base models");
    }
    if !votes_path.exists() {
        write_atomic(&votes_path, |tmp| Ok(votes.write(tmp)?))?;
    }
    Ok(())
}

/// Reads the votes file and checks it against the split and any model
/// settings given explicitly.
fn load_votes(settings: &Settings, ws: &Workspace, train: &RatingMatrix) -> Result<VoteCounts> {
    let path = ws.path(VOTES_FILE);
    if !path.exists() {
        bail!("{} not found; run `pore train` first", path.display());
    }
    let v = VoteCounts::read(&path)?;
    let l = &settings.layer;
    let mut clashes = Vec::new();
    if v.n_users() != train.n_users() || v.n_items() != train.n_items() {
        clashes.push(format!(
            "votes are {}x{} but the split is {}x{}",
            v.n_users(),
            v.n_items(),
            train.n_users(),
            train.n_items()
        ));
    }
    if l.s.is_some_and(|s| s != v.s()) {
        clashes.push(format!("s={} in the votes file", v.s()));
    }
    if l.t.is_some_and(|t| t != v.t_total()) {
        clashes.push(format!("T={} in the votes file", v.t_total()));
    }
    if l.nprime.is_some_and(|n| n != v.n_prime()) {
        clashes.push(format!("nprime={} in the votes file", v.n_prime()));
    }
    if l.seed.is_some_and(|s| s != v.master_seed()) {
        clashes.push(format!("seed={} in the votes file", v.master_seed()));
    }
    if l.algo.as_deref().is_some_and(|a| a != v.algo()) {
        clashes.push(format!("algo={} in the votes file", v.algo()));
    }
    if !clashes.is_empty() {
        return Err(pore::Error::Mismatch(clashes.join("; ")).into());
    }
    Ok(v)
}

fn votes_params(v: &VoteCounts) -> Params {
    params([
        ("algo", json!(v.algo())),
        ("s", json!(v.s())),
        ("T", json!(v.t_total())),
        ("nprime", json!(v.n_prime())),
        ("seed", json!(v.master_seed())),
    ])
}

pub fn recommend(settings: &Settings, user: Option<&str>) -> Result<()> {
    let ws = workspace(settings)?;
    let (split, ids) = load_split(&ws)?;
    let votes = load_votes(settings, &ws, &split.train)?;
    let n_top = settings.n_top();
    if let Some(ext) = user {
        let u = ids.user_internal(ext).with_context(|| format!("unknown user '{ext}'"))?;
        for (rank, i) in ensemble_recommend(&votes, &split.train, u, n_top).into_iter().enumerate() {
            println!("{},{}", rank + 1, ids.item_external(i));
        }
        return Ok(());
    }
    let start = Instant::now();
    let mut p = votes_params(&votes);
    p.insert("n".into(), json!(n_top));
    let mut out = header_line("recommend", &p) + "\nuser,rank,item\n";
    for u in 0..split.train.n_users() as u32 {
        for (rank, i) in ensemble_recommend(&votes, &split.train, u, n_top).into_iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", ids.user_external(u), rank + 1, ids.item_external(i));
        }
    }
    ws.write("recommendations.csv", &out)?;
    ws.record("recommend", p, &["recommendations.csv"], start.elapsed().as_secs_f64())
}

fn cert_config(settings: &Settings, default_es: &[u64], bagging: bool) -> Result<CertifyConfig> {
    Ok(CertifyConfig {
        alpha: settings.alpha(),
        n_top: settings.n_top(),
        es: settings.es(default_es)?,
        mode: settings.mode()?,
        convention: settings.convention()?,
        bagging,
    })
}

fn cert_params(votes: &VoteCounts, cfg: &CertifyConfig, target: Target) -> Params {
    let mut p = votes_params(votes);
    p.insert("target".into(), json!(target.name()));
    p.insert("n".into(), json!(cfg.n_top));
    p.insert("alpha".into(), json!(cfg.alpha));
    p.insert("mode".into(), json!(cfg.mode.to_string()));
    p.insert("upper_convention".into(), json!(cfg.convention.to_string()));
    p
}

fn per_user_csv(header: &str, rows: &[CertResult], ids: &IdMap) -> String {
    let mut out = format!("{header}\nuser,e,r,mode,alpha\n");
    for c in rows {
        let _ = writeln!(out, "{},{},{},{},{}", ids.user_external(c.user), c.e, c.r, c.mode, c.alpha);
    }
    out
}

fn prf_json(p: &Prf) -> Value {
    json!({"precision": p.precision, "recall": p.recall, "f1": p.f1})
}

fn metrics_json(params: &Params, rows: &[MetricRow], skipped: usize) -> String {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut v = json!({
                "e": r.e,
                "cert_precision": r.certified.precision,
                "cert_recall": r.certified.recall,
                "cert_f1": r.certified.f1,
                "n_users": r.n_users,
            });
            if let Some(b) = &r.baseline {
                v["bagging_precision"] = json!(b.precision);
                v["bagging_recall"] = json!(b.recall);
                v["bagging_f1"] = json!(b.f1);
            }
            v
        })
        .collect();
    serde_json::to_string_pretty(&json!({"params": params, "rows": rows, "skipped_users": skipped})).unwrap() + "\n"
}

/// Per-user and aggregate certification results. Returns the aggregate rows.
pub fn certify(settings: &Settings, target: Target, bagging: bool) -> Result<Vec<MetricRow>> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let (split, ids) = load_split(&ws)?;
    let votes = load_votes(settings, &ws, &split.train)?;
    let cfg = cert_config(settings, &default_sweep(), bagging)?;
    if cfg.es.is_empty() {
        bail!("empty e list: nothing to certify");
    }
    run_certify(&ws, &split, &ids, &votes, &cfg, target, start)
}

fn run_certify(
    ws: &Workspace,
    split: &SplitFile,
    ids: &IdMap,
    votes: &VoteCounts,
    cfg: &CertifyConfig,
    target: Target,
    start: Instant,
) -> Result<Vec<MetricRow>> {
    let targets = match target {
        Target::TestItems => split.tests.sets().to_vec(),
        Target::CleanTopn => clean_topn_targets(votes, &split.train, cfg.n_top),
    };
    let report = compute_all_r(&split.train, votes, &targets, cfg)?;
    let sizes: Vec<usize> = targets.iter().map(Vec::len).collect();
    let rows = certified_rows(&report.pore, report.bagging.as_deref(), &sizes, cfg.n_top, &cfg.es)?;

    let p = cert_params(votes, cfg, target);
    let header = header_line("certify", &p);
    let name = target.name();
    let mut files = vec![format!("certify_{name}.csv"), format!("certify_{name}_metrics.csv")];
    ws.write(&files[0], &per_user_csv(&header, &report.pore, ids))?;
    ws.write(&files[1], &format!("{header}\n{}", metric_rows_csv(&rows)))?;
    files.push(format!("certify_{name}_metrics.json"));
    ws.write(&files[2], &metrics_json(&p, &rows, report.skipped.len()))?;
    if let Some(b) = &report.bagging {
        files.push(format!("baseline_{name}.csv"));
        ws.write(&files[3], &per_user_csv(&header_line("baseline", &p), b, ids))?;
    }
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    ws.record(&format!("certify.{name}"), p, &names, start.elapsed().as_secs_f64())?;
    for r in &rows {
        eprintln!("{}", r.csv_line());
    }
    Ok(rows)
}

pub fn baseline(settings: &Settings, target: Target) -> Result<()> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let (split, ids) = load_split(&ws)?;
    let votes = load_votes(settings, &ws, &split.train)?;
    let cfg = cert_config(settings, &default_sweep(), true)?;
    if cfg.es.is_empty() {
        bail!("empty e list: nothing to certify");
    }
    let targets = match target {
        Target::TestItems => split.tests.sets().to_vec(),
        Target::CleanTopn => clean_topn_targets(&votes, &split.train, cfg.n_top),
    };
    let report = compute_all_r(&split.train, &votes, &targets, &cfg)?;
    let bagging = report.bagging.expect("baseline requested");
    let sizes: Vec<usize> = targets.iter().map(Vec::len).collect();
    let rows = certified_rows(&bagging, None, &sizes, cfg.n_top, &cfg.es)?;
    let p = cert_params(&votes, &cfg, target);
    let header = header_line("baseline", &p);
    let name = target.name();
    let files = [format!("baseline_{name}.csv"), format!("baseline_{name}_metrics.csv")];
    ws.write(&files[0], &per_user_csv(&header, &bagging, &ids))?;
    ws.write(&files[1], &format!("{header}\n{}", metric_rows_csv(&rows)))?;
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    ws.record(&format!("baseline.{name}"), p, &names, start.elapsed().as_secs_f64())
}

fn standard_row(train: &RatingMatrix, split: &SplitFile, n_top: usize, rec: impl Fn(u32) -> Vec<u32>) -> Result<(Prf, usize)> {
    let rows = (0..train.n_users() as u32)
        .filter(|&u| !split.tests.get(u).is_empty())
        .map(|u| standard_metrics(&rec(u), split.tests.get(u), n_top))
        .collect::<pore::Result<Vec<_>>>()?;
    Ok((average_over_users(&rows)?, rows.len()))
}

pub fn evaluate(settings: &Settings, single: bool) -> Result<()> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let (split, ids) = load_split(&ws)?;
    let votes = load_votes(settings, &ws, &split.train)?;
    let n_top = settings.n_top();
    let train = &split.train;

    let mut results = vec![(
        format!("ensemble-{}", votes.algo()),
        standard_row(train, &split, n_top, |u| ensemble_recommend(&votes, train, u, n_top))?,
    )];
    if single {
        let algo = settings.algo()?;
        if algo.tag() != votes.algo() {
            bail!("--single uses algo {} but the votes were trained with {}", algo.tag(), votes.algo());
        }
        let all: Vec<u32> = (0..train.n_users() as u32).collect();
        let seed = pore::seed::derive(votes.master_seed(), u64::MAX);
        let model = BaseModel::train(Submatrix::new(train, &all), &algo, seed)?;
        results.push((
            algo.tag().to_string(),
            standard_row(train, &split, n_top, |u| model.recommend(u, n_top))?,
        ));
    }

    let mut p = votes_params(&votes);
    p.insert("n".into(), json!(n_top));
    let mut csv = header_line("evaluate", &p) + "\nmodel,precision,recall,f1,n_users\n";
    let mut json_rows = Vec::new();
    for (name, (prf, users)) in &results {
        let _ = writeln!(csv, "{name},{},{},{},{users}", prf.precision, prf.recall, prf.f1);
        let mut row = prf_json(prf);
        row["model"] = json!(name);
        row["n_users"] = json!(users);
        json_rows.push(row);
        eprintln!("{name}: P@{n_top}={:.6} R@{n_top}={:.6} F1@{n_top}={:.6}", prf.precision, prf.recall, prf.f1);
    }
    ws.write("evaluate.csv", &csv)?;
    let doc = serde_json::to_string_pretty(&json!({"params": p, "rows": json_rows}))? + "\n";
    ws.write("evaluate.json", &doc)?;
    ws.record("evaluate", p, &["evaluate.csv", "evaluate.json"], start.elapsed().as_secs_f64())?;

    let cfg = cert_config(settings, &[], false)?;
    if !cfg.es.is_empty() {
        run_certify(&ws, &split, &ids, &votes, &cfg, Target::TestItems, Instant::now())?;
    }
    Ok(())
}

pub fn oracle_probs(settings: &Settings) -> Result<()> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let loaded = load_data(settings)?;
    let m = &loaded.matrix;
    let algo = settings.algo()?;
    let s = settings.layer.s.context("oracle probs needs --s")?;
    let (n_prime, seed) = (settings.n_prime(), settings.seed());
    let probs = exact_item_probs(m, &algo, s, n_prime, seed)?;
    let mut p = params([
        ("s", json!(s)),
        ("nprime", json!(n_prime)),
        ("seed", json!(seed)),
        ("subsets", json!(probs.denom)),
    ]);
    p.extend(algo_params(&algo).into_iter().map(|(k, v)| (k, json!(v))));
    let mut out = header_line("oracle-probs", &p) + "\nuser,item,count,denom\n";
    for u in 0..m.n_users() as u32 {
        for i in 0..m.n_items() as u32 {
            let c = probs.count(u, i);
            if c > 0 {
                let _ = writeln!(out, "{},{},{c},{}", loaded.ids.user_external(u), loaded.ids.item_external(i), probs.denom);
            }
        }
    }
    ws.write("oracle_probs.csv", &out)?;
    ws.record("oracle.probs", p, &["oracle_probs.csv"], start.elapsed().as_secs_f64())
}

fn report_json(e: u64, attack: &str, r: &[usize], report: &SoundnessReport) -> Value {
    json!({
        "e": e,
        "attack": attack,
        "trials": report.trials,
        "checks": report.checks,
        "certified_users": r.iter().filter(|&&x| x > 0).count(),
        "violations": report.violations.iter().map(|v| json!({
            "trial": v.trial, "user": v.user, "r": v.r, "intersection": v.intersection
        })).collect::<Vec<_>>(),
    })
}

pub fn oracle_attack(settings: &Settings, attack: &str, trials: usize, exhaustive: bool, levels: &str) -> Result<()> {
    let start = Instant::now();
    let ws = workspace(settings)?;
    let loaded = load_data(settings)?;
    let m = &loaded.matrix;
    let algo = settings.algo()?;
    let s = settings.layer.s.context("oracle attack needs --s")?;
    let (n_prime, n_top, seed) = (settings.n_prime(), settings.n_top(), settings.seed());
    let es = settings.es(&[1])?;
    let attacks: Vec<Attack> = if attack == "all" {
        Attack::ALL.to_vec()
    } else {
        vec![attack.parse()?]
    };
    let levels: Vec<f64> = levels
        .split([',', ';'])
        .map(|x| x.trim().parse().with_context(|| format!("bad rating level '{x}'")))
        .collect::<Result<_>>()?;

    let probs = exact_item_probs(m, &algo, s, n_prime, seed)?;
    let targets: Vec<Vec<u32>> = (0..m.n_users() as u32)
        .map(|u| {
            let mut t = probs.top_n(m, u, n_top);
            t.sort_unstable();
            t
        })
        .collect();
    let mut reports = Vec::new();
    let mut violations = 0;
    for &e in &es {
        let r = certify_with_exact_probs(&probs, m, &targets, n_top, e)?;
        if exhaustive {
            let rep = exhaustive_adversary(m, &algo, s, n_prime, n_top, e as usize, &levels, &targets, &r)?;
            violations += rep.violations.len();
            reports.push(report_json(e, "exhaustive", &r, &rep));
        } else {
            for &a in &attacks {
                let rep = attack_soundness_check(m, &algo, s, n_prime, n_top, e as usize, a, trials, seed, &targets, &r)?;
                violations += rep.violations.len();
                reports.push(report_json(e, &a.to_string(), &r, &rep));
            }
        }
    }
    let mut p = params([
        ("s", json!(s)),
        ("nprime", json!(n_prime)),
        ("n", json!(n_top)),
        ("seed", json!(seed)),
        ("trials", json!(trials)),
        ("exhaustive", json!(exhaustive)),
    ]);
    p.extend(algo_params(&algo).into_iter().map(|(k, v)| (k, json!(v))));
    let doc = serde_json::to_string_pretty(&json!({"params": p, "reports": reports}))? + "\n";
    ws.write("oracle_attack.json", &doc)?;
    ws.record("oracle.attack", p, &["oracle_attack.json"], start.elapsed().as_secs_f64())?;
    if violations > 0 {
        bail!("{violations} certificate violation(s); see oracle_attack.json");
    }
    eprintln!("no violations");
    Ok(())
}
