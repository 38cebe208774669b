//! Acceptance checks. Prints one `criterion k: PASS|FAIL|SKIP (...)` line per
//! criterion and exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use pore::base_rec::{bpr_triple_grad, bpr_triple_loss, Algo, BaseModel, Submatrix};
use pore::bounds::{beta_quantile, estimate_bounds, make_context, ProbBounds, UpperConvention};
use pore::certify::{compute_all_r, CertifyConfig, Mode, Prepared};
use pore::ensemble::{build_vote_counts, ensemble_recommend, tally, VoteCounts};
use pore::metrics::{average_over_users, certified_rows, standard_metrics, MetricRow, Prf};
use pore::oracle::{
    attack_soundness_check, bounds_cover, certify_with_exact_probs, exact_item_probs, exhaustive_adversary,
    exhaustive_members, Attack, ExactProbs,
};
use pore::ratings::{load_ratings, split_train_test, InputFormat, RatingMatrix, TestSets};
use rand::Rng;
use statrs::function::beta::beta_reg;

use common::{ml100k_path, random_matrix, rng};

const SPLIT_SEED: u64 = 0;
const ENSEMBLE_SEED: u64 = 0;
const N_TOP: usize = 10;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

struct Ml100k {
    train: RatingMatrix,
    tests: TestSets,
}

fn load_ml100k() -> Option<Ml100k> {
    let path = ml100k_path()?;
    let loaded = load_ratings(&path, InputFormat::MovieLens100k, None).expect("MovieLens-100k parses");
    let (train, tests) = split_train_test(&loaded.matrix, 0.75, SPLIT_SEED).expect("split");
    Some(Ml100k { train, tests })
}

fn ensemble_metrics(data: &Ml100k, votes: &VoteCounts) -> Prf {
    let rows: Vec<Prf> = (0..data.train.n_users() as u32)
        .filter(|&u| !data.tests.get(u).is_empty())
        .map(|u| {
            let rec = ensemble_recommend(votes, &data.train, u, N_TOP);
            standard_metrics(&rec, data.tests.get(u), N_TOP).unwrap()
        })
        .collect();
    average_over_users(&rows).unwrap()
}

fn within(p: &Prf, target: [f64; 3], tol: f64) -> bool {
    (p.precision - target[0]).abs() <= tol && (p.recall - target[1]).abs() <= tol && (p.f1 - target[2]).abs() <= tol
}

fn fmt_prf(p: &Prf) -> String {
    format!("P={:.6} R={:.6} F1={:.6}", p.precision, p.recall, p.f1)
}

fn criterion_1(data: Option<&Ml100k>) -> Outcome {
    let Some(data) = data else {
        return Outcome::Skip("MovieLens-100k not found".into());
    };
    let algo = Algo::from_tag("ir").unwrap();
    let votes = build_vote_counts(&data.train, &algo, 2000, 300, 1, ENSEMBLE_SEED).unwrap();
    let p = ensemble_metrics(data, &votes);
    let target = [0.332556, 0.178293, 0.195624];
    verdict(
        within(&p, target, 0.02),
        format!("ensemble IR s=300 T=2000: {} vs {target:?} +-0.02", fmt_prf(&p)),
    )
}

fn criterion_2(data: Option<&Ml100k>) -> Outcome {
    let Some(data) = data else {
        return Outcome::Skip("MovieLens-100k not found".into());
    };
    let all: Vec<u32> = (0..data.train.n_users() as u32).collect();
    let model = BaseModel::train(Submatrix::new(&data.train, &all), &Algo::from_tag("ir").unwrap(), 0).unwrap();
    let rows: Vec<Prf> = all
        .iter()
        .filter(|&&u| !data.tests.get(u).is_empty())
        .map(|&u| standard_metrics(&model.recommend(u, N_TOP), data.tests.get(u), N_TOP).unwrap())
        .collect();
    let p = average_over_users(&rows).unwrap();
    verdict(
        (p.precision - 0.330753).abs() <= 0.02,
        format!("single IR: {} vs P=0.330753 +-0.02", fmt_prf(&p)),
    )
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut instances = 0;
    for k in 0..24u64 {
        let n = r.random_range(3..=10);
        let s = r.random_range(1..=4.min(n));
        let m = r.random_range(2..=8);
        let n_prime = r.random_range(1..=3);
        let algo = if k % 4 == 3 {
            Algo::from_tag("bpr").unwrap()
        } else {
            Algo::from_tag("ir").unwrap()
        };
        let matrix = random_matrix(n, m, 0.4, &[1.0, 2.0, 3.0, 4.0, 5.0], &mut r);
        let members = exhaustive_members(n, s, k).unwrap();
        let counts = tally(&matrix, &algo, n_prime, &members).unwrap();
        let exact = exact_item_probs(&matrix, &algo, s, n_prime, k).unwrap();
        let same = exact.denom == members.len() as u64
            && counts.iter().zip(&exact.counts).all(|(&a, &b)| a as u64 == b);
        if !same {
            return Outcome::Fail(format!("instance {k} (n={n} s={s} m={m}): tally differs from enumeration"));
        }
        instances += 1;
    }
    let mut mismatches = 0;
    for _ in 0..200 {
        let k = r.random_range(1..=6);
        let c = r.random_range(0..=8);
        let lower: Vec<f64> = (0..k).map(|_| r.random::<f64>().powi(2)).collect();
        let upper: Vec<f64> = (0..c).map(|_| r.random::<f64>().powi(2) * 0.5).collect();
        let bounds = ProbBounds {
            user: 0,
            targets: (0..k as u32).collect(),
            outside: (k as u32..(k + c) as u32).collect(),
            n_items: k + c,
            lower,
            upper,
            alpha_u: 0.01,
        };
        let (n_top, n_prime, e) = (r.random_range(1..=6), r.random_range(1..=3), r.random_range(0..4));
        let ctx = make_context(12, e, 5, false).unwrap();
        let p = Prepared::new(&bounds, n_top, n_prime);
        let scan = (1..=p.max_r()).rev().find(|&x| p.verify(x, &ctx.sigma, &ctx)).unwrap_or(0);
        mismatches += (scan != p.search(&ctx.sigma, &ctx)) as usize;
    }
    verdict(
        mismatches == 0,
        format!("{instances} tiny instances exact; binary search vs scan mismatches {mismatches}/200"),
    )
}

fn clean_targets(p: &ExactProbs, m: &RatingMatrix, n_top: usize) -> Vec<Vec<u32>> {
    (0..m.n_users() as u32)
        .map(|u| {
            let mut t = p.top_n(m, u, n_top);
            t.sort_unstable();
            t
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let algo = Algo::from_tag("ir").unwrap();
    let mut violations = 0;
    let mut certified = 0;
    let mut checks = 0;

    let (n_top, n_prime) = (2, 1);
    for seed in 0..3u64 {
        let matrix = random_matrix(5, 4, 0.5, &[1.0, 5.0], &mut rng(400 + seed));
        let p = exact_item_probs(&matrix, &algo, 2, n_prime, seed).unwrap();
        let targets = clean_targets(&p, &matrix, n_top);
        let r = certify_with_exact_probs(&p, &matrix, &targets, n_top, 1).unwrap();
        let report = exhaustive_adversary(&matrix, &algo, 2, n_prime, n_top, 1, &[1.0, 5.0], &targets, &r).unwrap();
        violations += report.violations.len();
        checks += report.checks;
        certified += r.iter().filter(|&&x| x > 0).count();
        for (u, &x) in r.iter().enumerate() {
            if report.min_intersection[u] < x {
                violations += 1;
            }
        }
    }

    let mut trials = 0;
    for k in 0..100usize {
        let matrix = random_matrix(6, 5, 0.5, &[1.0, 2.0, 3.0, 4.0, 5.0], &mut rng(500 + k as u64 / 10));
        let attack = Attack::ALL[k % 3];
        let p = exact_item_probs(&matrix, &algo, 3, n_prime, 0).unwrap();
        let targets = clean_targets(&p, &matrix, n_top);
        let r = certify_with_exact_probs(&p, &matrix, &targets, n_top, 1).unwrap();
        if k % 10 == 0 {
            certified += r.iter().filter(|&&x| x > 0).count();
        }
        let report =
            attack_soundness_check(&matrix, &algo, 3, n_prime, n_top, 1, attack, 1, k as u64, &targets, &r).unwrap();
        trials += report.trials;
        checks += report.checks;
        violations += report.violations.len();
    }
    verdict(
        violations == 0 && certified > 0,
        format!(
            "exhaustive 2-level adversary + {trials} random attacks: {violations} violations over {checks} checks, {certified} users with r>0"
        ),
    )
}

fn certified_curve(
    data: &Ml100k,
    votes: &VoteCounts,
    es: &[u64],
    bagging: bool,
) -> Vec<MetricRow> {
    let cfg = CertifyConfig {
        alpha: 0.001,
        n_top: N_TOP,
        es: es.to_vec(),
        mode: Mode::Approx,
        convention: UpperConvention::SameShape,
        bagging,
    };
    let report = compute_all_r(&data.train, votes, data.tests.sets(), &cfg).unwrap();
    let sizes: Vec<usize> = data.tests.iter().map(<[u32]>::len).collect();
    certified_rows(&report.pore, report.bagging.as_deref(), &sizes, N_TOP, es).unwrap()
}

fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] >= w[1])
}

fn criteria_5_6(data: Option<&Ml100k>) -> (Outcome, Outcome) {
    let Some(data) = data else {
        let skip = || Outcome::Skip("MovieLens-100k not found".into());
        return (skip(), skip());
    };
    let algo = Algo::from_tag("ir").unwrap();
    let es: Vec<u64> = (0..=30).collect();
    let mut votes = build_vote_counts(&data.train, &algo, 500, 200, 1, ENSEMBLE_SEED).unwrap();
    let mut curves = Vec::new();
    for t in [500u64, 1000, 2000] {
        votes.extend_to(&data.train, &algo, t, |_| {}).unwrap();
        curves.push(certified_curve(data, &votes, &es, t == 2000));
    }
    let metric = |rows: &[MetricRow], f: fn(&Prf) -> f64| rows.iter().map(|r| f(&r.certified)).collect::<Vec<_>>();
    let getters: [fn(&Prf) -> f64; 3] = [|p| p.precision, |p| p.recall, |p| p.f1];

    let mut in_e = true;
    let mut in_t = true;
    for g in getters {
        for c in &curves {
            in_e &= nonincreasing(&metric(c, g));
        }
        for e in 0..es.len() {
            let by_t: Vec<f64> = curves.iter().map(|c| g(&c[e].certified)).collect();
            in_t &= by_t.windows(2).all(|w| w[0] <= w[1]);
        }
    }
    let last = &curves[2];
    let describe = |e: usize| {
        let p = curves.iter().map(|c| format!("{:.4}", c[e].certified.precision)).collect::<Vec<_>>();
        format!("P@10 at e={e} for T=500/1000/2000: {}", p.join("/"))
    };
    let zero_at = last.iter().position(|r| r.certified.precision == 0.0);
    let c5 = verdict(
        in_e && in_t,
        format!(
            "nonincreasing in e: {in_e}, nondecreasing in T: {in_t}; {}; {}; T=2000 reaches 0 at e={:?}",
            describe(0),
            describe(5),
            zero_at.map(|e| es[e])
        ),
    );

    let mut dominates = true;
    let mut strict_at = None;
    for row in last {
        let b = row.baseline.expect("baseline columns");
        let c = row.certified;
        dominates &= c.precision >= b.precision && c.recall >= b.recall && c.f1 >= b.f1;
        if row.e >= 1 && strict_at.is_none() && (c.precision > b.precision || c.recall > b.recall || c.f1 > b.f1) {
            strict_at = Some(row.e);
        }
    }
    let b0 = last[0].baseline.unwrap();
    let c6 = verdict(
        dominates && strict_at.is_some(),
        format!(
            "PORE >= bagging at all e: {dominates}; first strict e>=1: {strict_at:?}; e=0 PORE P={:.4} bagging P={:.4}",
            last[0].certified.precision, b0.precision
        ),
    );
    (c5, c6)
}

fn criterion_7() -> Outcome {
    let (n, m, s, n_top, t, alpha, runs) = (6usize, 6usize, 3usize, 2usize, 200u64, 0.2, 500usize);
    let algo = Algo::from_tag("ir").unwrap();
    let matrix = random_matrix(n, m, 0.4, &[1.0, 2.0, 3.0, 4.0, 5.0], &mut rng(700));
    let exact = exact_item_probs(&matrix, &algo, s, 1, 0).unwrap();
    let targets = clean_targets(&exact, &matrix, n_top);
    let count_failures = |convention| {
        (0..runs as u64)
            .filter(|&run| {
                let votes = build_vote_counts(&matrix, &algo, t, s, 1, 10_000 + run).unwrap();
                (0..n as u32).filter(|&u| !targets[u as usize].is_empty()).any(|u| {
                    let b = estimate_bounds(&votes, &matrix, u, &targets[u as usize], alpha / n as f64, convention)
                        .unwrap();
                    !bounds_cover(&b, &exact)
                })
            })
            .count()
    };
    let same_shape = count_failures(UpperConvention::SameShape);
    let textbook = count_failures(UpperConvention::Textbook);
    let limit = alpha + 3.0 * (alpha * (1.0 - alpha) / runs as f64).sqrt();
    let frac = same_shape as f64 / runs as f64;
    verdict(
        frac <= limit,
        format!(
            "runs with a bound missing its exact probability: {same_shape}/{runs} = {frac:.3} (limit {limit:.3}); textbook upper bounds: {textbook}/{runs}"
        ),
    )
}

/// Plain bisection on the statrs regularized incomplete beta.
fn reference_quantile(level: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if beta_reg(a, b, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn criterion_8() -> Outcome {
    // 10 x 10 log-spaced shapes in [0.5, 2000] times 10 levels
    let shapes: Vec<f64> = (0..10).map(|k| 0.5 * 4000f64.powf(k as f64 / 9.0)).collect();
    let levels = [1e-12, 1e-9, 1e-6, 1e-3, 0.025, 0.5, 0.975, 0.999, 1.0 - 1e-6, 1.0 - 1e-9];
    let mut worst_gap: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut cases = 0;
    for &a in &shapes {
        for &b in &shapes {
            for &level in &levels {
                let x = beta_quantile(level, a, b).unwrap();
                worst_gap = worst_gap.max((x - reference_quantile(level, a, b)).abs());
                worst_residual = worst_residual.max((beta_reg(a, b, x) - level).abs());
                cases += 1;
            }
        }
    }

    let mut worst_sigma: f64 = 0.0;
    for e in 0..=50 {
        let ctx = make_context(943, e, 200, true).unwrap();
        let exact = ctx.exact_sigma_f64().unwrap();
        if exact > 0.0 {
            worst_sigma = worst_sigma.max((ctx.sigma - exact).abs() / exact);
        } else if ctx.sigma != 0.0 {
            worst_sigma = f64::INFINITY;
        }
    }

    let mut r = rng(8);
    let (d, reg, h) = (16, 0.01, 1e-5);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..200 {
        let mut v: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let (gw, ghi, ghj) = bpr_triple_grad(&v[0], &v[1], &v[2], reg);
        let analytic = [gw, ghi, ghj];
        for which in 0..3 {
            for k in 0..d {
                let orig = v[which][k];
                v[which][k] = orig + h;
                let up = bpr_triple_loss(&v[0], &v[1], &v[2], reg);
                v[which][k] = orig - h;
                let down = bpr_triple_loss(&v[0], &v[1], &v[2], reg);
                v[which][k] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[which][k];
                worst_grad = worst_grad.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8));
            }
        }
    }
    verdict(
        worst_gap <= 1e-10 && worst_sigma <= 1e-12 && worst_grad <= 1e-5,
        format!(
            "beta quantile gap to reference bisection {worst_gap:.2e} over {cases} cases (max cdf residual {worst_residual:.2e}); sigma rel err {worst_sigma:.2e}; BPR gradient rel err {worst_grad:.2e} over 200 triples"
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let data = load_ml100k();
    let mut failed = false;
    let mut report = |k: &str, outcome: Outcome, began: Instant| {
        let secs = began.elapsed().as_secs_f64();
        let line = match outcome {
            Outcome::Pass(d) => format!("criterion {k}: PASS ({d}) [{secs:.1}s]"),
            Outcome::Fail(d) => {
                failed = true;
                format!("criterion {k}: FAIL ({d}) [{secs:.1}s]")
            }
            Outcome::Skip(d) => format!("criterion {k}: SKIP ({d})"),
        };
        println!("{line}");
    };

    let t = Instant::now();
    report("1", criterion_1(data.as_ref()), t);
    let t = Instant::now();
    report("2", criterion_2(data.as_ref()), t);
    let t = Instant::now();
    report("3", criterion_3(), t);
    let t = Instant::now();
    report("4", criterion_4(), t);
    let t = Instant::now();
    let (c5, c6) = criteria_5_6(data.as_ref());
    report("5", c5, t);
    report("6", c6, t);
    let t = Instant::now();
    report("7", criterion_7(), t);
    let t = Instant::now();
    report("8", criterion_8(), t);

    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
