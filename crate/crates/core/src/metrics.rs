//! Precision, Recall and F1 at `N`, standard and certified.

use std::fmt::Write as _;

use crate::certify::CertResult;
use crate::error::{Error, Result};

/// Precision, recall and F1 of one user or averaged over users.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Worst-case metrics from a certified intersection size `r`:
/// `(r/N, r/|E_u|, 2r/(|E_u|+N))`.
pub fn certified_metrics(r: usize, n_top: usize, test_size: usize) -> Result<Prf> {
    if test_size == 0 {
        return Err(Error::invalid("empty test set"));
    }
    if n_top == 0 || r > n_top.min(test_size) {
        return Err(Error::invalid(format!("r={r} exceeds min(N={n_top}, |E_u|={test_size})")));
    }
    Ok(from_hits(r, n_top, test_size))
}

fn from_hits(hits: usize, n_top: usize, test_size: usize) -> Prf {
    let h = hits as f64;
    Prf {
        precision: h / n_top as f64,
        recall: h / test_size as f64,
        f1: 2.0 * h / (test_size + n_top) as f64,
    }
}

/// Metrics of a recommended list against the held-out items `E_u` (sorted).
pub fn standard_metrics(recommended: &[u32], test: &[u32], n_top: usize) -> Result<Prf> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if n_top == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let hits = recommended.iter().filter(|i| test.binary_search(i).is_ok()).count();
    Ok(from_hits(hits, n_top, test.len()))
}

/// Unweighted mean over users.
pub fn average_over_users(rows: &[Prf]) -> Result<Prf> {
    if rows.is_empty() {
        return Err(Error::NoEligibleUsers("no user with a nonempty test set".into()));
    }
    let k = rows.len() as f64;
    let sum = rows.iter().fold(Prf::default(), |a, r| Prf {
        precision: a.precision + r.precision,
        recall: a.recall + r.recall,
        f1: a.f1 + r.f1,
    });
    Ok(Prf {
        precision: sum.precision / k,
        recall: sum.recall / k,
        f1: sum.f1 / k,
    })
}

/// Averaged certified metrics at one `e`, with optional baseline columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub e: u64,
    pub certified: Prf,
    pub n_users: usize,
    pub baseline: Option<Prf>,
}

pub const METRIC_CSV_HEADER: &str = "e,cert_precision,cert_recall,cert_f1,n_users";
pub const METRIC_CSV_HEADER_BASELINE: &str =
    "e,cert_precision,cert_recall,cert_f1,n_users,bagging_precision,bagging_recall,bagging_f1";

impl MetricRow {
    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{}",
            self.e, self.certified.precision, self.certified.recall, self.certified.f1, self.n_users
        );
        if let Some(b) = &self.baseline {
            let _ = write!(s, ",{},{},{}", b.precision, b.recall, b.f1);
        }
        s
    }
}

/// Aggregate CSV body (header plus one line per row).
pub fn metric_rows_csv(rows: &[MetricRow]) -> String {
    let with_baseline = rows.iter().any(|r| r.baseline.is_some());
    let mut out = String::new();
    out.push_str(if with_baseline {
        METRIC_CSV_HEADER_BASELINE
    } else {
        METRIC_CSV_HEADER
    });
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Averages certified metrics per `e` (in the order of `es`). `sizes[u]` is
/// the size of user `u`'s target set; users absent from `results` are left out.
pub fn certified_rows(
    results: &[CertResult],
    baseline: Option<&[CertResult]>,
    sizes: &[usize],
    n_top: usize,
    es: &[u64],
) -> Result<Vec<MetricRow>> {
    let average = |rows: &[CertResult], e: u64| -> Result<(Prf, usize)> {
        let per_user = rows
            .iter()
            .filter(|c| c.e == e)
            .map(|c| certified_metrics(c.r, n_top, sizes[c.user as usize]))
            .collect::<Result<Vec<_>>>()?;
        Ok((average_over_users(&per_user)?, per_user.len()))
    };
    es.iter()
        .map(|&e| {
            let (certified, n_users) = average(results, e)?;
            let baseline = baseline.map(|b| average(b, e).map(|x| x.0)).transpose()?;
            Ok(MetricRow {
                e,
                certified,
                n_users,
                baseline,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certified_examples() {
        let p = certified_metrics(10, 10, 10).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = certified_metrics(0, 10, 4).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = certified_metrics(3, 10, 20).unwrap();
        assert!((p.precision - 0.3).abs() < 1e-15);
        assert!((p.recall - 0.15).abs() < 1e-15);
        assert!((p.f1 - 0.2).abs() < 1e-15);
        assert!(certified_metrics(1, 10, 0).is_err());
        assert!(certified_metrics(5, 10, 4).is_err());
    }

    #[test]
    fn f1_is_the_harmonic_mean() {
        for (r, n, t) in [(3, 10, 20), (1, 10, 3), (7, 10, 7)] {
            let p = certified_metrics(r, n, t).unwrap();
            let h = 2.0 * p.precision * p.recall / (p.precision + p.recall);
            assert!((h - p.f1).abs() < 1e-15);
        }
    }

    #[test]
    fn standard_examples() {
        let p = standard_metrics(&[1, 2], &[1, 2, 3], 2).unwrap();
        assert_eq!(p.precision, 1.0);
        let p = standard_metrics(&[4, 5], &[1, 2, 3], 2).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn averaging() {
        let a = Prf {
            precision: 0.2,
            recall: 0.5,
            f1: 0.1,
        };
        assert_eq!(average_over_users(&[a]).unwrap(), a);
        let b = Prf { precision: 0.4, ..a };
        assert!((average_over_users(&[a, b]).unwrap().precision - 0.3).abs() < 1e-15);
        assert!(matches!(average_over_users(&[]), Err(Error::NoEligibleUsers(_))));
    }

    #[test]
    fn csv_layout() {
        let row = MetricRow {
            e: 2,
            certified: Prf {
                precision: 0.5,
                recall: 0.25,
                f1: 0.125,
            },
            n_users: 3,
            baseline: None,
        };
        assert_eq!(metric_rows_csv(&[row]), "e,cert_precision,cert_recall,cert_f1,n_users\n2,0.5,0.25,0.125,3\n");
    }
}
