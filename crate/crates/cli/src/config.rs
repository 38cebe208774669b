//! Run settings layered as defaults < TOML config file < `--set` pairs < flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pore::base_rec::{Algo, BprParams, IrParams};
use pore::bounds::UpperConvention;
use pore::certify::Mode;
use pore::ratings::{InputFormat, RatingDomain};
use serde::Deserialize;

/// Default ensemble size. Larger ensembles give tighter bounds and certify more.
pub const DEFAULT_T: u64 = 10_000;

/// `e` list as written in a config file: `"0..30"`, `"0,1,5"` or `[0, 1, 5]`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum EList {
    Text(String),
    List(Vec<u64>),
}

impl EList {
    pub fn resolve(&self) -> Result<Vec<u64>> {
        match self {
            EList::List(v) => Ok(v.clone()),
            EList::Text(s) => parse_e_list(s),
        }
    }
}

/// Parses `"a..b"` (inclusive), `"a,b,c"`, a mix of both, or `""` (empty).
pub fn parse_e_list(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let (lo, hi): (u64, u64) = (
                lo.trim().parse().with_context(|| format!("bad e range '{part}'"))?,
                hi.trim().parse().with_context(|| format!("bad e range '{part}'"))?,
            );
            if lo > hi {
                bail!("empty e range '{part}'");
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().with_context(|| format!("bad e value '{part}'"))?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrSection {
    pub k: Option<usize>,
    pub similarity: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BprSection {
    pub d: Option<usize>,
    pub epochs: Option<usize>,
    pub learn_rate: Option<f64>,
    pub reg: Option<f64>,
    pub neg_samples: Option<usize>,
    pub init_std: Option<f64>,
}

/// Every setting, each optional so layers can be merged.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub data: Option<PathBuf>,
    pub format: Option<String>,
    pub domain: Option<String>,
    pub fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub algo: Option<String>,
    pub s: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<u64>,
    pub nprime: Option<usize>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub e: Option<EList>,
    pub mode: Option<String>,
    pub upper_convention: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub chunk: Option<u64>,
    #[serde(default)]
    pub ir: IrSection,
    #[serde(default)]
    pub bpr: BprSection,
}

macro_rules! take {
    ($dst:expr, $src:expr, $($f:ident).+) => {
        if $src.$($f).+.is_some() {
            $dst.$($f).+ = $src.$($f).+.clone();
        }
    };
}

impl Layer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Parses `key=value` pairs with the config-file key names, e.g. `ir.k=50`.
    pub fn from_pairs(pairs: &[String]) -> Result<Self> {
        let mut doc = String::new();
        let mut tables: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .with_context(|| format!("--set expects key=value, got '{pair}'"))?;
            let (key, value) = (key.trim(), value.trim());
            let value = toml_value(value);
            match key.split_once('.') {
                Some((table, field)) => tables.entry(table).or_default().push(format!("{field} = {value}")),
                None => doc.push_str(&format!("{key} = {value}\n")),
            }
        }
        for (table, lines) in tables {
            doc.push_str(&format!("[{table}]\n{}\n", lines.join("\n")));
        }
        toml::from_str(&doc).with_context(|| format!("bad --set override(s): {}", pairs.join(" ")))
    }

    /// Overwrites fields of `self` with the ones set in `top`.
    pub fn overlay(mut self, top: &Layer) -> Self {
        take!(self, top, data);
        take!(self, top, format);
        take!(self, top, domain);
        take!(self, top, fraction);
        take!(self, top, split_seed);
        take!(self, top, algo);
        take!(self, top, s);
        take!(self, top, t);
        take!(self, top, nprime);
        take!(self, top, n);
        take!(self, top, alpha);
        take!(self, top, e);
        take!(self, top, mode);
        take!(self, top, upper_convention);
        take!(self, top, out);
        take!(self, top, threads);
        take!(self, top, seed);
        take!(self, top, chunk);
        take!(self, top, ir.k);
        take!(self, top, ir.similarity);
        take!(self, top, bpr.d);
        take!(self, top, bpr.epochs);
        take!(self, top, bpr.learn_rate);
        take!(self, top, bpr.reg);
        take!(self, top, bpr.neg_samples);
        take!(self, top, bpr.init_std);
        self
    }
}

/// Bare words become TOML strings; numbers, booleans, arrays and quoted
/// strings pass through.
fn toml_value(v: &str) -> String {
    let literal = v.parse::<f64>().is_ok()
        || v == "true"
        || v == "false"
        || v.starts_with('[')
        || v.starts_with('"')
        || v.starts_with('\'');
    if literal {
        v.to_string()
    } else {
        format!("{v:?}")
    }
}

/// Fully merged settings. Model fields stay optional so that commands which
/// consume an existing votes file can tell explicit values from defaults.
#[derive(Clone, Debug)]
pub struct Settings {
    pub layer: Layer,
}

impl Settings {
    pub fn new(layer: Layer) -> Self {
        Settings { layer }
    }

    pub fn out(&self) -> Result<PathBuf> {
        self.layer.out.clone().context("no output directory (use --out or 'out' in the config)")
    }

    pub fn data(&self) -> Option<&Path> {
        self.layer.data.as_deref()
    }

    pub fn format(&self) -> Result<InputFormat> {
        Ok(self.layer.format.as_deref().unwrap_or("ml100k").parse()?)
    }

    pub fn domain(&self) -> Result<Option<RatingDomain>> {
        self.layer.domain.as_deref().map(|d| d.parse().map_err(Into::into)).transpose()
    }

    pub fn fraction(&self) -> f64 {
        self.layer.fraction.unwrap_or(0.75)
    }

    pub fn split_seed(&self) -> u64 {
        self.layer.split_seed.unwrap_or(0)
    }

    pub fn algo(&self) -> Result<Algo> {
        let tag = self.layer.algo.as_deref().unwrap_or("ir");
        let algo = match tag {
            "ir" => {
                let mut p = IrParams::default();
                if let Some(k) = self.layer.ir.k {
                    p.k = k;
                }
                if let Some(sim) = &self.layer.ir.similarity {
                    p.similarity = sim.parse()?;
                }
                Algo::Ir(p)
            }
            "bpr" => {
                let b = &self.layer.bpr;
                let mut p = BprParams::default();
                p.d = b.d.unwrap_or(p.d);
                p.epochs = b.epochs.unwrap_or(p.epochs);
                p.learn_rate = b.learn_rate.unwrap_or(p.learn_rate);
                p.reg = b.reg.unwrap_or(p.reg);
                p.neg_samples = b.neg_samples.unwrap_or(p.neg_samples);
                p.init_std = b.init_std.unwrap_or(p.init_std);
                Algo::Bpr(p)
            }
            other => bail!("unknown algorithm '{other}' (expected ir or bpr)"),
        };
        Ok(algo)
    }

    pub fn s(&self) -> usize {
        self.layer.s.unwrap_or(200)
    }

    pub fn t(&self) -> u64 {
        self.layer.t.unwrap_or(DEFAULT_T)
    }

    pub fn n_prime(&self) -> usize {
        self.layer.nprime.unwrap_or(1)
    }

    pub fn n_top(&self) -> usize {
        self.layer.n.unwrap_or(10)
    }

    pub fn alpha(&self) -> f64 {
        self.layer.alpha.unwrap_or(0.001)
    }

    /// The `e` sweep, or `default` when none was given.
    pub fn es(&self, default: &[u64]) -> Result<Vec<u64>> {
        match &self.layer.e {
            Some(e) => e.resolve(),
            None => Ok(default.to_vec()),
        }
    }

    pub fn mode(&self) -> Result<Mode> {
        Ok(self.layer.mode.as_deref().unwrap_or("approx").parse()?)
    }

    pub fn convention(&self) -> Result<UpperConvention> {
        Ok(self.layer.upper_convention.as_deref().unwrap_or("same-shape").parse()?)
    }

    pub fn seed(&self) -> u64 {
        self.layer.seed.unwrap_or(0)
    }

    pub fn chunk(&self) -> u64 {
        self.layer.chunk.unwrap_or(1000).max(1)
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        if let Some(t) = self.layer.threads {
            return Ok(Some(t));
        }
        match std::env::var("PORE_THREADS") {
            Ok(v) if !v.trim().is_empty() => {
                Ok(Some(v.trim().parse().with_context(|| format!("PORE_THREADS='{v}' is not a count"))?))
            }
            _ => Ok(None),
        }
    }
}

/// Hyperparameters as sorted `key -> value` strings, recorded in manifests.
pub fn algo_params(algo: &Algo) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("algo".into(), algo.tag().into());
    match algo {
        Algo::Ir(p) => {
            m.insert("ir.k".into(), p.k.to_string());
            m.insert("ir.similarity".into(), p.similarity.to_string());
        }
        Algo::Bpr(p) => {
            m.insert("bpr.d".into(), p.d.to_string());
            m.insert("bpr.epochs".into(), p.epochs.to_string());
            m.insert("bpr.learn_rate".into(), p.learn_rate.to_string());
            m.insert("bpr.reg".into(), p.reg.to_string());
            m.insert("bpr.neg_samples".into(), p.neg_samples.to_string());
            m.insert("bpr.init_std".into(), p.init_std.to_string());
        }
    }
    m
}
