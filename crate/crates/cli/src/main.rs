mod commands;
mod config;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{EList, Layer, Settings};

#[derive(Parser)]
#[command(name = "pore", version, about = "Ensemble recommenders with certified robustness to fake users")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory holding the split, votes, manifest and results.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to PORE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a config key, e.g. `--set ir.k=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Ratings file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// ml100k (tab separated), mldat (`::` separated) or csv.
    #[arg(long)]
    format: Option<String>,
    /// Rating domain, `1..5` for an interval or `1;2;3` for levels.
    #[arg(long)]
    domain: Option<String>,
    /// Share of each user's ratings kept for training.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Base algorithm: ir or bpr.
    #[arg(long)]
    algo: Option<String>,
    /// Users per sampled submatrix.
    #[arg(long)]
    s: Option<usize>,
    /// Number of base models.
    #[arg(long = "T")]
    t: Option<u64>,
    /// Length of each base model's list.
    #[arg(long)]
    nprime: Option<usize>,
    /// Master seed of the ensemble.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Held-out test items of each user.
    #[default]
    TestItems,
    /// The clean ensemble's own top-N.
    CleanTopn,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::TestItems => "test-items",
            Target::CleanTopn => "clean-topn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Bagging,
}

#[derive(Args, Clone, Default)]
struct CertArgs {
    /// Length of the ensemble's list.
    #[arg(long)]
    n: Option<usize>,
    /// Overall error budget shared by all users.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fake-user counts: `0..30`, `0,1,5` or `""` for none.
    #[arg(long)]
    e: Option<String>,
    /// exact or approx.
    #[arg(long)]
    mode: Option<String>,
    /// Same as `--mode exact`.
    #[arg(long, conflicts_with = "mode")]
    exact: bool,
    /// Upper bound shapes: same-shape or textbook.
    #[arg(long)]
    upper_convention: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a ratings file and write the train/test split.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train the ensemble and write its vote counts.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Members trained between two saves of the votes file.
        #[arg(long)]
        chunk: Option<u64>,
        /// Continue from an existing votes file instead of starting over.
        #[arg(long)]
        resume: bool,
    },
    /// Print or write the ensemble's top-N lists.
    Recommend {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: Option<usize>,
        /// External id of a single user; all users are written otherwise.
        #[arg(long)]
        user: Option<String>,
    },
    /// Certified intersection sizes over a sweep of fake-user counts.
    Certify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cert: CertArgs,
        #[arg(long, value_enum, default_value_t = Target::TestItems)]
        target: Target,
        /// Also run a baseline and add its columns.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Standard Precision/Recall/F1@N of the ensemble.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cert: CertArgs,
        /// Also evaluate one base model trained on the whole training matrix.
        #[arg(long)]
        single: bool,
    },
    /// Certified sizes of the bagging baseline alone.
    Baseline {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cert: CertArgs,
        #[arg(long, value_enum, default_value_t = Target::TestItems)]
        target: Target,
    },
    /// Exhaustive ground truth on tiny instances.
    Oracle {
        #[command(subcommand)]
        cmd: OracleCmd,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Exact item probabilities by enumerating every submatrix.
    Probs {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Replay poisoning attacks against exact-probability certificates.
    Attack {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: Option<usize>,
        /// Fake-user counts, as for `certify`.
        #[arg(long)]
        e: Option<String>,
        /// random-ratings, copy-popular, all-max-on-random-items or all.
        #[arg(long, default_value = "all")]
        attack: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Try every rating pattern instead of random attacks.
        #[arg(long)]
        exhaustive: bool,
        /// Scores the exhaustive adversary may use, e.g. `1,5`.
        #[arg(long, default_value = "1,5")]
        levels: String,
    },
}

impl DataArgs {
    fn apply(&self, l: &mut Layer) {
        l.data = self.data.clone();
        l.format = self.format.clone();
        l.domain = self.domain.clone();
        l.fraction = self.fraction;
        l.split_seed = self.split_seed;
    }
}

impl ModelArgs {
    fn apply(&self, l: &mut Layer) {
        l.algo = self.algo.clone();
        l.s = self.s;
        l.t = self.t;
        l.nprime = self.nprime;
        l.seed = self.seed;
    }
}

impl CertArgs {
    fn apply(&self, l: &mut Layer) {
        l.n = self.n;
        l.alpha = self.alpha;
        l.e = self.e.clone().map(EList::Text);
        l.mode = if self.exact { Some("exact".into()) } else { self.mode.clone() };
        l.upper_convention = self.upper_convention.clone();
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut flags = Layer {
        out: cli.out.clone(),
        threads: cli.threads,
        ..Layer::default()
    };
    match &cli.cmd {
        Cmd::Ingest { data } => data.apply(&mut flags),
        Cmd::Train { data, model, chunk, .. } => {
            data.apply(&mut flags);
            model.apply(&mut flags);
            flags.chunk = *chunk;
        }
        Cmd::Recommend { model, n, .. } => {
            model.apply(&mut flags);
            flags.n = *n;
        }
        Cmd::Certify { model, cert, .. } | Cmd::Evaluate { model, cert, .. } | Cmd::Baseline { model, cert, .. } => {
            model.apply(&mut flags);
            cert.apply(&mut flags);
        }
        Cmd::Oracle { cmd } => match cmd {
            OracleCmd::Probs { data, model } => {
                data.apply(&mut flags);
                model.apply(&mut flags);
            }
            OracleCmd::Attack { data, model, n, e, .. } => {
                data.apply(&mut flags);
                model.apply(&mut flags);
                flags.n = *n;
                flags.e = e.clone().map(EList::Text);
            }
        },
    }
    let file = match &cli.config {
        Some(p) => Layer::from_file(p)?,
        None => Layer::default(),
    };
    let pairs = Layer::from_pairs(&cli.set)?;
    Ok(Settings::new(Layer::default().overlay(&file).overlay(&pairs).overlay(&flags)))
}

fn run(cli: Cli) -> Result<()> {
    let settings = settings(&cli)?;
    if let Some(threads) = settings.threads()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.cmd {
        Cmd::Ingest { .. } => commands::ingest(&settings),
        Cmd::Train { resume, .. } => commands::train(&settings, resume),
        Cmd::Recommend { user, .. } => commands::recommend(&settings, user.as_deref()),
        Cmd::Certify { target, baseline, .. } => {
            commands::certify(&settings, target, baseline.is_some()).map(|_| ())
        }
        Cmd::Evaluate { single, .. } => commands::evaluate(&settings, single),
        Cmd::Baseline { target, .. } => commands::baseline(&settings, target),
        Cmd::Oracle { cmd } => match cmd {
            OracleCmd::Probs { .. } => commands::oracle_probs(&settings),
            OracleCmd::Attack {
                attack,
                trials,
                exhaustive,
                levels,
                ..
            } => commands::oracle_attack(&settings, &attack, trials, exhaustive, &levels),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
