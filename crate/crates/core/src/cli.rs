//! Command-line front end: preprocess, train, eval, sweep, report, plus
//! dataset converters and a neighbor query.
//!
//! Settings resolve as command-line flag, then `--config` file, then the
//! built-in default. Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use crate::corpus::{encode_iter, Normalizer, SentenceReader, SentenceStream, Stopwords, TokenCounts, Vocabulary};
use crate::embedding::{CompareMethod, DualEmbedding};
use crate::error::Error;
use crate::eval::{self, AnalogyOptions, AnalogyQuestion, CueResponseSet, ResultRecord, SimilarityPair, Task, TaskScore};
use crate::glove::{accumulate_cooc, train_glove, GloveConfig};
use crate::manifest::{sha256_file, sha256_hex, RunManifest};
use crate::report::{self, Grid, Trainer};
use crate::sgns::{train_sgns, SgnsConfig, SgnsMethod};
use crate::TrainOutcome;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const STREAM_FILE: &str = "stream.txt";
pub const RESULTS_FILE: &str = "results.jsonl";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::InvalidConfig(m)) => CliError::Usage(m.clone()),
            _ => CliError::Runtime(e),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Runtime(other.into()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "dualspace", version, about = "Dual-space word embeddings: train, evaluate, report")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tokenize a corpus, build the vocabulary and write the encoded stream.
    Preprocess(PreprocessArgs),
    /// Train one embedding on a preprocessed corpus.
    Train(TrainArgs),
    /// Score an embedding on one dataset and append the results.
    Eval(EvalArgs),
    /// Preprocess, train, evaluate and report a whole grid.
    Sweep(SweepArgs),
    /// Consolidate a results file into report.md and report.csv.
    Report(ReportArgs),
    /// Convert a native dataset release into the canonical TSV format.
    Convert(ConvertArgs),
    /// Print the nearest neighbors of a word.
    Neighbors(NeighborsArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus files or directories (every file inside, sorted).
    #[arg(long, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Stopword list, one token per line. Defaults to the bundled English list.
    #[arg(long, conflicts_with = "no_stopwords")]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    no_stopwords: bool,
    /// none, lowercase or lowercase+suffix-strip.
    #[arg(long)]
    normalizer: Option<Normalizer>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// sgns-cbow, sgns-sg or glove.
    #[arg(long)]
    method: Option<Trainer>,
    /// Directory written by `preprocess`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    noise_power: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    distance_weighting: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 is deterministic.
    #[arg(long, env = "DUALSPACE_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    task: Task,
    /// Compare methods, comma-separated, or `all`.
    #[arg(long, default_value = "all")]
    compare: String,
    /// Canonical TSV file. Analogy also accepts the Google format or a BATS directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Name recorded in the results; defaults to the file stem.
    #[arg(long)]
    dataset_name: Option<String>,
    #[arg(long, default_value = "lowercase")]
    normalizer: Normalizer,
    /// Association list length (default 10) or analogy answer list length (default 3).
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long, default_value_t = 0.10)]
    min_strength: f64,
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    /// Use raw cosines in the analogy score instead of (cos + 1) / 2.
    #[arg(long)]
    no_shift: bool,
    /// Seed for joining BATS pairs into questions.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    results: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Grid definition (key = value lines).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "DUALSPACE_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[command(subcommand)]
    format: ConvertFormat,
}

#[derive(Subcommand, Debug)]
enum ConvertFormat {
    /// SimLex-999 style: header row, word1 and word2 first, named score column.
    Simlex {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "SimLex999")]
        score_column: String,
    },
    /// Headerless `w1 w2 score` rows (WordSim, RG-65, SimVerb and similar).
    Pairs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// SWOW strength table with cue, response and strength columns.
    Swow {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "R123.Strength")]
        strength_column: String,
    },
    /// EAT stimulus/response XML; strength is the response count over all responses.
    Eat {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Google analogy file; section headers become the category column.
    Google {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// BATS release directory, joined into complete questions.
    Bats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct NeighborsArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, default_value = "WW")]
    compare: CompareMethod,
    #[arg(long)]
    word: String,
    #[arg(short, long, default_value_t = 10)]
    n: usize,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::Convert(a) => cmd_convert(a.format),
        Command::Neighbors(a) => cmd_neighbors(a),
    }
}

/// `key = value` settings from a config file. Relative paths resolve
/// against the file's directory.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Settings {
    pub fn parse(text: &str, ctx: &str, base: &Path, allowed: &[&str]) -> CliResult<Settings> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("{ctx}:{}: expected `key = value`", i + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return usage(format!("{ctx}:{}: unknown key `{k}`", i + 1));
            }
            if values.insert(k.to_owned(), v.to_owned()).is_some() {
                return usage(format!("{ctx}:{}: duplicate key `{k}`", i + 1));
            }
        }
        Ok(Settings {
            values,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: Option<&Path>, allowed: &[&str]) -> CliResult<Settings> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Settings::parse(&text, &path.display().to_string(), &base, allowed)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The first of `keys` that is set, parsed.
    fn get<T: FromStr>(&self, keys: &[&str]) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        for key in keys {
            if let Some(v) = self.raw(key) {
                return v
                    .parse()
                    .map(Some)
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")));
            }
        }
        Ok(None)
    }

    fn pick<T: FromStr>(&self, cli: Option<T>, keys: &[&str]) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.get(keys),
        }
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .map(|v| v.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }

    fn parsed_list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: Display,
    {
        self.list(key)
            .iter()
            .map(|s| s.parse().map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))))
            .collect()
    }

    fn path(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }
}

fn parse_bool(s: &str) -> CliResult<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => usage(format!("expected a boolean, found `{s}`")),
    }
}

// ---------------------------------------------------------------- preprocess

/// Corpus preparation settings.
#[derive(Clone, Debug)]
pub struct PreprocessPlan {
    pub corpus: Vec<PathBuf>,
    /// None = built-in English list.
    pub stopwords: Option<PathBuf>,
    pub no_stopwords: bool,
    pub normalizer: Normalizer,
    pub min_count: u64,
}

const PREPROCESS_KEYS: &[&str] = &["corpus", "stopwords", "normalizer", "min_count"];

fn expand_inputs(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

impl PreprocessPlan {
    fn manifest(&self, files: &[PathBuf]) -> anyhow::Result<RunManifest> {
        let mut corpus_hashes = String::new();
        for f in files {
            corpus_hashes.push_str(&sha256_file(f)?);
            corpus_hashes.push('\n');
        }
        let stop = match (&self.stopwords, self.no_stopwords) {
            (_, true) => "none".to_owned(),
            (Some(p), false) => sha256_file(p)?,
            (None, false) => "builtin-english".to_owned(),
        };
        let config = BTreeMap::from([
            ("normalizer".to_owned(), self.normalizer.to_string()),
            ("min_count".to_owned(), self.min_count.to_string()),
        ]);
        Ok(RunManifest::new("preprocess", config, 0)
            .with_input("corpus", sha256_hex(corpus_hashes.as_bytes()))
            .with_input("stopwords", stop))
    }

    fn stopword_set(&self) -> anyhow::Result<Stopwords> {
        Ok(match (&self.stopwords, self.no_stopwords) {
            (_, true) => Stopwords::empty(),
            (Some(p), false) => Stopwords::load(p)?,
            (None, false) => Stopwords::english(),
        })
    }

    /// Writes `vocab.txt` and `stream.txt` into `out`. Returns false when the
    /// outputs were already up to date.
    pub fn run(&self, out: &Path) -> CliResult<bool> {
        if self.corpus.is_empty() {
            return usage("no corpus given");
        }
        if self.min_count < 1 {
            return usage("min_count must be >= 1");
        }
        let files = expand_inputs(&self.corpus)?;
        if files.is_empty() {
            return usage("corpus paths contain no files");
        }
        let manifest = self.manifest(&files)?;
        let vocab_path = out.join(VOCAB_FILE);
        let stream_path = out.join(STREAM_FILE);
        let up_to_date = [&vocab_path, &stream_path].iter().all(|p| {
            p.exists() && matches!(RunManifest::read_for(p), Ok(Some(m)) if m.same_run(&manifest))
        });
        if up_to_date {
            log::info!("{} is up to date", out.display());
            return Ok(false);
        }
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let stopwords = self.stopword_set()?;
        let sentences = |path: &Path| -> anyhow::Result<SentenceReader<BufReader<File>>> {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Ok(SentenceReader::new(BufReader::new(f), stopwords.clone(), self.normalizer))
        };
        let mut counts = TokenCounts::default();
        for f in &files {
            for s in sentences(f)? {
                counts.add_sentence(&s.with_context(|| format!("reading {}", f.display()))?);
            }
        }
        let vocab = Vocabulary::from_counts(counts, self.min_count)?;
        let mut stream = SentenceStream::default();
        for f in &files {
            let tokens = sentences(f)?.collect::<std::io::Result<Vec<_>>>().with_context(|| format!("reading {}", f.display()))?;
            stream.sentences.extend(encode_iter(tokens, &vocab));
        }
        vocab.save(&vocab_path)?;
        stream.save(&stream_path)?;
        manifest.clone().finish(&vocab_path)?;
        manifest.finish(&stream_path)?;
        log::info!(
            "vocabulary {} types, stream {} sentences / {} tokens",
            vocab.len(),
            stream.len(),
            stream.num_tokens()
        );
        Ok(true)
    }
}

fn preprocess_plan(s: &Settings, corpus: Vec<PathBuf>, stopwords: Option<PathBuf>, no_stop: bool, normalizer: Option<Normalizer>, min_count: Option<u64>) -> CliResult<PreprocessPlan> {
    let corpus = if corpus.is_empty() {
        s.list("corpus").iter().map(|p| s.path(p)).collect()
    } else {
        corpus
    };
    let (stopwords, no_stopwords) = match (stopwords, no_stop, s.raw("stopwords")) {
        (Some(p), _, _) => (Some(p), false),
        (None, true, _) => (None, true),
        (None, false, Some("none")) => (None, true),
        (None, false, Some("default")) | (None, false, None) => (None, false),
        (None, false, Some(p)) => (Some(s.path(p)), false),
    };
    Ok(PreprocessPlan {
        corpus,
        stopwords,
        no_stopwords,
        normalizer: s.pick(normalizer, &["normalizer"])?.unwrap_or_default(),
        min_count: s.pick(min_count, &["min_count"])?.unwrap_or(10),
    })
}

fn cmd_preprocess(a: PreprocessArgs) -> CliResult<()> {
    let s = Settings::load(a.config.as_deref(), PREPROCESS_KEYS)?;
    let plan = preprocess_plan(&s, a.corpus, a.stopwords, a.no_stopwords, a.normalizer, a.min_count)?;
    plan.run(&a.out)?;
    println!("wrote {} and {}", a.out.join(VOCAB_FILE).display(), a.out.join(STREAM_FILE).display());
    Ok(())
}

// --------------------------------------------------------------------- train

/// Fully resolved trainer configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Sgns(SgnsConfig),
    Glove(GloveConfig),
}

const TRAIN_KEYS: &[&str] = &[
    "method",
    "data",
    "dim",
    "window",
    "epochs",
    "learning_rate",
    "negatives",
    "noise_power",
    "x_max",
    "alpha",
    "distance_weighting",
    "seed",
    "threads",
    "sgns.epochs",
    "sgns.learning_rate",
    "sgns.negatives",
    "sgns.noise_power",
    "glove.epochs",
    "glove.learning_rate",
    "glove.x_max",
    "glove.alpha",
    "glove.distance_weighting",
];

impl ModelConfig {
    pub fn trainer(&self) -> Trainer {
        match self {
            ModelConfig::Sgns(c) if c.method == SgnsMethod::Cbow => Trainer::SgnsCbow,
            ModelConfig::Sgns(_) => Trainer::SgnsSg,
            ModelConfig::Glove(_) => Trainer::Glove,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelConfig::Sgns(c) => c.dim,
            ModelConfig::Glove(c) => c.dim,
        }
    }

    pub fn window(&self) -> usize {
        match self {
            ModelConfig::Sgns(c) => c.window,
            ModelConfig::Glove(c) => c.window,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelConfig::Sgns(c) => c.seed,
            ModelConfig::Glove(c) => c.seed,
        }
    }

    /// Every setting that affects the trained weights.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_owned(), v);
        };
        put("trainer", self.trainer().to_string());
        match self {
            ModelConfig::Sgns(c) => {
                put("dim", c.dim.to_string());
                put("window", c.window.to_string());
                put("negatives", c.negatives.to_string());
                put("epochs", c.epochs.to_string());
                put("learning_rate", c.learning_rate.to_string());
                put("noise_power", c.noise_power.to_string());
                put("threads", c.threads.to_string());
            }
            ModelConfig::Glove(c) => {
                put("dim", c.dim.to_string());
                put("window", c.window.to_string());
                put("epochs", c.epochs.to_string());
                put("learning_rate", c.learning_rate.to_string());
                put("x_max", c.x_max.to_string());
                put("alpha", c.alpha.to_string());
                put("distance_weighting", c.distance_weighting.to_string());
                put("threads", c.threads.to_string());
            }
        }
        m
    }

    pub fn train(&self, vocab: &Vocabulary, stream: &SentenceStream) -> crate::Result<TrainOutcome> {
        match self {
            ModelConfig::Sgns(c) => train_sgns(stream, vocab, c),
            ModelConfig::Glove(c) => {
                let cooc = accumulate_cooc(stream, vocab.len(), c.window, c.distance_weighting)?;
                train_glove(&cooc, vocab, c)
            }
        }
    }
}

/// Resolves a trainer configuration. Keys are looked up as
/// `<family>.<key>` first (family `sgns` or `glove`), then `<key>`.
fn model_config(trainer: Trainer, a: &TrainArgs, s: &Settings) -> CliResult<ModelConfig> {
    let family = if trainer == Trainer::Glove { "glove" } else { "sgns" };
    let scoped = |k: &str| format!("{family}.{k}");
    macro_rules! pick {
        ($cli:expr, $key:literal) => {
            s.pick($cli, &[scoped($key).as_str(), $key])?
        };
    }
    let distance_weighting = match a.distance_weighting {
        Some(v) => Some(v),
        None => match s.raw(&scoped("distance_weighting")).or(s.raw("distance_weighting")) {
            Some(v) => Some(parse_bool(v)?),
            None => None,
        },
    };
    let config = match trainer {
        Trainer::Glove => {
            let d = GloveConfig::default();
            ModelConfig::Glove(GloveConfig {
                dim: pick!(a.dim, "dim").unwrap_or(d.dim),
                window: pick!(a.window, "window").unwrap_or(d.window),
                epochs: pick!(a.epochs, "epochs").unwrap_or(d.epochs),
                learning_rate: pick!(a.learning_rate, "learning_rate").unwrap_or(d.learning_rate),
                x_max: pick!(a.x_max, "x_max").unwrap_or(d.x_max),
                alpha: pick!(a.alpha, "alpha").unwrap_or(d.alpha),
                distance_weighting: distance_weighting.unwrap_or(d.distance_weighting),
                seed: pick!(a.seed, "seed").unwrap_or(d.seed),
                threads: pick!(a.threads, "threads").unwrap_or(d.threads),
            })
        }
        _ => {
            let d = SgnsConfig::default();
            ModelConfig::Sgns(SgnsConfig {
                method: if trainer == Trainer::SgnsCbow { SgnsMethod::Cbow } else { SgnsMethod::SkipGram },
                dim: pick!(a.dim, "dim").unwrap_or(d.dim),
                window: pick!(a.window, "window").unwrap_or(d.window),
                negatives: pick!(a.negatives, "negatives").unwrap_or(d.negatives),
                epochs: pick!(a.epochs, "epochs").unwrap_or(d.epochs),
                learning_rate: pick!(a.learning_rate, "learning_rate").unwrap_or(d.learning_rate),
                noise_power: pick!(a.noise_power, "noise_power").unwrap_or(d.noise_power),
                seed: pick!(a.seed, "seed").unwrap_or(d.seed),
                threads: pick!(a.threads, "threads").unwrap_or(d.threads),
            })
        }
    };
    match &config {
        ModelConfig::Sgns(c) => c.validate()?,
        ModelConfig::Glove(c) => c.validate()?,
    }
    Ok(config)
}

fn load_data(dir: &Path) -> anyhow::Result<(Vocabulary, SentenceStream, String, String)> {
    let vocab_path = dir.join(VOCAB_FILE);
    let stream_path = dir.join(STREAM_FILE);
    let vocab = Vocabulary::load(&vocab_path)?;
    let stream = SentenceStream::load(&stream_path, vocab.len())?;
    Ok((vocab, stream, sha256_file(&vocab_path)?, sha256_file(&stream_path)?))
}

/// Trains unless `out` already holds the same run. Returns true if trained.
fn train_to(config: &ModelConfig, data: &Path, out: &Path) -> CliResult<bool> {
    let (vocab, stream, vocab_hash, stream_hash) = load_data(data)?;
    let manifest = RunManifest::new("train", config.to_map(), config.seed())
        .with_input("vocab", vocab_hash)
        .with_input("stream", stream_hash);
    if out.exists() && matches!(RunManifest::read_for(out), Ok(Some(m)) if m.same_run(&manifest)) {
        log::info!("{} is up to date", out.display());
        return Ok(false);
    }
    let outcome = config
        .train(&vocab, &stream)
        .with_context(|| format!("training {}", out.display()))?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        log::info!("{} epoch {}: loss {loss:.6}", config.trainer(), epoch + 1);
    }
    let mut emb = outcome.embedding;
    let meta = emb.metadata_mut();
    meta.insert("config_hash".into(), manifest.config_hash());
    meta.insert("corpus".into(), manifest.inputs["stream"].clone());
    meta.insert("threads".into(), config.to_map()["threads"].clone());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    emb.save(out)?;
    manifest.finish(out)?;
    Ok(true)
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let s = Settings::load(a.config.as_deref(), TRAIN_KEYS)?;
    let Some(trainer) = s.pick(a.method, &["method"])? else {
        return usage("--method is required (sgns-cbow, sgns-sg or glove)");
    };
    let data = match (&a.data, s.raw("data")) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => s.path(d),
        (None, None) => return usage("--data is required"),
    };
    let config = model_config(trainer, &a, &s)?;
    if train_to(&config, &data, &a.out)? {
        println!("wrote {}", a.out.display());
    } else {
        println!("{} is up to date", a.out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------- eval

/// A parsed evaluation dataset.
#[derive(Clone, Debug)]
pub enum Dataset {
    Similarity(Vec<SimilarityPair>),
    Association(Vec<CueResponseSet>),
    Analogy(Vec<AnalogyQuestion>),
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub normalizer: Normalizer,
    pub min_strength: f64,
    pub association_n: usize,
    pub analogy: AnalogyOptions,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            normalizer: Normalizer::Lowercase,
            min_strength: 0.10,
            association_n: 10,
            analogy: AnalogyOptions::default(),
            seed: 1,
        }
    }
}

pub fn load_dataset(task: Task, path: &Path, opts: &EvalOptions) -> crate::Result<Dataset> {
    let mode = opts.normalizer;
    Ok(match task {
        Task::Similarity => Dataset::Similarity(eval::parse_similarity(path, mode)?),
        Task::Association => Dataset::Association(eval::parse_association(path, opts.min_strength, mode)?),
        Task::Analogy if path.is_dir() => {
            Dataset::Analogy(eval::bats_join(&eval::parse_bats_dir(path, mode)?, opts.seed))
        }
        Task::Analogy => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let ctx = path.display().to_string();
            if text.contains('\t') {
                Dataset::Analogy(eval::parse_analogy_tsv_str(&text, &ctx, mode)?)
            } else {
                Dataset::Analogy(eval::parse_analogy_google_str(&text, &ctx, mode)?)
            }
        }
    })
}

pub fn score(emb: &DualEmbedding, cm: CompareMethod, data: &Dataset, opts: &EvalOptions) -> crate::Result<TaskScore> {
    match data {
        Dataset::Similarity(p) => eval::eval_similarity(emb, cm, p),
        Dataset::Association(s) => eval::eval_association(emb, cm, s, opts.association_n),
        Dataset::Analogy(q) => eval::eval_analogy(emb, cm, q, &opts.analogy),
    }
}

fn record_for(emb: &DualEmbedding, emb_path: &Path, cm: CompareMethod, dataset: &str, s: TaskScore) -> anyhow::Result<ResultRecord> {
    let meta = emb.metadata();
    let field = |k: &str| {
        meta.get(k)
            .cloned()
            .with_context(|| format!("{} has no `{k}` metadata", emb_path.display()))
    };
    let embedding = emb_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let config_hash = match meta.get("config_hash") {
        Some(h) => h.clone(),
        None => sha256_file(emb_path)?[..16].to_owned(),
    };
    Ok(ResultRecord {
        trainer: field("trainer")?,
        window: field("window")?.parse()?,
        dim: field("dim")?.parse()?,
        compare: cm,
        task: s.task,
        dataset: dataset.to_owned(),
        value: s.value,
        aux: s.aux,
        embedding,
        config_hash,
    })
}

fn parse_compare_list(s: &str) -> CliResult<Vec<CompareMethod>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(CompareMethod::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let cm: CompareMethod = part.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
        if !out.contains(&cm) {
            out.push(cm);
        }
    }
    if out.is_empty() {
        return usage("no compare methods given");
    }
    Ok(out)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let compare = parse_compare_list(&a.compare)?;
    let mut opts = EvalOptions {
        normalizer: a.normalizer,
        min_strength: a.min_strength,
        seed: a.seed,
        ..EvalOptions::default()
    };
    opts.analogy.epsilon = a.epsilon;
    opts.analogy.shift = !a.no_shift;
    match (a.task, a.top_n) {
        (Task::Association, Some(n)) => opts.association_n = n,
        (Task::Analogy, Some(n)) => opts.analogy.top_n = n,
        (Task::Similarity, Some(_)) => return usage("--top-n does not apply to similarity"),
        _ => {}
    }
    let emb = DualEmbedding::load(&a.embedding)?;
    let data = load_dataset(a.task, &a.dataset, &opts)?;
    let name = a.dataset_name.unwrap_or_else(|| dataset_name(&a.dataset));
    for cm in compare {
        let s = score(&emb, cm, &data, &opts).with_context(|| format!("{} {cm} on {name}", a.task))?;
        let rec = record_for(&emb, &a.embedding, cm, &name, s)?;
        eval::append_result(&a.results, &rec)?;
        println!("{}", serde_json::to_string(&rec).map_err(anyhow::Error::from)?);
    }
    Ok(())
}

// -------------------------------------------------------------------- report

fn write_report(results: &Path, out: &Path) -> CliResult<Grid> {
    let records = eval::read_results(results)?;
    if records.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("{} holds no results", results.display())));
    }
    let grid = Grid::from_results(&records)?;
    report::write_reports(&grid, out)?;
    let manifest = RunManifest::new("report", BTreeMap::new(), 0).with_input("results", sha256_file(results)?);
    manifest.clone().finish(&out.join("report.md"))?;
    manifest.finish(&out.join("report.csv"))?;
    Ok(grid)
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    write_report(&a.results, &a.out)?;
    println!("wrote {} and {}", a.out.join("report.md").display(), a.out.join("report.csv").display());
    Ok(())
}

// --------------------------------------------------------------------- sweep

const SWEEP_KEYS: &[&str] = &[
    "corpus",
    "stopwords",
    "normalizer",
    "min_count",
    "trainers",
    "windows",
    "dims",
    "compare",
    "seed",
    "threads",
    "epochs",
    "learning_rate",
    "negatives",
    "noise_power",
    "x_max",
    "alpha",
    "distance_weighting",
    "sgns.epochs",
    "sgns.learning_rate",
    "sgns.negatives",
    "sgns.noise_power",
    "glove.epochs",
    "glove.learning_rate",
    "glove.x_max",
    "glove.alpha",
    "glove.distance_weighting",
    "similarity",
    "association",
    "analogy",
    "association_n",
    "analogy_top_n",
    "min_strength",
];

/// Outcome counts of a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub trained: usize,
    pub reused: usize,
    pub scores: usize,
    pub scores_reused: usize,
    pub failed: usize,
}

pub fn model_file_name(trainer: Trainer, window: usize, dim: usize) -> String {
    format!("{trainer}-w{window}-d{dim}.dualemb")
}

fn run_sweep(config: &Path, out: &Path, seed: Option<u64>, threads: Option<usize>) -> CliResult<SweepSummary> {
    let s = Settings::load(Some(config), SWEEP_KEYS)?;
    let trainers: Vec<Trainer> = s.parsed_list("trainers")?;
    let windows: Vec<usize> = s.parsed_list("windows")?;
    let dims: Vec<usize> = s.parsed_list("dims")?;
    let compare = match s.raw("compare") {
        Some(c) => parse_compare_list(c)?,
        None => CompareMethod::ALL.to_vec(),
    };
    if trainers.is_empty() || windows.is_empty() || dims.is_empty() {
        return usage("empty grid: trainers, windows and dims must each list at least one value");
    }
    let mut datasets: Vec<(Task, PathBuf)> = Vec::new();
    for task in Task::ALL {
        datasets.extend(s.list(task.as_str()).iter().map(|p| (task, s.path(p))));
    }
    if datasets.is_empty() {
        return usage("grid lists no evaluation datasets");
    }

    let plan = preprocess_plan(&s, Vec::new(), None, false, None, None)?;
    let data_dir = out.join("data");
    plan.run(&data_dir)?;

    let mut opts = EvalOptions {
        normalizer: plan.normalizer,
        min_strength: s.get(&["min_strength"])?.unwrap_or(0.10),
        association_n: s.get(&["association_n"])?.unwrap_or(10),
        seed: seed.or(s.get(&["seed"])?).unwrap_or(1),
        ..EvalOptions::default()
    };
    opts.analogy.top_n = s.get(&["analogy_top_n"])?.unwrap_or(3);
    let loaded: Vec<(Task, String, Dataset)> = datasets
        .iter()
        .map(|(task, path)| Ok((*task, dataset_name(path), load_dataset(*task, path, &opts)?)))
        .collect::<crate::Result<_>>()?;

    let results_path = out.join(RESULTS_FILE);
    let mut done: BTreeSet<(String, String, CompareMethod, Task, String)> = BTreeSet::new();
    if results_path.exists() {
        for r in eval::read_results(&results_path)? {
            done.insert((r.embedding, r.config_hash, r.compare, r.task, r.dataset));
        }
    }

    let mut summary = SweepSummary::default();
    let models_dir = out.join("models");
    for &trainer in &trainers {
        for &window in &windows {
            for &dim in &dims {
                let args = TrainArgs {
                    dim: Some(dim),
                    window: Some(window),
                    seed,
                    threads,
                    ..TrainArgs::default()
                };
                let config = model_config(trainer, &args, &s)?;
                let path = models_dir.join(model_file_name(trainer, window, dim));
                if train_to(&config, &data_dir, &path)? {
                    summary.trained += 1;
                } else {
                    summary.reused += 1;
                }
                let emb = DualEmbedding::load(&path)?;
                let hash = emb.metadata().get("config_hash").cloned().unwrap_or_default();
                let file = model_file_name(trainer, window, dim);
                for &cm in &compare {
                    for (task, name, data) in &loaded {
                        if done.contains(&(file.clone(), hash.clone(), cm, *task, name.clone())) {
                            summary.scores_reused += 1;
                            continue;
                        }
                        match score(&emb, cm, data, &opts) {
                            Ok(sc) => {
                                let rec = record_for(&emb, &path, cm, name, sc)?;
                                eval::append_result(&results_path, &rec)?;
                                summary.scores += 1;
                            }
                            Err(e) => {
                                log::warn!("{file} {cm} {task} on {name}: {e}");
                                summary.failed += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    write_report(&results_path, out)?;
    Ok(summary)
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let summary = run_sweep(&a.config, &a.out, a.seed, a.threads)?;
    println!(
        "models: {} trained, {} up to date; scores: {} new, {} already present, {} failed",
        summary.trained, summary.reused, summary.scores, summary.scores_reused, summary.failed
    );
    println!("report: {}", a.out.join("report.md").display());
    Ok(())
}

// ------------------------------------------------------------------- convert

fn read_table(path: &Path) -> anyhow::Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().next().unwrap_or_default();
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let rows = reader.records().collect::<Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> anyhow::Result<usize> {
    header
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .with_context(|| format!("{} has no `{name}` column (columns: {})", path.display(), header.join(", ")))
}

fn tsv_field(s: &str) -> anyhow::Result<&str> {
    let s = s.trim();
    anyhow::ensure!(!s.contains('\t') && !s.contains('\n'), "field `{s}` contains a tab or newline");
    Ok(s)
}

fn convert_simlex(input: &Path, score_column: &str) -> anyhow::Result<String> {
    let (header, rows) = read_table(input)?;
    let score = column(&header, score_column, input)?;
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let get = |k: usize| r.get(k).with_context(|| format!("{}: row {} is short", input.display(), i + 2));
        out.push_str(&format!("{}\t{}\t{}\n", tsv_field(get(0)?)?, tsv_field(get(1)?)?, tsv_field(get(score)?)?));
    }
    Ok(out)
}

fn convert_pairs(input: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split(|c: char| c == '\t' || c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if f.is_empty() || line.starts_with('#') {
            continue;
        }
        anyhow::ensure!(f.len() >= 3, "{}:{}: expected `w1 w2 score`", input.display(), i + 1);
        if f[2].parse::<f64>().is_err() {
            anyhow::ensure!(i == 0, "{}:{}: bad score `{}`", input.display(), i + 1, f[2]);
            continue; // header row
        }
        out.push_str(&format!("{}\t{}\t{}\n", f[0], f[1], f[2]));
    }
    Ok(out)
}

fn convert_swow(input: &Path, strength_column: &str) -> anyhow::Result<String> {
    let (header, rows) = read_table(input)?;
    let (cue, response, strength) = (
        column(&header, "cue", input)?,
        column(&header, "response", input)?,
        column(&header, strength_column, input)?,
    );
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let get = |k: usize| r.get(k).with_context(|| format!("{}: row {} is short", input.display(), i + 2));
        let resp = get(response)?.trim();
        if resp.is_empty() || resp.eq_ignore_ascii_case("NA") {
            continue;
        }
        out.push_str(&format!("{}\t{}\t{}\n", tsv_field(get(cue)?)?, tsv_field(resp)?, tsv_field(get(strength)?)?));
    }
    Ok(out)
}

fn xml_attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("{name}=\"");
    let start = tag.find(&key)? + key.len();
    let end = tag[start..].find('"')? + start;
    Some(&tag[start..end])
}

fn convert_eat(input: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut out = String::new();
    let mut current: Option<(String, f64)> = None;
    for tag in text.split('<').skip(1) {
        let tag = tag.split('>').next().unwrap_or_default();
        if tag.starts_with("stimulus") {
            let word = xml_attr(tag, "word").context("stimulus without word")?;
            let all: f64 = xml_attr(tag, "all").context("stimulus without `all` count")?.parse()?;
            current = Some((word.to_owned(), all));
        } else if tag.starts_with("response") {
            let (cue, all) = current.as_ref().context("response outside a stimulus")?;
            let word = xml_attr(tag, "word").context("response without word")?;
            let n: f64 = xml_attr(tag, "n").context("response without `n` count")?.parse()?;
            if *all > 0.0 {
                out.push_str(&format!("{}\t{}\t{}\n", tsv_field(cue)?, tsv_field(word)?, n / all));
            }
        }
    }
    Ok(out)
}

fn analogy_tsv(questions: &[AnalogyQuestion]) -> String {
    let mut out = String::new();
    for q in questions {
        out.push_str(&format!("{}\t{}\t{}\t{}", q.a, q.a_star, q.b, q.b_star));
        if let Some(c) = &q.category {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
    }
    out
}

fn cmd_convert(format: ConvertFormat) -> CliResult<()> {
    let (kind, input, output, text) = match format {
        ConvertFormat::Simlex { input, output, score_column } => {
            let t = convert_simlex(&input, &score_column)?;
            ("simlex", input, output, t)
        }
        ConvertFormat::Pairs { input, output } => {
            let t = convert_pairs(&input)?;
            ("pairs", input, output, t)
        }
        ConvertFormat::Swow { input, output, strength_column } => {
            let t = convert_swow(&input, &strength_column)?;
            ("swow", input, output, t)
        }
        ConvertFormat::Eat { input, output } => {
            let t = convert_eat(&input)?;
            ("eat", input, output, t)
        }
        ConvertFormat::Google { input, output } => {
            let t = analogy_tsv(&eval::parse_analogy_google(&input, Normalizer::None)?);
            ("google", input, output, t)
        }
        ConvertFormat::Bats { input, output, seed } => {
            let t = analogy_tsv(&eval::bats_join(&eval::parse_bats_dir(&input, Normalizer::None)?, seed));
            ("bats", input, output, t)
        }
    };
    if text.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("{} produced no rows", input.display())));
    }
    let mut f = File::create(&output).with_context(|| format!("creating {}", output.display()))?;
    f.write_all(text.as_bytes()).with_context(|| format!("writing {}", output.display()))?;
    let input_hash = if input.is_dir() { "directory".to_owned() } else { sha256_file(&input)? };
    RunManifest::new("convert", BTreeMap::from([("format".to_owned(), kind.to_owned())]), 0)
        .with_input("source", input_hash)
        .finish(&output)?;
    println!("wrote {} ({} rows)", output.display(), text.lines().count());
    Ok(())
}

fn cmd_neighbors(a: NeighborsArgs) -> CliResult<()> {
    let emb = DualEmbedding::load(&a.embedding)?;
    for nb in emb.nearest(a.compare, &a.word, a.n, &[])? {
        println!("{}\t{:.6}", nb.token, nb.score);
    }
    Ok(())
}
