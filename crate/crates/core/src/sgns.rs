//! Skip-gram and CBOW with negative sampling.
//!
//! W holds input-side vectors and C output-side vectors. Skip-gram reads the
//! center word from W and predicts each context word in C; CBOW reads the
//! mean of the context words from W and predicts the center word in C.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{SentenceStream, Vocabulary};
use crate::embedding::DualEmbedding;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, RowStore, SharedMatrix};
use crate::seed::rng_for;
use crate::TrainOutcome;

/// Final learning rate as a fraction of the initial one.
const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgnsMethod {
    Cbow,
    SkipGram,
}

impl SgnsMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SgnsMethod::Cbow => "cbow",
            SgnsMethod::SkipGram => "sg",
        }
    }
}

impl fmt::Display for SgnsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SgnsMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbow" => Ok(SgnsMethod::Cbow),
            "sg" | "skipgram" | "skip-gram" => Ok(SgnsMethod::SkipGram),
            other => Err(Error::InvalidConfig(format!("unknown SGNS method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgnsConfig {
    pub method: SgnsMethod,
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub noise_power: f64,
    pub seed: u64,
    /// 1 = deterministic; more = lock-free workers with relaxed consistency.
    pub threads: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            method: SgnsMethod::SkipGram,
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            noise_power: 0.75,
            seed: 1,
            threads: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if self.window < 1 {
            return bad("window must be >= 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !self.noise_power.is_finite() {
            return bad("noise_power must be finite");
        }
        if self.threads < 1 {
            return bad("threads must be >= 1");
        }
        Ok(())
    }
}

/// Unigram counts raised to `power`, as a cumulative table.
#[derive(Clone, Debug)]
pub struct NoiseDistribution {
    cumulative: Vec<f64>,
}

impl NoiseDistribution {
    pub fn new(counts: &[u64], power: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig(
                "noise distribution needs positive mass on every id".into(),
            ));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(NoiseDistribution { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn probability(&self, id: u32) -> f64 {
        let i = id as usize;
        let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        self.cumulative[i] - lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1) as u32
    }
}

/// Draws `m` ids from the noise distribution, redrawing any equal to `exclude`.
pub fn sample_negatives<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    m: usize,
    exclude: u32,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(m);
    fill_negatives(dist, m, exclude, rng, &mut out)?;
    Ok(out)
}

fn fill_negatives<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    m: usize,
    exclude: u32,
    rng: &mut R,
    out: &mut Vec<u32>,
) -> Result<()> {
    if dist.len() < 2 {
        return Err(Error::NotEnoughData(
            "negative sampling needs at least two vocabulary entries".into(),
        ));
    }
    out.clear();
    while out.len() < m {
        let id = dist.sample(rng);
        if id != exclude {
            out.push(id);
        }
    }
    Ok(())
}

/// One training example: W rows on the input side, one C row to predict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub inputs: Vec<u32>,
    pub output: u32,
}

/// Calls `f(inputs, output)` for every example in a sentence. Windows are
/// fixed width and never leave the sentence.
pub fn for_each_example(
    sentence: &[u32],
    window: usize,
    method: SgnsMethod,
    ctx: &mut Vec<u32>,
    mut f: impl FnMut(&[u32], u32),
) {
    let n = sentence.len();
    for t in 0..n {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(n - 1);
        match method {
            SgnsMethod::SkipGram => {
                for j in (lo..=hi).filter(|&j| j != t) {
                    f(&sentence[t..=t], sentence[j]);
                }
            }
            SgnsMethod::Cbow => {
                ctx.clear();
                ctx.extend((lo..=hi).filter(|&j| j != t).map(|j| sentence[j]));
                if !ctx.is_empty() {
                    f(ctx, sentence[t]);
                }
            }
        }
    }
}

pub fn generate_pairs(stream: &SentenceStream, window: usize, method: SgnsMethod) -> Vec<Example> {
    let mut out = Vec::new();
    let mut ctx = Vec::new();
    for s in &stream.sentences {
        for_each_example(s, window, method, &mut ctx, |inputs, output| {
            out.push(Example {
                inputs: inputs.to_vec(),
                output,
            })
        });
    }
    out
}

/// log σ(x) without overflow for large |x|.
pub fn log_sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Negated SGNS objective for one positive pair and its negatives:
/// `-log σ(w·c) - Σ log σ(-w·n)`.
pub fn sgns_loss<T: Float>(input: &[T], ctx: &[T], negs: &[&[T]]) -> Result<T> {
    let d = input.len();
    for v in std::iter::once(ctx).chain(negs.iter().copied()) {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
    }
    let mut loss = -log_sigmoid(dot(input, ctx));
    for n in negs {
        loss = loss - log_sigmoid(-dot(input, n));
    }
    Ok(loss)
}

/// Reusable buffers for the update kernel.
pub(crate) struct Scratch<T> {
    hidden: Vec<T>,
    grad: Vec<T>,
    row: Vec<T>,
}

impl<T: Float> Scratch<T> {
    pub fn new(dim: usize) -> Self {
        Scratch {
            hidden: vec![T::zero(); dim],
            grad: vec![T::zero(); dim],
            row: vec![T::zero(); dim],
        }
    }
}

/// One SGD step on the SGNS loss. C rows are updated with the gradient
/// taken at the current input vector, and the input gradient uses the C
/// rows before their own update, so for distinct ids the applied change is
/// exactly `-lr * ∇loss`. Returns the loss before the step.
pub(crate) fn update<T, W, C>(
    w: &mut W,
    c: &mut C,
    inputs: &[u32],
    output: u32,
    negs: &[u32],
    lr: T,
    s: &mut Scratch<T>,
) -> Result<T>
where
    T: Float + fmt::Debug,
    W: RowStore<T>,
    C: RowStore<T>,
{
    if inputs.is_empty() {
        return Err(Error::InvalidConfig("example has no input words".into()));
    }
    let inv = T::one() / T::from(inputs.len()).expect("small integer");
    s.hidden.iter_mut().for_each(|x| *x = T::zero());
    for &i in inputs {
        w.read_row(i as usize, &mut s.row);
        for (h, &r) in s.hidden.iter_mut().zip(&s.row) {
            *h = *h + r;
        }
    }
    if inputs.len() > 1 {
        s.hidden.iter_mut().for_each(|h| *h = *h * inv);
    }
    s.grad.iter_mut().for_each(|x| *x = T::zero());

    let mut loss = T::zero();
    let targets = std::iter::once((output, T::one())).chain(negs.iter().map(|&n| (n, T::zero())));
    for (id, label) in targets {
        c.read_row(id as usize, &mut s.row);
        let x = dot(&s.hidden, &s.row);
        if !x.is_finite() {
            return Err(Error::NonFinite(format!(
                "dot product {x:?} for inputs {inputs:?} and output row {id}"
            )));
        }
        loss = loss - if label > T::zero() { log_sigmoid(x) } else { log_sigmoid(-x) };
        // d(loss)/dx = σ(x) - label
        let g = lr * (label - sigmoid(x));
        for (acc, &r) in s.grad.iter_mut().zip(&s.row) {
            *acc = *acc + g * r;
        }
        c.add_scaled(id as usize, g, &s.hidden);
    }
    if s.grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("input gradient for inputs {inputs:?}")));
    }
    let scale = if inputs.len() > 1 { inv } else { T::one() };
    for &i in inputs {
        w.add_scaled(i as usize, scale, &s.grad);
    }
    Ok(loss)
}

/// Applies one SGD step to plain matrices. Generic so that gradients can be
/// checked in f64.
pub fn sgns_step_matrices<T: Float + Default + fmt::Debug>(
    w: &mut Matrix<T>,
    c: &mut Matrix<T>,
    example: &Example,
    negs: &[u32],
    lr: T,
) -> Result<T> {
    if w.cols() != c.cols() {
        return Err(Error::DimensionMismatch {
            expected: w.cols(),
            actual: c.cols(),
        });
    }
    let mut scratch = Scratch::new(w.cols());
    update(w, c, &example.inputs, example.output, negs, lr, &mut scratch)
}

/// One SGD step on an embedding's W and C.
pub fn sgns_step(emb: &mut DualEmbedding, example: &Example, negs: &[u32], lr: f32) -> Result<f32> {
    let (w, c) = emb.matrices_mut();
    sgns_step_matrices(w, c, example, negs, lr)
}

pub(crate) fn init_uniform(rows: usize, dim: usize, seed: u64, label: &str) -> Matrix<f32> {
    let mut rng = rng_for(seed, label);
    let half = 0.5 / dim as f32;
    let data = (0..rows * dim).map(|_| rng.random_range(-half..half)).collect();
    Matrix::from_vec(rows, dim, data).expect("shape")
}

fn learning_rate(start: f64, done: u64, total: u64) -> f64 {
    let progress = if total == 0 { 1.0 } else { (done as f64 / total as f64).min(1.0) };
    start * (1.0 - (1.0 - MIN_LR_FRACTION) * progress)
}

pub fn train_sgns(stream: &SentenceStream, vocab: &Vocabulary, config: &SgnsConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if stream.is_empty() {
        return Err(Error::NotEnoughData("empty sentence stream".into()));
    }
    if vocab.len() < 2 {
        return Err(Error::NotEnoughData("vocabulary size must be >= 2".into()));
    }
    if let Some(bad) = stream.sentences.iter().flatten().find(|&&id| id as usize >= vocab.len()) {
        return Err(Error::InvalidConfig(format!("token id {bad} outside vocabulary")));
    }
    let noise = NoiseDistribution::new(vocab.counts(), config.noise_power)?;
    let mut w = init_uniform(vocab.len(), config.dim, config.seed, "sgns.init.w");
    let mut c = Matrix::<f32>::zeros(vocab.len(), config.dim);

    let epoch_losses = if config.threads == 1 {
        train_serial(stream, &noise, config, &mut w, &mut c)?
    } else {
        train_parallel(stream, &noise, config, &mut w, &mut c)?
    };

    let trainer = match config.method {
        SgnsMethod::Cbow => "sgns-cbow",
        SgnsMethod::SkipGram => "sgns-sg",
    };
    let embedding = DualEmbedding::new(vocab.clone(), w, c)?
        .with_metadata("trainer", trainer)
        .with_metadata("method", config.method)
        .with_metadata("dim", config.dim)
        .with_metadata("window", config.window)
        .with_metadata("negatives", config.negatives)
        .with_metadata("epochs", config.epochs)
        .with_metadata("learning_rate", config.learning_rate)
        .with_metadata("noise_power", config.noise_power)
        .with_metadata("seed", config.seed);
    Ok(TrainOutcome {
        embedding,
        epoch_losses,
    })
}

struct EpochStats {
    loss: f64,
    examples: u64,
}

#[allow(clippy::too_many_arguments)]
fn run_sentences<W: RowStore<f32>, C: RowStore<f32>>(
    sentences: &[Vec<u32>],
    noise: &NoiseDistribution,
    config: &SgnsConfig,
    w: &mut W,
    c: &mut C,
    rng: &mut ChaCha8Rng,
    progress: &AtomicU64,
    total_work: u64,
) -> Result<EpochStats> {
    let mut scratch = Scratch::<f32>::new(config.dim);
    let mut negs = Vec::with_capacity(config.negatives);
    let mut ctx = Vec::new();
    let mut stats = EpochStats { loss: 0.0, examples: 0 };
    let mut failure = None;
    for sentence in sentences {
        let done = progress.fetch_add(sentence.len() as u64, Ordering::Relaxed);
        let lr = learning_rate(config.learning_rate, done, total_work) as f32;
        for_each_example(sentence, config.window, config.method, &mut ctx, |inputs, output| {
            if failure.is_some() {
                return;
            }
            let step = fill_negatives(noise, config.negatives, output, rng, &mut negs)
                .and_then(|_| update(w, c, inputs, output, &negs, lr, &mut scratch));
            match step {
                Ok(l) => {
                    stats.loss += f64::from(l);
                    stats.examples += 1;
                }
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(stats)
}

fn mean_loss(loss: f64, examples: u64) -> f64 {
    if examples == 0 {
        0.0
    } else {
        loss / examples as f64
    }
}

fn train_serial(
    stream: &SentenceStream,
    noise: &NoiseDistribution,
    config: &SgnsConfig,
    w: &mut Matrix<f32>,
    c: &mut Matrix<f32>,
) -> Result<Vec<f64>> {
    let total_work = (stream.num_tokens() * config.epochs) as u64;
    let progress = AtomicU64::new(0);
    let mut rng = rng_for(config.seed, "sgns.negatives");
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let stats = run_sentences(&stream.sentences, noise, config, w, c, &mut rng, &progress, total_work)?;
        let mean = mean_loss(stats.loss, stats.examples);
        log::debug!("sgns epoch {epoch}: mean loss {mean:.6}");
        losses.push(mean);
    }
    Ok(losses)
}

fn train_parallel(
    stream: &SentenceStream,
    noise: &NoiseDistribution,
    config: &SgnsConfig,
    w: &mut Matrix<f32>,
    c: &mut Matrix<f32>,
) -> Result<Vec<f64>> {
    let total_work = (stream.num_tokens() * config.epochs) as u64;
    let progress = AtomicU64::new(0);
    let shared_w = SharedMatrix::from_matrix(w);
    let shared_c = SharedMatrix::from_matrix(c);
    let chunk = stream.len().div_ceil(config.threads);
    let mut rngs: Vec<ChaCha8Rng> = (0..config.threads)
        .map(|k| rng_for(config.seed, &format!("sgns.negatives.worker{k}")))
        .collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let results: Vec<Result<EpochStats>> = std::thread::scope(|scope| {
            let handles: Vec<_> = stream
                .sentences
                .chunks(chunk)
                .zip(rngs.iter_mut())
                .map(|(part, rng)| {
                    let (shared_w, shared_c, progress) = (&shared_w, &shared_c, &progress);
                    scope.spawn(move || {
                        let mut wr = shared_w.rows();
                        let mut cr = shared_c.rows();
                        run_sentences(part, noise, config, &mut wr, &mut cr, rng, progress, total_work)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let (mut loss, mut examples) = (0.0, 0);
        for r in results {
            let s = r?;
            loss += s.loss;
            examples += s.examples;
        }
        let mean = mean_loss(loss, examples);
        log::debug!("sgns epoch {epoch}: mean loss {mean:.6} ({} workers)", config.threads);
        losses.push(mean);
    }
    *w = shared_w.into_matrix();
    *c = shared_c.into_matrix();
    Ok(losses)
}
