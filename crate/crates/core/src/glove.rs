//! GloVe: windowed co-occurrence counts and the weighted least-squares
//! objective `f(X_ij) (w_i·c_j + b_i + b̃_j - log X_ij)^2`, trained with
//! AdaGrad.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_traits::Float;
use rand::seq::SliceRandom;

use crate::corpus::{SentenceStream, Vocabulary};
use crate::embedding::{Biases, DualEmbedding};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, SharedMatrix};
use crate::seed::rng_for;
use crate::sgns::init_uniform;
use crate::TrainOutcome;

const MAGIC: &[u8; 8] = b"COOC0001";

/// Fixed-point scale used while accumulating. Integer sums make the result
/// independent of visiting order, so sharded and reversed accumulation give
/// bit-identical matrices.
const FIXED_ONE: f64 = (1u64 << 32) as f64;

#[derive(Clone, Debug, PartialEq)]
pub struct CoocMatrix {
    vocab_size: usize,
    window: usize,
    distance_weighting: bool,
    /// Sorted by (i, j); every value > 0.
    entries: Vec<(u32, u32, f64)>,
}

impl CoocMatrix {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn distance_weighting(&self) -> bool {
        self.distance_weighting
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.entries
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(i, j)))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|&(i, j, x)| self.get(j, i) == x)
    }

    fn header_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".header");
        PathBuf::from(p)
    }

    /// Binary triples after an 8-byte magic, plus a `<path>.header` text file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        out.write_all(MAGIC).map_err(io)?;
        for &(i, j, x) in &self.entries {
            out.write_all(&i.to_le_bytes()).map_err(io)?;
            out.write_all(&j.to_le_bytes()).map_err(io)?;
            out.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)?;

        let hp = Self::header_path(path);
        let header = format!(
            "vocab_size={}\nentries={}\nwindow={}\ndistance_weighting={}\n",
            self.vocab_size,
            self.entries.len(),
            self.window,
            self.distance_weighting
        );
        std::fs::write(&hp, header).map_err(|e| Error::io(&hp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let hp = Self::header_path(path);
        let hctx = hp.display().to_string();
        let header = File::open(&hp).map_err(|e| Error::io(&hp, e))?;
        let mut fields = HashMap::new();
        for (n, line) in BufReader::new(header).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&hp, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&hctx, n + 1, "expected key=value"))?;
            fields.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let field = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::format(&hctx, format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| Error::format(&hctx, format!("bad `{k}`")))
        };
        let vocab_size = num("vocab_size")?;
        let expected = num("entries")?;
        let window = num("window")?;
        let distance_weighting = field("distance_weighting")?
            .parse::<bool>()
            .map_err(|_| Error::format(&hctx, "bad `distance_weighting`"))?;

        let ctx = path.display().to_string();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::format(&ctx, "missing COOC0001 magic"));
        }
        let body = &bytes[8..];
        if body.len() % 16 != 0 || body.len() / 16 != expected {
            return Err(Error::format(
                &ctx,
                format!("expected {expected} triples, found {} bytes", body.len()),
            ));
        }
        let mut entries = Vec::with_capacity(expected);
        for t in body.chunks_exact(16) {
            let i = u32::from_le_bytes(t[0..4].try_into().expect("4 bytes"));
            let j = u32::from_le_bytes(t[4..8].try_into().expect("4 bytes"));
            let x = f64::from_le_bytes(t[8..16].try_into().expect("8 bytes"));
            if i as usize >= vocab_size || j as usize >= vocab_size || !(x > 0.0 && x.is_finite()) {
                return Err(Error::format(&ctx, format!("bad triple ({i}, {j}, {x})")));
            }
            entries.push((i, j, x));
        }
        if entries.windows(2).any(|w| (w[0].0, w[0].1) >= (w[1].0, w[1].1)) {
            return Err(Error::format(&ctx, "triples not sorted by (i, j)"));
        }
        Ok(CoocMatrix {
            vocab_size,
            window,
            distance_weighting,
            entries,
        })
    }
}

/// Mergeable co-occurrence accumulator.
#[derive(Clone, Debug)]
pub struct CoocAccumulator {
    window: usize,
    distance_weighting: bool,
    cells: HashMap<u64, u128>,
}

fn key(i: u32, j: u32) -> u64 {
    (u64::from(i) << 32) | u64::from(j)
}

impl CoocAccumulator {
    pub fn new(window: usize, distance_weighting: bool) -> Result<Self> {
        if window < 1 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        Ok(CoocAccumulator {
            window,
            distance_weighting,
            cells: HashMap::new(),
        })
    }

    /// Each pair within the window counts once, added to both (i, j) and
    /// (j, i).
    pub fn add_sentence(&mut self, sentence: &[u32]) {
        let unit = FIXED_ONE as u128;
        for (t, &center) in sentence.iter().enumerate() {
            let lo = t.saturating_sub(self.window);
            for (s, &left) in sentence.iter().enumerate().take(t).skip(lo) {
                let d = t - s;
                let inc = if self.distance_weighting {
                    (FIXED_ONE / d as f64).round() as u128
                } else {
                    unit
                };
                *self.cells.entry(key(center, left)).or_insert(0) += inc;
                *self.cells.entry(key(left, center)).or_insert(0) += inc;
            }
        }
    }

    pub fn merge(&mut self, other: CoocAccumulator) {
        for (k, v) in other.cells {
            *self.cells.entry(k).or_insert(0) += v;
        }
    }

    pub fn finish(self, vocab_size: usize) -> CoocMatrix {
        let mut entries: Vec<(u32, u32, f64)> = self
            .cells
            .into_iter()
            .map(|(k, v)| ((k >> 32) as u32, k as u32, v as f64 / FIXED_ONE))
            .collect();
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        CoocMatrix {
            vocab_size,
            window: self.window,
            distance_weighting: self.distance_weighting,
            entries,
        }
    }
}

pub fn accumulate_cooc(
    stream: &SentenceStream,
    vocab_size: usize,
    window: usize,
    distance_weighting: bool,
) -> Result<CoocMatrix> {
    let mut acc = CoocAccumulator::new(window, distance_weighting)?;
    for s in &stream.sentences {
        acc.add_sentence(s);
    }
    Ok(acc.finish(vocab_size))
}

/// Same result as [`accumulate_cooc`], computed over `shards` threads.
pub fn accumulate_cooc_sharded(
    stream: &SentenceStream,
    vocab_size: usize,
    window: usize,
    distance_weighting: bool,
    shards: usize,
) -> Result<CoocMatrix> {
    let shards = shards.max(1);
    let chunk = stream.len().div_ceil(shards).max(1);
    let parts: Vec<Result<CoocAccumulator>> = std::thread::scope(|scope| {
        let handles: Vec<_> = stream
            .sentences
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    let mut acc = CoocAccumulator::new(window, distance_weighting)?;
                    for s in part {
                        acc.add_sentence(s);
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("shard panicked"))
            .collect()
    });
    let mut total = CoocAccumulator::new(window, distance_weighting)?;
    for p in parts {
        total.merge(p?);
    }
    Ok(total.finish(vocab_size))
}

/// `(x / x_max)^alpha` below `x_max`, 1 at and above it.
pub fn weight_fn(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GloveConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub x_max: f64,
    pub alpha: f64,
    pub distance_weighting: bool,
    pub seed: u64,
    pub threads: usize,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 100,
            window: 5,
            epochs: 25,
            learning_rate: 0.05,
            x_max: 100.0,
            alpha: 0.75,
            distance_weighting: true,
            seed: 1,
            threads: 1,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if self.window < 1 {
            return bad("window must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return bad("x_max must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if self.threads < 1 {
            return bad("threads must be >= 1");
        }
        Ok(())
    }
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn weight<T: Float>(x: T, x_max: T, alpha: T) -> T {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        T::one()
    }
}

/// Weighted squared residual for one stored pair.
pub fn pair_loss<T: Float>(wi: &[T], cj: &[T], bi: T, bj: T, x: T, x_max: T, alpha: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::InvalidConfig("co-occurrence value must be > 0".into()));
    }
    if wi.len() != cj.len() {
        return Err(Error::DimensionMismatch {
            expected: wi.len(),
            actual: cj.len(),
        });
    }
    let r = dot(wi, cj) + bi + bj - x.ln();
    Ok(weight(x, x_max, alpha) * r * r)
}

/// Gradient of [`pair_loss`]. Writes d/dw_i into `gw` and d/dc_j into `gc`
/// and returns (loss, d/db_i, d/db̃_j); the two bias gradients are equal.
#[allow(clippy::too_many_arguments)]
pub fn pair_gradients<T: Float>(
    wi: &[T],
    cj: &[T],
    bi: T,
    bj: T,
    x: T,
    x_max: T,
    alpha: T,
    gw: &mut [T],
    gc: &mut [T],
) -> Result<(T, T, T)> {
    if !(x > T::zero()) {
        return Err(Error::InvalidConfig("co-occurrence value must be > 0".into()));
    }
    let f = weight(x, x_max, alpha);
    let r = dot(wi, cj) + bi + bj - x.ln();
    let common = (T::one() + T::one()) * f * r;
    for (g, &c) in gw.iter_mut().zip(cj) {
        *g = common * c;
    }
    for (g, &w) in gc.iter_mut().zip(wi) {
        *g = common * w;
    }
    Ok((f * r * r, common, common))
}

#[derive(Clone, Copy)]
enum Part {
    W = 0,
    C = 1,
    BiasW = 2,
    BiasC = 3,
    AccW = 4,
    AccC = 5,
    AccBiasW = 6,
    AccBiasC = 7,
}

/// Parameter and AdaGrad accumulator access shared by the serial and
/// lock-free paths. Biases are stored as n×1 matrices.
trait GloveStore {
    fn read(&self, part: Part, row: usize, out: &mut [f64]);
    fn write(&mut self, part: Part, row: usize, values: &[f64]);
}

/// Full GloVe training state.
#[derive(Clone, Debug, PartialEq)]
pub struct GloveParams {
    parts: [Matrix<f64>; 8],
}

impl GloveParams {
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let w = init_uniform(vocab_size, dim, seed, "glove.init.w").map(f64::from);
        let c = init_uniform(vocab_size, dim, seed, "glove.init.c").map(f64::from);
        let ones = |cols| {
            let mut m = Matrix::<f64>::zeros(vocab_size, cols);
            m.as_mut_slice().iter_mut().for_each(|x| *x = 1.0);
            m
        };
        GloveParams {
            parts: [
                w,
                c,
                Matrix::zeros(vocab_size, 1),
                Matrix::zeros(vocab_size, 1),
                ones(dim),
                ones(dim),
                ones(1),
                ones(1),
            ],
        }
    }

    pub fn w(&self) -> &Matrix<f64> {
        &self.parts[Part::W as usize]
    }

    pub fn c(&self) -> &Matrix<f64> {
        &self.parts[Part::C as usize]
    }

    pub fn bias_w(&self) -> &[f64] {
        self.parts[Part::BiasW as usize].as_slice()
    }

    pub fn bias_c(&self) -> &[f64] {
        self.parts[Part::BiasC as usize].as_slice()
    }

    /// AdaGrad accumulators in the order W, C, b, b̃.
    pub fn accumulators(&self) -> [&[f64]; 4] {
        [
            self.parts[Part::AccW as usize].as_slice(),
            self.parts[Part::AccC as usize].as_slice(),
            self.parts[Part::AccBiasW as usize].as_slice(),
            self.parts[Part::AccBiasC as usize].as_slice(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.parts.iter().all(|m| m.as_slice().iter().all(|x| x.is_finite()))
    }

    pub fn pair_loss(&self, i: u32, j: u32, x: f64, config: &GloveConfig) -> Result<f64> {
        let (i, j) = (i as usize, j as usize);
        pair_loss(
            self.w().row(i),
            self.c().row(j),
            self.bias_w()[i],
            self.bias_c()[j],
            x,
            config.x_max,
            config.alpha,
        )
    }

    /// Total cost over every stored entry.
    pub fn total_loss(&self, cooc: &CoocMatrix, config: &GloveConfig) -> Result<f64> {
        cooc.entries
            .iter()
            .map(|&(i, j, x)| self.pair_loss(i, j, x, config))
            .sum()
    }

    /// One AdaGrad step on a single entry. Returns the loss before the step.
    pub fn step(&mut self, i: u32, j: u32, x: f64, config: &GloveConfig) -> Result<f64> {
        let mut scratch = GloveScratch::new(self.w().cols());
        adagrad_step(self, i, j, x, config, &mut scratch)
    }
}

impl GloveStore for GloveParams {
    fn read(&self, part: Part, row: usize, out: &mut [f64]) {
        out.copy_from_slice(self.parts[part as usize].row(row));
    }

    fn write(&mut self, part: Part, row: usize, values: &[f64]) {
        self.parts[part as usize].row_mut(row).copy_from_slice(values);
    }
}

struct SharedGlove {
    parts: [SharedMatrix<f64>; 8],
}

impl SharedGlove {
    fn new(p: &GloveParams) -> Self {
        SharedGlove {
            parts: std::array::from_fn(|k| SharedMatrix::from_matrix(&p.parts[k])),
        }
    }

    fn into_params(self) -> GloveParams {
        let mut it = self.parts.into_iter().map(SharedMatrix::into_matrix);
        GloveParams {
            parts: std::array::from_fn(|_| it.next().expect("eight parts")),
        }
    }
}

impl GloveStore for &SharedGlove {
    fn read(&self, part: Part, row: usize, out: &mut [f64]) {
        let m = &self.parts[part as usize];
        for (col, o) in out.iter_mut().enumerate() {
            *o = m.get(row, col);
        }
    }

    fn write(&mut self, part: Part, row: usize, values: &[f64]) {
        let m = &self.parts[part as usize];
        for (col, &v) in values.iter().enumerate() {
            m.set(row, col, v);
        }
    }
}

struct GloveScratch {
    wi: Vec<f64>,
    cj: Vec<f64>,
    gw: Vec<f64>,
    gc: Vec<f64>,
    acc: Vec<f64>,
}

impl GloveScratch {
    fn new(dim: usize) -> Self {
        GloveScratch {
            wi: vec![0.0; dim],
            cj: vec![0.0; dim],
            gw: vec![0.0; dim],
            gc: vec![0.0; dim],
            acc: vec![0.0; dim],
        }
    }
}

fn adagrad_update<S: GloveStore>(store: &mut S, param: Part, acc: Part, row: usize, values: &mut [f64], grad: &[f64], lr: f64, acc_buf: &mut [f64]) {
    store.read(acc, row, acc_buf);
    for ((v, a), &g) in values.iter_mut().zip(acc_buf.iter_mut()).zip(grad) {
        *a += g * g;
        *v -= lr * g / a.sqrt();
    }
    store.write(acc, row, acc_buf);
    store.write(param, row, values);
}

fn adagrad_step<S: GloveStore>(
    store: &mut S,
    i: u32,
    j: u32,
    x: f64,
    config: &GloveConfig,
    s: &mut GloveScratch,
) -> Result<f64> {
    let (i, j) = (i as usize, j as usize);
    let mut bi = [0.0];
    let mut bj = [0.0];
    store.read(Part::W, i, &mut s.wi);
    store.read(Part::C, j, &mut s.cj);
    store.read(Part::BiasW, i, &mut bi);
    store.read(Part::BiasC, j, &mut bj);
    let (loss, gbi, gbj) = pair_gradients(
        &s.wi, &s.cj, bi[0], bj[0], x, config.x_max, config.alpha, &mut s.gw, &mut s.gc,
    )?;
    if !loss.is_finite() || !gbi.is_finite() {
        return Err(Error::NonFinite(format!("GloVe loss {loss} at entry ({i}, {j}, {x})")));
    }
    let lr = config.learning_rate;
    let GloveScratch { wi, cj, gw, gc, acc } = s;
    adagrad_update(store, Part::W, Part::AccW, i, wi, gw, lr, acc);
    adagrad_update(store, Part::C, Part::AccC, j, cj, gc, lr, acc);
    let mut one = [0.0];
    adagrad_update(store, Part::BiasW, Part::AccBiasW, i, &mut bi, &[gbi], lr, &mut one);
    adagrad_update(store, Part::BiasC, Part::AccBiasC, j, &mut bj, &[gbj], lr, &mut one);
    Ok(loss)
}

pub fn train_glove(cooc: &CoocMatrix, vocab: &Vocabulary, config: &GloveConfig) -> Result<TrainOutcome> {
    let (params, epoch_losses) = train_glove_params(cooc, config)?;
    if vocab.len() != cooc.vocab_size() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            actual: cooc.vocab_size(),
        });
    }
    let to32 = |m: &Matrix<f64>| m.map(|x| x as f32);
    let biases = Biases {
        word: params.bias_w().iter().map(|&x| x as f32).collect(),
        context: params.bias_c().iter().map(|&x| x as f32).collect(),
    };
    let embedding = DualEmbedding::new(vocab.clone(), to32(params.w()), to32(params.c()))?
        .with_biases(biases)?
        .with_metadata("trainer", "glove")
        .with_metadata("dim", config.dim)
        .with_metadata("window", config.window)
        .with_metadata("epochs", config.epochs)
        .with_metadata("learning_rate", config.learning_rate)
        .with_metadata("x_max", config.x_max)
        .with_metadata("alpha", config.alpha)
        .with_metadata("distance_weighting", config.distance_weighting)
        .with_metadata("seed", config.seed);
    Ok(TrainOutcome {
        embedding,
        epoch_losses,
    })
}

/// AdaGrad over shuffled stored entries. Returns the final state and the
/// total cost after each epoch.
pub fn train_glove_params(cooc: &CoocMatrix, config: &GloveConfig) -> Result<(GloveParams, Vec<f64>)> {
    config.validate()?;
    if cooc.is_empty() {
        return Err(Error::NotEnoughData("empty co-occurrence matrix".into()));
    }
    let mut params = GloveParams::init(cooc.vocab_size(), config.dim, config.seed);
    let mut order: Vec<usize> = (0..cooc.len()).collect();
    let mut rng = rng_for(config.seed, "glove.shuffle");
    let mut losses = Vec::with_capacity(config.epochs);
    let mut scratch = GloveScratch::new(config.dim);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        if config.threads == 1 {
            for &k in &order {
                let (i, j, x) = cooc.entries[k];
                adagrad_step(&mut params, i, j, x, config, &mut scratch)?;
            }
        } else {
            params = parallel_epoch(params, cooc, &order, config)?;
        }
        let total = params.total_loss(cooc, config)?;
        log::debug!("glove epoch {epoch}: cost {total:.6}");
        losses.push(total);
    }
    Ok((params, losses))
}

fn parallel_epoch(params: GloveParams, cooc: &CoocMatrix, order: &[usize], config: &GloveConfig) -> Result<GloveParams> {
    let shared = SharedGlove::new(&params);
    let chunk = order.len().div_ceil(config.threads).max(1);
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = order
            .chunks(chunk)
            .map(|part| {
                let shared = &shared;
                scope.spawn(move || {
                    let mut store = shared;
                    let mut scratch = GloveScratch::new(config.dim);
                    for &k in part {
                        let (i, j, x) = cooc.entries[k];
                        adagrad_step(&mut store, i, j, x, config, &mut scratch)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    for r in results {
        r?;
    }
    Ok(shared.into_params())
}

impl fmt::Display for CoocMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CoocMatrix(vocab={}, entries={}, window={}, distance_weighting={})",
            self.vocab_size,
            self.entries.len(),
            self.window,
            self.distance_weighting
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(s: &[&[u32]]) -> SentenceStream {
        SentenceStream {
            sentences: s.iter().map(|x| x.to_vec()).collect(),
        }
    }

    #[test]
    fn cooc_unweighted_window_two() {
        let m = accumulate_cooc(&stream(&[&[0, 1, 2]]), 3, 2, false).unwrap();
        for (i, j) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
            assert_eq!(m.get(i, j), 1.0, "({i},{j})");
        }
        assert_eq!(m.len(), 6);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn cooc_distance_weighted() {
        let m = accumulate_cooc(&stream(&[&[0, 1, 2]]), 3, 2, true).unwrap();
        assert_eq!(m.get(0, 2), 0.5);
        assert_eq!(m.get(2, 0), 0.5);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 2), 1.0);
    }

    #[test]
    fn cooc_empty_and_window_limits() {
        assert!(accumulate_cooc(&SentenceStream::default(), 3, 2, true).unwrap().is_empty());
        let m = accumulate_cooc(&stream(&[&[0, 1, 2]]), 3, 1, false).unwrap();
        assert_eq!(m.get(0, 2), 0.0);
        assert!(accumulate_cooc(&stream(&[&[0]]), 1, 0, false).is_err());
    }

    #[test]
    fn cooc_repeated_word_hits_diagonal_twice() {
        let m = accumulate_cooc(&stream(&[&[4, 4]]), 5, 1, false).unwrap();
        assert_eq!(m.get(4, 4), 2.0);
    }

    #[test]
    fn cooc_sharded_matches_serial() {
        let s = stream(&[&[0, 1, 2, 3, 1], &[3, 2, 2, 0], &[1, 4, 0, 4, 3, 2, 1], &[0, 1]]);
        let serial = accumulate_cooc(&s, 5, 3, true).unwrap();
        for shards in 1..6 {
            assert_eq!(accumulate_cooc_sharded(&s, 5, 3, true, shards).unwrap(), serial);
        }
        assert!(serial.is_symmetric());
    }

    #[test]
    fn weight_fn_values() {
        assert_eq!(weight_fn(100.0, 100.0, 0.75), 1.0);
        assert_eq!(weight_fn(0.0, 100.0, 0.75), 0.0);
        assert!((weight_fn(50.0, 100.0, 0.75) - 0.594603558).abs() < 1e-9);
        assert_eq!(weight_fn(1e6, 100.0, 0.75), 1.0);
    }

    #[test]
    fn pair_loss_examples() {
        let z = [0.0f64; 3];
        // zero residual
        let w = [1.0f64, 0.0, 0.0];
        let c = [2.0f64, 0.0, 0.0];
        let x = (2.0f64 + 0.5 + 0.25).exp();
        assert!(pair_loss(&w, &c, 0.5, 0.25, x, 100.0, 0.75).unwrap().abs() < 1e-12);
        assert_eq!(pair_loss(&z, &z, 0.0, 0.0, 1.0, 100.0, 0.75).unwrap(), 0.0);
        let e2 = 2.0f64.exp();
        let loss = pair_loss(&z, &z, 0.0, 0.0, e2, 100.0, 0.75).unwrap();
        assert!((loss - 0.5669).abs() < 1e-4, "{loss}");
        assert!((loss - (e2 / 100.0).powf(0.75) * 4.0).abs() < 1e-12);
        assert!(pair_loss(&z, &z, 0.0, 0.0, 0.0, 100.0, 0.75).is_err());
        assert!(pair_loss(&z, &z, 0.0, 0.0, -1.0, 100.0, 0.75).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cooc");
        let m = accumulate_cooc(&stream(&[&[0, 1, 2, 0], &[2, 1]]), 3, 2, true).unwrap();
        m.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"COOC0001");
        assert_eq!(bytes.len(), 8 + 16 * m.len());
        assert_eq!(CoocMatrix::load(&path).unwrap(), m);
        let header = std::fs::read_to_string(dir.path().join("m.cooc.header")).unwrap();
        assert!(header.contains("vocab_size=3"));
        assert!(header.contains("distance_weighting=true"));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(CoocMatrix::load(&path).is_err());
    }

    #[test]
    fn adagrad_accumulators_stay_positive() {
        let cfg = GloveConfig {
            dim: 4,
            ..GloveConfig::default()
        };
        let mut p = GloveParams::init(3, 4, 9);
        p.step(0, 1, 7.0, &cfg).unwrap();
        for acc in p.accumulators() {
            assert!(acc.iter().all(|&a| a >= 1.0));
        }
        assert!(p.is_finite());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cooc = accumulate_cooc(&stream(&[&[0, 1, 2]]), 3, 2, false).unwrap();
        let cfg = GloveConfig {
            dim: 4,
            epochs: 0,
            ..GloveConfig::default()
        };
        let (p, losses) = train_glove_params(&cooc, &cfg).unwrap();
        assert_eq!(p, GloveParams::init(3, 4, cfg.seed));
        assert!(losses.is_empty());
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let empty = accumulate_cooc(&SentenceStream::default(), 3, 2, false).unwrap();
        assert!(train_glove_params(&empty, &GloveConfig::default()).is_err());
        let cooc = accumulate_cooc(&stream(&[&[0, 1]]), 2, 2, false).unwrap();
        for cfg in [
            GloveConfig { alpha: 1.5, ..GloveConfig::default() },
            GloveConfig { x_max: 0.0, ..GloveConfig::default() },
            GloveConfig { dim: 0, ..GloveConfig::default() },
        ] {
            assert!(train_glove_params(&cooc, &cfg).is_err());
        }
    }

    #[test]
    fn loss_decreases() {
        let s = stream(&[&[0, 1, 2, 3, 4, 0, 2, 4], &[1, 3, 1, 3, 0, 0, 2], &[4, 4, 1, 2, 3]]);
        let cooc = accumulate_cooc(&s, 5, 3, true).unwrap();
        let cfg = GloveConfig {
            dim: 8,
            epochs: 30,
            ..GloveConfig::default()
        };
        let (_, losses) = train_glove_params(&cooc, &cfg).unwrap();
        assert!(losses.last().unwrap() < losses.first().unwrap(), "{losses:?}");
    }
}
