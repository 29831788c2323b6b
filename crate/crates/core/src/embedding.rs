//! Dual embeddings: the word matrix W and context matrix C, compare-method
//! resolution, cosine queries, and the DUALEMB file format.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// (cue space, candidate space) selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CompareMethod {
    #[serde(rename = "WW")]
    WW,
    #[serde(rename = "WC")]
    WC,
    #[serde(rename = "CW")]
    CW,
    #[serde(rename = "CC")]
    CC,
    #[serde(rename = "SS")]
    SS,
    #[serde(rename = "AA")]
    AA,
}

impl CompareMethod {
    pub const ALL: [CompareMethod; 6] = [
        CompareMethod::WW,
        CompareMethod::WC,
        CompareMethod::CW,
        CompareMethod::CC,
        CompareMethod::SS,
        CompareMethod::AA,
    ];

    pub fn spaces(self) -> (Space, Space) {
        match self {
            CompareMethod::WW => (Space::W, Space::W),
            CompareMethod::WC => (Space::W, Space::C),
            CompareMethod::CW => (Space::C, Space::W),
            CompareMethod::CC => (Space::C, Space::C),
            CompareMethod::SS => (Space::Sum, Space::Sum),
            CompareMethod::AA => (Space::Mean, Space::Mean),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CompareMethod::WW => "WW",
            CompareMethod::WC => "WC",
            CompareMethod::CW => "CW",
            CompareMethod::CC => "CC",
            CompareMethod::SS => "SS",
            CompareMethod::AA => "AA",
        }
    }
}

impl fmt::Display for CompareMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompareMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompareMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown compare method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    W,
    C,
    /// W + C
    Sum,
    /// (W + C) / 2
    Mean,
}

impl Space {
    fn index(self) -> usize {
        match self {
            Space::W => 0,
            Space::C => 1,
            Space::Sum => 2,
            Space::Mean => 3,
        }
    }
}

/// GloVe bias vectors, kept alongside the matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Biases {
    pub word: Vec<f32>,
    pub context: Vec<f32>,
}

/// Row-normalized copy of one space. Zero rows have `valid = false`.
#[derive(Debug)]
pub struct UnitSpace {
    rows: Matrix<f64>,
    valid: Vec<bool>,
}

impl UnitSpace {
    fn new(m: &Matrix<f32>) -> Self {
        let mut rows = Matrix::<f64>::zeros(m.rows(), m.cols());
        let mut valid = vec![false; m.rows()];
        for (i, ok) in valid.iter_mut().enumerate() {
            let src = m.row(i);
            let norm = src.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                *ok = true;
                for (d, &s) in rows.row_mut(i).iter_mut().zip(src) {
                    *d = f64::from(s) / norm;
                }
            }
        }
        UnitSpace { rows, valid }
    }

    pub fn row(&self, id: u32) -> Option<&[f64]> {
        self.valid[id as usize].then(|| self.rows.row(id as usize))
    }

    pub fn is_valid(&self, id: u32) -> bool {
        self.valid[id as usize]
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn num_zero_rows(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub token: String,
    pub score: f64,
}

/// Descending score, ascending id on ties.
pub(crate) fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// The `n` best entries of `scored` in rank order.
pub(crate) fn top_n(mut scored: Vec<(u32, f64)>, n: usize) -> Vec<(u32, f64)> {
    if n < scored.len() {
        scored.select_nth_unstable_by(n, rank_order);
        scored.truncate(n);
    }
    scored.sort_by(rank_order);
    scored
}

pub struct DualEmbedding {
    vocab: Vocabulary,
    w: Matrix<f32>,
    c: Matrix<f32>,
    biases: Option<Biases>,
    metadata: BTreeMap<String, String>,
    sum: OnceLock<Matrix<f32>>,
    mean: OnceLock<Matrix<f32>>,
    unit: [OnceLock<UnitSpace>; 4],
}

impl Clone for DualEmbedding {
    fn clone(&self) -> Self {
        DualEmbedding {
            vocab: self.vocab.clone(),
            w: self.w.clone(),
            c: self.c.clone(),
            biases: self.biases.clone(),
            metadata: self.metadata.clone(),
            sum: OnceLock::new(),
            mean: OnceLock::new(),
            unit: Default::default(),
        }
    }
}

impl PartialEq for DualEmbedding {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.w == other.w
            && self.c == other.c
            && self.biases == other.biases
            && self.metadata == other.metadata
    }
}

impl fmt::Debug for DualEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DualEmbedding")
            .field("vocab", &self.vocab.len())
            .field("dim", &self.dim())
            .field("has_biases", &self.biases.is_some())
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl DualEmbedding {
    pub fn new(vocab: Vocabulary, w: Matrix<f32>, c: Matrix<f32>) -> Result<Self> {
        if w.rows() != vocab.len() || c.rows() != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                actual: if w.rows() != vocab.len() { w.rows() } else { c.rows() },
            });
        }
        if w.cols() != c.cols() {
            return Err(Error::DimensionMismatch {
                expected: w.cols(),
                actual: c.cols(),
            });
        }
        if w.cols() == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be >= 1".into()));
        }
        Ok(DualEmbedding {
            vocab,
            w,
            c,
            biases: None,
            metadata: BTreeMap::new(),
            sum: OnceLock::new(),
            mean: OnceLock::new(),
            unit: Default::default(),
        })
    }

    pub fn with_biases(mut self, biases: Biases) -> Result<Self> {
        let n = self.vocab.len();
        if biases.word.len() != n || biases.context.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: biases.word.len().min(biases.context.len()),
            });
        }
        self.biases = Some(biases);
        Ok(self)
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn w(&self) -> &Matrix<f32> {
        &self.w
    }

    pub fn c(&self) -> &Matrix<f32> {
        &self.c
    }

    pub fn biases(&self) -> Option<&Biases> {
        self.biases.as_ref()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    /// Mutable access for training. Drops every cached derived matrix.
    pub(crate) fn matrices_mut(&mut self) -> (&mut Matrix<f32>, &mut Matrix<f32>) {
        self.sum = OnceLock::new();
        self.mean = OnceLock::new();
        self.unit = Default::default();
        (&mut self.w, &mut self.c)
    }

    pub fn space(&self, space: Space) -> &Matrix<f32> {
        match space {
            Space::W => &self.w,
            Space::C => &self.c,
            Space::Sum => self.sum.get_or_init(|| {
                let data = self
                    .w
                    .as_slice()
                    .iter()
                    .zip(self.c.as_slice())
                    .map(|(a, b)| a + b)
                    .collect();
                Matrix::from_vec(self.w.rows(), self.w.cols(), data).expect("same shape")
            }),
            // Halving the sum keeps AA an exact rescaling of SS.
            Space::Mean => self
                .mean
                .get_or_init(|| self.space(Space::Sum).map(|x| x * 0.5)),
        }
    }

    /// (cue matrix, candidate matrix) for a compare method.
    pub fn resolve_spaces(&self, cm: CompareMethod) -> (&Matrix<f32>, &Matrix<f32>) {
        let (cue, cand) = cm.spaces();
        (self.space(cue), self.space(cand))
    }

    pub fn unit_space(&self, space: Space) -> &UnitSpace {
        self.unit[space.index()].get_or_init(|| {
            let unit = UnitSpace::new(self.space(space));
            let zeros = unit.num_zero_rows();
            if zeros > 0 {
                log::warn!("{zeros} zero rows in {space:?} space excluded from candidate sets");
            }
            unit
        })
    }

    pub fn unit_spaces(&self, cm: CompareMethod) -> (&UnitSpace, &UnitSpace) {
        let (cue, cand) = cm.spaces();
        (self.unit_space(cue), self.unit_space(cand))
    }

    pub fn id(&self, token: &str) -> Result<u32> {
        self.vocab
            .id(token)
            .ok_or_else(|| Error::OutOfVocabulary(token.to_owned()))
    }

    /// Cosine between the cue-space row of `a` and the candidate-space row of `b`.
    pub fn similarity(&self, cm: CompareMethod, a: &str, b: &str) -> Result<f64> {
        let (cue, cand) = self.unit_spaces(cm);
        let ua = cue.row(self.id(a)?).ok_or(Error::UndefinedCosine)?;
        let ub = cand.row(self.id(b)?).ok_or(Error::UndefinedCosine)?;
        Ok(dot(ua, ub))
    }

    /// Scores every valid candidate against `cue_row` (unit length).
    pub(crate) fn scan(&self, cand: &UnitSpace, cue_row: &[f64], skip: &HashSet<u32>) -> Vec<(u32, f64)> {
        (0..cand.len() as u32)
            .filter(|id| !skip.contains(id))
            .filter_map(|id| cand.row(id).map(|r| (id, dot(cue_row, r))))
            .collect()
    }

    /// Top-`n` neighbors of `cue`, excluding the cue itself and `exclude`.
    pub fn nearest(
        &self,
        cm: CompareMethod,
        cue: &str,
        n: usize,
        exclude: &[&str],
    ) -> Result<Vec<Neighbor>> {
        if n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        let cue_id = self.id(cue)?;
        let mut skip: HashSet<u32> = exclude.iter().filter_map(|t| self.vocab.id(t)).collect();
        skip.insert(cue_id);
        self.nearest_id(cm, cue_id, n, &skip)
    }

    pub(crate) fn nearest_id(
        &self,
        cm: CompareMethod,
        cue_id: u32,
        n: usize,
        skip: &HashSet<u32>,
    ) -> Result<Vec<Neighbor>> {
        let (cue, cand) = self.unit_spaces(cm);
        let cue_row = cue.row(cue_id).ok_or(Error::UndefinedCosine)?;
        let scored = self.scan(cand, cue_row, skip);
        Ok(top_n(scored, n)
            .into_iter()
            .map(|(id, score)| self.neighbor(id, score))
            .collect())
    }

    pub(crate) fn neighbor(&self, id: u32, score: f64) -> Neighbor {
        Neighbor {
            id,
            token: self.vocab.token(id).to_owned(),
            score,
        }
    }

    /// Row ids that are all zeros in W and in C.
    pub fn zero_rows(&self) -> (Vec<u32>, Vec<u32>) {
        let zeros = |m: &Matrix<f32>| {
            (0..m.rows() as u32)
                .filter(|&i| m.row(i as usize).iter().all(|&x| x == 0.0))
                .collect()
        };
        (zeros(&self.w), zeros(&self.c))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (zw, zc) = self.zero_rows();
        if !zw.is_empty() || !zc.is_empty() {
            let sample: Vec<&str> = zw.iter().chain(&zc).take(5).map(|&i| self.vocab.token(i)).collect();
            log::warn!(
                "{}: {} zero rows in W, {} in C (e.g. {:?})",
                path.display(),
                zw.len(),
                zc.len(),
                sample
            );
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e| Error::io("<stream>", e);
        for (k, v) in &self.metadata {
            let bad = |s: &str| s.is_empty() || s.contains(|c: char| c.is_whitespace() || c == '=');
            if bad(k) || (v.contains(|c: char| c.is_whitespace() || c == '=')) {
                return Err(Error::InvalidConfig(format!(
                    "metadata `{k}={v}` must not contain whitespace or `=`"
                )));
            }
        }
        let (n, d) = (self.vocab.len(), self.dim());
        writeln!(out, "DUALEMB 1 {n} {d}").map_err(io)?;
        let meta = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(out, "{meta}").map_err(io)?;
        writeln!(out, "TOKENS {}", self.vocab.total_tokens()).map_err(io)?;
        for (tok, count) in self.vocab.tokens().iter().zip(self.vocab.counts()) {
            writeln!(out, "{tok}\t{count}").map_err(io)?;
        }
        write_block(out, "W", n, d, self.w.as_slice()).map_err(io)?;
        write_block(out, "C", n, d, self.c.as_slice()).map_err(io)?;
        if let Some(b) = &self.biases {
            let mut both = b.word.clone();
            both.extend_from_slice(&b.context);
            write_block(out, "B", 2, n, &both).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R, ctx: &str) -> Result<Self> {
        let header = read_line(&mut input, ctx)?.ok_or_else(|| Error::format(ctx, "empty file"))?;
        let (n, d) = match header.split(' ').collect::<Vec<_>>().as_slice() {
            ["DUALEMB", "1", n, d] => (
                n.parse::<usize>().map_err(|_| Error::parse(ctx, 1, "bad vocabulary size"))?,
                d.parse::<usize>().map_err(|_| Error::parse(ctx, 1, "bad dimension"))?,
            ),
            _ => return Err(Error::parse(ctx, 1, "expected `DUALEMB 1 <vocab> <dim>`")),
        };
        let meta_line = read_line(&mut input, ctx)?.ok_or_else(|| Error::format(ctx, "missing metadata line"))?;
        let mut metadata = BTreeMap::new();
        for pair in meta_line.split(' ').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::parse(ctx, 2, format!("bad metadata entry `{pair}`")))?;
            metadata.insert(k.to_owned(), v.to_owned());
        }
        let tokens_line = read_line(&mut input, ctx)?.unwrap_or_default();
        let total = tokens_line
            .strip_prefix("TOKENS ")
            .and_then(|t| t.parse::<u64>().ok())
            .ok_or_else(|| Error::parse(ctx, 3, "expected `TOKENS <total>`"))?;
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let line = read_line(&mut input, ctx)?
                .ok_or_else(|| Error::format(ctx, format!("token table ends after {i} of {n} entries")))?;
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(ctx, i + 4, "expected `<token>\\t<count>`"))?;
            let count = count.parse::<u64>().map_err(|_| Error::parse(ctx, i + 4, "bad count"))?;
            entries.push((tok.to_owned(), count));
        }
        let vocab = Vocabulary::from_entries(entries, total).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(ctx, message),
            other => other,
        })?;

        let w = read_block(&mut input, ctx, "W", n, d)?;
        let c = read_block(&mut input, ctx, "C", n, d)?;
        let mut emb = DualEmbedding::new(vocab, w, c)?;
        emb.metadata = metadata;
        match read_line(&mut input, ctx)? {
            None => {}
            Some(marker) => {
                let b = parse_block_body(&mut input, ctx, &marker, "B", 2, n)?;
                let (word, context) = b.as_slice().split_at(n);
                emb.biases = Some(Biases {
                    word: word.to_vec(),
                    context: context.to_vec(),
                });
                let mut rest = Vec::new();
                input.read_to_end(&mut rest).map_err(|e| Error::io(ctx, e))?;
                if rest.iter().any(|b| !b.is_ascii_whitespace()) {
                    return Err(Error::format(ctx, "trailing data after [B] section"));
                }
            }
        }
        Ok(emb)
    }
}

fn write_block<W: Write>(out: &mut W, name: &str, rows: usize, cols: usize, data: &[f32]) -> std::io::Result<()> {
    writeln!(out, "[{name}] {rows} {cols}")?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&bytes)?;
    writeln!(out)
}

fn read_line<R: BufRead>(input: &mut R, ctx: &str) -> Result<Option<String>> {
    let mut buf = Vec::new();
    let n = input.read_until(b'\n', &mut buf).map_err(|e| Error::io(ctx, e))?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| Error::format(ctx, "invalid UTF-8 in text section"))
}

fn read_block<R: BufRead>(input: &mut R, ctx: &str, name: &str, rows: usize, cols: usize) -> Result<Matrix<f32>> {
    let marker = read_line(input, ctx)?.ok_or_else(|| Error::format(ctx, format!("missing [{name}] section")))?;
    parse_block_body(input, ctx, &marker, name, rows, cols)
}

fn parse_block_body<R: BufRead>(
    input: &mut R,
    ctx: &str,
    marker: &str,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<Matrix<f32>> {
    let fields: Vec<&str> = marker.split(' ').collect();
    let tag = format!("[{name}]");
    if fields.len() != 3 || fields[0] != tag {
        return Err(Error::format(ctx, format!("expected `{tag} <rows> <cols>`, found `{marker}`")));
    }
    let r: usize = fields[1].parse().map_err(|_| Error::format(ctx, format!("bad row count in {tag}")))?;
    let c: usize = fields[2].parse().map_err(|_| Error::format(ctx, format!("bad column count in {tag}")))?;
    if r != rows || c != cols {
        return Err(Error::format(
            ctx,
            format!("shape mismatch in {tag}: expected {rows}x{cols}, found {r}x{c}"),
        ));
    }
    let mut bytes = vec![0u8; rows * cols * 4];
    input
        .read_exact(&mut bytes)
        .map_err(|_| Error::format(ctx, format!("{tag} block truncated")))?;
    let mut nl = [0u8; 1];
    input
        .read_exact(&mut nl)
        .map_err(|_| Error::format(ctx, format!("{tag} block truncated")))?;
    if nl[0] != b'\n' {
        return Err(Error::format(ctx, format!("{tag} block longer than declared")));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Plain cosine similarity. Errors on a zero vector.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (mut uv, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a.into(), b.into());
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}
