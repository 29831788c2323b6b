//! Intrinsic evaluation: dataset parsers and the similarity, association
//! and analogy scorers. Every scorer takes a compare method: the cue side of
//! a query is read from the cue space and candidates from the candidate
//! space.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_token, Normalizer};
use crate::embedding::{top_n, CompareMethod, DualEmbedding, Neighbor};
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Similarity,
    Association,
    Analogy,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Similarity, Task::Association, Task::Analogy];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Similarity => "similarity",
            Task::Association => "association",
            Task::Analogy => "analogy",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: Task,
    pub value: f64,
    pub aux: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityPair {
    pub w1: String,
    pub w2: String,
    pub gold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CueResponseSet {
    pub cue: String,
    pub responses: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyQuestion {
    pub a: String,
    pub a_star: String,
    pub b: String,
    pub b_star: String,
    pub category: Option<String>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_number(ctx: &str, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(ctx, line, format!("bad number `{s}`")))
}

/// Canonical `w1\tw2\tscore`.
pub fn parse_similarity_str(text: &str, ctx: &str, mode: Normalizer) -> Result<Vec<SimilarityPair>> {
    let mut out = Vec::new();
    for (n, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [w1, w2, score] = fields.as_slice() else {
            return Err(Error::parse(ctx, n, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        if w1.is_empty() || w2.is_empty() {
            return Err(Error::parse(ctx, n, "empty word"));
        }
        out.push(SimilarityPair {
            w1: normalize_token(w1, mode),
            w2: normalize_token(w2, mode),
            gold: parse_number(ctx, n, score)?,
        });
    }
    if out.is_empty() {
        return Err(Error::format(ctx, "no pairs"));
    }
    Ok(out)
}

pub fn parse_similarity(path: &Path, mode: Normalizer) -> Result<Vec<SimilarityPair>> {
    parse_similarity_str(&read_text(path)?, &path.display().to_string(), mode)
}

/// Canonical `cue\tresponse\tstrength`. Rows are grouped by cue in order of
/// first appearance; responses below `min_strength` are dropped, as are
/// responses equal to their cue and cues left with nothing.
pub fn parse_association_str(
    text: &str,
    ctx: &str,
    min_strength: f64,
    mode: Normalizer,
) -> Result<Vec<CueResponseSet>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, BTreeMap<String, f64>> = HashMap::new();
    for (n, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [cue, response, strength] = fields.as_slice() else {
            return Err(Error::parse(ctx, n, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let strength = parse_number(ctx, n, strength)?;
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::parse(ctx, n, format!("strength {strength} outside [0, 1]")));
        }
        if cue.is_empty() || response.is_empty() {
            return Err(Error::parse(ctx, n, "empty word"));
        }
        let cue = normalize_token(cue, mode);
        let response = normalize_token(response, mode);
        if !groups.contains_key(&cue) {
            order.push(cue.clone());
        }
        let g = groups.entry(cue.clone()).or_default();
        if strength < min_strength || response == cue {
            continue;
        }
        let slot = g.entry(response).or_insert(strength);
        *slot = slot.max(strength);
    }
    Ok(order
        .into_iter()
        .filter_map(|cue| {
            let responses = groups.remove(&cue).unwrap_or_default();
            (!responses.is_empty()).then_some(CueResponseSet { cue, responses })
        })
        .collect())
}

pub fn parse_association(path: &Path, min_strength: f64, mode: Normalizer) -> Result<Vec<CueResponseSet>> {
    parse_association_str(&read_text(path)?, &path.display().to_string(), min_strength, mode)
}

/// Google analogy format: `: section` headers, then `a a* b b*` rows.
pub fn parse_analogy_google_str(text: &str, ctx: &str, mode: Normalizer) -> Result<Vec<AnalogyQuestion>> {
    let mut category = None;
    let mut out = Vec::new();
    for (n, line) in data_lines(text) {
        if let Some(section) = line.strip_prefix(':') {
            category = Some(section.trim().to_owned());
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [a, a_star, b, b_star] = toks.as_slice() else {
            return Err(Error::parse(ctx, n, format!("expected 4 tokens, found {}", toks.len())));
        };
        out.push(AnalogyQuestion {
            a: normalize_token(a, mode),
            a_star: normalize_token(a_star, mode),
            b: normalize_token(b, mode),
            b_star: normalize_token(b_star, mode),
            category: category.clone(),
        });
    }
    Ok(out)
}

/// Canonical `a\ta*\tb\tb*` with an optional fifth category column.
pub fn parse_analogy_tsv_str(text: &str, ctx: &str, mode: Normalizer) -> Result<Vec<AnalogyQuestion>> {
    let mut out = Vec::new();
    for (n, line) in data_lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if !(f.len() == 4 || f.len() == 5) || f[..4].iter().any(|t| t.is_empty()) {
            return Err(Error::parse(ctx, n, format!("expected 4 or 5 tab-separated fields, found {}", f.len())));
        }
        out.push(AnalogyQuestion {
            a: normalize_token(f[0], mode),
            a_star: normalize_token(f[1], mode),
            b: normalize_token(f[2], mode),
            b_star: normalize_token(f[3], mode),
            category: f.get(4).map(|c| c.to_string()),
        });
    }
    Ok(out)
}

pub fn parse_analogy_google(path: &Path, mode: Normalizer) -> Result<Vec<AnalogyQuestion>> {
    parse_analogy_google_str(&read_text(path)?, &path.display().to_string(), mode)
}

pub fn parse_analogy_tsv(path: &Path, mode: Normalizer) -> Result<Vec<AnalogyQuestion>> {
    parse_analogy_tsv_str(&read_text(path)?, &path.display().to_string(), mode)
}

/// Partial analogies (a, a*) that share one relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatsSubclass {
    pub name: String,
    pub pairs: Vec<(String, String)>,
}

/// Completes every pair with a partner drawn uniformly from the other pairs
/// of its subclass. Each subclass draws from its own seeded stream.
pub fn bats_join(subclasses: &[BatsSubclass], seed: u64) -> Vec<AnalogyQuestion> {
    let mut out = Vec::new();
    for sub in subclasses {
        let n = sub.pairs.len();
        if n < 2 {
            log::warn!("BATS subclass `{}` has {n} pair(s); skipped", sub.name);
            continue;
        }
        let mut rng = rng_for(seed, &format!("bats.{}", sub.name));
        for (i, (a, a_star)) in sub.pairs.iter().enumerate() {
            let mut k = rng.random_range(0..n - 1);
            if k >= i {
                k += 1;
            }
            let (b, b_star) = &sub.pairs[k];
            out.push(AnalogyQuestion {
                a: a.clone(),
                a_star: a_star.clone(),
                b: b.clone(),
                b_star: b_star.clone(),
                category: Some(sub.name.clone()),
            });
        }
    }
    out
}

fn is_inflectional(path: &Path) -> bool {
    let lowered = path.to_string_lossy().to_lowercase();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut chars = stem.chars();
    let coded = chars.next() == Some('I') && chars.next().is_some_and(|c| c.is_ascii_digit());
    lowered.contains("inflectional") || coded
}

/// Reads a BATS release directory (`*.txt` files of `a\tb1/b2/...` lines,
/// one file per subclass). Inflectional-morphology subclasses are skipped
/// and only the first listed answer is kept.
pub fn parse_bats_dir(dir: &Path, mode: Normalizer) -> Result<Vec<BatsSubclass>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "txt") {
                files.push(path);
            }
        }
    }
    files.sort();
    let mut out = Vec::new();
    for path in files {
        if is_inflectional(&path) {
            continue;
        }
        let ctx = path.display().to_string();
        let mut pairs = Vec::new();
        for (n, line) in data_lines(&read_text(&path)?) {
            let mut f = line.split(['\t', ' ']).filter(|s| !s.is_empty());
            let (Some(a), Some(rest)) = (f.next(), f.next()) else {
                return Err(Error::parse(&ctx, n, "expected `word\\tanswer[/answer...]`"));
            };
            let first = rest.split('/').next().unwrap_or(rest);
            pairs.push((normalize_token(a, mode), normalize_token(first, mode)));
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(ctx);
        out.push(BatsSubclass { name, pairs });
    }
    Ok(out)
}

/// Product-moment correlation, computed from centered sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::NotEnoughData("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 || x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between gold scores and cue/candidate cosines.
/// Pairs with an out-of-vocabulary word are skipped and counted.
pub fn eval_similarity(emb: &DualEmbedding, cm: CompareMethod, pairs: &[SimilarityPair]) -> Result<TaskScore> {
    let (cue, cand) = emb.unit_spaces(cm);
    let vocab = emb.vocab();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut oov, mut zero) = (0usize, 0usize);
    for p in pairs {
        let (Some(i), Some(j)) = (vocab.id(&p.w1), vocab.id(&p.w2)) else {
            oov += 1;
            continue;
        };
        let (Some(u), Some(v)) = (cue.row(i), cand.row(j)) else {
            zero += 1;
            continue;
        };
        xs.push(u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>());
        ys.push(p.gold);
    }
    if xs.len() < 2 {
        return Err(Error::NotEnoughData(format!(
            "{} usable similarity pairs ({oov} out of vocabulary)",
            xs.len()
        )));
    }
    let value = pearson(&xs, &ys)?;
    Ok(TaskScore {
        task: Task::Similarity,
        value,
        aux: BTreeMap::from([
            ("n_pairs".to_owned(), pairs.len() as f64),
            ("n_evaluated".to_owned(), xs.len() as f64),
            ("n_skipped_oov".to_owned(), oov as f64),
            ("n_skipped_zero".to_owned(), zero as f64),
        ]),
    })
}

/// Hit ratio and coverage of the top-`n` neighbors against human responses.
/// The reported value is their mean.
pub fn eval_association(emb: &DualEmbedding, cm: CompareMethod, sets: &[CueResponseSet], n: usize) -> Result<TaskScore> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    let (cue_space, _) = emb.unit_spaces(cm);
    let (mut evaluated, mut hits, mut coverage_sum) = (0usize, 0usize, 0.0f64);
    let (mut oov, mut zero) = (0usize, 0usize);
    for set in sets {
        let Some(cue) = emb.vocab().id(&set.cue) else {
            oov += 1;
            continue;
        };
        if !cue_space.is_valid(cue) {
            zero += 1;
            continue;
        }
        let skip = HashSet::from([cue]);
        let retrieved = emb.nearest_id(cm, cue, n, &skip)?;
        let overlap = retrieved
            .iter()
            .filter(|nb| set.responses.contains_key(&nb.token))
            .count();
        evaluated += 1;
        if overlap > 0 {
            hits += 1;
        }
        coverage_sum += overlap as f64 / set.responses.len() as f64;
    }
    if evaluated == 0 {
        return Err(Error::NotEnoughData(format!(
            "no usable association cues ({oov} out of vocabulary)"
        )));
    }
    let hit_ratio = hits as f64 / evaluated as f64;
    let coverage = coverage_sum / evaluated as f64;
    Ok(TaskScore {
        task: Task::Association,
        value: (hit_ratio + coverage) / 2.0,
        aux: BTreeMap::from([
            ("hit_ratio".to_owned(), hit_ratio),
            ("coverage".to_owned(), coverage),
            ("top_n".to_owned(), n as f64),
            ("n_cues".to_owned(), sets.len() as f64),
            ("n_evaluated".to_owned(), evaluated as f64),
            ("n_skipped_oov".to_owned(), oov as f64),
            ("n_skipped_zero".to_owned(), zero as f64),
        ]),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalogyOptions {
    pub epsilon: f64,
    /// Map cosines to (cos + 1) / 2 before combining.
    pub shift: bool,
    pub top_n: usize,
}

impl Default for AnalogyOptions {
    fn default() -> Self {
        AnalogyOptions {
            epsilon: 0.001,
            shift: true,
            top_n: 3,
        }
    }
}

/// The multiplicative analogy score for one candidate from its three cosines.
pub fn three_cos_mul_score(cos_a_star: f64, cos_b: f64, cos_a: f64, opts: &AnalogyOptions) -> f64 {
    let s = |c: f64| if opts.shift { (c + 1.0) / 2.0 } else { c };
    s(cos_a_star) * s(cos_b) / (s(cos_a) + opts.epsilon)
}

fn analogy_ids(emb: &DualEmbedding, q: &AnalogyQuestion) -> Result<[u32; 3]> {
    Ok([emb.id(&q.a)?, emb.id(&q.a_star)?, emb.id(&q.b)?])
}

fn three_cos_mul_scored(emb: &DualEmbedding, cm: CompareMethod, ids: [u32; 3], opts: &AnalogyOptions) -> Result<Vec<(u32, f64)>> {
    let (cue, cand) = emb.unit_spaces(cm);
    let row = |id| cue.row(id).ok_or(Error::UndefinedCosine);
    let (ra, ra_star, rb) = (row(ids[0])?, row(ids[1])?, row(ids[2])?);
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    Ok((0..cand.len() as u32)
        .filter(|id| !ids.contains(id))
        .filter_map(|id| {
            cand.row(id).map(|r| {
                let score = three_cos_mul_score(dot(r, ra_star), dot(r, rb), dot(r, ra), opts);
                (id, score)
            })
        })
        .collect())
}

/// Every candidate answer ranked by the multiplicative analogy score.
/// `a`, `a*` and `b` are read from the cue space and never returned.
pub fn three_cos_mul(emb: &DualEmbedding, cm: CompareMethod, q: &AnalogyQuestion, opts: &AnalogyOptions) -> Result<Vec<Neighbor>> {
    let scored = three_cos_mul_scored(emb, cm, analogy_ids(emb, q)?, opts)?;
    let n = scored.len();
    Ok(top_n(scored, n)
        .into_iter()
        .map(|(id, s)| emb.neighbor(id, s))
        .collect())
}

/// Fraction of questions whose gold answer is among the `top_n` candidates.
pub fn eval_analogy(emb: &DualEmbedding, cm: CompareMethod, questions: &[AnalogyQuestion], opts: &AnalogyOptions) -> Result<TaskScore> {
    if opts.top_n == 0 {
        return Err(Error::InvalidConfig("top_n must be >= 1".into()));
    }
    let (cue, _) = emb.unit_spaces(cm);
    let (mut evaluated, mut answered, mut oov, mut zero) = (0usize, 0usize, 0usize, 0usize);
    for q in questions {
        let (Ok(ids), Some(gold)) = (analogy_ids(emb, q), emb.vocab().id(&q.b_star)) else {
            oov += 1;
            continue;
        };
        if ids.iter().any(|&id| !cue.is_valid(id)) {
            zero += 1;
            continue;
        }
        let best = top_n(three_cos_mul_scored(emb, cm, ids, opts)?, opts.top_n);
        evaluated += 1;
        if best.iter().any(|&(id, _)| id == gold) {
            answered += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::NotEnoughData(format!(
            "no answerable analogy questions ({oov} out of vocabulary)"
        )));
    }
    Ok(TaskScore {
        task: Task::Analogy,
        value: answered as f64 / evaluated as f64,
        aux: BTreeMap::from([
            ("top_n".to_owned(), opts.top_n as f64),
            ("epsilon".to_owned(), opts.epsilon),
            ("shift".to_owned(), if opts.shift { 1.0 } else { 0.0 }),
            ("n_questions".to_owned(), questions.len() as f64),
            ("n_evaluated".to_owned(), evaluated as f64),
            ("n_answered".to_owned(), answered as f64),
            ("n_skipped_oov".to_owned(), oov as f64),
            ("n_skipped_zero".to_owned(), zero as f64),
        ]),
    })
}

/// One line of the results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub trainer: String,
    pub window: usize,
    pub dim: usize,
    pub compare: CompareMethod,
    pub task: Task,
    pub dataset: String,
    pub value: f64,
    pub aux: BTreeMap<String, f64>,
    /// File name of the evaluated embedding.
    pub embedding: String,
    /// Hash of the training configuration that produced the embedding.
    pub config_hash: String,
}

/// Appends one JSON object as a single write on an append-mode file.
pub fn append_result(path: &Path, record: &ResultRecord) -> Result<()> {
    let mut line = serde_json::to_string(record)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize result: {e}")))?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let ctx = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(&ctx, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::matrix::Matrix;

    fn emb(tokens: &[&str], w: Vec<Vec<f32>>, c: Vec<Vec<f32>>) -> DualEmbedding {
        let vocab = Vocabulary::from_entries(tokens.iter().map(|t| (t.to_string(), 1)).collect(), 1).unwrap();
        DualEmbedding::new(vocab, Matrix::from_rows(&w).unwrap(), Matrix::from_rows(&c).unwrap()).unwrap()
    }

    #[test]
    fn similarity_parsing() {
        let pairs = parse_similarity_str("coast\tshore\t9.11\ncoast\thill\t4.38\n", "t", Normalizer::Lowercase).unwrap();
        assert_eq!(pairs[0], SimilarityPair { w1: "coast".into(), w2: "shore".into(), gold: 9.11 });
        assert_eq!(pairs[1].gold, 4.38);
        let err = parse_similarity_str("", "t", Normalizer::Lowercase).unwrap_err();
        assert!(err.to_string().contains("no pairs"));
        let err = parse_similarity_str("a\tb\t1\na\tb\n", "t", Normalizer::Lowercase).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_similarity_str("a\tb\tx\n", "t", Normalizer::Lowercase).is_err());
        let upper = parse_similarity_str("Coast\tShore\t1\n", "t", Normalizer::Lowercase).unwrap();
        assert_eq!(upper[0].w1, "coast");
    }

    #[test]
    fn association_parsing_prunes() {
        let sets = parse_association_str("c\tr1\t0.30\nc\tr2\t0.09\n", "t", 0.10, Normalizer::Lowercase).unwrap();
        assert_eq!(sets, vec![CueResponseSet { cue: "c".into(), responses: BTreeMap::from([("r1".into(), 0.30)]) }]);
        let all = parse_association_str("c\tr1\t0.30\nc\tr2\t0.09\n", "t", 0.0, Normalizer::Lowercase).unwrap();
        assert_eq!(all[0].responses.len(), 2);
        let two = parse_association_str("x\ta\t0.5\ny\tb\t0.2\nx\tc\t0.3\n", "t", 0.1, Normalizer::Lowercase).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].cue, "x");
        assert_eq!(two[0].responses.keys().collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(two[1].responses.keys().collect::<Vec<_>>(), ["b"]);
        let dropped = parse_association_str("x\ta\t0.05\n", "t", 0.1, Normalizer::Lowercase).unwrap();
        assert!(dropped.is_empty());
        assert!(parse_association_str("x\ta\t1.5\n", "t", 0.1, Normalizer::Lowercase).is_err());
        assert!(parse_association_str("x\ta\t-0.1\n", "t", 0.1, Normalizer::Lowercase).is_err());
        assert!(parse_association_str("x\ta\n", "t", 0.1, Normalizer::Lowercase).is_err());
    }

    #[test]
    fn google_parsing() {
        let text = ": capital-common-countries\nAthens Greece Baghdad Iraq\n: family\nboy girl brother sister\n";
        let qs = parse_analogy_google_str(text, "t", Normalizer::None).unwrap();
        assert_eq!(
            qs[0],
            AnalogyQuestion {
                a: "Athens".into(),
                a_star: "Greece".into(),
                b: "Baghdad".into(),
                b_star: "Iraq".into(),
                category: Some("capital-common-countries".into()),
            }
        );
        assert_eq!(qs[1].category.as_deref(), Some("family"));
        let err = parse_analogy_google_str("a b c\n", "t", Normalizer::None).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let tsv = parse_analogy_tsv_str("a\tb\tc\td\tcat\n", "t", Normalizer::None).unwrap();
        assert_eq!(tsv[0].category.as_deref(), Some("cat"));
        assert!(parse_analogy_tsv_str("a\tb\tc\n", "t", Normalizer::None).is_err());
    }

    fn sub(name: &str, n: usize) -> BatsSubclass {
        BatsSubclass {
            name: name.into(),
            pairs: (0..n).map(|i| (format!("a{i}"), format!("b{i}"))).collect(),
        }
    }

    #[test]
    fn bats_two_pairs_partner_each_other() {
        let qs = bats_join(&[sub("E01", 2)], 1);
        assert_eq!(qs.len(), 2);
        assert_eq!((qs[0].b.as_str(), qs[0].b_star.as_str()), ("a1", "b1"));
        assert_eq!((qs[1].b.as_str(), qs[1].b_star.as_str()), ("a0", "b0"));
    }

    #[test]
    fn bats_is_deterministic_and_skips_small() {
        let subs = [sub("L01", 3), sub("L02", 1), sub("D01", 7)];
        let a = bats_join(&subs, 42);
        assert_eq!(a, bats_join(&subs, 42));
        assert_eq!(a.len(), 10);
        for q in &a {
            assert_ne!(q.a, q.b);
        }
        // Partners stay within the subclass.
        assert!(a.iter().all(|q| q.category.as_deref() != Some("L02")));
    }

    #[test]
    fn bats_directory_skips_inflectional() {
        let dir = tempfile::tempdir().unwrap();
        let infl = dir.path().join("1_Inflectional_morphology");
        let lex = dir.path().join("3_Lexicographic_semantics");
        std::fs::create_dir_all(&infl).unwrap();
        std::fs::create_dir_all(&lex).unwrap();
        std::fs::write(infl.join("I01 [noun - plural_reg].txt"), "cat\tcats\ndog\tdogs\n").unwrap();
        std::fs::write(lex.join("L02 [hypernyms - misc].txt"), "Cat\tanimal/beast\noak\ttree\n").unwrap();
        let subs = parse_bats_dir(dir.path(), Normalizer::Lowercase).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].pairs, vec![("cat".into(), "animal".into()), ("oak".into(), "tree".into())]);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 9.0 / 84f64.sqrt()).abs() < 1e-15);
        assert!((r - 0.98198).abs() < 1e-5);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance)));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    fn four() -> DualEmbedding {
        emb(
            &["a", "b", "c", "d"],
            vec![vec![1.0, 0.0], vec![0.8, 0.6], vec![0.0, 1.0], vec![-1.0, 0.1]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.6, 0.8], vec![0.2, -1.0]],
        )
    }

    #[test]
    fn similarity_perfect_when_gold_is_cosine() {
        let e = four();
        let pairs: Vec<SimilarityPair> = [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]
            .iter()
            .map(|&(x, y)| SimilarityPair {
                w1: x.into(),
                w2: y.into(),
                gold: e.similarity(CompareMethod::WW, x, y).unwrap(),
            })
            .collect();
        let s = eval_similarity(&e, CompareMethod::WW, &pairs).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert_eq!(s.aux["n_evaluated"], 4.0);
    }

    #[test]
    fn similarity_skips_oov() {
        let e = four();
        let mut pairs = vec![
            SimilarityPair { w1: "a".into(), w2: "b".into(), gold: 1.0 },
            SimilarityPair { w1: "a".into(), w2: "c".into(), gold: 2.0 },
            SimilarityPair { w1: "a".into(), w2: "zzz".into(), gold: 3.0 },
        ];
        let s = eval_similarity(&e, CompareMethod::WW, &pairs).unwrap();
        assert_eq!(s.aux["n_skipped_oov"], 1.0);
        pairs.truncate(1);
        assert!(eval_similarity(&e, CompareMethod::WW, &pairs).is_err());
    }

    #[test]
    fn association_hit_and_coverage() {
        let e = four();
        // WW neighbors of a: b (0.8), c (0), d (-0.995)
        let sets = vec![CueResponseSet {
            cue: "a".into(),
            responses: BTreeMap::from([("b".into(), 0.5), ("d".into(), 0.2)]),
        }];
        let s = eval_association(&e, CompareMethod::WW, &sets, 1).unwrap();
        assert_eq!(s.aux["hit_ratio"], 1.0);
        assert_eq!(s.aux["coverage"], 0.5);
        assert_eq!(s.value, 0.75);
        let full = eval_association(&e, CompareMethod::WW, &sets, 3).unwrap();
        assert_eq!((full.aux["hit_ratio"], full.aux["coverage"], full.value), (1.0, 1.0, 1.0));
        let oov = vec![CueResponseSet { cue: "q".into(), responses: BTreeMap::from([("a".into(), 1.0)]) }];
        assert!(eval_association(&e, CompareMethod::WW, &oov, 3).is_err());
    }

    #[test]
    fn three_cos_mul_formula() {
        let raw = AnalogyOptions { shift: false, ..AnalogyOptions::default() };
        assert!((three_cos_mul_score(1.0, 1.0, 0.0, &raw) - 1000.0).abs() < 1e-9);
        // shifted cosines 0.5 everywhere = raw cosines 0
        let s = three_cos_mul_score(0.0, 0.0, 0.0, &AnalogyOptions::default());
        assert!((s - 0.25 / 0.501).abs() < 1e-15);
        assert!((s - 0.4990).abs() < 1e-4);
    }

    /// a:a* :: b:b* with b* - b = a* - a exactly.
    fn parallelogram() -> DualEmbedding {
        let rows: Vec<Vec<f32>> = vec![
            vec![1.0, 0.0, 0.0, 0.1],  // man
            vec![1.0, 1.0, 0.0, 0.1],  // king
            vec![0.0, 0.0, 1.0, 0.1],  // woman
            vec![0.0, 1.0, 1.0, 0.1],  // queen
            vec![0.0, 0.0, 0.0, 1.0],   // apple
            vec![0.0, -1.0, -1.0, 0.2], // stone
        ];
        emb(&["man", "king", "woman", "queen", "apple", "stone"], rows.clone(), rows)
    }

    #[test]
    fn analogy_parallelogram_is_solved() {
        let e = parallelogram();
        let q = |a: &str, a_star: &str, b: &str, b_star: &str| AnalogyQuestion {
            a: a.into(),
            a_star: a_star.into(),
            b: b.into(),
            b_star: b_star.into(),
            category: None,
        };
        let qs = vec![q("man", "king", "woman", "queen"), q("woman", "queen", "man", "king"), q("king", "man", "queen", "woman")];
        let ranked = three_cos_mul(&e, CompareMethod::WW, &qs[0], &AnalogyOptions::default()).unwrap();
        assert_eq!(ranked[0].token, "queen");
        assert_eq!(ranked.len(), 3);
        let s = eval_analogy(&e, CompareMethod::WW, &qs, &AnalogyOptions::default()).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.aux["n_evaluated"], 3.0);
    }

    #[test]
    fn analogy_top_n_boundary() {
        let e = parallelogram();
        let q = AnalogyQuestion {
            a: "man".into(),
            a_star: "king".into(),
            b: "woman".into(),
            b_star: String::new(),
            category: None,
        };
        let ranked = three_cos_mul(&e, CompareMethod::WW, &q, &AnalogyOptions::default()).unwrap();
        // Vocabulary of 6 minus the 3 query words leaves exactly 3 candidates;
        // ask with top_n = rank of the gold.
        for (rank, nb) in ranked.iter().enumerate() {
            let gold = AnalogyQuestion { b_star: nb.token.clone(), ..q.clone() };
            let at = |n| {
                eval_analogy(&e, CompareMethod::WW, std::slice::from_ref(&gold), &AnalogyOptions { top_n: n, ..Default::default() })
                    .unwrap()
                    .value
            };
            assert_eq!(at(rank + 1), 1.0);
            if rank > 0 {
                assert_eq!(at(rank), 0.0);
            }
        }
    }

    #[test]
    fn analogy_oov_is_skipped() {
        let e = parallelogram();
        let qs = vec![AnalogyQuestion {
            a: "man".into(),
            a_star: "king".into(),
            b: "nobody".into(),
            b_star: "queen".into(),
            category: None,
        }];
        assert!(eval_analogy(&e, CompareMethod::WW, &qs, &AnalogyOptions::default()).is_err());
        assert!(three_cos_mul(&e, CompareMethod::WW, &qs[0], &AnalogyOptions::default()).is_err());
    }

    #[test]
    fn results_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let rec = ResultRecord {
            trainer: "glove".into(),
            window: 5,
            dim: 25,
            compare: CompareMethod::SS,
            task: Task::Analogy,
            dataset: "mini".into(),
            value: 0.25,
            aux: BTreeMap::from([("n_evaluated".into(), 4.0)]),
            embedding: "glove-w5-d25.dualemb".into(),
            config_hash: "abc".into(),
        };
        append_result(&path, &rec).unwrap();
        append_result(&path, &rec).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(back, vec![rec.clone(), rec]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"compare\":\"SS\""));
    }
}
