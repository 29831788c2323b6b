//! Raw text to sentences of token ids.
//!
//! The pipeline is: split into sentences, tokenize, drop punctuation, drop
//! stopwords, normalize. Sentence boundaries are kept all the way through
//! so that training windows never cross them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalizer {
    None,
    #[default]
    Lowercase,
    /// Lowercase followed by a naive English suffix stripper.
    LowercaseSuffixStrip,
}

impl FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalizer::None),
            "lowercase" => Ok(Normalizer::Lowercase),
            "lowercase+suffix-strip" | "suffix-strip" => Ok(Normalizer::LowercaseSuffixStrip),
            other => Err(Error::InvalidConfig(format!("unknown normalizer `{other}`"))),
        }
    }
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalizer::None => "none",
            Normalizer::Lowercase => "lowercase",
            Normalizer::LowercaseSuffixStrip => "lowercase+suffix-strip",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn empty() -> Self {
        Stopwords::default()
    }

    /// The small English list bundled with the crate.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One token per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords(iter.into_iter().map(Into::into).collect())
    }
}

fn strip_suffix(token: &str) -> String {
    let n = token.chars().count();
    if let Some(stem) = token.strip_suffix("ies") {
        if n > 4 {
            return format!("{stem}y");
        }
    }
    if token.ends_with("sses") {
        return token[..token.len() - 2].to_owned();
    }
    if let Some(stem) = token.strip_suffix("ing") {
        if n > 5 {
            return stem.to_owned();
        }
    }
    if let Some(stem) = token.strip_suffix("ed") {
        if n > 4 {
            return stem.to_owned();
        }
    }
    if token.ends_with('s') && !token.ends_with("ss") && !token.ends_with("us") && n > 3 {
        return token[..token.len() - 1].to_owned();
    }
    token.to_owned()
}

/// Normalizes a single token the same way the corpus pipeline does. Dataset
/// loaders use this so that gold tokens match vocabulary entries.
pub fn normalize_token(token: &str, mode: Normalizer) -> String {
    match mode {
        Normalizer::None => token.to_owned(),
        Normalizer::Lowercase => token.to_lowercase(),
        Normalizer::LowercaseSuffixStrip => strip_suffix(&token.to_lowercase()),
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '’' | '.')
}

/// Splits `text` into sentences of raw (un-normalized) word tokens.
///
/// Sentence boundaries are `.`, `!`, `?` and newlines. A `.`, `-` or
/// apostrophe between two alphanumeric characters is part of the word
/// (`3.5`, `anti-war`, `don't`). Every other non-alphanumeric character is
/// a separator, which deletes punctuation.
fn split_raw(text: &str) -> Vec<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut sentence: Vec<String> = Vec::new();
    let mut word = String::new();

    let flush_word = |word: &mut String, sentence: &mut Vec<String>| {
        if !word.is_empty() {
            sentence.push(std::mem::take(word));
        }
    };

    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        let between_alnum = i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if is_joiner(c) && between_alnum {
            word.push(c);
            continue;
        }
        flush_word(&mut word, &mut sentence);
        if (is_terminal(c) || c == '\n') && !sentence.is_empty() {
            sentences.push(std::mem::take(&mut sentence));
        }
    }
    flush_word(&mut word, &mut sentence);
    if !sentence.is_empty() {
        sentences.push(sentence);
    }
    sentences
}

/// Sentence split, punctuation removal, stopword removal and token
/// normalization. Empty input gives an empty result.
pub fn normalize(text: &str, stopwords: &Stopwords, mode: Normalizer) -> Vec<Vec<String>> {
    split_raw(text)
        .into_iter()
        .map(|raw| {
            raw.into_iter()
                .filter_map(|tok| {
                    let cased = match mode {
                        Normalizer::None => tok,
                        _ => tok.to_lowercase(),
                    };
                    if stopwords.contains(&cased) {
                        return None;
                    }
                    Some(match mode {
                        Normalizer::LowercaseSuffixStrip => strip_suffix(&cased),
                        _ => cased,
                    })
                })
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
}

/// Token frequencies gathered before pruning.
#[derive(Clone, Debug, Default)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
    total: u64,
}

impl TokenCounts {
    pub fn add_sentence<S: AsRef<str>>(&mut self, sentence: &[S]) {
        for tok in sentence {
            *self.counts.entry(tok.as_ref().to_owned()).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn merge(&mut self, other: TokenCounts) {
        for (tok, n) in other.counts {
            *self.counts.entry(tok).or_insert(0) += n;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

impl Vocabulary {
    /// Ids are assigned by descending frequency, ties broken by the token's
    /// byte order.
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], min_count: u64) -> Result<Self> {
        let mut counts = TokenCounts::default();
        for s in sentences {
            counts.add_sentence(s);
        }
        Self::from_counts(counts, min_count)
    }

    pub fn from_counts(counts: TokenCounts, min_count: u64) -> Result<Self> {
        if min_count < 1 {
            return Err(Error::InvalidConfig("min_count must be >= 1".into()));
        }
        let mut kept: Vec<(String, u64)> = counts
            .counts
            .into_iter()
            .filter(|&(_, n)| n >= min_count)
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_entries(kept, counts.total)
    }

    /// Builds a vocabulary from `(token, count)` in id order.
    pub fn from_entries(entries: Vec<(String, u64)>, total_tokens: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut token_to_id = HashMap::with_capacity(entries.len());
        let mut id_to_token = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (id, (tok, n)) in entries.into_iter().enumerate() {
            if token_to_id.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::format("vocabulary", format!("duplicate token `{tok}`")));
            }
            id_to_token.push(tok);
            counts.push(n);
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            counts,
            total_tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Corpus size before pruning.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "VOCAB {} {}", self.len(), self.total_tokens)?;
        for (tok, n) in self.id_to_token.iter().zip(&self.counts) {
            writeln!(out, "{tok}\t{n}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(input: R, context: &str) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(context, "missing VOCAB header"))?
            .map_err(|e| Error::io(context, e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (size, total) = match fields.as_slice() {
            ["VOCAB", size, total] => (
                size.parse::<usize>()
                    .map_err(|_| Error::parse(context, 1, "bad vocabulary size"))?,
                total
                    .parse::<u64>()
                    .map_err(|_| Error::parse(context, 1, "bad token total"))?,
            ),
            _ => return Err(Error::parse(context, 1, "expected `VOCAB <size> <total_tokens>`")),
        };
        let mut entries = Vec::with_capacity(size);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(context, e))?;
            if line.is_empty() {
                continue;
            }
            let (tok, n) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(context, i + 2, "expected `<token>\\t<count>`"))?;
            let n = n
                .parse::<u64>()
                .map_err(|_| Error::parse(context, i + 2, "bad count"))?;
            entries.push((tok.to_owned(), n));
        }
        if entries.len() != size {
            return Err(Error::format(
                context,
                format!("header says {size} tokens, found {}", entries.len()),
            ));
        }
        Self::from_entries(entries, total)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

/// Sentences of token ids. Never contains an empty sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SentenceStream {
    pub sentences: Vec<Vec<u32>>,
}

impl SentenceStream {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// One sentence per line, ids separated by single spaces.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for s in &self.sentences {
            let line = s.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, vocab_size: usize) -> Result<Self> {
        let ctx = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut sentences = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let ids = line
                .split_whitespace()
                .map(|t| match t.parse::<u32>() {
                    Ok(id) if (id as usize) < vocab_size => Ok(id),
                    _ => Err(Error::parse(&ctx, i + 1, format!("bad token id `{t}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if !ids.is_empty() {
                sentences.push(ids);
            }
        }
        Ok(SentenceStream { sentences })
    }
}

fn encode_sentence<S: AsRef<str>>(sentence: &[S], vocab: &Vocabulary) -> Vec<u32> {
    sentence.iter().filter_map(|t| vocab.id(t.as_ref())).collect()
}

/// Maps tokens to ids. Out-of-vocabulary tokens are dropped and sentences
/// left empty are removed.
pub fn encode<S: AsRef<str>>(sentences: &[Vec<S>], vocab: &Vocabulary) -> SentenceStream {
    SentenceStream {
        sentences: sentences
            .iter()
            .map(|s| encode_sentence(s, vocab))
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

pub fn decode(stream: &SentenceStream, vocab: &Vocabulary) -> Vec<Vec<String>> {
    stream
        .sentences
        .iter()
        .map(|s| s.iter().map(|&id| vocab.token(id).to_owned()).collect())
        .collect()
}

/// Single-pass sentence reader over a text source. Each line is normalized
/// independently (a newline always ends a sentence), so memory is bounded by
/// the longest line rather than the corpus.
pub struct SentenceReader<R> {
    lines: std::io::Lines<R>,
    stopwords: Stopwords,
    mode: Normalizer,
    pending: std::vec::IntoIter<Vec<String>>,
}

impl<R: BufRead> SentenceReader<R> {
    pub fn new(reader: R, stopwords: Stopwords, mode: Normalizer) -> Self {
        SentenceReader {
            lines: reader.lines(),
            stopwords,
            mode,
            pending: Vec::new().into_iter(),
        }
    }
}

impl<R: BufRead> Iterator for SentenceReader<R> {
    type Item = std::io::Result<Vec<String>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(s) = self.pending.next() {
                return Some(Ok(s));
            }
            match self.lines.next()? {
                Ok(line) => {
                    self.pending = normalize(&line, &self.stopwords, self.mode).into_iter();
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Encodes a stream of token sentences lazily.
pub fn encode_iter<'a, I>(sentences: I, vocab: &'a Vocabulary) -> impl Iterator<Item = Vec<u32>> + 'a
where
    I: IntoIterator<Item = Vec<String>> + 'a,
{
    sentences
        .into_iter()
        .map(move |s| encode_sentence(&s, vocab))
        .filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|s| s.iter().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn normalize_splits_and_drops_stopwords() {
        let stop: Stopwords = ["the"].into_iter().collect();
        let out = normalize("The cat sat. Dogs ran!", &stop, Normalizer::Lowercase);
        assert_eq!(out, sents(&[&["cat", "sat"], &["dogs", "ran"]]));
    }

    #[test]
    fn normalize_empty() {
        assert!(normalize("", &Stopwords::empty(), Normalizer::Lowercase).is_empty());
        assert!(normalize("  ...!? ", &Stopwords::empty(), Normalizer::Lowercase).is_empty());
    }

    #[test]
    fn normalize_deletes_punctuation() {
        let out = normalize("Hello, world", &Stopwords::empty(), Normalizer::Lowercase);
        assert_eq!(out, sents(&[&["hello", "world"]]));
    }

    #[test]
    fn normalize_keeps_inner_joiners() {
        let out = normalize(
            "It costs 3.5 dollars, don't argue; anti-war (sic).",
            &Stopwords::empty(),
            Normalizer::Lowercase,
        );
        assert_eq!(
            out,
            sents(&[&["it", "costs", "3.5", "dollars", "don't", "argue", "anti-war", "sic"]])
        );
    }

    #[test]
    fn normalize_modes() {
        let none = normalize("Cats Running", &Stopwords::empty(), Normalizer::None);
        assert_eq!(none, sents(&[&["Cats", "Running"]]));
        let strip = normalize(
            "Cats running studies classes walked bus",
            &Stopwords::empty(),
            Normalizer::LowercaseSuffixStrip,
        );
        assert_eq!(
            strip,
            sents(&[&["cat", "runn", "study", "class", "walk", "bus"]])
        );
    }

    #[test]
    fn newline_ends_sentence() {
        let out = normalize("alpha beta\ngamma", &Stopwords::empty(), Normalizer::Lowercase);
        assert_eq!(out, sents(&[&["alpha", "beta"], &["gamma"]]));
    }

    #[test]
    fn build_vocab_prunes_and_orders() {
        let corpus = sents(&[&["a", "a", "a", "b", "b", "c"]]);
        let vocab = Vocabulary::build(&corpus, 2).unwrap();
        assert_eq!(vocab.tokens(), &["a", "b"]);
        assert_eq!(vocab.counts(), &[3, 2]);
        assert_eq!(vocab.total_tokens(), 6);
        assert_eq!(vocab.id("a"), Some(0));
        assert_eq!(vocab.id("c"), None);
    }

    #[test]
    fn build_vocab_min_count_one_keeps_all() {
        let corpus = sents(&[&["x", "y"], &["z", "y"]]);
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(vocab.tokens(), &["y", "x", "z"]);
    }

    #[test]
    fn build_vocab_all_pruned() {
        let corpus = sents(&[&["a", "b"]]);
        assert!(matches!(
            Vocabulary::build(&corpus, 10),
            Err(Error::EmptyVocabulary)
        ));
        assert!(matches!(
            Vocabulary::build(&corpus, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn encode_drops_oov() {
        let vocab = Vocabulary::build(&sents(&[&["a", "b"]]), 1).unwrap();
        assert_eq!(encode(&sents(&[&["a", "x", "b"]]), &vocab).sentences, vec![vec![0, 1]]);
        assert!(encode(&sents(&[&["x"]]), &vocab).is_empty());
        assert_eq!(
            encode(&sents(&[&["a"], &["b"]]), &vocab).sentences,
            vec![vec![0], vec![1]]
        );
    }

    #[test]
    fn vocab_text_round_trip() {
        let vocab = Vocabulary::build(&sents(&[&["b", "a", "a", "c", "c", "c"]]), 1).unwrap();
        let mut buf = Vec::new();
        vocab.write_to(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "VOCAB 3 6\nc\t3\na\t2\nb\t1\n"
        );
        let back = Vocabulary::read_from(&buf[..], "mem").unwrap();
        assert_eq!(back, vocab);
    }

    #[test]
    fn vocab_load_rejects_bad_files() {
        assert!(Vocabulary::read_from(&b"VOCAB 2 5\na\t3\n"[..], "mem").is_err());
        assert!(Vocabulary::read_from(&b"VOCAB 2 5\na\t3\na\t2\n"[..], "mem").is_err());
        assert!(Vocabulary::read_from(&b"VOC 1 1\na\t1\n"[..], "mem").is_err());
    }

    #[test]
    fn sentence_reader_streams() {
        let text = "One two. Three\nfour five!\n";
        let reader = SentenceReader::new(text.as_bytes(), Stopwords::empty(), Normalizer::Lowercase);
        let out: Vec<_> = reader.map(Result::unwrap).collect();
        assert_eq!(out, sents(&[&["one", "two"], &["three"], &["four", "five"]]));
    }
}
