//! Streaming n-gram diversity: distinct n-gram ratio and n-gram entropy.
//!
//! N-grams are keyed by a 64-bit xxh3 hash of their token ids, so memory
//! grows with the number of distinct n-grams, not their length. Collisions
//! are possible in principle (about one expected per 6e9 distinct n-grams)
//! and are not detected.
//!
//! Tokenization is up to the caller. Token ids are `u32`; text corpora go
//! through a [`Vocabulary`] that interns whitespace-separated tokens.
//! When document boundaries are honoured, no n-gram spans two documents.

use std::collections::BTreeMap;
use std::io::{BufRead, Read};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

#[derive(Debug, Error)]
pub enum DiversityError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("invalid UTF-8 at byte offset {0}")]
    InvalidUtf8(u64),
    #[error("truncated input at byte offset {offset}: {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("vocabulary exceeds {} distinct tokens", u32::MAX)]
    VocabularyFull,
    #[error("read error at byte offset {offset}: {source}")]
    Io { offset: u64, source: std::io::Error },
}

/// One element of a token stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamEvent {
    Token(u32),
    DocumentEnd,
}

impl From<u32> for StreamEvent {
    fn from(t: u32) -> Self {
        StreamEvent::Token(t)
    }
}

/// Counts for one n-gram order.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramStats {
    pub n: usize,
    pub distinct: u64,
    pub total: u64,
    /// `distinct / total`, or 1.0 when there are no n-grams.
    pub ratio: f64,
    /// Set when `ratio` is the empty-set convention rather than a measurement.
    pub ratio_defaulted: bool,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub per_n: Vec<NgramStats>,
    pub tokens: u64,
}

impl DiversityReport {
    pub fn order(&self, n: usize) -> Option<&NgramStats> {
        self.per_n.iter().find(|s| s.n == n)
    }
}

/// Incremental n-gram counter for orders `n_min..=n_max`.
#[derive(Debug, Clone)]
pub struct NgramCounter {
    n_min: usize,
    n_max: usize,
    /// Little-endian bytes of the last `n_max` tokens of the current document.
    window: Vec<u8>,
    counts: Vec<FxHashMap<u64, u64>>,
    totals: Vec<u64>,
    tokens: u64,
}

impl NgramCounter {
    pub fn new(n_max: usize) -> Result<Self, DiversityError> {
        Self::with_orders(1, n_max)
    }

    pub fn with_orders(n_min: usize, n_max: usize) -> Result<Self, DiversityError> {
        if n_min == 0 || n_max < n_min {
            return Err(DiversityError::ZeroOrder);
        }
        let orders = n_max - n_min + 1;
        Ok(Self {
            n_min,
            n_max,
            window: Vec::with_capacity(4 * n_max),
            counts: vec![FxHashMap::default(); orders],
            totals: vec![0; orders],
            tokens: 0,
        })
    }

    pub fn push_token(&mut self, token: u32) {
        if self.window.len() == 4 * self.n_max {
            self.window.drain(..4);
        }
        self.window.extend_from_slice(&token.to_le_bytes());
        self.tokens += 1;
        let held = self.window.len() / 4;
        for n in self.n_min..=self.n_max.min(held) {
            let key = xxh3_64(&self.window[4 * (held - n)..]);
            let slot = n - self.n_min;
            *self.counts[slot].entry(key).or_insert(0) += 1;
            self.totals[slot] += 1;
        }
    }

    /// Closes the current document; later tokens start fresh n-grams.
    pub fn end_document(&mut self) {
        self.window.clear();
    }

    pub fn push_document(&mut self, tokens: &[u32]) {
        self.end_document();
        for &t in tokens {
            self.push_token(t);
        }
        self.end_document();
    }

    pub fn push(&mut self, event: StreamEvent) {
        match event {
            StreamEvent::Token(t) => self.push_token(t),
            StreamEvent::DocumentEnd => self.end_document(),
        }
    }

    /// Adds another counter's totals. Both must track the same orders and
    /// should have been fed whole documents.
    pub fn merge(&mut self, other: NgramCounter) {
        assert_eq!(
            (self.n_min, self.n_max),
            (other.n_min, other.n_max),
            "merging counters of different orders"
        );
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts) {
            if mine.len() < theirs.len() {
                let small = std::mem::replace(mine, theirs);
                for (k, v) in small {
                    *mine.entry(k).or_insert(0) += v;
                }
            } else {
                for (k, v) in theirs {
                    *mine.entry(k).or_insert(0) += v;
                }
            }
        }
        for (a, b) in self.totals.iter_mut().zip(other.totals) {
            *a += b;
        }
        self.tokens += other.tokens;
    }

    pub fn report(&self) -> DiversityReport {
        let per_n = (self.n_min..=self.n_max)
            .map(|n| {
                let slot = n - self.n_min;
                let map = &self.counts[slot];
                let total = self.totals[slot];
                let distinct = map.len() as u64;
                let (ratio, ratio_defaulted) = if total == 0 {
                    (1.0, true)
                } else {
                    (distinct as f64 / total as f64, false)
                };
                NgramStats {
                    n,
                    distinct,
                    total,
                    ratio,
                    ratio_defaulted,
                    entropy_bits: entropy_from_counts(map.values().copied(), total),
                }
            })
            .collect();
        DiversityReport {
            per_n,
            tokens: self.tokens,
        }
    }
}

/// Shannon entropy in bits of a frequency table, evaluated through its
/// count-of-counts histogram so the result does not depend on iteration
/// order.
fn entropy_from_counts(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    for c in counts {
        *histogram.entry(c).or_insert(0) += 1;
    }
    if histogram.len() <= 1 {
        // uniform (or empty): log2 of the number of distinct items
        let distinct = histogram.values().next().copied().unwrap_or(0);
        return if distinct <= 1 {
            0.0
        } else {
            (distinct as f64).log2()
        };
    }
    let n = total as f64;
    let weighted: f64 = histogram
        .iter()
        .map(|(&c, &f)| f as f64 * c as f64 * (c as f64).log2())
        .sum();
    (n.log2() - weighted / n).max(0.0)
}

fn single_order<I>(stream: I, n: usize) -> Result<NgramStats, DiversityError>
where
    I: IntoIterator,
    I::Item: Into<StreamEvent>,
{
    if n == 0 {
        return Err(DiversityError::ZeroOrder);
    }
    let mut counter = NgramCounter::with_orders(n, n)?;
    for ev in stream {
        counter.push(ev.into());
    }
    Ok(counter.report().per_n.remove(0))
}

/// Unique n-grams over total n-grams. Returns `(1.0, true)` when the stream
/// holds no n-gram of this order.
pub fn distinct_ngram_ratio<I>(stream: I, n: usize) -> Result<(f64, bool), DiversityError>
where
    I: IntoIterator,
    I::Item: Into<StreamEvent>,
{
    single_order(stream, n).map(|s| (s.ratio, s.ratio_defaulted))
}

/// Entropy in bits of the empirical n-gram distribution.
pub fn ngram_entropy<I>(stream: I, n: usize) -> Result<f64, DiversityError>
where
    I: IntoIterator,
    I::Item: Into<StreamEvent>,
{
    single_order(stream, n).map(|s| s.entropy_bits)
}

/// All orders `1..=n_max` in one pass.
pub fn profile_corpus<I>(stream: I, n_max: usize) -> Result<DiversityReport, DiversityError>
where
    I: IntoIterator,
    I::Item: Into<StreamEvent>,
{
    let mut counter = NgramCounter::new(n_max)?;
    for ev in stream {
        counter.push(ev.into());
    }
    Ok(counter.report())
}

/// Per-document sharded profile; identical to feeding the documents in
/// order with boundaries.
pub fn profile_documents_parallel(
    documents: &[Vec<u32>],
    n_max: usize,
) -> Result<DiversityReport, DiversityError> {
    let empty = NgramCounter::new(n_max)?;
    let merged = documents
        .par_iter()
        .fold(
            || empty.clone(),
            |mut c, doc| {
                c.push_document(doc);
                c
            },
        )
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(b);
                a
            },
        );
    Ok(merged.report())
}

/// Interns string tokens to dense ids in first-seen order.
#[derive(Debug, Default, Clone)]
pub struct Vocabulary {
    ids: FxHashMap<Box<str>, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn id(&mut self, token: &str) -> Result<u32, DiversityError> {
        if let Some(&id) = self.ids.get(token) {
            return Ok(id);
        }
        let id = u32::try_from(self.ids.len()).map_err(|_| DiversityError::VocabularyFull)?;
        self.ids.insert(token.into(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Whitespace-splits a line into ids.
    pub fn tokenize(&mut self, line: &str) -> Result<Vec<u32>, DiversityError> {
        line.split_whitespace().map(|t| self.id(t)).collect()
    }
}

/// Feeds a newline-delimited text corpus into `counter`. Each line is a
/// document; with `boundaries` off the lines form one continuous stream.
pub fn feed_text<R: BufRead>(
    mut reader: R,
    counter: &mut NgramCounter,
    vocab: &mut Vocabulary,
    boundaries: bool,
) -> Result<(), DiversityError> {
    let mut offset = 0u64;
    let mut line = Vec::new();
    loop {
        line.clear();
        let read = reader
            .read_until(b'\n', &mut line)
            .map_err(|source| DiversityError::Io { offset, source })?;
        if read == 0 {
            break;
        }
        let text = std::str::from_utf8(&line)
            .map_err(|e| DiversityError::InvalidUtf8(offset + e.valid_up_to() as u64))?;
        for tok in text.split_whitespace() {
            counter.push_token(vocab.id(tok)?);
        }
        if boundaries {
            counter.end_document();
        }
        offset += read as u64;
    }
    counter.end_document();
    Ok(())
}

/// Feeds a binary corpus: per document a little-endian `u32` token count
/// followed by that many little-endian `u32` token ids.
pub fn feed_binary<R: Read>(
    reader: R,
    counter: &mut NgramCounter,
    boundaries: bool,
) -> Result<(), DiversityError> {
    let mut reader = std::io::BufReader::new(reader);
    let mut offset = 0u64;
    let mut word = [0u8; 4];
    loop {
        match read_word(&mut reader, &mut word, offset)? {
            0 => break,
            4 => {}
            _ => {
                return Err(DiversityError::Truncated {
                    offset,
                    what: "incomplete document length",
                })
            }
        }
        let len = u32::from_le_bytes(word);
        offset += 4;
        for _ in 0..len {
            if read_word(&mut reader, &mut word, offset)? != 4 {
                return Err(DiversityError::Truncated {
                    offset,
                    what: "document shorter than its declared length",
                });
            }
            counter.push_token(u32::from_le_bytes(word));
            offset += 4;
        }
        if boundaries {
            counter.end_document();
        }
    }
    counter.end_document();
    Ok(())
}

fn read_word<R: Read>(r: &mut R, buf: &mut [u8; 4], offset: u64) -> Result<usize, DiversityError> {
    let mut got = 0;
    while got < 4 {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(source) => {
                return Err(DiversityError::Io {
                    offset: offset + got as u64,
                    source,
                })
            }
        }
    }
    Ok(got)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    const A: u32 = 0;
    const B: u32 = 1;
    const C: u32 = 2;
    const D: u32 = 3;

    #[test]
    fn ratio_examples() {
        assert_eq!(
            distinct_ngram_ratio([A, A, A, A], 1).unwrap(),
            (0.25, false)
        );
        assert_eq!(
            distinct_ngram_ratio([A, B, A, B, A], 2).unwrap(),
            (0.5, false)
        );
        assert_eq!(distinct_ngram_ratio([A, B, C, D], 2).unwrap(), (1.0, false));
        assert_eq!(
            distinct_ngram_ratio(Vec::<u32>::new(), 2).unwrap(),
            (1.0, true)
        );
        assert!(matches!(
            distinct_ngram_ratio([A], 0),
            Err(DiversityError::ZeroOrder)
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(ngram_entropy([A, B, C, D], 1).unwrap(), 2.0);
        assert_eq!(ngram_entropy([A, A, A], 1).unwrap(), 0.0);
        assert_eq!(ngram_entropy([A, A, B, B], 1).unwrap(), 1.0);
        assert!(ngram_entropy([A], 0).is_err());
    }

    #[test]
    fn boundaries_block_spanning_ngrams() {
        use StreamEvent::*;
        let events = [Token(A), Token(B), DocumentEnd, Token(A), Token(B)];
        let r = profile_corpus(events, 2).unwrap();
        assert_eq!(r.order(2).unwrap().total, 2);
        assert_eq!(r.order(2).unwrap().distinct, 1);
        let r = profile_corpus([A, B, A, B], 2).unwrap();
        assert_eq!(r.order(2).unwrap().total, 3);
    }

    #[test]
    fn empty_corpus() {
        let r = profile_corpus(Vec::<u32>::new(), 3).unwrap();
        assert_eq!(r.tokens, 0);
        for s in &r.per_n {
            assert_eq!((s.distinct, s.total, s.entropy_bits), (0, 0, 0.0));
            assert!(s.ratio_defaulted);
        }
    }

    fn random_docs(rng: &mut ChaCha8Rng, max_tokens: usize, alphabet: u32) -> Vec<Vec<u32>> {
        let n_docs = rng.random_range(1..6);
        (0..n_docs)
            .map(|_| {
                let len = rng.random_range(0..=max_tokens / n_docs);
                (0..len).map(|_| rng.random_range(0..alphabet)).collect()
            })
            .collect()
    }

    fn exact_counts(docs: &[Vec<u32>], n: usize) -> HashMap<Vec<u32>, u64> {
        let mut m = HashMap::new();
        for d in docs {
            if d.len() >= n {
                for w in d.windows(n) {
                    *m.entry(w.to_vec()).or_insert(0) += 1;
                }
            }
        }
        m
    }

    fn exact_entropy(m: &HashMap<Vec<u32>, u64>) -> f64 {
        let total: u64 = m.values().sum();
        m.values()
            .map(|&c| {
                let p = c as f64 / total as f64;
                -p * p.log2()
            })
            .sum()
    }

    #[test]
    fn hashed_counts_match_exact_tuple_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let alphabet = rng.random_range(1..=16);
            let docs = random_docs(&mut rng, 1000, alphabet);
            let mut counter = NgramCounter::new(4).unwrap();
            for d in &docs {
                counter.push_document(d);
            }
            let report = counter.report();
            for n in 1..=4 {
                let exact = exact_counts(&docs, n);
                let s = report.order(n).unwrap();
                assert_eq!(s.distinct, exact.len() as u64);
                assert_eq!(s.total, exact.values().sum::<u64>());
                assert_eq!(
                    s.total,
                    docs.iter()
                        .map(|d| d.len().saturating_sub(n - 1) as u64)
                        .sum::<u64>()
                );
                assert!((s.entropy_bits - exact_entropy(&exact)).abs() < 1e-9);
                if s.distinct > 0 {
                    assert!(s.entropy_bits <= (s.distinct as f64).log2() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn profile_matches_single_order_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let tokens: Vec<u32> = (0..10_000).map(|_| rng.random_range(0..50)).collect();
            let report = profile_corpus(tokens.iter().copied(), 4).unwrap();
            for n in 1..=4 {
                let s = report.order(n).unwrap();
                assert_eq!(
                    (s.ratio, s.ratio_defaulted),
                    distinct_ngram_ratio(tokens.iter().copied(), n).unwrap()
                );
                assert_eq!(
                    s.entropy_bits,
                    ngram_entropy(tokens.iter().copied(), n).unwrap()
                );
            }
        }
    }

    #[test]
    fn entropy_bound_tight_only_for_uniform() {
        let uniform = profile_corpus([A, B, C, A, B, C], 1).unwrap();
        let s = uniform.order(1).unwrap();
        assert_eq!(s.entropy_bits, 3f64.log2());
        let skewed = profile_corpus([A, A, B, C], 1).unwrap();
        let s = skewed.order(1).unwrap();
        assert!(s.entropy_bits < 3f64.log2());
    }

    #[test]
    fn duplicated_corpus_keeps_distinct_and_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let doc: Vec<u32> = (0..200).map(|_| rng.random_range(0..8)).collect();
            let mut once = NgramCounter::new(3).unwrap();
            once.push_document(&doc);
            let mut twice = NgramCounter::new(3).unwrap();
            twice.push_document(&doc);
            twice.push_document(&doc);
            let (r1, r2) = (once.report(), twice.report());
            for (a, b) in r1.per_n.iter().zip(&r2.per_n) {
                assert_eq!(a.distinct, b.distinct);
                assert_eq!(2 * a.total, b.total);
                assert_eq!(a.ratio / 2.0, b.ratio);
                assert!((a.entropy_bits - b.entropy_bits).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn totals_shrink_with_order() {
        let r = profile_corpus([A, B, C, D, A], 5).unwrap();
        for w in r.per_n.windows(2) {
            assert!(w[1].total <= w[0].total);
        }
        assert_eq!(r.order(5).unwrap().total, 1);
    }

    #[test]
    fn parallel_profile_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let docs: Vec<Vec<u32>> = (0..300)
            .map(|_| {
                (0..rng.random_range(0..400))
                    .map(|_| rng.random_range(0..100))
                    .collect()
            })
            .collect();
        let mut seq = NgramCounter::new(4).unwrap();
        for d in &docs {
            seq.push_document(d);
        }
        assert_eq!(profile_documents_parallel(&docs, 4).unwrap(), seq.report());
    }

    #[test]
    fn text_and_binary_readers() {
        let mut c = NgramCounter::new(2).unwrap();
        let mut v = Vocabulary::new();
        feed_text("a a a a".as_bytes(), &mut c, &mut v, false).unwrap();
        let r = c.report();
        assert_eq!(
            (r.per_n[0].distinct, r.per_n[0].total, r.per_n[0].ratio),
            (1, 4, 0.25)
        );
        assert_eq!((r.per_n[1].distinct, r.per_n[1].total), (1, 3));

        let mut bytes = Vec::new();
        for doc in [[7u32, 8].as_slice(), [7, 8, 9].as_slice()] {
            bytes.extend_from_slice(&(doc.len() as u32).to_le_bytes());
            for t in doc {
                bytes.extend_from_slice(&t.to_le_bytes());
            }
        }
        let mut c = NgramCounter::new(2).unwrap();
        feed_binary(bytes.as_slice(), &mut c, true).unwrap();
        let r = c.report();
        assert_eq!(r.tokens, 5);
        assert_eq!((r.per_n[1].distinct, r.per_n[1].total), (2, 3));

        let mut c = NgramCounter::new(2).unwrap();
        let err = feed_binary(&bytes[..bytes.len() - 2], &mut c, true).unwrap_err();
        assert!(
            matches!(err, DiversityError::Truncated { offset: 24, .. }),
            "{err}"
        );

        let mut c = NgramCounter::new(2).unwrap();
        let err = feed_text(
            &b"ok\nbad \xff token\n"[..],
            &mut c,
            &mut Vocabulary::new(),
            true,
        )
        .unwrap_err();
        assert!(matches!(err, DiversityError::InvalidUtf8(7)), "{err}");
    }
}
