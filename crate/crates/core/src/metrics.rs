//! Corpus-level caption metrics: BLEU@1-4, ROUGE-L and CIDEr.
//!
//! Clips are scored in id order, so every metric is exactly invariant to the
//! order in which clips were added.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::tokenize;
use crate::error::{Error, Result};

const ROUGE_BETA: f64 = 1.2;
const CIDER_MAX_N: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry<T> {
    pub candidate: Vec<T>,
    pub references: Vec<Vec<T>>,
}

/// One candidate and at least one reference per clip id.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCorpus<T> {
    entries: BTreeMap<String, EvalEntry<T>>,
}

impl<T> Default for EvalCorpus<T> {
    fn default() -> Self {
        EvalCorpus {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: Clone + Ord> EvalCorpus<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, candidate: Vec<T>, references: Vec<Vec<T>>) -> Result<()> {
        let id = id.into();
        if references.is_empty() {
            return Err(Error::contract(format!("clip {id} has no references")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::contract(format!("clip {id} appears twice")));
        }
        self.entries.insert(id, EvalEntry { candidate, references });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &EvalEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::contract("cannot score an empty corpus"));
        }
        Ok(())
    }
}

impl EvalCorpus<String> {
    /// Builds a corpus from raw sentences, tokenizing both sides identically.
    pub fn from_sentences<'a>(
        rows: impl IntoIterator<Item = (&'a str, &'a str, Vec<&'a str>)>,
    ) -> Result<Self> {
        let mut c = EvalCorpus::new();
        for (id, cand, refs) in rows {
            c.insert(id, tokenize(cand), refs.into_iter().map(tokenize).collect())?;
        }
        Ok(c)
    }
}

fn ngram_counts<T: Clone + Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with clipped n-gram precision, geometric mean over orders
/// 1..=n and a brevity penalty against the closest reference length.
/// An order with no matches makes the score 0 (no smoothing).
pub fn bleu<T: Clone + Ord>(corpus: &EvalCorpus<T>, n: usize) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(Error::contract(format!("BLEU order must be 1..=4, got {n}")));
    }
    corpus.require_nonempty()?;
    let mut matches = vec![0usize; n];
    let mut totals = vec![0usize; n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for e in corpus.entries.values() {
        let c = e.candidate.len();
        cand_len += c;
        ref_len += e
            .references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&r| (r.abs_diff(c), r))
            .expect("at least one reference");
        for k in 1..=n {
            let cand = ngram_counts(&e.candidate, k);
            let mut max_ref: BTreeMap<&[T], usize> = BTreeMap::new();
            for r in &e.references {
                for (g, cnt) in ngram_counts(r, k) {
                    let m = max_ref.entry(g).or_insert(0);
                    *m = (*m).max(cnt);
                }
            }
            for (g, cnt) in &cand {
                matches[k - 1] += (*cnt).min(max_ref.get(g).copied().unwrap_or(0));
                totals[k - 1] += cnt;
            }
        }
    }
    if cand_len == 0 || matches.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * log_p.exp())
}

fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l_pair<T: Eq>(cand: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(cand, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean over clips of the best LCS F-measure against any reference.
pub fn rouge_l<T: Clone + Ord>(corpus: &EvalCorpus<T>) -> Result<f64> {
    corpus.require_nonempty()?;
    let total: f64 = corpus
        .entries
        .values()
        .map(|e| {
            e.references
                .iter()
                .map(|r| rouge_l_pair(&e.candidate, r))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / corpus.len() as f64)
}

/// TF-IDF weighted n-gram vector, keyed by n-gram.
fn tfidf<'a, T: Clone + Ord>(
    tokens: &'a [T],
    n: usize,
    df: &BTreeMap<&[T], usize>,
    log_n: f64,
) -> BTreeMap<&'a [T], f64> {
    let counts = ngram_counts(tokens, n);
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, c)| {
            let idf = log_n - (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
            (g, c as f64 / total as f64 * idf)
        })
        .collect()
}

fn cosine<T: Ord>(a: &BTreeMap<&[T], f64>, b: &BTreeMap<&[T], f64>) -> f64 {
    let na: f64 = a.values().map(|x| x * x).sum();
    let nb: f64 = b.values().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb).sqrt()
}

/// CIDEr: per order, cosine of TF-IDF vectors averaged over references;
/// orders 1..=4 averaged, clips averaged, times 10. Document frequencies are
/// counted over clips' reference sets.
pub fn cider<T: Clone + Ord>(corpus: &EvalCorpus<T>) -> Result<f64> {
    corpus.require_nonempty()?;
    if corpus.len() < 2 {
        return Err(Error::contract(
            "CIDEr needs at least two clips: IDF weights are undefined for a single document",
        ));
    }
    let log_n = (corpus.len() as f64).ln();
    let mut per_clip = vec![0.0; corpus.len()];
    for n in 1..=CIDER_MAX_N {
        let mut df: BTreeMap<&[T], usize> = BTreeMap::new();
        for e in corpus.entries.values() {
            let grams: BTreeSet<&[T]> = e
                .references
                .iter()
                .flat_map(|r| ngram_counts(r, n).into_keys())
                .collect();
            for g in grams {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        for (score, e) in per_clip.iter_mut().zip(corpus.entries.values()) {
            let cand = tfidf(&e.candidate, n, &df, log_n);
            let sum: f64 = e
                .references
                .iter()
                .map(|r| cosine(&cand, &tfidf(r, n, &df, log_n)))
                .sum();
            *score += sum / e.references.len() as f64;
        }
    }
    let mean = per_clip.iter().sum::<f64>() / corpus.len() as f64;
    Ok(10.0 * mean / CIDER_MAX_N as f64)
}
