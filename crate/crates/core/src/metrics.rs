//! Built-in BLEU, the two paragraph scoring modes, and token-length
//! statistics.
//!
//! BLEU tokenization splits on whitespace after isolating every Unicode
//! punctuation character (general categories `P*`) as its own token. Text is
//! not lowercased.

use std::collections::{BTreeMap, HashMap};
use std::ops::AddAssign;

use rayon::prelude::*;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};
use crate::model::{ParagraphInstance, RatingRecord, ScoreMode, ScoreTable};

pub const MAX_ORDER: usize = 4;

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Canonical BLEU tokenizer. Tokens borrow from `text`.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if is_punctuation(c) {
                if start < i {
                    tokens.push(&word[start..i]);
                }
                let end = i + c.len_utf8();
                tokens.push(&word[i..end]);
                start = end;
            }
        }
        if start < word.len() {
            tokens.push(&word[start..]);
        }
    }
    tokens
}

/// Clipped n-gram matches and lengths; additive across segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NgramStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl AddAssign for NgramStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += rhs.matches[n];
            self.totals[n] += rhs.totals[n];
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

impl NgramStats {
    pub fn from_tokens(hyp: &[&str], reference: &[&str]) -> Self {
        let mut stats = NgramStats {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
            for gram in reference.windows(n) {
                *ref_counts.entry(gram).or_default() += 1;
            }
            let mut hyp_counts: HashMap<&[&str], usize> = HashMap::new();
            for gram in hyp.windows(n) {
                *hyp_counts.entry(gram).or_default() += 1;
            }
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn from_texts(hyp: &str, reference: &str) -> Self {
        Self::from_tokens(&tokenize(hyp), &tokenize(reference))
    }

    fn brevity_penalty(&self) -> f64 {
        if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// Orders the hypothesis actually contains n-grams of.
    fn effective_order(&self) -> usize {
        self.totals.iter().take_while(|&&t| t > 0).count()
    }

    /// Unsmoothed BLEU; any zero precision gives 0. Orders longer than the
    /// hypothesis are left out of the geometric mean.
    pub fn bleu(&self) -> f64 {
        let order = self.effective_order();
        if order == 0 || self.matches[..order].contains(&0) {
            return 0.0;
        }
        let log_sum: f64 = (0..order)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum();
        100.0 * self.brevity_penalty() * (log_sum / order as f64).exp()
    }

    /// Exponentially smoothed BLEU: the j-th zero precision at order n
    /// becomes `1 / (2^j * total_n)`. Orders the hypothesis is too short to
    /// contain are dropped from the geometric mean.
    pub fn smoothed_bleu(&self) -> f64 {
        let order = self.effective_order();
        if order == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut zero_scale = 1.0;
        for n in 0..order {
            let precision = if self.matches[n] == 0 {
                zero_scale *= 2.0;
                1.0 / (zero_scale * self.totals[n] as f64)
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            };
            log_sum += precision.ln();
        }
        100.0 * self.brevity_penalty() * (log_sum / order as f64).exp()
    }
}

/// Smoothed sentence-level BLEU in [0, 100].
pub fn bleu_sentence(hypothesis: &str, reference: &str) -> f64 {
    NgramStats::from_texts(hypothesis, reference).smoothed_bleu()
}

/// Corpus BLEU: counts pooled over all pairs, no smoothing.
pub fn bleu_corpus(pairs: &[(&str, &str)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::arg("corpus BLEU needs at least one segment"));
    }
    let mut total = NgramStats::default();
    for (hyp, reference) in pairs {
        total += NgramStats::from_texts(hyp, reference);
    }
    Ok(total.bleu())
}

/// Metrics the toolkit can score itself, plus a name for external ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Metric {
    /// BLEU of one segment with unsmoothed counting.
    Bleu,
    /// Exponentially smoothed sentence BLEU.
    SentenceBleu,
    /// Scored elsewhere; only available through score files.
    External(String),
}

impl Metric {
    pub fn name(&self) -> &str {
        match self {
            Metric::Bleu => "bleu",
            Metric::SentenceBleu => "sentbleu",
            Metric::External(name) => name,
        }
    }

    pub fn parse(name: &str) -> Metric {
        match name {
            "bleu" => Metric::Bleu,
            "sentbleu" => Metric::SentenceBleu,
            other => Metric::External(other.to_string()),
        }
    }

    fn segment_score(&self, hypothesis: &str, reference: &str, mode: ScoreMode) -> Result<f64> {
        match self {
            Metric::Bleu => Ok(NgramStats::from_texts(hypothesis, reference).bleu()),
            Metric::SentenceBleu => Ok(bleu_sentence(hypothesis, reference)),
            Metric::External(name) => Err(Error::UnsupportedMode {
                metric: name.clone(),
                mode: mode.to_string(),
            }),
        }
    }
}

fn check_unit(paragraphs: &[ParagraphInstance]) -> Result<&ParagraphInstance> {
    let first = paragraphs
        .first()
        .ok_or_else(|| Error::arg("no paragraphs to score"))?;
    if let Some(p) = paragraphs.iter().find(|p| p.unit_key() != first.unit_key()) {
        return Err(Error::arg(format!(
            "paragraphs span several evaluation units ({} and {})",
            first.unit_key(),
            p.unit_key()
        )));
    }
    Ok(first)
}

fn collect_table(
    metric: &Metric,
    mode: ScoreMode,
    paragraphs: &[ParagraphInstance],
    scores: Vec<f64>,
) -> Result<ScoreTable> {
    let first = &paragraphs[0];
    let mut table = ScoreTable::new(metric.name(), mode, &first.lang_pair, first.k);
    for (p, s) in paragraphs.iter().zip(scores) {
        table
            .insert(&p.system_id, p.item_key(), s)
            .map_err(|e| Error::arg(e.to_string()))?;
    }
    Ok(table)
}

/// Scores each paragraph as one long segment. All paragraphs must share
/// one evaluation unit.
pub fn score_direct(metric: &Metric, paragraphs: &[ParagraphInstance]) -> Result<ScoreTable> {
    check_unit(paragraphs)?;
    let scores = paragraphs
        .par_iter()
        .map(|p| metric.segment_score(&p.hypothesis_text, &p.reference_text, ScoreMode::Direct))
        .collect::<Result<Vec<_>>>()?;
    collect_table(metric, ScoreMode::Direct, paragraphs, scores)
}

/// Sentence lookup used to recover a paragraph's aligned sentence pairs.
pub struct SentenceIndex<'a> {
    by_position: HashMap<(&'a str, &'a str, &'a str, &'a str, usize), &'a RatingRecord>,
}

impl<'a> SentenceIndex<'a> {
    pub fn new(records: &'a [RatingRecord]) -> Self {
        Self {
            by_position: records
                .iter()
                .map(|r| {
                    (
                        (
                            r.dataset_id.as_str(),
                            r.lang_pair.as_str(),
                            r.system_id.as_str(),
                            r.doc_id.as_str(),
                            r.sent_index,
                        ),
                        r,
                    )
                })
                .collect(),
        }
    }

    /// The paragraph's underlying sentence records, in document order.
    pub fn sentences(&self, p: &ParagraphInstance) -> Result<Vec<&'a RatingRecord>> {
        (p.start_index..p.start_index + p.k)
            .map(|i| {
                self.by_position
                    .get(&(
                        p.dataset_id.as_str(),
                        p.lang_pair.as_str(),
                        p.system_id.as_str(),
                        p.doc_id.as_str(),
                        i,
                    ))
                    .copied()
                    .ok_or_else(|| Error::MissingSentence {
                        system_id: p.system_id.clone(),
                        doc_id: p.doc_id.clone(),
                        index: i,
                    })
            })
            .collect()
    }
}

/// Mean of the sentence-level metric over each paragraph's k aligned
/// sentence pairs.
pub fn score_aligned_avg(
    metric: &Metric,
    paragraphs: &[ParagraphInstance],
    sentences: &SentenceIndex<'_>,
) -> Result<ScoreTable> {
    if let Metric::External(name) = metric {
        return Err(Error::UnsupportedMode {
            metric: name.clone(),
            mode: ScoreMode::AlignedAvg.to_string(),
        });
    }
    check_unit(paragraphs)?;
    let scores = paragraphs
        .par_iter()
        .map(|p| {
            let sents = sentences.sentences(p)?;
            let mut sum = 0.0;
            for s in &sents {
                sum += metric.segment_score(
                    &s.hypothesis_text,
                    &s.reference_text,
                    ScoreMode::AlignedAvg,
                )?;
            }
            Ok(sum / sents.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    collect_table(metric, ScoreMode::AlignedAvg, paragraphs, scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenCounter {
    Whitespace,
    Chars,
}

impl TokenCounter {
    pub fn count(&self, text: &str) -> usize {
        match self {
            TokenCounter::Whitespace => text.split_whitespace().count(),
            TokenCounter::Chars => text.chars().count(),
        }
    }

    /// (reference, hypothesis) counts; precomputed counts win.
    pub fn paragraph_counts(&self, p: &ParagraphInstance) -> (usize, usize) {
        (
            p.token_count_ref
                .unwrap_or_else(|| self.count(&p.reference_text)),
            p.token_count_hyp
                .unwrap_or_else(|| self.count(&p.hypothesis_text)),
        )
    }
}

/// Nearest-rank percentile of an ascending slice.
fn nearest_rank(sorted: &[usize], percentile: f64) -> usize {
    let n = sorted.len();
    let exact = percentile * n as f64 / 100.0;
    let nearest = exact.round();
    // p * n / 100 landing a hair above an integer must not bump the rank.
    let rank = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    sorted[(rank as usize).clamp(1, n) - 1]
}

/// Hypothesis token-count percentiles per k, in the order requested.
pub fn length_percentiles(
    paragraphs: &[ParagraphInstance],
    counter: TokenCounter,
    percentiles: &[f64],
) -> Result<BTreeMap<usize, Vec<usize>>> {
    if let Some(p) = percentiles.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
        return Err(Error::arg(format!("percentile {p} is outside (0, 100)")));
    }
    let mut by_k: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in paragraphs {
        by_k.entry(p.k)
            .or_default()
            .push(counter.paragraph_counts(p).1);
    }
    Ok(by_k
        .into_iter()
        .map(|(k, mut counts)| {
            counts.sort_unstable();
            (
                k,
                percentiles
                    .iter()
                    .map(|&p| nearest_rank(&counts, p))
                    .collect(),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationStat {
    pub truncated: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Paragraphs whose reference plus hypothesis token count exceeds `budget`,
/// per k.
pub fn truncation_stats(
    paragraphs: &[ParagraphInstance],
    counter: TokenCounter,
    budget: usize,
) -> Result<BTreeMap<usize, TruncationStat>> {
    if budget == 0 {
        return Err(Error::arg("token budget must be at least 1"));
    }
    let mut by_k: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for p in paragraphs {
        let (r, h) = counter.paragraph_counts(p);
        let entry = by_k.entry(p.k).or_default();
        entry.1 += 1;
        if r + h > budget {
            entry.0 += 1;
        }
    }
    Ok(by_k
        .into_iter()
        .map(|(k, (truncated, total))| {
            (
                k,
                TruncationStat {
                    truncated,
                    total,
                    fraction: truncated as f64 / total as f64,
                },
            )
        })
        .collect())
}
