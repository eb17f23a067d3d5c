//! Independent oracles and fixture generators shared by the integration
//! tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use paraeval::{EvalItem, ItemKey, ItemScores, RatingRecord, ScoreType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sliding-window oracle over one document.
///
/// `layout[i]` is the rater of sentence i, or `None` when unrated. Computes
/// the length of the same-rater run ending at each position, then walks left
/// to right taking the earliest window end whose run covers k positions and
/// that starts after the previous window.
pub fn paragraph_oracle(layout: &[Option<u8>], k: usize) -> Vec<usize> {
    let mut run = vec![0usize; layout.len()];
    for i in 0..layout.len() {
        run[i] = match layout[i] {
            None => 0,
            Some(r) if i > 0 && layout[i - 1] == Some(r) => run[i - 1] + 1,
            Some(_) => 1,
        };
    }
    let mut starts = Vec::new();
    let mut next_free = 0;
    for end in 0..layout.len() {
        if run[end] >= k && end + 1 >= next_free + k {
            let start = end + 1 - k;
            starts.push(start);
            next_free = end + 1;
        }
    }
    starts
}

/// Ratings for one (system, doc) layout. Unrated positions get no record.
pub fn layout_records(system: &str, doc: &str, layout: &[Option<u8>]) -> Vec<RatingRecord> {
    layout
        .iter()
        .enumerate()
        .filter_map(|(i, rater)| {
            rater.map(|r| RatingRecord {
                dataset_id: "synthetic".into(),
                lang_pair: "en-de".into(),
                system_id: system.into(),
                doc_id: doc.into(),
                sent_index: i,
                rater_id: format!("rater{r}"),
                score: -((i % 7) as f64),
                score_type: ScoreType::Mqm,
                source_text: format!("s{i}"),
                reference_text: format!("r{i}"),
                hypothesis_text: format!("h{i}"),
                token_count_ref: None,
                token_count_hyp: None,
            })
        })
        .collect()
}

pub fn random_layout(rng: &mut impl Rng) -> Vec<Option<u8>> {
    let len = rng.random_range(0..=30);
    let raters = rng.random_range(1..=4u8);
    let rated_prob = rng.random_range(0.3..1.0);
    let stickiness = rng.random_range(0.0..1.0);
    let mut current = rng.random_range(0..raters);
    (0..len)
        .map(|_| {
            if rng.random_bool(1.0 - stickiness) {
                current = rng.random_range(0..raters);
            }
            rng.random_bool(rated_prob).then_some(current)
        })
        .collect()
}

/// Counts occurrences of `gram` in `tokens` by scanning every position.
fn occurrences(tokens: &[u32], gram: &[u32]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| &tokens[i..i + gram.len()] == gram)
        .count()
}

/// Clipped matches and hypothesis n-gram totals for orders 1..=4, by
/// enumerating each distinct hypothesis n-gram once.
pub fn naive_counts(hyp: &[u32], reference: &[u32]) -> ([usize; 4], [usize; 4]) {
    let mut matches = [0; 4];
    let mut totals = [0; 4];
    for n in 1..=4 {
        if hyp.len() < n {
            continue;
        }
        totals[n - 1] = hyp.len() - n + 1;
        for i in 0..=hyp.len() - n {
            let gram = &hyp[i..i + n];
            let first = (0..i).all(|j| &hyp[j..j + n] != gram);
            if first {
                matches[n - 1] += occurrences(hyp, gram).min(occurrences(reference, gram));
            }
        }
    }
    (matches, totals)
}

fn brevity(c: usize, r: usize) -> f64 {
    if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Unsmoothed corpus BLEU from pooled naive counts.
pub fn naive_corpus_bleu(pairs: &[(Vec<u32>, Vec<u32>)]) -> f64 {
    let (mut m, mut t, mut c, mut r) = ([0usize; 4], [0usize; 4], 0, 0);
    for (h, rf) in pairs {
        let (pm, pt) = naive_counts(h, rf);
        for n in 0..4 {
            m[n] += pm[n];
            t[n] += pt[n];
        }
        c += h.len();
        r += rf.len();
    }
    // Orders with no hypothesis n-grams at all are skipped.
    let orders = (0..4).filter(|&n| t[n] > 0).count();
    if orders == 0 || m[..orders].contains(&0) {
        return 0.0;
    }
    let geo: f64 = (0..orders)
        .map(|n| (m[n] as f64 / t[n] as f64).ln())
        .sum::<f64>()
        / orders as f64;
    100.0 * brevity(c, r) * geo.exp()
}

/// Sentence BLEU with exponential smoothing over the orders present.
pub fn naive_sentence_bleu(hyp: &[u32], reference: &[u32]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let (m, t) = naive_counts(hyp, reference);
    let orders = hyp.len().min(4);
    let mut zeros = 0;
    let mut logs = 0.0;
    for n in 0..orders {
        let p = if m[n] == 0 {
            zeros += 1;
            1.0 / (2f64.powi(zeros) * t[n] as f64)
        } else {
            m[n] as f64 / t[n] as f64
        };
        logs += p.ln();
    }
    100.0 * brevity(hyp.len(), reference.len()) * (logs / orders as f64).exp()
}

pub fn render(tokens: &[u32]) -> String {
    tokens
        .iter()
        .map(|t| format!("w{t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Relation {
    FirstBetter,
    SecondBetter,
    Tie,
}

fn predicted(a: f64, b: f64, epsilon: f64) -> Relation {
    if (a - b).abs() <= epsilon {
        Relation::Tie
    } else if a > b {
        Relation::FirstBetter
    } else {
        Relation::SecondBetter
    }
}

fn gold(a: f64, b: f64) -> Relation {
    if a == b {
        Relation::Tie
    } else if a > b {
        Relation::FirstBetter
    } else {
        Relation::SecondBetter
    }
}

/// Group-by-item accuracy by explicit enumeration of every unordered pair.
pub fn brute_force_segment_accuracy(items: &[EvalItem], epsilon: f64) -> Option<f64> {
    let mut per_item = Vec::new();
    for item in items {
        let systems: Vec<(&String, f64, f64)> = item
            .per_system
            .iter()
            .filter_map(|(s, v)| v.metric.map(|m| (s, m, v.human)))
            .collect();
        let mut relations = Vec::new();
        for (i, a) in systems.iter().enumerate() {
            for b in &systems[i + 1..] {
                relations.push(predicted(a.1, b.1, epsilon) == gold(a.2, b.2));
            }
        }
        if !relations.is_empty() {
            per_item
                .push(relations.iter().filter(|&&ok| ok).count() as f64 / relations.len() as f64);
        }
    }
    (!per_item.is_empty()).then(|| per_item.iter().sum::<f64>() / per_item.len() as f64)
}

/// Random items with continuous scores and injected exact ties on both
/// sides.
pub fn random_items(rng: &mut impl Rng, n_systems: usize, n_items: usize) -> Vec<EvalItem> {
    let system_bias: Vec<f64> = (0..n_systems)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    (0..n_items)
        .map(|i| {
            let mut human: Vec<f64> = system_bias
                .iter()
                .map(|b| b + rng.random_range(-2.0..2.0))
                .collect();
            let mut metric: Vec<f64> = human
                .iter()
                .map(|h| h + rng.random_range(-1.0..1.0))
                .collect();
            for s in 1..n_systems {
                if rng.random_bool(0.2) {
                    human[s] = human[rng.random_range(0..s)];
                }
                if rng.random_bool(0.1) {
                    metric[s] = metric[rng.random_range(0..s)];
                }
            }
            EvalItem {
                key: ItemKey {
                    doc_id: format!("doc{i:03}"),
                    start_index: 0,
                    k: 1,
                },
                per_system: (0..n_systems)
                    .map(|s| {
                        (
                            format!("sys{s:02}"),
                            ItemScores {
                                metric: Some(metric[s]),
                                human: human[s],
                            },
                        )
                    })
                    .collect(),
            }
        })
        .collect()
}

/// A synthetic ratings collection: several systems and documents, rater
/// switches, unrated gaps, MQM-like discrete scores, and lexical overlap
/// between hypotheses and references.
pub fn synthetic_ratings(
    seed: u64,
    n_systems: usize,
    n_docs: usize,
    doc_len: usize,
) -> Vec<RatingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..60).map(|i| format!("tok{i}")).collect();
    let weights = [0.0, 0.0, -0.1, -1.0, -1.0, -5.0, -25.0];
    let mut records = Vec::new();
    let references: BTreeMap<(usize, usize), Vec<&str>> = (0..n_docs)
        .flat_map(|d| (0..doc_len).map(move |i| (d, i)))
        .map(|key| {
            let len = rng.random_range(3..15);
            (
                key,
                (0..len)
                    .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
                    .collect(),
            )
        })
        .collect();
    for s in 0..n_systems {
        for d in 0..n_docs {
            let mut rater = rng.random_range(0..3);
            for i in 0..doc_len {
                if rng.random_bool(0.15) {
                    rater = rng.random_range(0..3);
                }
                if rng.random_bool(0.08) {
                    continue;
                }
                let reference = &references[&(d, i)];
                let hyp: Vec<&str> = reference
                    .iter()
                    .map(|w| {
                        if rng.random_bool(0.3) {
                            vocab[rng.random_range(0..vocab.len())].as_str()
                        } else {
                            w
                        }
                    })
                    .collect();
                let n_errors = rng.random_range(0..3);
                let score: f64 = (0..n_errors)
                    .map(|_| weights[rng.random_range(0..weights.len())])
                    .sum();
                records.push(RatingRecord {
                    dataset_id: "wmt-synth".into(),
                    lang_pair: "en-de".into(),
                    system_id: format!("system{s}"),
                    doc_id: format!("doc{d:02}"),
                    sent_index: i,
                    rater_id: format!("rater{rater}"),
                    score,
                    score_type: ScoreType::Mqm,
                    source_text: format!("source {d} {i}"),
                    reference_text: reference.join(" "),
                    hypothesis_text: format!("{}.", hyp.join(" ")),
                    token_count_ref: Some(reference.len()),
                    token_count_hyp: Some(hyp.len() + 1),
                });
            }
        }
    }
    records
}

pub fn write_ratings_file(dir: &Path, name: &str, records: &[RatingRecord]) -> PathBuf {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).unwrap();
    paraeval::ingest::write_ratings(std::io::BufWriter::new(file), records).unwrap();
    path
}
