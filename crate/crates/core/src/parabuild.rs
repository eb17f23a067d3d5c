//! Sliding-window paragraph construction.
//!
//! For every (dataset, language pair, system, document) the builder scans
//! windows of `k` sentence positions from the start of the document. A window
//! qualifies when every position carries a rating and all of them come from
//! the same rater. A qualifying window becomes a paragraph and the scan jumps
//! past it; otherwise the window slides by one position.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    EvalItem, ItemKey, ItemScores, ParagraphInstance, RatingRecord, ScoreType, UnitKey,
};

type DocKey<'a> = (&'a str, &'a str, &'a str, &'a str);

/// Paragraph score from its sentence scores: mean for DA, sum for MQM.
///
/// Summation runs in list order so results are reproducible bit for bit.
pub fn aggregate_score(sentence_scores: &[f64], score_type: ScoreType) -> Result<f64> {
    if sentence_scores.is_empty() {
        return Err(Error::arg("cannot aggregate an empty score list"));
    }
    let sum = sentence_scores.iter().fold(0.0, |acc, s| acc + s);
    Ok(match score_type {
        ScoreType::DaZ => sum / sentence_scores.len() as f64,
        ScoreType::Mqm => sum,
    })
}

/// Groups records by document, keyed by sentence position.
fn group_documents(
    records: &[RatingRecord],
) -> BTreeMap<DocKey<'_>, BTreeMap<usize, &RatingRecord>> {
    let mut docs: BTreeMap<DocKey<'_>, BTreeMap<usize, &RatingRecord>> = BTreeMap::new();
    for r in records {
        docs.entry((&r.dataset_id, &r.lang_pair, &r.system_id, &r.doc_id))
            .or_default()
            .insert(r.sent_index, r);
    }
    docs
}

/// Builds all `k`-sentence paragraphs.
///
/// Output is sorted by (dataset, language pair, system, document, start),
/// independent of how the per-document scans are scheduled.
pub fn build_paragraphs(records: &[RatingRecord], k: usize) -> Result<Vec<ParagraphInstance>> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let docs: Vec<_> = group_documents(records).into_iter().collect();
    let per_doc: Vec<Vec<ParagraphInstance>> = docs
        .par_iter()
        .map(|(_, sentences)| scan_document(sentences, k))
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

fn scan_document(
    sentences: &BTreeMap<usize, &RatingRecord>,
    k: usize,
) -> Result<Vec<ParagraphInstance>> {
    let Some((&last, _)) = sentences.last_key_value() else {
        return Ok(Vec::new());
    };
    let len = last + 1;
    let mut out = Vec::new();
    let mut start = 0;
    while start + k <= len {
        match qualifying_window(sentences, start, k) {
            Some(window) => {
                out.push(make_paragraph(&window, start, k)?);
                start += k;
            }
            None => start += 1,
        }
    }
    Ok(out)
}

fn qualifying_window<'a>(
    sentences: &BTreeMap<usize, &'a RatingRecord>,
    start: usize,
    k: usize,
) -> Option<Vec<&'a RatingRecord>> {
    let window: Vec<&RatingRecord> = (start..start + k)
        .map(|i| sentences.get(&i).copied())
        .collect::<Option<_>>()?;
    let rater = &window[0].rater_id;
    window
        .iter()
        .all(|r| &r.rater_id == rater)
        .then_some(window)
}

fn join_texts<'a>(
    window: &[&'a RatingRecord],
    text: impl Fn(&'a RatingRecord) -> &'a str,
) -> String {
    window.iter().map(|r| text(r)).collect::<Vec<_>>().join(" ")
}

fn sum_counts(
    window: &[&RatingRecord],
    count: impl Fn(&RatingRecord) -> Option<usize>,
) -> Option<usize> {
    window.iter().map(|r| count(r)).sum()
}

fn make_paragraph(window: &[&RatingRecord], start: usize, k: usize) -> Result<ParagraphInstance> {
    let first = window[0];
    let sentence_scores: Vec<f64> = window.iter().map(|r| r.score).collect();
    let human_score = aggregate_score(&sentence_scores, first.score_type)?;
    Ok(ParagraphInstance {
        dataset_id: first.dataset_id.clone(),
        lang_pair: first.lang_pair.clone(),
        system_id: first.system_id.clone(),
        doc_id: first.doc_id.clone(),
        start_index: start,
        k,
        score_type: first.score_type,
        source_text: join_texts(window, |r| &r.source_text),
        reference_text: join_texts(window, |r| &r.reference_text),
        hypothesis_text: join_texts(window, |r| &r.hypothesis_text),
        human_score,
        sentence_scores,
        rater_id: first.rater_id.clone(),
        token_count_ref: sum_counts(window, |r| r.token_count_ref),
        token_count_hyp: sum_counts(window, |r| r.token_count_hyp),
    })
}

/// Splits paragraphs into evaluation units, preserving relative order.
pub fn group_units(paragraphs: &[ParagraphInstance]) -> BTreeMap<UnitKey, Vec<ParagraphInstance>> {
    let mut units: BTreeMap<UnitKey, Vec<ParagraphInstance>> = BTreeMap::new();
    for p in paragraphs {
        units.entry(p.unit_key()).or_default().push(p.clone());
    }
    units
}

/// Groups one unit's paragraphs by (document, start, k) slot, keeping slots
/// that at least two systems share. Metric scores start out empty.
pub fn build_eval_items(paragraphs: &[ParagraphInstance], k: usize) -> Result<Vec<EvalItem>> {
    let mut slots: BTreeMap<ItemKey, BTreeMap<String, ItemScores>> = BTreeMap::new();
    let unit = paragraphs.first().map(|p| (&p.dataset_id, &p.lang_pair));
    for p in paragraphs {
        if p.k != k || Some((&p.dataset_id, &p.lang_pair)) != unit {
            return Err(Error::arg(format!(
                "paragraph {} {} does not belong to the evaluation unit being grouped",
                p.system_id,
                p.item_key()
            )));
        }
        let prev = slots.entry(p.item_key()).or_default().insert(
            p.system_id.clone(),
            ItemScores {
                metric: None,
                human: p.human_score,
            },
        );
        if prev.is_some() {
            return Err(Error::arg(format!(
                "system {} has two paragraphs at {}",
                p.system_id,
                p.item_key()
            )));
        }
    }
    Ok(slots
        .into_iter()
        .filter(|(_, systems)| systems.len() >= 2)
        .map(|(key, per_system)| EvalItem { key, per_system })
        .collect())
}
