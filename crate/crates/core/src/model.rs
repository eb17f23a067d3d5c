//! Domain types shared by every stage of the pipeline.
//!
//! Ratings come in at the sentence level ([`RatingRecord`]), are folded into
//! multi-sentence [`ParagraphInstance`]s, scored into [`ScoreTable`]s, and
//! regrouped into [`EvalItem`]s for segment-level comparison.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreType {
    /// Per-rater z-normalized direct assessment.
    #[serde(rename = "DA_Z")]
    DaZ,
    /// Sentence MQM score (total error weight, usually non-positive).
    #[serde(rename = "MQM")]
    Mqm,
}

impl fmt::Display for ScoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreType::DaZ => f.write_str("DA_Z"),
            ScoreType::Mqm => f.write_str("MQM"),
        }
    }
}

/// One sentence-level human rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub dataset_id: String,
    pub lang_pair: String,
    pub system_id: String,
    pub doc_id: String,
    pub sent_index: usize,
    pub rater_id: String,
    pub score: f64,
    pub score_type: ScoreType,
    pub source_text: String,
    pub reference_text: String,
    pub hypothesis_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count_ref: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count_hyp: Option<usize>,
}

impl RatingRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            dataset_id: self.dataset_id.clone(),
            lang_pair: self.lang_pair.clone(),
            system_id: self.system_id.clone(),
            doc_id: self.doc_id.clone(),
            sent_index: self.sent_index,
        }
    }
}

/// Uniqueness key of a [`RatingRecord`] within a collection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub dataset_id: String,
    pub lang_pair: String,
    pub system_id: String,
    pub doc_id: String,
    pub sent_index: usize,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.dataset_id, self.lang_pair, self.system_id, self.doc_id, self.sent_index
        )
    }
}

/// A window of `k` consecutive rated sentences from one system's document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParagraphInstance {
    pub dataset_id: String,
    pub lang_pair: String,
    pub system_id: String,
    pub doc_id: String,
    pub start_index: usize,
    pub k: usize,
    pub score_type: ScoreType,
    pub source_text: String,
    pub reference_text: String,
    pub hypothesis_text: String,
    pub human_score: f64,
    pub sentence_scores: Vec<f64>,
    pub rater_id: String,
    /// Sum of the sentences' precomputed reference token counts, when every
    /// sentence carried one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count_ref: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count_hyp: Option<usize>,
}

impl ParagraphInstance {
    pub fn item_key(&self) -> ItemKey {
        ItemKey {
            doc_id: self.doc_id.clone(),
            start_index: self.start_index,
            k: self.k,
        }
    }

    pub fn unit_key(&self) -> UnitKey {
        UnitKey {
            dataset_id: self.dataset_id.clone(),
            lang_pair: self.lang_pair.clone(),
            k: self.k,
        }
    }

    /// Canonical sort key: dataset, language pair, system, document, k, start.
    pub fn sort_key(&self) -> (&str, &str, &str, &str, usize, usize) {
        (
            &self.dataset_id,
            &self.lang_pair,
            &self.system_id,
            &self.doc_id,
            self.k,
            self.start_index,
        )
    }

    /// Checks the structural invariants, returning a reason on failure.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.k == 0 {
            return Err("k must be positive".into());
        }
        if self.sentence_scores.len() != self.k {
            return Err(format!(
                "k={} but {} sentence_scores",
                self.k,
                self.sentence_scores.len()
            ));
        }
        if !self.human_score.is_finite() || self.sentence_scores.iter().any(|s| !s.is_finite()) {
            return Err("non-finite score".into());
        }
        let expected = crate::parabuild::aggregate_score(&self.sentence_scores, self.score_type)
            .map_err(|e| e.to_string())?;
        let tol = 1e-9 * expected.abs().max(1.0);
        if (expected - self.human_score).abs() > tol {
            return Err(format!(
                "human_score {} does not aggregate sentence_scores ({} expected for {})",
                self.human_score, expected, self.score_type
            ));
        }
        Ok(())
    }
}

/// Identifies one comparison slot: the same source window across systems.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub doc_id: String,
    pub start_index: usize,
    pub k: usize,
}

impl fmt::Display for ItemKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.doc_id, self.start_index, self.k)
    }
}

/// An evaluation unit: statistics are computed and reported per unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub dataset_id: String,
    pub lang_pair: String,
    pub k: usize,
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} k={}", self.dataset_id, self.lang_pair, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Paragraph passed to the metric as one segment.
    Direct,
    /// Mean of the metric over the paragraph's aligned sentences.
    AlignedAvg,
    /// Scores computed elsewhere and loaded from a file.
    External,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Direct => "direct",
            ScoreMode::AlignedAvg => "aligned_avg",
            ScoreMode::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryError {
    Duplicate(String),
    NonFinite(String),
}

impl fmt::Display for EntryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryError::Duplicate(k) => write!(f, "duplicate score key {k}"),
            EntryError::NonFinite(k) => write!(f, "non-finite score for {k}"),
        }
    }
}

/// Metric scores for one (metric, language pair, k) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub metric_name: String,
    pub mode: ScoreMode,
    pub lang_pair: String,
    pub k: usize,
    entries: BTreeMap<(String, ItemKey), f64>,
}

impl ScoreTable {
    pub fn new(
        metric_name: impl Into<String>,
        mode: ScoreMode,
        lang_pair: impl Into<String>,
        k: usize,
    ) -> Self {
        Self {
            metric_name: metric_name.into(),
            mode,
            lang_pair: lang_pair.into(),
            k,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        system_id: impl Into<String>,
        item: ItemKey,
        score: f64,
    ) -> std::result::Result<(), EntryError> {
        let key = (system_id.into(), item);
        if !score.is_finite() {
            return Err(EntryError::NonFinite(fmt_entry_key(&key)));
        }
        if self.entries.contains_key(&key) {
            return Err(EntryError::Duplicate(fmt_entry_key(&key)));
        }
        self.entries.insert(key, score);
        Ok(())
    }

    pub fn get(&self, system_id: &str, item: &ItemKey) -> Option<f64> {
        // BTreeMap lookups need an owned tuple key.
        self.entries
            .get(&(system_id.to_string(), item.clone()))
            .copied()
    }

    /// Entries in canonical (system, item) order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &ItemKey, f64)> {
        self.entries.iter().map(|((s, i), v)| (s.as_str(), i, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, system_id: &str, item: &ItemKey) -> bool {
        self.get(system_id, item).is_some()
    }

    /// Copy of this table keeping only the entries `keep` accepts.
    pub fn filtered(&self, mut keep: impl FnMut(&str, &ItemKey) -> bool) -> ScoreTable {
        ScoreTable {
            metric_name: self.metric_name.clone(),
            mode: self.mode,
            lang_pair: self.lang_pair.clone(),
            k: self.k,
            entries: self
                .entries
                .iter()
                .filter(|((s, i), _)| keep(s, i))
                .map(|(key, v)| (key.clone(), *v))
                .collect(),
        }
    }

    /// Human scores of a unit's paragraphs, as a table.
    pub fn from_human(paragraphs: &[ParagraphInstance]) -> Result<ScoreTable> {
        let first = paragraphs
            .first()
            .ok_or_else(|| Error::arg("no paragraphs"))?;
        let mut table = ScoreTable::new("human", ScoreMode::External, &first.lang_pair, first.k);
        for p in paragraphs {
            table
                .insert(&p.system_id, p.item_key(), p.human_score)
                .map_err(|e| Error::arg(e.to_string()))?;
        }
        Ok(table)
    }
}

pub(crate) fn fmt_entry_key((system, item): &(String, ItemKey)) -> String {
    format!(
        "({system}, {}, {}, {})",
        item.doc_id, item.start_index, item.k
    )
}

/// Scores of one system on one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemScores {
    pub metric: Option<f64>,
    pub human: f64,
}

/// All systems' paragraphs for one comparison slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub key: ItemKey,
    pub per_system: BTreeMap<String, ItemScores>,
}

impl EvalItem {
    /// (metric, human) pairs of the systems that carry a metric score, in
    /// system order.
    pub fn scored(&self) -> Vec<(f64, f64)> {
        self.per_system
            .values()
            .filter_map(|s| s.metric.map(|m| (m, s.human)))
            .collect()
    }

    /// Copy with metric scores filled in from `table`; systems the table
    /// does not cover are left unscored.
    pub fn with_metric(&self, table: &ScoreTable) -> EvalItem {
        EvalItem {
            key: self.key.clone(),
            per_system: self
                .per_system
                .iter()
                .map(|(sys, s)| {
                    (
                        sys.clone(),
                        ItemScores {
                            metric: table.get(sys, &self.key),
                            human: s.human,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Attaches a metric table to every item.
pub fn attach_metric(items: &[EvalItem], table: &ScoreTable) -> Vec<EvalItem> {
    items.iter().map(|it| it.with_metric(table)).collect()
}

/// Result of a tie-threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauCalibration {
    /// Metric differences with magnitude at or below this are ties.
    pub epsilon: f64,
    pub accuracy_at_epsilon: f64,
}

/// Parameters of the rater/metric noise simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_items: usize,
    pub n_systems: usize,
    pub max_k: usize,
    pub sigma_quality: f64,
    pub sigma_human: f64,
    pub sigma_metric: f64,
    pub system_mean_spread: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 || self.max_k == 0 {
            return Err(Error::arg("n_items and max_k must be positive"));
        }
        if self.n_systems < 2 {
            return Err(Error::arg("n_systems must be at least 2"));
        }
        for (name, v) in [
            ("sigma_quality", self.sigma_quality),
            ("sigma_human", self.sigma_human),
            ("sigma_metric", self.sigma_metric),
            ("system_mean_spread", self.system_mean_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::arg(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ValidationIssue {
    Duplicate { key: RecordKey, count: usize },
    NonFiniteScore { key: RecordKey },
    MixedScoreTypes { da_z: usize, mqm: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Duplicate { key, count } => {
                write!(f, "duplicate record {key} appears {count} times")
            }
            ValidationIssue::NonFiniteScore { key } => write!(f, "non-finite score at {key}"),
            ValidationIssue::MixedScoreTypes { da_z, mqm } => {
                write!(f, "mixed score types: {da_z} DA_Z and {mqm} MQM records")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = self.errors.iter().take(5).map(|e| e.to_string()).collect();
        if self.errors.len() > 5 {
            parts.push(format!("... and {} more", self.errors.len() - 5));
        }
        parts.join("; ")
    }
}

/// Checks key uniqueness, score finiteness, and a single score type.
///
/// The report is sorted, so any permutation of `records` gives the same
/// result.
pub fn validate_ratings(records: &[RatingRecord]) -> ValidationReport {
    let mut counts: BTreeMap<RecordKey, usize> = BTreeMap::new();
    let mut errors = Vec::new();
    let (mut da_z, mut mqm) = (0usize, 0usize);
    let mut empty_hyp = 0usize;
    let mut with_counts = 0usize;

    for r in records {
        *counts.entry(r.key()).or_default() += 1;
        if !r.score.is_finite() {
            errors.push(ValidationIssue::NonFiniteScore { key: r.key() });
        }
        match r.score_type {
            ScoreType::DaZ => da_z += 1,
            ScoreType::Mqm => mqm += 1,
        }
        if r.hypothesis_text.trim().is_empty() {
            empty_hyp += 1;
        }
        if r.token_count_ref.is_some() && r.token_count_hyp.is_some() {
            with_counts += 1;
        }
    }
    errors.extend(
        counts
            .into_iter()
            .filter(|(_, c)| *c > 1)
            .map(|(key, count)| ValidationIssue::Duplicate { key, count }),
    );
    if da_z > 0 && mqm > 0 {
        errors.push(ValidationIssue::MixedScoreTypes { da_z, mqm });
    }
    errors.sort();

    let mut warnings = Vec::new();
    if empty_hyp > 0 {
        warnings.push(format!("{empty_hyp} record(s) have an empty hypothesis"));
    }
    if with_counts > 0 && with_counts < records.len() {
        warnings.push(format!(
            "{} of {} record(s) lack precomputed token counts",
            records.len() - with_counts,
            records.len()
        ));
    }
    ValidationReport { errors, warnings }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn record(
        system: &str,
        doc: &str,
        idx: usize,
        rater: &str,
        score: f64,
    ) -> RatingRecord {
        RatingRecord {
            dataset_id: "wmt".into(),
            lang_pair: "en-de".into(),
            system_id: system.into(),
            doc_id: doc.into(),
            sent_index: idx,
            rater_id: rater.into(),
            score,
            score_type: ScoreType::Mqm,
            source_text: format!("src {doc} {idx}"),
            reference_text: format!("ref {doc} {idx}"),
            hypothesis_text: format!("hyp {system} {doc} {idx}"),
            token_count_ref: None,
            token_count_hyp: None,
        }
    }

    #[test]
    fn well_formed_records_have_no_errors() {
        let recs = vec![
            record("a", "d", 0, "r", 0.0),
            record("a", "d", 1, "r", -1.0),
            record("b", "d", 0, "r", -5.0),
        ];
        let rep = validate_ratings(&recs);
        assert!(rep.errors.is_empty(), "{:?}", rep.errors);
    }

    #[test]
    fn duplicate_key_is_reported_once() {
        let recs = vec![
            record("a", "d", 0, "r", 0.0),
            record("a", "d", 0, "s", -1.0),
        ];
        let rep = validate_ratings(&recs);
        assert_eq!(rep.errors.len(), 1);
        let msg = rep.errors[0].to_string();
        assert!(msg.contains("(wmt, en-de, a, d, 0)"), "{msg}");
    }

    #[test]
    fn mixed_score_types_are_reported() {
        let mut b = record("a", "d", 1, "r", 0.3);
        b.score_type = ScoreType::DaZ;
        let rep = validate_ratings(&[record("a", "d", 0, "r", 0.0), b]);
        assert_eq!(
            rep.errors,
            vec![ValidationIssue::MixedScoreTypes { da_z: 1, mqm: 1 }]
        );
    }

    #[test]
    fn nan_score_is_reported() {
        let rep = validate_ratings(&[record("a", "d", 0, "r", f64::NAN)]);
        assert!(matches!(
            rep.errors[..],
            [ValidationIssue::NonFiniteScore { .. }]
        ));
    }

    #[test]
    fn validation_is_order_independent_and_idempotent() {
        let mut recs = vec![
            record("a", "d", 0, "r", 0.0),
            record("a", "d", 0, "r", 1.0),
            record("b", "d", 3, "r", f64::INFINITY),
            record("b", "e", 3, "r", -2.0),
        ];
        recs[3].score_type = ScoreType::DaZ;
        let first = validate_ratings(&recs);
        recs.reverse();
        assert_eq!(first, validate_ratings(&recs));
        recs.swap(0, 2);
        assert_eq!(first, validate_ratings(&recs));
        assert_eq!(first, validate_ratings(&recs));
    }

    #[test]
    fn sim_config_rejects_single_system() {
        let cfg = SimConfig {
            n_items: 1,
            n_systems: 1,
            max_k: 1,
            sigma_quality: 0.0,
            sigma_human: 0.0,
            sigma_metric: 0.0,
            system_mean_spread: 0.0,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
        let ok = SimConfig {
            n_systems: 2,
            ..cfg.clone()
        };
        assert!(ok.validate().is_ok());
        let neg = SimConfig {
            sigma_human: -1.0,
            ..ok
        };
        assert!(neg.validate().is_err());
    }
}
