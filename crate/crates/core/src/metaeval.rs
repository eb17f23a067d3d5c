//! Metric meta-evaluation against human scores.
//!
//! System level: pairwise accuracy of per-system mean scores, human-tied
//! pairs excluded. Segment level: group-by-item pairwise accuracy, where a
//! pair is correct when the metric predicts the same relation (better,
//! worse, or tied) as the humans, averaged over items. Metric differences
//! up to a threshold epsilon count as ties; [`tau_optimize`] picks the
//! threshold.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{fmt_entry_key, EvalItem, ScoreTable, TauCalibration};

/// Per-system arithmetic mean over the system's own entries.
pub fn system_scores(table: &ScoreTable) -> Result<BTreeMap<String, f64>> {
    if table.is_empty() {
        return Err(Error::arg(format!(
            "score table {} is empty",
            table.metric_name
        )));
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (system, _, score) in table.entries() {
        let e = sums.entry(system.to_string()).or_insert((0.0, 0));
        e.0 += score;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(s, (sum, n))| (s, sum / n as f64))
        .collect())
}

/// Fraction of system pairs the metric orders the same way as the humans.
///
/// Pairs the humans score identically are left out; a metric tie on any
/// other pair is a disagreement.
pub fn system_pairwise_accuracy(
    metric: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
) -> Result<f64> {
    if metric.keys().ne(human.keys()) {
        let m: BTreeSet<_> = metric.keys().collect();
        let h: BTreeSet<_> = human.keys().collect();
        let diff: Vec<String> = m.symmetric_difference(&h).map(|s| s.to_string()).collect();
        return Err(Error::SystemMismatch(diff.join(", ")));
    }
    if metric.len() < 2 {
        return Err(Error::arg(
            "system-level accuracy needs at least two systems",
        ));
    }
    let pairs: Vec<(f64, f64)> = metric.keys().map(|s| (metric[s], human[s])).collect();
    let (mut agree, mut total) = (0usize, 0usize);
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let human_delta = pairs[i].1 - pairs[j].1;
            if human_delta == 0.0 {
                continue;
            }
            let metric_delta = pairs[i].0 - pairs[j].0;
            total += 1;
            if (metric_delta > 0.0 && human_delta > 0.0)
                || (metric_delta < 0.0 && human_delta < 0.0)
            {
                agree += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::NoItems(
            "every system pair is tied in the human scores".into(),
        ));
    }
    Ok(agree as f64 / total as f64)
}

fn human_relation(a: f64, b: f64) -> Ordering {
    // Exact equality is a human tie.
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn metric_relation(a: f64, b: f64, epsilon: f64) -> Ordering {
    if (a - b).abs() <= epsilon {
        Ordering::Equal
    } else {
        human_relation(a, b)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::arg(format!(
            "epsilon {epsilon} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// Group-by-item pairwise accuracy with tie credit.
///
/// Items with fewer than two metric-scored systems are skipped. Each
/// remaining item contributes its own pair accuracy; the result is the
/// unweighted mean over items.
pub fn segment_accuracy(items: &[EvalItem], epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let mut sum = 0.0;
    let mut n_items = 0usize;
    for item in items {
        let scored = item.scored();
        if scored.len() < 2 {
            continue;
        }
        let (mut correct, mut total) = (0usize, 0usize);
        for i in 0..scored.len() {
            for j in i + 1..scored.len() {
                let (mi, hi) = scored[i];
                let (mj, hj) = scored[j];
                total += 1;
                if metric_relation(mi, mj, epsilon) == human_relation(hi, hj) {
                    correct += 1;
                }
            }
        }
        sum += correct as f64 / total as f64;
        n_items += 1;
    }
    if n_items == 0 {
        return Err(Error::NoItems(
            "no item has two or more scored systems".into(),
        ));
    }
    Ok(sum / n_items as f64)
}

#[derive(Clone, Copy)]
enum PairKind {
    /// Humans tie: correct once epsilon reaches the metric gap.
    HumanTie,
    /// Metric orders the pair like the humans: correct until epsilon
    /// reaches the gap.
    Agrees,
    /// Wrong at every epsilon.
    Disagrees,
}

struct PairEvent {
    gap: f64,
    kind: PairKind,
    pairs_in_item: usize,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Chooses the tie threshold that maximizes [`segment_accuracy`].
///
/// Candidates are 0 and every within-item metric gap; the smallest
/// maximizer wins. Candidate accuracies are compared exactly by scaling each
/// item's pair counts to a common denominator.
pub fn tau_optimize(items: &[EvalItem]) -> Result<TauCalibration> {
    let mut events = Vec::new();
    for item in items {
        let scored = item.scored();
        if scored.len() < 2 {
            continue;
        }
        let pairs_in_item = scored.len() * (scored.len() - 1) / 2;
        for i in 0..scored.len() {
            for j in i + 1..scored.len() {
                let (mi, hi) = scored[i];
                let (mj, hj) = scored[j];
                let gap = (mi - mj).abs();
                let human = human_relation(hi, hj);
                let kind = if human == Ordering::Equal {
                    PairKind::HumanTie
                } else if gap > 0.0 && human_relation(mi, mj) == human {
                    PairKind::Agrees
                } else {
                    PairKind::Disagrees
                };
                events.push(PairEvent {
                    gap,
                    kind,
                    pairs_in_item,
                });
            }
        }
    }
    if events.is_empty() {
        return Err(Error::NoItems(
            "no item has two or more scored systems".into(),
        ));
    }
    events.sort_by(|a, b| a.gap.total_cmp(&b.gap));

    let denominators: BTreeSet<usize> = events.iter().map(|e| e.pairs_in_item).collect();
    let common = denominators.iter().try_fold(1u128, |acc, &d| {
        let d = d as u128;
        (acc / gcd(acc, d)).checked_mul(d)
    });
    let epsilon = match common {
        Some(common) => sweep(&events, |e| common / e.pairs_in_item as u128),
        None => sweep(&events, |e| 1.0 / e.pairs_in_item as f64),
    };
    Ok(TauCalibration {
        epsilon,
        accuracy_at_epsilon: segment_accuracy(items, epsilon)?,
    })
}

/// Returns the smallest candidate epsilon with the largest total weight of
/// correct pairs. `events` must be sorted by gap.
fn sweep<W>(events: &[PairEvent], weight: impl Fn(&PairEvent) -> W) -> f64
where
    W: Copy + PartialOrd + std::ops::Add<Output = W> + std::ops::Sub<Output = W> + Default,
{
    let mut score = W::default();
    for e in events {
        let correct_at_zero = match e.kind {
            PairKind::HumanTie => e.gap == 0.0,
            PairKind::Agrees => true,
            PairKind::Disagrees => false,
        };
        if correct_at_zero {
            score = score + weight(e);
        }
    }
    let (mut best, mut best_eps) = (score, 0.0);
    let mut i = events.partition_point(|e| e.gap == 0.0);
    while i < events.len() {
        let gap = events[i].gap;
        while i < events.len() && events[i].gap == gap {
            let e = &events[i];
            match e.kind {
                PairKind::HumanTie => score = score + weight(e),
                PairKind::Agrees => score = score - weight(e),
                PairKind::Disagrees => {}
            }
            i += 1;
        }
        if score > best {
            best = score;
            best_eps = gap;
        }
    }
    best_eps
}

/// Deterministically splits items into (calibration, evaluation) sets, with
/// `calibration_fraction` of the items (rounded down) in the first.
pub fn split_items(
    items: &[EvalItem],
    calibration_fraction: f64,
    seed: u64,
) -> Result<(Vec<EvalItem>, Vec<EvalItem>)> {
    if !(calibration_fraction > 0.0 && calibration_fraction < 1.0) {
        return Err(Error::arg("calibration fraction must be in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_calib = (items.len() as f64 * calibration_fraction) as usize;
    let calib: BTreeSet<usize> = order[..n_calib].iter().copied().collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, item) in items.iter().enumerate() {
        if calib.contains(&i) {
            a.push(item.clone());
        } else {
            b.push(item.clone());
        }
    }
    Ok((a, b))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "fewer than two observations".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson over every (system, item) the metric table scores, without
/// grouping by item. Human scores come from `human`.
pub fn pearson_no_grouping(metric: &ScoreTable, human: &ScoreTable) -> Result<f64> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (system, item, m) in metric.entries() {
        if let Some(h) = human.get(system, item) {
            xs.push(m);
            ys.push(h);
        }
    }
    pearson(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSource {
    Human,
    Metric,
}

/// Fraction of within-item system pairs whose scores are exactly equal,
/// pooled over items. `None` when there is no pair to count.
pub fn tie_rate(items: &[EvalItem], source: ScoreSource) -> Option<f64> {
    let (mut ties, mut total) = (0usize, 0usize);
    for item in items {
        let values: Vec<f64> = match source {
            ScoreSource::Human => item.per_system.values().map(|s| s.human).collect(),
            ScoreSource::Metric => item.per_system.values().filter_map(|s| s.metric).collect(),
        };
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                total += 1;
                if values[i] == values[j] {
                    ties += 1;
                }
            }
        }
    }
    (total > 0).then(|| ties as f64 / total as f64)
}

/// Pearson between two scorings of the same paragraphs.
pub fn mode_correlation(direct: &ScoreTable, aligned: &ScoreTable) -> Result<f64> {
    let mut missing = Vec::new();
    for (system, item, _) in direct.entries() {
        if !aligned.contains(system, item) {
            missing.push(format!(
                "{} only in {}",
                fmt_entry_key(&(system.to_string(), item.clone())),
                direct.mode
            ));
        }
    }
    for (system, item, _) in aligned.entries() {
        if !direct.contains(system, item) {
            missing.push(format!(
                "{} only in {}",
                fmt_entry_key(&(system.to_string(), item.clone())),
                aligned.mode
            ));
        }
    }
    if !missing.is_empty() {
        return Err(Error::KeyMismatch(missing));
    }
    let x: Vec<f64> = direct.entries().map(|e| e.2).collect();
    let y: Vec<f64> = aligned.entries().map(|e| e.2).collect();
    pearson(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemKey, ItemScores, ScoreMode};

    fn item(doc: &str, scores: &[(f64, f64)]) -> EvalItem {
        EvalItem {
            key: ItemKey {
                doc_id: doc.into(),
                start_index: 0,
                k: 1,
            },
            per_system: scores
                .iter()
                .enumerate()
                .map(|(i, &(m, h))| {
                    (
                        format!("sys{i}"),
                        ItemScores {
                            metric: Some(m),
                            human: h,
                        },
                    )
                })
                .collect(),
        }
    }

    fn sys(values: &[f64]) -> BTreeMap<String, f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("s{i}"), *v))
            .collect()
    }

    fn table(entries: &[(&str, &str, f64)]) -> ScoreTable {
        let mut t = ScoreTable::new("m", ScoreMode::Direct, "en-de", 1);
        for (s, d, v) in entries {
            t.insert(
                *s,
                ItemKey {
                    doc_id: d.to_string(),
                    start_index: 0,
                    k: 1,
                },
                *v,
            )
            .unwrap();
        }
        t
    }

    #[test]
    fn system_scores_average_own_items() {
        let t = table(&[("a", "d1", 2.0), ("a", "d2", 4.0), ("b", "d1", 1.0)]);
        let s = system_scores(&t).unwrap();
        assert_eq!(s["a"], 3.0);
        assert_eq!(s["b"], 1.0);
        assert!(system_scores(&table(&[])).is_err());
    }

    #[test]
    fn system_accuracy_fixtures() {
        let human = sys(&[3.0, 2.0, 1.0]);
        assert_eq!(system_pairwise_accuracy(&human, &human).unwrap(), 1.0);
        let negated = sys(&[-3.0, -2.0, -1.0]);
        assert_eq!(system_pairwise_accuracy(&negated, &human).unwrap(), 0.0);
        let metric = sys(&[3.0, 1.0, 2.0]);
        assert_eq!(
            system_pairwise_accuracy(&metric, &human).unwrap(),
            2.0 / 3.0
        );
    }

    #[test]
    fn system_accuracy_tie_rules() {
        // Human tie between s0 and s1 is dropped; metric tie on s1/s2 is wrong.
        let human = sys(&[1.0, 1.0, 0.0]);
        let metric = sys(&[5.0, 0.0, 0.0]);
        assert_eq!(system_pairwise_accuracy(&metric, &human).unwrap(), 0.5);
        assert!(system_pairwise_accuracy(&sys(&[1.0, 2.0]), &sys(&[0.0, 0.0])).is_err());
        assert!(system_pairwise_accuracy(&sys(&[1.0]), &sys(&[1.0])).is_err());
        let mut other = sys(&[1.0, 2.0]);
        other.insert("zz".into(), 0.0);
        assert!(matches!(
            system_pairwise_accuracy(&sys(&[1.0, 2.0, 3.0]), &other),
            Err(Error::SystemMismatch(_))
        ));
    }

    fn epsilon_fixture() -> Vec<EvalItem> {
        vec![item("d", &[(1.0, 0.0), (1.1, 0.0), (0.2, -5.0)])]
    }

    #[test]
    fn segment_accuracy_fixture() {
        let items = epsilon_fixture();
        assert!((segment_accuracy(&items, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(segment_accuracy(&items, 0.15).unwrap(), 1.0);
    }

    #[test]
    fn segment_accuracy_all_ties() {
        let items = vec![
            item("a", &[(1.0, 2.0), (1.0, 2.0)]),
            item("b", &[(0.0, 0.0); 3]),
        ];
        assert_eq!(segment_accuracy(&items, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn segment_accuracy_skips_thin_items() {
        let mut thin = item("t", &[(1.0, 1.0), (2.0, 0.0)]);
        thin.per_system.get_mut("sys1").unwrap().metric = None;
        let items = vec![thin.clone(), item("a", &[(1.0, 1.0), (2.0, 2.0)])];
        assert_eq!(segment_accuracy(&items, 0.0).unwrap(), 1.0);
        assert!(matches!(
            segment_accuracy(&[thin], 0.0),
            Err(Error::NoItems(_))
        ));
        assert!(segment_accuracy(&items, -1.0).is_err());
    }

    #[test]
    fn tau_fixture_picks_smallest_gap() {
        let cal = tau_optimize(&epsilon_fixture()).unwrap();
        assert_eq!(cal.epsilon, (1.1f64 - 1.0).abs());
        assert!((cal.epsilon - 0.1).abs() < 1e-12);
        assert_eq!(cal.accuracy_at_epsilon, 1.0);
    }

    #[test]
    fn tau_is_zero_without_gain() {
        let matching = vec![item("a", &[(1.0, 0.0), (1.0, 0.0), (0.0, -1.0)])];
        assert_eq!(tau_optimize(&matching).unwrap().epsilon, 0.0);
        let no_ties = vec![item("a", &[(3.0, 3.0), (2.0, 2.0), (1.0, 1.0)])];
        let cal = tau_optimize(&no_ties).unwrap();
        assert_eq!((cal.epsilon, cal.accuracy_at_epsilon), (0.0, 1.0));
    }

    #[test]
    fn held_out_split_is_deterministic_partition() {
        let items: Vec<_> = (0..10)
            .map(|i| item(&format!("d{i}"), &[(1.0, 0.0), (0.0, 1.0)]))
            .collect();
        let (a, b) = split_items(&items, 0.3, 9).unwrap();
        assert_eq!((a.len(), b.len()), (3, 7));
        assert_eq!(split_items(&items, 0.3, 9).unwrap(), (a, b));
        assert!(split_items(&items, 1.0, 9).is_err());
    }

    #[test]
    fn pearson_fixtures() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn tie_rate_fixtures() {
        assert_eq!(
            tie_rate(
                &[item("a", &[(1.0, 0.0), (2.0, 0.0), (3.0, 1.0)])],
                ScoreSource::Human
            ),
            Some(1.0 / 3.0)
        );
        assert_eq!(
            tie_rate(
                &[item("a", &[(1.0, 0.0), (2.0, 0.0), (3.0, 1.0)])],
                ScoreSource::Metric
            ),
            Some(0.0)
        );
        assert_eq!(
            tie_rate(&[item("a", &[(0.0, 4.0); 4])], ScoreSource::Human),
            Some(1.0)
        );
        assert_eq!(tie_rate(&[], ScoreSource::Human), None);
    }

    #[test]
    fn mode_correlation_checks_keys() {
        let a = table(&[("a", "d1", 1.0), ("b", "d1", 2.0), ("c", "d1", 4.0)]);
        let mut b = a.clone();
        b.mode = ScoreMode::AlignedAvg;
        assert!((mode_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let anti = table(&[("a", "d1", -1.0), ("b", "d1", -2.0), ("c", "d1", -4.0)]);
        assert!((mode_correlation(&a, &anti).unwrap() + 1.0).abs() < 1e-12);
        let partial = table(&[("a", "d1", 1.0), ("b", "d1", 2.0), ("z", "d1", 4.0)]);
        let err = mode_correlation(&a, &partial).unwrap_err().to_string();
        assert!(err.contains("(c, d1, 0, 1) only in direct"), "{err}");
        assert!(err.contains("(z, d1, 0, 1)"), "{err}");
    }

    #[test]
    fn pearson_no_grouping_joins_tables() {
        let metric = table(&[("a", "d1", 1.0), ("b", "d1", 2.0), ("c", "d1", 3.0)]);
        let human = table(&[("a", "d1", 1.0), ("b", "d1", 3.0), ("c", "d1", 2.0)]);
        assert!((pearson_no_grouping(&metric, &human).unwrap() - 0.5).abs() < 1e-12);
    }
}
