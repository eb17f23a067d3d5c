//! Training-set export: uniform and k-stratified sampling without
//! replacement.
//!
//! Randomness comes from ChaCha8 seeded with [`SeedableRng::seed_from_u64`],
//! so a seed selects the same paragraphs on every platform. Outputs are
//! returned in canonical paragraph order.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ParagraphInstance;

fn canonicalize(mut picked: Vec<ParagraphInstance>) -> Vec<ParagraphInstance> {
    picked.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    picked
}

/// Draws `n` distinct paragraphs uniformly at random.
pub fn sample_uniform(
    pool: &[ParagraphInstance],
    n: usize,
    seed: u64,
) -> Result<Vec<ParagraphInstance>> {
    if n > pool.len() {
        return Err(Error::PoolTooSmall {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    Ok(canonicalize(picked))
}

/// Draws `n / ks.len()` paragraphs from each stratum `k` in `ks`.
///
/// Strata are drawn in the order `ks` lists them from a single generator.
pub fn sample_stratified(
    pool: &[ParagraphInstance],
    n: usize,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<ParagraphInstance>> {
    if ks.is_empty() {
        return Err(Error::arg("at least one k is required"));
    }
    if ks.iter().collect::<BTreeSet<_>>().len() != ks.len() {
        return Err(Error::arg("ks contains duplicates"));
    }
    if !n.is_multiple_of(ks.len()) {
        return Err(Error::arg(format!(
            "sample size {n} is not divisible by the {} strata",
            ks.len()
        )));
    }
    let per_stratum = n / ks.len();
    let strata: Vec<Vec<&ParagraphInstance>> = ks
        .iter()
        .map(|&k| pool.iter().filter(|p| p.k == k).collect())
        .collect();
    for (&k, stratum) in ks.iter().zip(&strata) {
        if stratum.len() < per_stratum {
            return Err(Error::UndersizedStratum {
                k,
                available: stratum.len(),
                required: per_stratum,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for stratum in &strata {
        picked.extend(
            index::sample(&mut rng, stratum.len(), per_stratum)
                .into_iter()
                .map(|i| stratum[i].clone()),
        );
    }
    Ok(canonicalize(picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::record;
    use crate::parabuild::build_paragraphs;

    /// `per_k` paragraphs for every k in 1..=max_k.
    fn pool(max_k: usize, per_k: usize) -> Vec<ParagraphInstance> {
        let mut out = Vec::new();
        for k in 1..=max_k {
            let recs: Vec<_> = (0..k * per_k)
                .map(|i| record("s", &format!("doc{k}"), i, "r", -(i as f64)))
                .collect();
            out.extend(build_paragraphs(&recs, k).unwrap());
        }
        out
    }

    fn keys(ps: &[ParagraphInstance]) -> Vec<(String, usize, usize)> {
        ps.iter()
            .map(|p| (p.doc_id.clone(), p.k, p.start_index))
            .collect()
    }

    #[test]
    fn exhaustive_draw_returns_whole_pool() {
        let pool = pool(3, 2);
        let all = sample_uniform(&pool, pool.len(), 11).unwrap();
        assert_eq!(all, canonicalize(pool.clone()));
    }

    #[test]
    fn uniform_is_seed_deterministic() {
        let pool = pool(4, 5);
        let a = sample_uniform(&pool, 7, 42).unwrap();
        let b = sample_uniform(&pool, 7, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(keys(&a), keys(&sample_uniform(&pool, 7, 43).unwrap()));
    }

    #[test]
    fn uniform_rejects_oversized_request() {
        let pool = pool(1, 3);
        let err = sample_uniform(&pool, 4, 0).unwrap_err();
        assert_eq!(err.to_string(), "sample of 4 requested from a pool of 3");
    }

    #[test]
    fn uniform_single_draw_frequencies() {
        let pool = pool(1, 5);
        let mut hits = [0usize; 5];
        for seed in 0..10_000u64 {
            let p = sample_uniform(&pool, 1, seed).unwrap().remove(0);
            hits[p.start_index] += 1;
        }
        for h in hits {
            assert!((1850..=2150).contains(&h), "{hits:?}");
        }
    }

    #[test]
    fn stratified_takes_equal_share_per_k() {
        let pool = pool(10, 4);
        let ks: Vec<usize> = (1..=10).collect();
        let out = sample_stratified(&pool, 20, &ks, 5).unwrap();
        for k in 1..=10 {
            assert_eq!(out.iter().filter(|p| p.k == k).count(), 2);
        }
        assert_eq!(out, sample_stratified(&pool, 20, &ks, 5).unwrap());
    }

    #[test]
    fn stratified_reports_undersized_stratum() {
        let mut pool = pool(10, 4);
        let mut seen = false;
        pool.retain(|p| {
            if p.k != 10 {
                return true;
            }
            let keep = !seen;
            seen = true;
            keep
        });
        let ks: Vec<usize> = (1..=10).collect();
        let err = sample_stratified(&pool, 20, &ks, 5).unwrap_err();
        assert!(matches!(
            err,
            Error::UndersizedStratum {
                k: 10,
                available: 1,
                required: 2
            }
        ));
    }

    #[test]
    fn stratified_argument_errors() {
        let pool = pool(3, 4);
        assert!(matches!(
            sample_stratified(&pool, 7, &[1, 2, 3], 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            sample_stratified(&pool, 4, &[1, 1], 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            sample_stratified(&pool, 4, &[], 0),
            Err(Error::Argument(_))
        ));
    }
}
