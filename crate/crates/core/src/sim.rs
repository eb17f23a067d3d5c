//! Synthetic rater and metric noise.
//!
//! Each system gets a mean quality; every sentence's true quality scatters
//! around it, and human and metric scores are the true quality plus
//! independent Gaussian noise. A k-sentence paragraph scores the mean of its
//! first k sentences on both sides, so noise shrinks as k grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metaeval::segment_accuracy;
use crate::model::{EvalItem, ItemKey, ItemScores, SimConfig};

/// Per-sentence draws, indexed by (item, system, sentence).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub config: SimConfig,
    pub system_means: Vec<f64>,
    pub quality: Vec<f64>,
    pub human: Vec<f64>,
    pub metric: Vec<f64>,
}

impl Simulation {
    fn index(&self, item: usize, system: usize, sentence: usize) -> usize {
        (item * self.config.n_systems + system) * self.config.max_k + sentence
    }

    fn paragraph_mean(&self, values: &[f64], item: usize, system: usize, k: usize) -> f64 {
        let start = self.index(item, system, 0);
        values[start..start + k].iter().sum::<f64>() / k as f64
    }

    /// Evaluation items for paragraphs of the first `k` sentences.
    pub fn items(&self, k: usize) -> Result<Vec<EvalItem>> {
        if k == 0 || k > self.config.max_k {
            return Err(Error::arg(format!(
                "k={k} outside 1..={}",
                self.config.max_k
            )));
        }
        Ok((0..self.config.n_items)
            .map(|item| EvalItem {
                key: ItemKey {
                    doc_id: format!("item{item:06}"),
                    start_index: 0,
                    k,
                },
                per_system: (0..self.config.n_systems)
                    .map(|s| {
                        (
                            format!("sys{s:03}"),
                            ItemScores {
                                metric: Some(self.paragraph_mean(&self.metric, item, s, k)),
                                human: self.paragraph_mean(&self.human, item, s, k),
                            },
                        )
                    })
                    .collect(),
            })
            .collect())
    }
}

/// Draws one synthetic data set. Identical configs give identical draws.
pub fn simulate(config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let system_means: Vec<f64> = (0..config.n_systems)
        .map(|_| config.system_mean_spread * normal())
        .collect();
    let n = config.n_items * config.n_systems * config.max_k;
    let (mut quality, mut human, mut metric) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..config.n_items {
        for &mean in &system_means {
            for _ in 0..config.max_k {
                let q = mean + config.sigma_quality * normal();
                quality.push(q);
                human.push(q + config.sigma_human * normal());
                metric.push(q + config.sigma_metric * normal());
            }
        }
    }
    Ok(Simulation {
        config: config.clone(),
        system_means,
        quality,
        human,
        metric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// Accuracy for each seed, in seed order.
    pub per_seed: Vec<f64>,
}

/// Mean segment-level accuracy (epsilon 0) per k over `n_seeds` runs seeded
/// `config.seed, config.seed + 1, ...`.
pub fn noise_curve(config: &SimConfig, ks: &[usize], n_seeds: usize) -> Result<Vec<CurvePoint>> {
    config.validate()?;
    let mut distinct = ks.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::arg(
            "a noise curve needs at least two distinct k values",
        ));
    }
    if n_seeds == 0 {
        return Err(Error::arg("at least one seed is required"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > config.max_k) {
        return Err(Error::arg(format!("k={k} outside 1..={}", config.max_k)));
    }

    let runs: Vec<Vec<f64>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|offset| {
            let cfg = SimConfig {
                seed: config.seed.wrapping_add(offset),
                ..config.clone()
            };
            let sim = simulate(&cfg)?;
            ks.iter()
                .map(|&k| segment_accuracy(&sim.items(k)?, 0.0))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok(ks
        .iter()
        .enumerate()
        .map(|(col, &k)| {
            let per_seed: Vec<f64> = runs.iter().map(|r| r[col]).collect();
            let n = per_seed.len() as f64;
            let mean = per_seed.iter().sum::<f64>() / n;
            let std_dev = if per_seed.len() > 1 {
                (per_seed.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                k,
                mean,
                std_dev,
                per_seed,
            }
        })
        .collect())
}
