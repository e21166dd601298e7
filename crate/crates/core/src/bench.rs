//! LC-prototype counts and inference latency as functions of N.
//!
//! Timing covers distance computation plus the tie-broken argmin only.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::episodic::{derive_seed, sample_episode, EpisodeSpec, LabelPool};
use crate::error::{Error, Result};
use crate::label_space::LabelSet;
use crate::metrics::{confidence_interval, mean};
use crate::prototypes::{build_store, classify, dedup_store, LCPrototypeStore, DEFAULT_TIE_EPSILON};

pub const MIN_QUERY_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub n_values: Vec<usize>,
    pub k_shot: usize,
    pub repetitions: usize,
    pub query_batch: usize,
    pub dedup: bool,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            n_values: vec![5, 15, 30],
            k_shot: 3,
            repetitions: 5,
            query_batch: MIN_QUERY_BATCH,
            dedup: true,
            parallel: false,
            seed: 0,
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("n_values must be non-empty and each at least 2".into()));
        }
        if self.k_shot == 0 || self.repetitions == 0 {
            return Err(Error::InvalidConfig("k_shot and repetitions must be positive".into()));
        }
        if self.query_batch < MIN_QUERY_BATCH {
            return Err(Error::InvalidConfig(format!("query batch must hold at least {MIN_QUERY_BATCH} items")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    /// Mean over repetitions.
    pub lcp_count: f64,
    pub lcp_count_dedup: Option<f64>,
    /// Mean over repetitions of the power-set bound on the support.
    pub power_set_bound: f64,
    /// `|L| <= sum(2^|y| - 1)` held for every repetition.
    pub bound_holds: bool,
    /// Median over repetitions.
    pub ms_per_item: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub parallel: bool,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("N,lcp_count,lcp_count_dedup,ms_per_item,ci_low,ci_high\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n,
                r.lcp_count,
                opt(r.lcp_count_dedup),
                r.ms_per_item,
                opt(r.ci_low),
                opt(r.ci_high)
            ));
        }
        out
    }

    /// Whitespace-separated columns with a commented header.
    pub fn to_gnuplot(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
        let mut out = String::from("# N lcp_count lcp_count_dedup ms_per_item ci_low ci_high\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                r.n,
                r.lcp_count,
                opt(r.lcp_count_dedup),
                r.ms_per_item,
                opt(r.ci_low),
                opt(r.ci_high)
            ));
        }
        out
    }
}

/// `sum(2^|y| - 1)` over the support label sets.
pub fn power_set_bound<'a>(labels: impl IntoIterator<Item = &'a LabelSet>) -> f64 {
    labels.into_iter().map(|y| 2f64.powi(y.len() as i32) - 1.0).sum()
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn classify_batch(queries: &[&[f64]], store: &LCPrototypeStore, parallel: bool) -> Result<Vec<LabelSet>> {
    if parallel {
        queries.par_iter().map(|q| classify(q, store, DEFAULT_TIE_EPSILON)).collect()
    } else {
        queries.iter().map(|q| classify(q, store, DEFAULT_TIE_EPSILON)).collect()
    }
}

/// Runs the sweep on one dataset, drawing N-way supports from all of its labels.
pub fn run_scaling(dataset: &Dataset, config: &ScalingConfig) -> Result<ScalingReport> {
    run_scaling_with(|_| Ok(dataset.clone()), config)
}

/// Runs the sweep with a dataset built per N.
pub fn run_scaling_with<F>(mut dataset_for: F, config: &ScalingConfig) -> Result<ScalingReport>
where
    F: FnMut(usize) -> Result<Dataset>,
{
    config.validate()?;
    let mut rows = Vec::with_capacity(config.n_values.len());
    for (ni, &n) in config.n_values.iter().enumerate() {
        let dataset = dataset_for(n)?;
        if dataset.is_empty() {
            return Err(Error::Empty("benchmark dataset"));
        }
        let pool = LabelPool::Uniform((0..dataset.vocabulary().len()).collect());
        let n_seed = derive_seed(config.seed, ni as u64, n as u64);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(n_seed, 0, 0));
        let picks: Vec<usize> = if dataset.len() >= config.query_batch {
            sample(&mut rng, dataset.len(), config.query_batch).into_vec()
        } else {
            (0..config.query_batch).map(|i| i % dataset.len()).collect()
        };
        let queries: Vec<&[f64]> = picks.iter().map(|&i| dataset.items()[i].embedding.as_slice()).collect();

        let mut counts = Vec::with_capacity(config.repetitions);
        let mut dedup_counts = Vec::with_capacity(config.repetitions);
        let mut bounds = Vec::with_capacity(config.repetitions);
        let mut timings = Vec::with_capacity(config.repetitions);
        let mut bound_holds = true;

        for rep in 0..config.repetitions {
            let spec = EpisodeSpec::new(n, config.k_shot, 1, derive_seed(n_seed, 1, rep as u64));
            let episode = sample_episode(&dataset, &pool, &spec)?;
            let store = build_store(&episode.support)?;
            let bound = power_set_bound(episode.support.iter().map(|it| &it.labels));
            bound_holds &= store.len() as f64 <= bound;
            counts.push(store.len() as f64);
            bounds.push(bound);

            let timed = if config.dedup {
                let deduped = dedup_store(&store);
                let full = classify_batch(&queries, &store, config.parallel)?;
                let reduced = classify_batch(&queries, &deduped, config.parallel)?;
                let mismatches = full.iter().zip(&reduced).filter(|(a, b)| a != b).count();
                if mismatches > 0 {
                    return Err(Error::DedupMismatch(mismatches));
                }
                dedup_counts.push(deduped.len() as f64);
                deduped
            } else {
                store
            };

            // warm-up pass, not timed
            classify_batch(&queries, &timed, config.parallel)?;
            let start = Instant::now();
            let preds = classify_batch(&queries, &timed, config.parallel)?;
            let elapsed = start.elapsed();
            std::hint::black_box(preds);
            timings.push(elapsed.as_secs_f64() * 1e3 / queries.len() as f64);
        }

        let ci = if timings.len() >= 2 {
            Some(confidence_interval(&timings)?)
        } else {
            None
        };
        rows.push(ScalingRow {
            n,
            lcp_count: mean(&counts),
            lcp_count_dedup: config.dedup.then(|| mean(&dedup_counts)),
            power_set_bound: mean(&bounds),
            bound_holds,
            ms_per_item: median(&mut timings),
            ci_low: ci.map(|c| c.mean - c.half_width),
            ci_high: ci.map(|c| c.mean + c.half_width),
        });
    }
    Ok(ScalingReport {
        rows,
        parallel: config.parallel,
    })
}
