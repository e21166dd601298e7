//! Repeated episodic evaluation of the classifiers.
//!
//! Each run draws `n_episodes` episodes; every method sees the same
//! episodes. A run's score is the mean of its per-episode F1 values, and
//! intervals are taken across runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{build_mlpn, mlpn_classify, OneVsRestModel, DEFAULT_MLPN_THRESHOLD};
use crate::dataset::Dataset;
use crate::episodic::{derive_seed, sample_episode, Episode, EpisodeSpec, LabelPool};
use crate::error::{Error, Result};
use crate::metrics::{macro_f1_report, micro_f1, PredictionBatch, RunSummary};
use crate::prototypes::{build_store, classify, DEFAULT_TIE_EPSILON};
use crate::trainer::AdapterState;

const RUN_STREAM: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    LcProtonets,
    MlPn,
    OneVsRest,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LcProtonets, Method::MlPn, Method::OneVsRest];

    /// Flag spelling.
    pub fn key(&self) -> &'static str {
        match self {
            Method::LcProtonets => "lc-protonets",
            Method::MlPn => "ml-pn",
            Method::OneVsRest => "one-vs-rest",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::LcProtonets => "LC-Protonets",
            Method::MlPn => "ML-PNs",
            Method::OneVsRest => "One-vs.-Rest",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected lc-protonets, ml-pn or one-vs-rest)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub spec: EpisodeSpec,
    pub n_episodes: usize,
    pub runs: usize,
    pub seed: u64,
    pub tie_epsilon: f64,
    pub mlpn_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            spec: EpisodeSpec::default(),
            n_episodes: 100,
            runs: 5,
            seed: 0,
            tie_epsilon: DEFAULT_TIE_EPSILON,
            mlpn_threshold: DEFAULT_MLPN_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodScores {
    pub method: Method,
    pub summary: RunSummary,
    /// Episodes in which some active label was absent from both truth and
    /// prediction, scored as F1 = 0.
    pub episodes_with_absent_labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub scores: Vec<MethodScores>,
}

impl EvalResult {
    pub fn get(&self, method: Method) -> Option<&MethodScores> {
        self.scores.iter().find(|s| s.method == method)
    }
}

struct EpisodeScore {
    macro_f1: f64,
    micro_f1: f64,
    absent: bool,
}

fn score_episode(episode: &Episode, method: Method, config: &EvalConfig) -> Result<EpisodeScore> {
    let mut batch = PredictionBatch::new(episode.active_labels.clone());
    match method {
        Method::LcProtonets => {
            let store = build_store(&episode.support)?;
            for q in &episode.query {
                batch.push(q.labels.clone(), classify(&q.embedding, &store, config.tie_epsilon)?)?;
            }
        }
        Method::MlPn => {
            let protos = build_mlpn(&episode.support, &episode.active_labels)?;
            for q in &episode.query {
                batch.push(q.labels.clone(), mlpn_classify(&q.embedding, &protos, config.mlpn_threshold)?)?;
            }
        }
        Method::OneVsRest => {
            let model = OneVsRestModel::fit(&episode.support, &episode.active_labels)?;
            for q in &episode.query {
                batch.push(q.labels.clone(), model.classify(&q.embedding)?)?;
            }
        }
    }
    let report = macro_f1_report(&batch)?;
    Ok(EpisodeScore {
        macro_f1: report.score,
        micro_f1: micro_f1(&batch)?,
        absent: report.absent_labels > 0,
    })
}

/// Evaluates on the raw embeddings.
pub fn evaluate(dataset: &Dataset, pool: &LabelPool, config: &EvalConfig) -> Result<EvalResult> {
    evaluate_adapted(dataset, pool, config, None)
}

/// Evaluates with every episode mapped through `adapter` when given.
pub fn evaluate_adapted(
    dataset: &Dataset,
    pool: &LabelPool,
    config: &EvalConfig,
    adapter: Option<&AdapterState>,
) -> Result<EvalResult> {
    config.spec.validate()?;
    if config.methods.is_empty() || config.n_episodes == 0 || config.runs == 0 {
        return Err(Error::InvalidConfig("need at least one method, episode and run".into()));
    }
    if let Some(a) = adapter {
        if a.d_in() != dataset.dim() {
            return Err(Error::DimensionMismatch {
                expected: dataset.dim(),
                found: a.d_in(),
                context: "adapter input vs dataset".into(),
            });
        }
    }

    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let mut per_method: Vec<(Vec<f64>, Vec<f64>, usize)> = vec![(Vec::new(), Vec::new(), 0); methods.len()];

    for run in 0..config.runs {
        let run_seed = derive_seed(config.seed, RUN_STREAM, run as u64);
        let episode_scores: Vec<Vec<EpisodeScore>> = (0..config.n_episodes)
            .into_par_iter()
            .map(|e| {
                let spec = config.spec.with_seed(derive_seed(run_seed, 0, e as u64));
                let mut episode = sample_episode(dataset, pool, &spec)?;
                if let Some(a) = adapter {
                    episode = a.map_episode(&episode)?;
                }
                methods.iter().map(|&m| score_episode(&episode, m, config)).collect()
            })
            .collect::<Result<_>>()?;

        for (mi, slot) in per_method.iter_mut().enumerate() {
            let n = episode_scores.len() as f64;
            slot.0.push(episode_scores.iter().map(|s| s[mi].macro_f1).sum::<f64>() / n);
            slot.1.push(episode_scores.iter().map(|s| s[mi].micro_f1).sum::<f64>() / n);
            slot.2 += episode_scores.iter().filter(|s| s[mi].absent).count();
        }
    }

    Ok(EvalResult {
        scores: methods
            .into_iter()
            .zip(per_method)
            .map(|(method, (macro_f1, micro_f1, absent))| MethodScores {
                method,
                summary: RunSummary { macro_f1, micro_f1 },
                episodes_with_absent_labels: absent,
            })
            .collect(),
    })
}
