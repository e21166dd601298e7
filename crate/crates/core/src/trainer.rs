//! Episodic training of a linear adapter on top of frozen embeddings.
//!
//! The adapter `f(x) = W^T x + b` maps both support and query items. The
//! episode loss is binary cross-entropy between each query's expanded
//! multi-hot target and `σ(-d(f(x), p_j))` over all LC-prototypes,
//! averaged over queries and classes. Gradients flow through the query
//! embeddings and through the prototype means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::episodic::{derive_seed, sample_episode, validation_pool, Episode, EpisodeSpec, LabelPool, LabelSplit};
use crate::error::{Error, Result};
use crate::label_space::expand_multi_hot;
use crate::metrics::{macro_f1, PredictionBatch};
use crate::prototypes::{build_store, classify, dot, l2_norm, sigmoid, EmbeddedItem, LCPrototypeStore, DEFAULT_TIE_EPSILON};

const TRAIN_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Linear map with bias plus Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterState {
    d_in: usize,
    d_out: usize,
    /// Row-major `d_in x d_out`.
    weight: Vec<f64>,
    bias: Vec<f64>,
    m_weight: Vec<f64>,
    v_weight: Vec<f64>,
    m_bias: Vec<f64>,
    v_bias: Vec<f64>,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradient {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl AdapterGradient {
    pub fn norm(&self) -> f64 {
        self.weight.iter().chain(&self.bias).map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl AdapterState {
    pub fn from_parts(d_in: usize, d_out: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::InvalidConfig("adapter dimensions must be positive".into()));
        }
        if weight.len() != d_in * d_out || bias.len() != d_out {
            return Err(Error::DimensionMismatch {
                expected: d_in * d_out + d_out,
                found: weight.len() + bias.len(),
                context: "adapter parameters".into(),
            });
        }
        if weight.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("adapter parameters".into()));
        }
        Ok(Self {
            d_in,
            d_out,
            m_weight: vec![0.0; weight.len()],
            v_weight: vec![0.0; weight.len()],
            m_bias: vec![0.0; d_out],
            v_bias: vec![0.0; d_out],
            weight,
            bias,
            step: 0,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self::from_parts(dim, dim, weight, vec![0.0; dim]).expect("identity adapter is valid")
    }

    /// Gaussian weights scaled by `scale`, zero bias.
    pub fn random(d_in: usize, d_out: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = (0..d_in * d_out)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::from_parts(d_in, d_out, weight, vec![0.0; d_out]).expect("random adapter is valid")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                found: x.len(),
                context: "adapter input".into(),
            });
        }
        let mut y = self.bias.clone();
        for (a, &xa) in x.iter().enumerate() {
            let row = &self.weight[a * self.d_out..(a + 1) * self.d_out];
            for (yo, w) in y.iter_mut().zip(row) {
                *yo += xa * w;
            }
        }
        Ok(y)
    }

    pub fn map_item(&self, item: &EmbeddedItem) -> Result<EmbeddedItem> {
        Ok(EmbeddedItem::new(item.id.clone(), item.labels.clone(), self.apply(&item.embedding)?))
    }

    pub fn map_items(&self, items: &[EmbeddedItem]) -> Result<Vec<EmbeddedItem>> {
        items.iter().map(|it| self.map_item(it)).collect()
    }

    pub fn map_episode(&self, episode: &Episode) -> Result<Episode> {
        Ok(Episode {
            active_labels: episode.active_labels.clone(),
            support: self.map_items(&episode.support)?,
            query: self.map_items(&episode.query)?,
            support_targets: episode.support_targets.clone(),
        })
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grad: &AdapterGradient, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for k in 0..p.len() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                p[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.epsilon);
            }
        };
        update(&mut self.weight, &mut self.m_weight, &mut self.v_weight, &grad.weight);
        update(&mut self.bias, &mut self.m_bias, &mut self.v_bias, &grad.bias);
    }
}

/// `-[t log σ(z) + (1-t) log(1-σ(z))]` computed from the logit.
pub fn bce_with_logit(z: f64, target: bool) -> f64 {
    let t = if target { 1.0 } else { 0.0 };
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Mean BCE over query items and LC-classes, with logits `-d`.
pub fn episode_loss(query_items: &[EmbeddedItem], store: &LCPrototypeStore) -> Result<f64> {
    if query_items.is_empty() {
        return Err(Error::Empty("query set"));
    }
    if store.is_empty() {
        return Err(Error::Empty("prototype store"));
    }
    let mut total = 0.0;
    for q in query_items {
        let targets = expand_multi_hot(&q.labels, store.classes());
        let distances = store.distances(&q.embedding)?;
        total += distances
            .iter()
            .zip(&targets)
            .map(|(&d, &t)| bce_with_logit(-d, t))
            .sum::<f64>();
    }
    let loss = total / (query_items.len() * store.len()) as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("episode loss".into()));
    }
    Ok(loss)
}

/// Loss of `episode` under `adapter` and its exact gradient.
pub fn loss_and_gradient(adapter: &AdapterState, episode: &Episode) -> Result<(f64, AdapterGradient)> {
    let support = adapter.map_items(&episode.support)?;
    let queries = adapter.map_items(&episode.query)?;
    let store = build_store(&support)?;
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    let d_out = adapter.d_out;
    let n_classes = store.len();
    let scale = 1.0 / (queries.len() * n_classes) as f64;

    let proto_norms: Vec<f64> = (0..n_classes).map(|j| l2_norm(store.representation(j))).collect();
    let mut grad_proto = vec![vec![0.0; d_out]; n_classes];
    let mut grad_query = vec![vec![0.0; d_out]; queries.len()];
    let mut total = 0.0;

    for (qi, q) in queries.iter().enumerate() {
        let u = &q.embedding;
        let un = l2_norm(u);
        if un == 0.0 || !un.is_finite() {
            return Err(Error::ZeroNorm("adapted query"));
        }
        let targets = expand_multi_hot(&q.labels, store.classes());
        for j in 0..n_classes {
            let p = store.representation(j);
            let pn = proto_norms[j];
            if pn == 0.0 {
                // constant distance 1, no gradient
                total += bce_with_logit(-1.0, targets[j]);
                continue;
            }
            let cos = dot(u, p) / (un * pn);
            let d = 1.0 - cos;
            let z = -d;
            let t = if targets[j] { 1.0 } else { 0.0 };
            total += bce_with_logit(z, targets[j]);
            // dL/dd = -(σ(z) - t) = -(σ(-d) - t)
            let g = -(sigmoid(z) - t) * scale;
            // dd/du = -(p/pn - cos u/un) / un ; dd/dp = -(u/un - cos p/pn) / pn
            for k in 0..d_out {
                grad_query[qi][k] += g * -(p[k] / pn - cos * u[k] / un) / un;
                grad_proto[j][k] += g * -(u[k] / un - cos * p[k] / pn) / pn;
            }
        }
    }
    let loss = total * scale;

    let mut grad_support = vec![vec![0.0; d_out]; support.len()];
    for (j, gp) in grad_proto.iter().enumerate() {
        let members = store.membership(j);
        let share = 1.0 / members.len() as f64;
        for &i in members {
            for (gs, g) in grad_support[i].iter_mut().zip(gp) {
                *gs += g * share;
            }
        }
    }

    let mut grad = AdapterGradient {
        weight: vec![0.0; adapter.d_in * d_out],
        bias: vec![0.0; d_out],
    };
    let inputs = episode.support.iter().zip(&grad_support).chain(episode.query.iter().zip(&grad_query));
    for (item, g_out) in inputs {
        for (a, &xa) in item.embedding.iter().enumerate() {
            let row = &mut grad.weight[a * d_out..(a + 1) * d_out];
            for (w, g) in row.iter_mut().zip(g_out) {
                *w += xa * g;
            }
        }
        for (b, g) in grad.bias.iter_mut().zip(g_out) {
            *b += g;
        }
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite("episode loss".into()));
    }
    if grad.weight.iter().chain(&grad.bias).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss gradient".into()));
    }
    Ok((loss, grad))
}

pub fn loss_gradient(adapter: &AdapterState, episode: &Episode) -> Result<AdapterGradient> {
    loss_and_gradient(adapter, episode).map(|(_, g)| g)
}

/// Episode loss under `adapter`, without the gradient.
pub fn adapted_episode_loss(adapter: &AdapterState, episode: &Episode) -> Result<f64> {
    let support = adapter.map_items(&episode.support)?;
    let queries = adapter.map_items(&episode.query)?;
    episode_loss(&queries, &build_store(&support)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes_per_epoch: usize,
    pub spec: EpisodeSpec,
    pub adam: AdamConfig,
    pub patience: usize,
    pub max_epochs: usize,
    pub validation_episodes: usize,
    /// Defaults to `min(spec.n_way, holdout size)`.
    pub validation_n_way: Option<usize>,
    pub tie_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes_per_epoch: 50,
            spec: EpisodeSpec::new(10, 3, 3, 0),
            adam: AdamConfig::default(),
            patience: 10,
            max_epochs: 200,
            validation_episodes: 20,
            validation_n_way: None,
            tie_epsilon: DEFAULT_TIE_EPSILON,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let positive = self.episodes_per_epoch > 0
            && self.patience > 0
            && self.validation_episodes > 0
            && self.adam.learning_rate > 0.0
            && self.adam.epsilon > 0.0
            && (0.0..1.0).contains(&self.adam.beta1)
            && (0.0..1.0).contains(&self.adam.beta2);
        if !positive {
            return Err(Error::InvalidConfig("training settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_macro_f1: f64,
}

/// Epoch 0 is the untrained adapter, scored on the first epoch's episodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,val_macro_f1\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.mean_loss, r.val_macro_f1));
        }
        out
    }

    pub fn initial_val_macro_f1(&self) -> Option<f64> {
        self.epochs.first().map(|r| r.val_macro_f1)
    }

    pub fn best_val_macro_f1(&self) -> Option<f64> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch).map(|r| r.val_macro_f1)
    }
}

/// Tracks the best-scoring snapshot and the epochs since it.
#[derive(Debug, Clone)]
pub struct EarlyStopper<T> {
    patience: usize,
    best: Option<(usize, f64, T)>,
    since_best: usize,
}

impl<T> EarlyStopper<T> {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records an epoch; returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, score: f64, snapshot: T) -> Result<bool> {
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("validation score at epoch {epoch}")));
        }
        match &self.best {
            Some((_, best, _)) if score <= *best => self.since_best += 1,
            _ => {
                self.best = Some((epoch, score, snapshot));
                self.since_best = 0;
            }
        }
        Ok(self.since_best >= self.patience)
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|(e, _, _)| *e)
    }

    pub fn into_best(self) -> Option<(usize, f64, T)> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub adapter: AdapterState,
    pub log: TrainingLog,
}

/// Mean per-episode macro-F1 of LC-Protonets inference under `adapter`.
pub fn validation_macro_f1(adapter: &AdapterState, episodes: &[Episode], tie_epsilon: f64) -> Result<f64> {
    let mut total = 0.0;
    for ep in episodes {
        let mapped = adapter.map_episode(ep)?;
        let store = build_store(&mapped.support)?;
        let mut batch = PredictionBatch::new(mapped.active_labels.clone());
        for q in &mapped.query {
            batch.push(q.labels.clone(), classify(&q.embedding, &store, tie_epsilon)?)?;
        }
        total += macro_f1(&batch)?;
    }
    Ok(total / episodes.len() as f64)
}

fn training_episodes(dataset: &Dataset, pool: &LabelPool, config: &TrainConfig, epoch: usize) -> Result<Vec<Episode>> {
    let epoch_seed = derive_seed(config.seed, TRAIN_STREAM, epoch as u64);
    (0..config.episodes_per_epoch)
        .map(|e| sample_episode(dataset, pool, &config.spec.with_seed(derive_seed(epoch_seed, 0, e as u64))))
        .collect()
}

/// The fixed validation episodes scored after every epoch.
pub fn validation_episodes(dataset: &Dataset, split: &LabelSplit, config: &TrainConfig) -> Result<Vec<Episode>> {
    let pool = validation_pool(split, dataset.vocabulary())?;
    let n_way = config
        .validation_n_way
        .unwrap_or_else(|| config.spec.n_way.min(split.validation_holdout.len()));
    let spec = EpisodeSpec { n_way, ..config.spec };
    (0..config.validation_episodes)
        .map(|i| sample_episode(dataset, &pool, &spec.with_seed(derive_seed(config.seed, VALIDATION_STREAM, i as u64))))
        .collect()
}

/// Trains a square adapter starting from the identity map.
pub fn train_adapter(dataset: &Dataset, split: &LabelSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    train_adapter_from(AdapterState::identity(dataset.dim()), dataset, split, config)
}

pub fn train_adapter_from(
    initial: AdapterState,
    dataset: &Dataset,
    split: &LabelSplit,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate(dataset.vocabulary())?;
    if initial.d_in() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            found: initial.d_in(),
            context: "adapter input vs dataset".into(),
        });
    }
    if split.validation_holdout.is_empty() {
        return Err(Error::InvalidConfig("validation holdout labels are empty".into()));
    }
    let vocab = dataset.vocabulary();
    let base_pool = LabelPool::Uniform(split.base.iter().map(|n| vocab.require(n)).collect::<Result<_>>()?);
    let val_episodes = validation_episodes(dataset, split, config)?;

    let mut adapter = initial;
    let mut log = TrainingLog::default();
    let mut stopper = EarlyStopper::new(config.patience);

    let probe = training_episodes(dataset, &base_pool, config, 1)?;
    let initial_loss = probe
        .iter()
        .map(|ep| adapted_episode_loss(&adapter, ep))
        .sum::<Result<f64>>()?
        / probe.len() as f64;
    let initial_f1 = validation_macro_f1(&adapter, &val_episodes, config.tie_epsilon)?;
    log.epochs.push(EpochRecord {
        epoch: 0,
        mean_loss: initial_loss,
        val_macro_f1: initial_f1,
    });
    stopper.observe(0, initial_f1, adapter.clone())?;

    for epoch in 1..=config.max_epochs {
        let episodes = if epoch == 1 {
            probe.clone()
        } else {
            training_episodes(dataset, &base_pool, config, epoch)?
        };
        let mut loss_sum = 0.0;
        for ep in &episodes {
            let (loss, grad) = loss_and_gradient(&adapter, ep)?;
            adapter.adam_step(&grad, &config.adam);
            loss_sum += loss;
        }
        let mean_loss = loss_sum / episodes.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite(format!("mean loss at epoch {epoch}")));
        }
        let val = validation_macro_f1(&adapter, &val_episodes, config.tie_epsilon)?;
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            val_macro_f1: val,
        });
        if stopper.observe(epoch, val, adapter.clone())? {
            break;
        }
    }

    let (best_epoch, _, best) = stopper.into_best().expect("epoch 0 is always recorded");
    log.best_epoch = best_epoch;
    Ok(TrainOutcome { adapter: best, log })
}
