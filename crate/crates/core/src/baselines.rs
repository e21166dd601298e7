//! Comparison methods: multi-label prototypical networks (one prototype per
//! label, sigmoid scores) and a one-vs-rest decomposition into per-label
//! positive/negative prototype pairs.

use crate::error::{Error, Result};
use crate::label_space::LabelSet;
use crate::prototypes::{checked_norm, cosine_with_norms, l2_norm, sigmoid, EmbeddedItem};

/// Default sigmoid threshold for ML-PN predictions.
pub const DEFAULT_MLPN_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SingletonPrototypeSet {
    labels: Vec<usize>,
    prototypes: Vec<Vec<f64>>,
    norms: Vec<f64>,
    counts: Vec<usize>,
}

impl SingletonPrototypeSet {
    /// Label indices, ascending.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn prototype(&self, label: usize) -> Option<&[f64]> {
        self.position(label).map(|k| self.prototypes[k].as_slice())
    }

    pub fn support_count(&self, label: usize) -> Option<usize> {
        self.position(label).map(|k| self.counts[k])
    }

    fn position(&self, label: usize) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    /// `σ(-d)` per label, in label order.
    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        let qnorm = query_norm(query, self.prototypes[0].len())?;
        Ok(self
            .prototypes
            .iter()
            .zip(&self.norms)
            .map(|(p, &pn)| sigmoid(-cosine_with_norms(query, qnorm, p, pn)))
            .collect())
    }
}

fn query_norm(query: &[f64], dim: usize) -> Result<f64> {
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: query.len(),
            context: "query vs prototypes".into(),
        });
    }
    checked_norm(query, "query")
}

fn check_dims(support: &[EmbeddedItem]) -> Result<usize> {
    let dim = support.first().ok_or(Error::Empty("support set"))?.dim();
    for item in support {
        if item.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: item.dim(),
                context: format!("support item {}", item.id),
            });
        }
    }
    Ok(dim)
}

fn mean_where(support: &[EmbeddedItem], dim: usize, keep: impl Fn(&EmbeddedItem) -> bool) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0; dim];
    let mut n = 0;
    for item in support.iter().filter(|it| keep(it)) {
        for (a, x) in acc.iter_mut().zip(&item.embedding) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    (acc, n)
}

/// One prototype per active label; an item contributes to the prototype of
/// every label it carries.
pub fn build_mlpn(support: &[EmbeddedItem], active_labels: &LabelSet) -> Result<SingletonPrototypeSet> {
    let dim = check_dims(support)?;
    if active_labels.is_empty() {
        return Err(Error::EmptyLabelSet("active labels".into()));
    }
    let mut out = SingletonPrototypeSet {
        labels: Vec::new(),
        prototypes: Vec::new(),
        norms: Vec::new(),
        counts: Vec::new(),
    };
    for c in active_labels.iter() {
        let (proto, n) = mean_where(support, dim, |it| it.labels.contains(c));
        if n == 0 {
            return Err(Error::UncoveredLabel {
                label: format!("#{c}"),
                role: "support",
            });
        }
        out.labels.push(c);
        out.norms.push(l2_norm(&proto));
        out.prototypes.push(proto);
        out.counts.push(n);
    }
    Ok(out)
}

/// Labels whose score reaches `threshold`; falls back to the single nearest
/// label (lowest index on ties) when none does.
pub fn mlpn_classify(query: &[f64], protos: &SingletonPrototypeSet, threshold: f64) -> Result<LabelSet> {
    let scores = protos.scores(query)?;
    let picked: LabelSet = protos
        .labels
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s >= threshold)
        .map(|(&c, _)| c)
        .collect();
    if !picked.is_empty() {
        return Ok(picked);
    }
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(LabelSet::singleton(protos.labels[best]))
}

#[derive(Debug, Clone)]
struct BinaryPair {
    label: usize,
    positive: Vec<f64>,
    positive_norm: f64,
    // None when every support item carries the label
    negative: Option<(Vec<f64>, f64)>,
}

/// Per-label positive/negative prototype pairs.
#[derive(Debug, Clone)]
pub struct OneVsRestModel {
    pairs: Vec<BinaryPair>,
    dim: usize,
}

impl OneVsRestModel {
    pub fn fit(support: &[EmbeddedItem], active_labels: &LabelSet) -> Result<Self> {
        let dim = check_dims(support)?;
        if active_labels.is_empty() {
            return Err(Error::EmptyLabelSet("active labels".into()));
        }
        let mut pairs = Vec::new();
        for c in active_labels.iter() {
            let (positive, n_pos) = mean_where(support, dim, |it| it.labels.contains(c));
            if n_pos == 0 {
                return Err(Error::UncoveredLabel {
                    label: format!("#{c}"),
                    role: "positive support",
                });
            }
            let (negative, n_neg) = mean_where(support, dim, |it| !it.labels.contains(c));
            pairs.push(BinaryPair {
                label: c,
                positive_norm: l2_norm(&positive),
                positive,
                negative: (n_neg > 0).then(|| {
                    let norm = l2_norm(&negative);
                    (negative, norm)
                }),
            });
        }
        Ok(Self { pairs, dim })
    }

    /// Predicts each label whose positive prototype is strictly closer than
    /// its negative one.
    pub fn classify(&self, query: &[f64]) -> Result<LabelSet> {
        let qnorm = query_norm(query, self.dim)?;
        Ok(self
            .pairs
            .iter()
            .filter(|pair| match &pair.negative {
                None => true,
                Some((neg, neg_norm)) => {
                    cosine_with_norms(query, qnorm, &pair.positive, pair.positive_norm)
                        < cosine_with_norms(query, qnorm, neg, *neg_norm)
                }
            })
            .map(|pair| pair.label)
            .collect())
    }
}

pub fn ovr_classify(query: &[f64], support: &[EmbeddedItem], active_labels: &LabelSet) -> Result<LabelSet> {
    OneVsRestModel::fit(support, active_labels)?.classify(query)
}
