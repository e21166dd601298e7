//! LC-prototype construction and nearest-prototype classification.
//!
//! Every LC-class `L_j` is represented by the mean embedding of the support
//! items whose label set contains it. Classes backed by the same support
//! items share one representation, computed once. Queries are assigned to
//! the class of the nearest prototype under cosine distance; near-ties are
//! broken towards the class with the most labels, then the canonically
//! smallest class.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::label_space::{lc_classes_named, LCClassSet, LabelSet, DEFAULT_POWER_SET_CAP};

/// Absolute distance window inside which two prototypes count as tied.
pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedItem {
    pub id: String,
    pub labels: LabelSet,
    pub embedding: Vec<f64>,
}

impl EmbeddedItem {
    pub fn new(id: impl Into<String>, labels: LabelSet, embedding: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            labels,
            embedding,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }
}

#[derive(Debug, Clone)]
pub struct LCPrototypeStore {
    classes: LCClassSet,
    memberships: Vec<Arc<[usize]>>,
    representations: Vec<Arc<[f64]>>,
    norms: Vec<f64>,
    dim: usize,
    dedup_groups: Option<Vec<Vec<usize>>>,
}

impl LCPrototypeStore {
    pub fn classes(&self) -> &LCClassSet {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Indices of the support items backing class `j`.
    pub fn membership(&self, j: usize) -> &[usize] {
        &self.memberships[j]
    }

    pub fn representation(&self, j: usize) -> &[f64] {
        &self.representations[j]
    }

    /// True when classes `a` and `b` point at the same stored vector.
    pub fn shares_representation(&self, a: usize, b: usize) -> bool {
        Arc::ptr_eq(&self.representations[a], &self.representations[b])
    }

    /// For a deduplicated store: per retained class, the indices of the
    /// original classes it stands for.
    pub fn dedup_groups(&self) -> Option<&[Vec<usize>]> {
        self.dedup_groups.as_deref()
    }

    /// Partition of class indices by identical membership, in order of
    /// first appearance.
    pub fn membership_groups(&self) -> Vec<Vec<usize>> {
        let mut slot: HashMap<&[usize], usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (j, m) in self.memberships.iter().enumerate() {
            let g = *slot.entry(m).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(j);
        }
        groups
    }

    /// Distances from `query` to every prototype, in class order.
    pub fn distances(&self, query: &[f64]) -> Result<Vec<f64>> {
        let qnorm = self.query_norm(query)?;
        Ok(self
            .representations
            .iter()
            .zip(&self.norms)
            .map(|(p, &pn)| cosine_with_norms(query, qnorm, p, pn))
            .collect())
    }

    fn query_norm(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
                context: "query vs prototype store".into(),
            });
        }
        checked_norm(query, "query")
    }
}

/// Builds the LC-prototype store for a support set using the default
/// power-set cap.
pub fn build_store(support: &[EmbeddedItem]) -> Result<LCPrototypeStore> {
    build_store_with_cap(support, DEFAULT_POWER_SET_CAP)
}

pub fn build_store_with_cap(support: &[EmbeddedItem], cap: usize) -> Result<LCPrototypeStore> {
    let dim = check_support(support)?;
    let classes = lc_classes_named(support.iter().map(|it| (it.id.clone(), &it.labels)), cap)?;

    let mut memberships: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, item) in support.iter().enumerate() {
        for (j, class) in classes.iter().enumerate() {
            if class.is_subset_of(&item.labels) {
                memberships[j].push(i);
            }
        }
    }

    // membership -> (shared membership, mean, norm)
    type Entry = (Arc<[usize]>, Arc<[f64]>, f64);
    let mut cache: HashMap<Vec<usize>, Entry> = HashMap::new();
    let mut shared_members = Vec::with_capacity(classes.len());
    let mut representations = Vec::with_capacity(classes.len());
    let mut norms = Vec::with_capacity(classes.len());
    for members in memberships {
        let (m, rep, norm) = cache
            .entry(members)
            .or_insert_with_key(|members| {
                let rep = mean_of(support, members, dim);
                let norm = l2_norm(&rep);
                (Arc::from(members.as_slice()), Arc::from(rep), norm)
            })
            .clone();
        shared_members.push(m);
        representations.push(rep);
        norms.push(norm);
    }

    Ok(LCPrototypeStore {
        classes,
        memberships: shared_members,
        representations,
        norms,
        dim,
        dedup_groups: None,
    })
}

fn check_support(support: &[EmbeddedItem]) -> Result<usize> {
    let first = support.first().ok_or(Error::Empty("support set"))?;
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::Empty("embedding"));
    }
    for item in support {
        if item.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: item.dim(),
                context: format!("support item {}", item.id),
            });
        }
        if item.embedding.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of {}", item.id)));
        }
    }
    Ok(dim)
}

fn mean_of(support: &[EmbeddedItem], members: &[usize], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for &i in members {
        for (a, x) in acc.iter_mut().zip(&support[i].embedding) {
            *a += x;
        }
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn checked_norm(v: &[f64], what: &'static str) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(Error::ZeroNorm(what));
    }
    Ok(n)
}

/// A zero-norm prototype cannot arise from non-zero support embeddings
/// except through cancellation; it is treated as orthogonal to the query.
pub(crate) fn cosine_with_norms(u: &[f64], unorm: f64, v: &[f64], vnorm: f64) -> f64 {
    if vnorm == 0.0 {
        return 1.0;
    }
    (1.0 - dot(u, v) / (unorm * vnorm)).clamp(0.0, 2.0)
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
            context: "cosine distance operands".into(),
        });
    }
    let un = checked_norm(u, "first operand")?;
    let vn = checked_norm(v, "second operand")?;
    Ok(cosine_with_norms(u, un, v, vn))
}

/// Index of the predicted class for `query`.
pub fn classify_index(query: &[f64], store: &LCPrototypeStore, tie_epsilon: f64) -> Result<usize> {
    if store.is_empty() {
        return Err(Error::Empty("prototype store"));
    }
    let distances = store.distances(query)?;
    Ok(pick_with_tie_break(&distances, store.classes(), tie_epsilon))
}

pub fn classify(query: &[f64], store: &LCPrototypeStore, tie_epsilon: f64) -> Result<LabelSet> {
    let j = classify_index(query, store, tie_epsilon)?;
    Ok(store.classes.as_slice()[j].clone())
}

fn pick_with_tie_break(distances: &[f64], classes: &LCClassSet, tie_epsilon: f64) -> usize {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best: Option<(usize, usize)> = None;
    for (j, (&d, class)) in distances.iter().zip(classes).enumerate() {
        if d - min <= tie_epsilon {
            let card = class.len();
            // canonical order means the first index wins among equal cardinalities
            if best.is_none_or(|(_, c)| card > c) {
                best = Some((j, card));
            }
        }
    }
    best.map(|(j, _)| j).unwrap_or(0)
}

/// Keeps one class per distinct membership: the one the tie-break would
/// pick. Predictions of [`classify`] are unchanged.
pub fn dedup_store(store: &LCPrototypeStore) -> LCPrototypeStore {
    let groups = store.membership_groups();
    let mut retained: Vec<(usize, Vec<usize>)> = groups
        .into_iter()
        .map(|group| {
            let keep = group
                .iter()
                .copied()
                .reduce(|best, j| {
                    if store.classes.as_slice()[j].len() > store.classes.as_slice()[best].len() {
                        j
                    } else {
                        best
                    }
                })
                .expect("groups are non-empty");
            (keep, group)
        })
        .collect();
    retained.sort_unstable_by_key(|(keep, _)| *keep);

    let original = store.dedup_groups.as_deref();
    let mut classes = Vec::with_capacity(retained.len());
    let mut memberships = Vec::with_capacity(retained.len());
    let mut representations = Vec::with_capacity(retained.len());
    let mut norms = Vec::with_capacity(retained.len());
    let mut dedup_groups = Vec::with_capacity(retained.len());
    for (keep, group) in retained {
        classes.push(store.classes.as_slice()[keep].clone());
        memberships.push(store.memberships[keep].clone());
        representations.push(store.representations[keep].clone());
        norms.push(store.norms[keep]);
        let mut expanded: Vec<usize> = match original {
            Some(prev) => group.iter().flat_map(|&j| prev[j].iter().copied()).collect(),
            None => group,
        };
        expanded.sort_unstable();
        dedup_groups.push(expanded);
    }

    LCPrototypeStore {
        classes: LCClassSet::from_sorted(classes),
        memberships,
        representations,
        norms,
        dim: store.dim,
        dedup_groups: Some(dedup_groups),
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `σ(-d(query, p_c))` for each singleton prototype.
pub fn mlpn_scores(query: &[f64], singleton_prototypes: &[Vec<f64>]) -> Result<Vec<f64>> {
    if singleton_prototypes.is_empty() {
        return Err(Error::Empty("singleton prototype list"));
    }
    singleton_prototypes
        .iter()
        .map(|p| cosine_distance(query, p).map(|d| sigmoid(-d)))
        .collect()
}
