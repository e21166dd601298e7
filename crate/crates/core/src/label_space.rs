//! Label vocabulary, label bitsets and the power-set algebra that defines
//! label-combination classes.
//!
//! A label-combination class (LC-class) is any non-empty subset of some
//! support item's label set. The LC-classes of a support set are the union
//! of the per-item power sets, kept in a canonical order: ascending
//! cardinality, then ascending bit pattern.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// Largest per-item label cardinality expanded into a power set by default.
pub const DEFAULT_POWER_SET_CAP: usize = 20;

const WORD_BITS: usize = 64;

/// Ordered, duplicate-free list of label names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            validate_label_name(name)?;
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(name.clone()));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    /// Builds a label set from names, failing on the first unknown one.
    pub fn label_set<'a, I>(&self, names: I) -> Result<LabelSet>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = LabelSet::new();
        for name in names {
            set.insert(self.require(name)?);
        }
        Ok(set)
    }

    pub fn names_of(&self, set: &LabelSet) -> Vec<&str> {
        set.iter()
            .map(|i| self.name(i).unwrap_or("<out-of-range>"))
            .collect()
    }

    /// Renders a set as `{a, b}` using vocabulary names.
    pub fn format_set(&self, set: &LabelSet) -> String {
        format!("{{{}}}", self.names_of(set).join(", "))
    }

    pub fn check(&self, set: &LabelSet) -> Result<()> {
        match set.max_index() {
            Some(max) if max >= self.len() => Err(Error::LabelOutOfRange {
                index: max,
                size: self.len(),
            }),
            _ => Ok(()),
        }
    }
}

fn validate_label_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name.trim() != name
        || name.starts_with('[')
        || name.chars().any(char::is_control);
    if bad {
        Err(Error::InvalidLabelName(name.to_string()))
    } else {
        Ok(())
    }
}

/// Bitset over label indices.
///
/// Storage is trimmed so that the highest word is non-zero; two sets with
/// the same members always compare and hash equal.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct LabelSet {
    words: Vec<u64>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self { words: Vec::new() }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut set = Self::new();
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn singleton(index: usize) -> Self {
        Self::from_indices([index])
    }

    pub fn insert(&mut self, index: usize) {
        let word = index / WORD_BITS;
        if word >= self.words.len() {
            self.words.resize(word + 1, 0);
        }
        self.words[word] |= 1 << (index % WORD_BITS);
    }

    pub fn remove(&mut self, index: usize) {
        let word = index / WORD_BITS;
        if let Some(w) = self.words.get_mut(word) {
            *w &= !(1 << (index % WORD_BITS));
            self.trim();
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.words
            .get(index / WORD_BITS)
            .is_some_and(|w| w & (1 << (index % WORD_BITS)) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_subset_of(&self, other: &LabelSet) -> bool {
        self.words.len() <= other.words.len()
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    pub fn intersects(&self, other: &LabelSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn intersection(&self, other: &LabelSet) -> LabelSet {
        let mut out = LabelSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        };
        out.trim();
        out
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        let (long, short) = if self.words.len() >= other.words.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut words = long.words.clone();
        for (w, s) in words.iter_mut().zip(&short.words) {
            *w |= s;
        }
        LabelSet { words }
    }

    pub fn max_index(&self) -> Option<usize> {
        let last = *self.words.last()?;
        Some((self.words.len() - 1) * WORD_BITS + (WORD_BITS - 1 - last.leading_zeros() as usize))
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD_BITS + bit)
            })
        })
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    /// Compares the raw bit patterns as unsigned integers.
    fn cmp_bits(&self, other: &LabelSet) -> Ordering {
        self.words
            .len()
            .cmp(&other.words.len())
            .then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

/// Canonical order: ascending cardinality, then ascending bit pattern.
impl Ord for LabelSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.cmp_bits(other))
    }
}

impl PartialOrd for LabelSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::from_indices(iter)
    }
}

/// All non-empty subsets of `labels`.
///
/// Fails when `labels` is empty or holds more than `cap` members.
pub fn power_set(labels: &LabelSet, cap: usize) -> Result<Vec<LabelSet>> {
    power_set_of(labels, cap, || "label set".to_string())
}

fn power_set_of(
    labels: &LabelSet,
    cap: usize,
    item: impl FnOnce() -> String,
) -> Result<Vec<LabelSet>> {
    let members = labels.to_vec();
    let k = members.len();
    if k == 0 {
        return Err(Error::EmptyLabelSet(item()));
    }
    if k > cap || k >= WORD_BITS {
        return Err(Error::CardinalityAboveCap {
            item: item(),
            cardinality: k,
            cap,
        });
    }
    let subsets = (1u64..(1u64 << k))
        .map(|mask| {
            let mut set = LabelSet::new();
            let mut m = mask;
            while m != 0 {
                set.insert(members[m.trailing_zeros() as usize]);
                m &= m - 1;
            }
            set
        })
        .collect();
    Ok(subsets)
}

/// Deduplicated LC-classes in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LCClassSet {
    classes: Vec<LabelSet>,
}

impl LCClassSet {
    /// Wraps classes that are already sorted and deduplicated.
    pub(crate) fn from_sorted(classes: Vec<LabelSet>) -> Self {
        debug_assert!(classes.windows(2).all(|w| w[0] < w[1]));
        Self { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn as_slice(&self) -> &[LabelSet] {
        &self.classes
    }

    pub fn get(&self, j: usize) -> Option<&LabelSet> {
        self.classes.get(j)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabelSet> {
        self.classes.iter()
    }

    pub fn position(&self, class: &LabelSet) -> Option<usize> {
        self.classes.binary_search(class).ok()
    }

    pub fn contains(&self, class: &LabelSet) -> bool {
        self.position(class).is_some()
    }
}

impl<'a> IntoIterator for &'a LCClassSet {
    type Item = &'a LabelSet;
    type IntoIter = std::slice::Iter<'a, LabelSet>;

    fn into_iter(self) -> Self::IntoIter {
        self.classes.iter()
    }
}

/// Union of the power sets of every support label set.
pub fn lc_classes(support_labels: &[LabelSet], cap: usize) -> Result<LCClassSet> {
    lc_classes_named(
        support_labels
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("support item #{i}"), s)),
        cap,
    )
}

pub(crate) fn lc_classes_named<'a, I>(support: I, cap: usize) -> Result<LCClassSet>
where
    I: IntoIterator<Item = (String, &'a LabelSet)>,
{
    let mut seen: HashSet<LabelSet> = HashSet::new();
    let mut any = false;
    for (name, labels) in support {
        any = true;
        seen.extend(power_set_of(labels, cap, || name)?);
    }
    if !any {
        return Err(Error::Empty("support label list"));
    }
    let mut classes: Vec<LabelSet> = seen.into_iter().collect();
    classes.sort_unstable();
    Ok(LCClassSet::from_sorted(classes))
}

/// Expanded multi-hot target: position `j` is set iff `classes[j]` is a
/// subset of `item_labels`.
pub fn expand_multi_hot(item_labels: &LabelSet, classes: &LCClassSet) -> Vec<bool> {
    classes
        .iter()
        .map(|c| c.is_subset_of(item_labels))
        .collect()
}
