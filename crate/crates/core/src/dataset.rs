use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::label_space::LabelVocabulary;
use crate::prototypes::EmbeddedItem;

/// Validated collection of embedded items over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vocabulary: LabelVocabulary,
    items: Vec<EmbeddedItem>,
    dim: usize,
}

impl Dataset {
    /// Checks every item: dimension, finiteness, labels in range and
    /// non-empty, unique ids.
    pub fn new(vocabulary: LabelVocabulary, dim: usize, items: Vec<EmbeddedItem>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(items.len());
        for item in &items {
            if item.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: item.dim(),
                    context: format!("item {}", item.id),
                });
            }
            if item.embedding.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding of {}", item.id)));
            }
            if item.labels.is_empty() {
                return Err(Error::EmptyLabelSet(format!("item {}", item.id)));
            }
            vocabulary.check(&item.labels)?;
            if !ids.insert(item.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate item id {:?}", item.id)));
            }
        }
        Ok(Self { vocabulary, items, dim })
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        &self.vocabulary
    }

    pub fn items(&self) -> &[EmbeddedItem] {
        &self.items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of items carrying each label, indexed by label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocabulary.len()];
        for item in &self.items {
            for c in item.labels.iter() {
                counts[c] += 1;
            }
        }
        counts
    }

    pub fn into_parts(self) -> (LabelVocabulary, Vec<EmbeddedItem>) {
        (self.vocabulary, self.items)
    }
}
