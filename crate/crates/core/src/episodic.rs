//! N-way K-shot episode sampling for multi-label data, label splits and
//! task label pools.
//!
//! Support filling visits the active labels in random order and draws items
//! carrying the visited label until its count reaches `k_shot`. A drawn item
//! counts towards every active label it carries, which keeps per-label
//! support sizes close to `k_shot` instead of multiplying them by the label
//! cardinality. Item labels are masked to the active labels.

use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::label_space::{LabelSet, LabelVocabulary};
use crate::prototypes::EmbeddedItem;

/// Mixes a base seed with a stream and an index (splitmix64 finalizer), so
/// runs, epochs and episodes get independent, reproducible seeds.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, n_query: usize, seed: u64) -> Self {
        Self {
            n_way,
            k_shot,
            n_query,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.n_query < 1 {
            return Err(Error::InvalidConfig(format!(
                "episode needs n_way >= 2, k_shot >= 1, n_query >= 1 (got {}-way {}-shot, {} queries)",
                self.n_way, self.k_shot, self.n_query
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self::new(10, 3, 3, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub active_labels: LabelSet,
    pub support: Vec<EmbeddedItem>,
    pub query: Vec<EmbeddedItem>,
    /// For each support item, the active label it was drawn for.
    pub support_targets: Vec<usize>,
}

impl Episode {
    /// Number of support items carrying each active label, in label order.
    pub fn support_counts(&self) -> Vec<(usize, usize)> {
        count_per_label(&self.active_labels, &self.support)
    }

    pub fn query_counts(&self) -> Vec<(usize, usize)> {
        count_per_label(&self.active_labels, &self.query)
    }
}

fn count_per_label(active: &LabelSet, items: &[EmbeddedItem]) -> Vec<(usize, usize)> {
    active
        .iter()
        .map(|c| (c, items.iter().filter(|it| it.labels.contains(c)).count()))
        .collect()
}

/// Where an episode's active labels come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelPool {
    /// `n_way` labels drawn uniformly from one list.
    Uniform(Vec<usize>),
    /// `ceil(n_way / 2)` labels from `base`, `floor(n_way / 2)` from `novel`.
    Mixed { base: Vec<usize>, novel: Vec<usize> },
}

impl LabelPool {
    pub fn labels(&self) -> Vec<usize> {
        match self {
            LabelPool::Uniform(labels) => labels.clone(),
            LabelPool::Mixed { base, novel } => base.iter().chain(novel).copied().collect(),
        }
    }

    fn draw(&self, n_way: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        fn take(pool: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
            let mut unique = pool.to_vec();
            unique.sort_unstable();
            unique.dedup();
            if unique.len() < n {
                return Err(Error::InsufficientPool {
                    needed: n,
                    available: unique.len(),
                });
            }
            Ok(unique.choose_multiple(rng, n).copied().collect())
        }
        match self {
            LabelPool::Uniform(labels) => take(labels, n_way, rng),
            LabelPool::Mixed { base, novel } => {
                let mut out = take(base, n_way.div_ceil(2), rng)?;
                out.extend(take(novel, n_way / 2, rng)?);
                Ok(out)
            }
        }
    }
}

/// Samples one episode. Deterministic for a given dataset, pool and spec.
pub fn sample_episode(dataset: &Dataset, pool: &LabelPool, spec: &EpisodeSpec) -> Result<Episode> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = dataset.vocabulary();
    let items = dataset.items();

    let chosen = pool.draw(spec.n_way, &mut rng)?;
    let active: LabelSet = chosen.iter().copied().collect();
    if active.len() != spec.n_way {
        return Err(Error::InsufficientPool {
            needed: spec.n_way,
            available: active.len(),
        });
    }
    vocab.check(&active)?;

    // per active label, the items carrying it, in random draw order
    let mut carriers: Vec<Vec<usize>> = chosen
        .iter()
        .map(|&c| (0..items.len()).filter(|&i| items[i].labels.contains(c)).collect())
        .collect();
    let needed = spec.k_shot + spec.n_query;
    for (&c, list) in chosen.iter().zip(&carriers) {
        if list.len() < needed {
            return Err(insufficient(vocab, c, needed, list.len()));
        }
    }
    for list in &mut carriers {
        list.shuffle(&mut rng);
    }

    let mut used = vec![false; items.len()];
    let position = |label: usize| chosen.iter().position(|&c| c == label);

    let fill = |quota: usize, used: &mut [bool], rng: &mut ChaCha8Rng| -> Result<(Vec<EmbeddedItem>, Vec<usize>)> {
        let mut counts = vec![0usize; chosen.len()];
        let mut picked = Vec::new();
        let mut targets = Vec::new();
        let mut order: Vec<usize> = (0..chosen.len()).collect();
        order.shuffle(rng);
        for slot in order {
            let label = chosen[slot];
            let mut cursor = carriers[slot].iter();
            while counts[slot] < quota {
                let Some(&i) = cursor.find(|&&i| !used[i]) else {
                    let available = carriers[slot].iter().filter(|&&i| !used[i]).count();
                    return Err(insufficient(vocab, label, quota - counts[slot], available));
                };
                used[i] = true;
                let masked = items[i].labels.intersection(&active);
                for c in masked.iter() {
                    if let Some(p) = position(c) {
                        counts[p] += 1;
                    }
                }
                picked.push(EmbeddedItem::new(items[i].id.clone(), masked, items[i].embedding.clone()));
                targets.push(label);
            }
        }
        Ok((picked, targets))
    };

    let (support, support_targets) = fill(spec.k_shot, &mut used, &mut rng)?;
    let (query, _) = fill(spec.n_query, &mut used, &mut rng)?;

    Ok(Episode {
        active_labels: active,
        support,
        query,
        support_targets,
    })
}

fn insufficient(vocab: &LabelVocabulary, label: usize, needed: usize, available: usize) -> Error {
    Error::InsufficientItems {
        label: vocab.name(label).unwrap_or("?").to_string(),
        needed,
        available,
    }
}

/// Base, validation-holdout and novel label names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSplit {
    pub base: Vec<String>,
    pub validation_holdout: Vec<String>,
    pub novel: Vec<String>,
}

const SECTION_BASE: &str = "[base]";
const SECTION_VALIDATION: &str = "[validation]";
const SECTION_NOVEL: &str = "[novel]";

impl LabelSplit {
    /// Checks that the sections are pairwise disjoint and drawn from `vocab`.
    pub fn validate(&self, vocab: &LabelVocabulary) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for name in self.base.iter().chain(&self.validation_holdout).chain(&self.novel) {
            vocab.require(name)?;
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidConfig(format!("label {name:?} appears twice in split")));
            }
        }
        Ok(())
    }

    /// Text form: one label per line under `[base]`, `[validation]` and
    /// `[novel]` headers.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (header, labels) in [
            (SECTION_BASE, &self.base),
            (SECTION_VALIDATION, &self.validation_holdout),
            (SECTION_NOVEL, &self.novel),
        ] {
            out.push_str(header);
            out.push('\n');
            for label in labels {
                out.push_str(label);
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`LabelSplit::to_text`] output. Blank lines are ignored;
    /// `line` numbers in errors are 1-based.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut split = LabelSplit {
            base: Vec::new(),
            validation_holdout: Vec::new(),
            novel: Vec::new(),
        };
        let mut section: Option<&mut Vec<String>> = None;
        let mut seen_headers = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match line {
                SECTION_BASE | SECTION_VALIDATION | SECTION_NOVEL => {
                    if seen_headers.contains(&line) {
                        return Err((n + 1, format!("repeated section {line}")));
                    }
                    seen_headers.push(line);
                    section = Some(match line {
                        SECTION_BASE => &mut split.base,
                        SECTION_VALIDATION => &mut split.validation_holdout,
                        _ => &mut split.novel,
                    });
                }
                _ if line.starts_with('[') => return Err((n + 1, format!("unknown section {line}"))),
                label => match section.as_deref_mut() {
                    Some(list) => list.push(label.to_string()),
                    None => return Err((n + 1, "label before any section header".into())),
                },
            }
        }
        Ok(split)
    }

    fn indices(names: &[String], vocab: &LabelVocabulary) -> Result<Vec<usize>> {
        names.iter().map(|n| vocab.require(n)).collect()
    }
}

/// Seeded partition of the vocabulary; `novel` takes what remains.
pub fn split_labels(vocabulary: &LabelVocabulary, base_count: usize, holdout_count: usize, seed: u64) -> Result<LabelSplit> {
    let requested = base_count + holdout_count;
    if requested > vocabulary.len() {
        return Err(Error::CountOverflow {
            requested,
            available: vocabulary.len(),
        });
    }
    let mut order: Vec<usize> = (0..vocabulary.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let section = |range: std::ops::Range<usize>| -> Vec<String> {
        let mut ix = order[range].to_vec();
        ix.sort_unstable();
        ix.into_iter().map(|i| vocabulary.names()[i].clone()).collect()
    };
    Ok(LabelSplit {
        base: section(0..base_count),
        validation_holdout: section(base_count..requested),
        novel: section(requested..vocabulary.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskMode {
    Base,
    Novel,
    BaseAndNovel,
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::Base => "Base",
            TaskMode::Novel => "Novel",
            TaskMode::BaseAndNovel => "Base & Novel",
        })
    }
}

/// Label pool for an evaluation task over a split.
pub fn task_label_pool(split: &LabelSplit, mode: TaskMode, n_way: usize, vocab: &LabelVocabulary) -> Result<LabelPool> {
    let base = LabelSplit::indices(&split.base, vocab)?;
    let novel = LabelSplit::indices(&split.novel, vocab)?;
    let need = |have: usize, want: usize| {
        if have < want {
            Err(Error::InsufficientPool {
                needed: want,
                available: have,
            })
        } else {
            Ok(())
        }
    };
    match mode {
        TaskMode::Base => {
            need(base.len(), n_way)?;
            Ok(LabelPool::Uniform(base))
        }
        TaskMode::Novel => {
            need(novel.len(), n_way)?;
            Ok(LabelPool::Uniform(novel))
        }
        TaskMode::BaseAndNovel => {
            need(base.len(), n_way.div_ceil(2))?;
            need(novel.len(), n_way / 2)?;
            Ok(LabelPool::Mixed { base, novel })
        }
    }
}

/// Pool of the validation-holdout labels.
pub fn validation_pool(split: &LabelSplit, vocab: &LabelVocabulary) -> Result<LabelPool> {
    Ok(LabelPool::Uniform(LabelSplit::indices(&split.validation_holdout, vocab)?))
}
