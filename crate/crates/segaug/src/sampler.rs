//! Mini-batch construction from a similarity manifest.
//!
//! A batch pairs a similar set of exactly four ids drawn from one group with
//! dissimilar fillers drawn from the pool; the pool carries no similarity
//! information, so negatives never come from any group.

use std::collections::HashSet;

use rand::Rng;
use thiserror::Error;

use crate::seed::draw_without_replacement;

/// Number of similar instances per batch.
pub const POSITIVE_SET_SIZE: usize = 4;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("batch size must be at least {min}, got {got}", min = POSITIVE_SET_SIZE + 1)]
    BatchSizeTooSmall { got: usize },
    #[error("no group has {POSITIVE_SET_SIZE} or more members")]
    NoEligibleGroup,
    #[error("pool has {available} ids but {needed} negatives are required")]
    InsufficientPool { available: usize, needed: usize },
    #[error("group {index} has {len} members; groups need at least 2")]
    GroupTooSmall { index: usize, len: usize },
    #[error("duplicate id {0:?} across groups/pool")]
    DuplicateId(String),
    #[error("empty image id")]
    EmptyId,
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Groups of mutually similar image ids plus a pool of ids with no known
/// similarity. Groups are pairwise disjoint and disjoint from the pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityManifest {
    groups: Vec<Vec<String>>,
    pool: Vec<String>,
}

impl SimilarityManifest {
    pub fn new(groups: Vec<Vec<String>>, pool: Vec<String>) -> Result<Self, SamplerError> {
        let mut seen: HashSet<&str> = HashSet::new();
        for (index, group) in groups.iter().enumerate() {
            if group.len() < 2 {
                return Err(SamplerError::GroupTooSmall {
                    index,
                    len: group.len(),
                });
            }
            for id in group {
                if id.is_empty() {
                    return Err(SamplerError::EmptyId);
                }
                if !seen.insert(id) {
                    return Err(SamplerError::DuplicateId(id.clone()));
                }
            }
        }
        for id in &pool {
            if id.is_empty() {
                return Err(SamplerError::EmptyId);
            }
            if !seen.insert(id) {
                return Err(SamplerError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { groups, pool })
    }

    /// Parses the manifest text format: `[group]` headers each followed by
    /// one id per line, then `[pool]` with one id per line. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SamplerError> {
        enum Section {
            None,
            Group,
            Pool,
        }
        let mut groups: Vec<Vec<String>> = Vec::new();
        let mut pool: Vec<String> = Vec::new();
        let mut section = Section::None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[group]" => {
                    groups.push(Vec::new());
                    section = Section::Group;
                }
                "[pool]" => section = Section::Pool,
                id if id.starts_with('[') => {
                    return Err(SamplerError::Parse {
                        line: i + 1,
                        message: format!("unknown section header {id:?}"),
                    })
                }
                id => match section {
                    Section::None => {
                        return Err(SamplerError::Parse {
                            line: i + 1,
                            message: "id before any [group] or [pool] header".into(),
                        })
                    }
                    Section::Group => groups.last_mut().unwrap().push(id.to_string()),
                    Section::Pool => pool.push(id.to_string()),
                },
            }
        }
        Self::new(groups, pool)
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }
}

/// One sampled mini-batch: exactly four positives from a single group and
/// `batch_size - 4` distinct pool negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSpec {
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl BatchSpec {
    /// `a,b,c,d|x,y,z` — positives, a pipe, then negatives.
    pub fn render_line(&self) -> String {
        format!("{}|{}", self.positives.join(","), self.negatives.join(","))
    }
}

/// Samples one batch: a uniform group with at least four members, four of its
/// members without replacement, and `batch_size - 4` pool ids without
/// replacement. Draw order is group index, then positives, then negatives.
pub fn sample_batch(
    manifest: &SimilarityManifest,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<BatchSpec, SamplerError> {
    if batch_size <= POSITIVE_SET_SIZE {
        return Err(SamplerError::BatchSizeTooSmall { got: batch_size });
    }
    let eligible: Vec<&Vec<String>> = manifest
        .groups
        .iter()
        .filter(|g| g.len() >= POSITIVE_SET_SIZE)
        .collect();
    if eligible.is_empty() {
        return Err(SamplerError::NoEligibleGroup);
    }
    let needed = batch_size - POSITIVE_SET_SIZE;
    if manifest.pool.len() < needed {
        return Err(SamplerError::InsufficientPool {
            available: manifest.pool.len(),
            needed,
        });
    }
    let group = eligible[rng.random_range(0..eligible.len())];
    let positives = draw_without_replacement(group, POSITIVE_SET_SIZE, rng);
    let negatives = draw_without_replacement(&manifest.pool, needed, rng);
    Ok(BatchSpec {
        positives,
        negatives,
    })
}

/// Binary labels in batch order: 1 for each positive, then 0 for each
/// negative. Feeds `ScoreBatch::new` directly.
pub fn batch_labels(spec: &BatchSpec) -> Vec<bool> {
    let mut labels = vec![true; spec.positives.len()];
    labels.extend(std::iter::repeat(false).take(spec.negatives.len()));
    labels
}
