//! Rank-based retrieval metrics: normalized average rank and Recall@K.
//!
//! NAR for one query is
//!
//! ```text
//! NAR = (1 / (N * N_rel)) * (sum_i R_i  -  N_rel * (N_rel + 1) / 2)
//! ```
//!
//! where `R_i` are the ranks of the relevant documents, `N_rel` their count
//! and `N` the retrieval-set size. It is 0 when every relevant document is
//! ranked first and approaches 1 as they sink to the bottom. The subtraction
//! and division are done on exact integers so the boundary laws hold without
//! rounding slack.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("a query must have at least one relevant document")]
    EmptyRanks,
    #[error("rank {rank} outside [1, {n}]")]
    RankOutOfRange { rank: usize, n: usize },
    #[error("duplicate rank {0}")]
    DuplicateRank(usize),
    #[error("query {query:?} lists {listed} documents but N = {n}")]
    ListExceedsTotal {
        query: String,
        listed: usize,
        n: usize,
    },
    #[error("query {query:?} has {n_rel} relevant documents but N = {n}")]
    TooManyRelevant {
        query: String,
        n_rel: usize,
        n: usize,
    },
    #[error("query {query:?} has duplicate document {doc:?}")]
    DuplicateDoc { query: String, doc: String },
    #[error("query {query:?} ranks are not strictly increasing at {doc:?}")]
    RanksNotIncreasing { query: String, doc: String },
    #[error("query {0:?} appears in the relevance set but not in the run")]
    MissingQuery(String),
    #[error("relevant document {doc:?} missing from the ranking of query {query:?}")]
    MissingRelevant { query: String, doc: String },
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// What to do when a relevant document never appears in a query's ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Fail loudly.
    Error,
    /// Assign the worst rank `N` and count the document in the missing tally.
    Pessimistic,
}

/// Recall@K flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecallMode {
    /// 1 if any relevant document ranks within the top K (the default).
    Hit,
    /// Fraction of relevant documents ranking within the top K.
    Fraction,
}

/// Ordered retrieval results per query: `(document, rank)` with ranks
/// strictly increasing, plus the total retrieval-set size `N` (the listed
/// prefix may be shorter than `N`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingRun {
    n_total: usize,
    rankings: BTreeMap<String, Vec<(String, usize)>>,
}

impl RankingRun {
    pub fn new(
        n_total: usize,
        rankings: BTreeMap<String, Vec<(String, usize)>>,
    ) -> Result<Self, EvalError> {
        for (query, list) in &rankings {
            if list.len() > n_total {
                return Err(EvalError::ListExceedsTotal {
                    query: query.clone(),
                    listed: list.len(),
                    n: n_total,
                });
            }
            let mut docs = BTreeSet::new();
            let mut prev_rank = 0usize;
            for (doc, rank) in list {
                if !docs.insert(doc.as_str()) {
                    return Err(EvalError::DuplicateDoc {
                        query: query.clone(),
                        doc: doc.clone(),
                    });
                }
                if *rank < 1 || *rank > n_total {
                    return Err(EvalError::RankOutOfRange {
                        rank: *rank,
                        n: n_total,
                    });
                }
                if *rank <= prev_rank {
                    return Err(EvalError::RanksNotIncreasing {
                        query: query.clone(),
                        doc: doc.clone(),
                    });
                }
                prev_rank = *rank;
            }
        }
        Ok(Self { n_total, rankings })
    }

    /// Builds a run from plain ordered lists, assigning ranks 1, 2, 3, ...
    pub fn from_ordered_lists(
        n_total: usize,
        lists: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, EvalError> {
        let rankings = lists
            .into_iter()
            .map(|(q, docs)| {
                let ranked = docs
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| (d, i + 1))
                    .collect();
                (q, ranked)
            })
            .collect();
        Self::new(n_total, rankings)
    }

    /// Parses the run file: a `#N=<int>` header line followed by
    /// `query<TAB>doc<TAB>rank` lines, ranks strictly increasing per query.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(EvalError::Parse {
            line: 1,
            message: "empty run file".into(),
        })?;
        let n_total: usize = header
            .strip_prefix("#N=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or(EvalError::Parse {
                line: 1,
                message: format!("expected '#N=<int>' header, got {header:?}"),
            })?;
        let mut rankings: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
        for (i, raw) in lines {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (query, doc, rank) = match (parts.next(), parts.next(), parts.next(), parts.next())
            {
                (Some(q), Some(d), Some(r), None) => (q, d, r),
                _ => {
                    return Err(EvalError::Parse {
                        line: i + 1,
                        message: format!("expected 'query<TAB>doc<TAB>rank', got {line:?}"),
                    })
                }
            };
            let rank: usize = rank.parse().map_err(|_| EvalError::Parse {
                line: i + 1,
                message: format!("rank {rank:?} is not an integer"),
            })?;
            rankings
                .entry(query.to_string())
                .or_default()
                .push((doc.to_string(), rank));
        }
        Self::new(n_total, rankings)
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn ranking(&self, query: &str) -> Option<&[(String, usize)]> {
        self.rankings.get(query).map(Vec::as_slice)
    }
}

/// Ground-truth relevant documents per query; every query has at least one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceSet {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

impl RelevanceSet {
    pub fn new(relevant: BTreeMap<String, BTreeSet<String>>) -> Result<Self, EvalError> {
        if relevant.values().any(BTreeSet::is_empty) {
            return Err(EvalError::EmptyRanks);
        }
        Ok(Self { relevant })
    }

    /// Parses `query<TAB>doc` lines; duplicates are rejected.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (query, doc) = match (parts.next(), parts.next(), parts.next()) {
                (Some(q), Some(d), None) => (q, d),
                _ => {
                    return Err(EvalError::Parse {
                        line: i + 1,
                        message: format!("expected 'query<TAB>doc', got {line:?}"),
                    })
                }
            };
            if !relevant
                .entry(query.to_string())
                .or_default()
                .insert(doc.to_string())
            {
                return Err(EvalError::Parse {
                    line: i + 1,
                    message: format!("duplicate relevance pair {query:?} {doc:?}"),
                });
            }
        }
        Self::new(relevant)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.relevant.keys().map(String::as_str)
    }

    pub fn relevant(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query)
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }
}

/// Per-query metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEval {
    pub nar: f64,
    /// Recall value per requested K.
    pub recall: BTreeMap<usize, f64>,
    /// Relevant documents absent from the listed ranking.
    pub missing: usize,
}

/// Full evaluation output with per-query rows and unweighted means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_query: BTreeMap<String, QueryEval>,
    pub mean_nar: f64,
    pub mean_recall: BTreeMap<usize, f64>,
    pub missing_total: usize,
}

impl EvalReport {
    /// Human-readable table followed by machine-readable key-value lines.
    pub fn render(&self) -> String {
        let ks: Vec<usize> = self.mean_recall.keys().copied().collect();
        let mut out = String::from("query\tNAR");
        for k in &ks {
            out.push_str(&format!("\tR@{k}"));
        }
        out.push_str("\tmissing\n");
        for (query, q) in &self.per_query {
            out.push_str(&format!("{query}\t{:.4}", q.nar));
            for k in &ks {
                out.push_str(&format!("\t{:.4}", q.recall[k]));
            }
            out.push_str(&format!("\t{}\n", q.missing));
        }
        out.push_str(&format!("mean\t{:.4}", self.mean_nar));
        for k in &ks {
            out.push_str(&format!("\t{:.4}", self.mean_recall[k]));
        }
        out.push_str(&format!("\t{}\n\n", self.missing_total));

        for (query, q) in &self.per_query {
            out.push_str(&format!("query={query} nar={:.6}", q.nar));
            for k in &ks {
                out.push_str(&format!(" r@{k}={:.6}", q.recall[k]));
            }
            out.push_str(&format!(" missing={}\n", q.missing));
        }
        out.push_str(&format!(
            "aggregate queries={} mean_nar={:.6}",
            self.per_query.len(),
            self.mean_nar
        ));
        for k in &ks {
            out.push_str(&format!(" mean_r@{k}={:.6}", self.mean_recall[k]));
        }
        out.push_str(&format!(" missing_total={}\n", self.missing_total));
        out
    }
}

/// Exact-integer NAR core; `ranks` may repeat only via the pessimistic
/// missing policy (every repeat sits at rank N, which keeps the numerator
/// non-negative).
fn nar_formula(ranks: &[usize], n_total: usize) -> f64 {
    let n_rel = ranks.len() as u64;
    let sum: u64 = ranks.iter().map(|&r| r as u64).sum();
    let numerator = 2 * sum - n_rel * (n_rel + 1);
    let denominator = 2 * n_total as u64 * n_rel;
    numerator as f64 / denominator as f64
}

/// NAR for one query from the ranks of its relevant documents. The ranks
/// must be distinct and within `[1, n_total]`; their count is `N_rel`.
pub fn nar_single(ranks: &[usize], n_total: usize) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyRanks);
    }
    let mut seen = BTreeSet::new();
    for &rank in ranks {
        if rank < 1 || rank > n_total {
            return Err(EvalError::RankOutOfRange { rank, n: n_total });
        }
        if !seen.insert(rank) {
            return Err(EvalError::DuplicateRank(rank));
        }
    }
    Ok(nar_formula(ranks, n_total))
}

/// Evaluates NAR and Recall@K for every query in the relevance set.
///
/// Ranks of relevant documents are read from the run; under
/// [`MissingPolicy::Pessimistic`] an absent document is assigned rank `N`
/// and counted in the missing tally, under [`MissingPolicy::Error`] it
/// fails. Aggregates are unweighted means over queries.
pub fn evaluate(
    run: &RankingRun,
    rel: &RelevanceSet,
    ks: &[usize],
    recall_mode: RecallMode,
    missing_policy: MissingPolicy,
) -> Result<EvalReport, EvalError> {
    if rel.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let n = run.n_total();
    let mut per_query = BTreeMap::new();
    let mut missing_total = 0usize;

    for query in rel.queries() {
        let relevant = rel.relevant(query).expect("iterating rel's own queries");
        let list = run
            .ranking(query)
            .ok_or_else(|| EvalError::MissingQuery(query.to_string()))?;
        if relevant.len() > n {
            return Err(EvalError::TooManyRelevant {
                query: query.to_string(),
                n_rel: relevant.len(),
                n,
            });
        }
        let mut rank_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (doc, rank) in list {
            if relevant.contains(doc) {
                rank_of.insert(doc, *rank);
            }
        }
        let mut ranks = Vec::with_capacity(relevant.len());
        let mut missing = 0usize;
        for doc in relevant {
            match rank_of.get(doc.as_str()) {
                Some(&rank) => ranks.push(rank),
                None => match missing_policy {
                    MissingPolicy::Error => {
                        return Err(EvalError::MissingRelevant {
                            query: query.to_string(),
                            doc: doc.clone(),
                        })
                    }
                    MissingPolicy::Pessimistic => {
                        ranks.push(n);
                        missing += 1;
                    }
                },
            }
        }
        missing_total += missing;
        let nar = nar_formula(&ranks, n);
        let recall = ks
            .iter()
            .map(|&k| {
                let within = ranks.iter().filter(|&&r| r <= k).count();
                let value = match recall_mode {
                    RecallMode::Hit => {
                        if within > 0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    RecallMode::Fraction => within as f64 / ranks.len() as f64,
                };
                (k, value)
            })
            .collect();
        per_query.insert(
            query.to_string(),
            QueryEval {
                nar,
                recall,
                missing,
            },
        );
    }

    let count = per_query.len() as f64;
    let mean_nar = per_query.values().map(|q| q.nar).sum::<f64>() / count;
    let mean_recall = ks
        .iter()
        .map(|&k| {
            let mean = per_query.values().map(|q| q.recall[&k]).sum::<f64>() / count;
            (k, mean)
        })
        .collect();
    Ok(EvalReport {
        per_query,
        mean_nar,
        mean_recall,
        missing_total,
    })
}
