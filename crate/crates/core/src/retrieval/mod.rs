//! Demonstration selection over an [`IncompleteView`].
//!
//! Similarity is cosine over the primary embedding channel. Exact scan only;
//! ties are broken by ascending instance id so every ordering is total.

mod kmeans;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{kmeans, Clustering};

use crate::dataset::{IncompleteView, Instance, Payload, Query};
use crate::seed::SeedKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("vector dims differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cannot compute cosine similarity with a zero vector")]
    ZeroVector,
    #[error("non-finite value in vector")]
    NonFinite,
    #[error("the view has no instances to retrieve from")]
    EmptyView,
    #[error("cannot form {k} clusters from {rows} rows")]
    TooManyClusters { k: usize, rows: usize },
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
}

/// Cosine similarity in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(pub f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<SimilarityScore, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if !(dot.is_finite() && na.is_finite() && nb.is_finite()) {
        return Err(RetrievalError::NonFinite);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok(SimilarityScore((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Static,
    Random,
    ClusterRetrieval,
    Kate,
    ClusterDiversity,
    Rerank,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Static,
        StrategyKind::Random,
        StrategyKind::ClusterRetrieval,
        StrategyKind::Kate,
        StrategyKind::ClusterDiversity,
        StrategyKind::Rerank,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Static => "static",
            StrategyKind::Random => "random",
            StrategyKind::ClusterRetrieval => "cluster_retrieval",
            StrategyKind::Kate => "kate",
            StrategyKind::ClusterDiversity => "cluster_diversity",
            StrategyKind::Rerank => "rerank",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = RetrievalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| RetrievalError::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Size of the first-pass pool for rerank; defaults to `3 * k`.
    #[serde(default)]
    pub rerank_pool: Option<usize>,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
}

fn default_kmeans_iters() -> usize {
    50
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, k: usize) -> Self {
        Self {
            kind,
            k,
            seed: 0,
            rerank_pool: None,
            kmeans_iters: default_kmeans_iters(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn rerank_pool(&self) -> usize {
        self.rerank_pool.unwrap_or(3 * self.k)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidConfig("k must be >= 1".into()));
        }
        if self.rerank_pool() < self.k {
            return Err(RetrievalError::InvalidConfig(format!(
                "rerank_pool {} is smaller than k {}",
                self.rerank_pool(),
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub label: String,
    pub payload: Payload,
    pub score: SimilarityScore,
}

impl Demonstration {
    fn from_instance(inst: &Instance, score: f64) -> Self {
        Self {
            id: inst.id.clone(),
            label: inst.label.clone(),
            payload: inst.payload.clone(),
            score: SimilarityScore(score),
        }
    }
}

/// Ordered demonstrations, most relevant first for similarity strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub items: Vec<Demonstration>,
    /// `None` for zero-shot prompts.
    pub strategy: Option<StrategyKind>,
    /// Fewer than `k` items were available.
    pub short_set: bool,
    /// The requested strategy degenerated and top-k filled in.
    pub fallback: bool,
}

impl DemonstrationSet {
    pub fn empty() -> Self {
        Self {
            items: Vec::new(),
            strategy: None,
            short_set: false,
            fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|d| d.id.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    member: usize,
    score: f64,
}

/// Higher score first, then ascending id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

struct HeapEntry<'a> {
    score: f64,
    id: &'a str,
    member: usize,
}

impl PartialEq for HeapEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry<'_> {}
impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry<'_> {
    // "Greater" means worse-ranked, so the max-heap top is the weakest kept entry.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order((self.score, self.id), (other.score, other.id))
    }
}

fn score_members(
    view: &IncompleteView<'_>,
    query: &[f32],
    exclude_id: Option<&str>,
) -> Result<Vec<Scored>, RetrievalError> {
    let db = view.base();
    let mut out = Vec::with_capacity(view.len());
    for &member in view.member_indices() {
        let inst = &db.instances()[member];
        if Some(inst.id.as_str()) == exclude_id {
            continue;
        }
        let score = cosine_similarity(query, db.embedding(inst))?.0;
        out.push(Scored { member, score });
    }
    Ok(out)
}

fn sort_ranked(view: &IncompleteView<'_>, items: &mut [Scored]) {
    let instances = view.base().instances();
    items.sort_by(|a, b| {
        rank_order(
            (a.score, &instances[a.member].id),
            (b.score, &instances[b.member].id),
        )
    });
}

fn top_k_of(view: &IncompleteView<'_>, scored: &[Scored], k: usize) -> Vec<Scored> {
    let instances = view.base().instances();
    let mut heap: BinaryHeap<HeapEntry<'_>> = BinaryHeap::with_capacity(k + 1);
    for s in scored {
        let entry = HeapEntry {
            score: s.score,
            id: &instances[s.member].id,
            member: s.member,
        };
        if heap.len() < k {
            heap.push(entry);
        } else if let Some(worst) = heap.peek() {
            if entry < *worst {
                heap.pop();
                heap.push(entry);
            }
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|e| Scored {
            member: e.member,
            score: e.score,
        })
        .collect()
}

fn to_set(
    view: &IncompleteView<'_>,
    items: &[Scored],
    strategy: StrategyKind,
    k: usize,
) -> DemonstrationSet {
    let instances = view.base().instances();
    DemonstrationSet {
        items: items
            .iter()
            .map(|s| Demonstration::from_instance(&instances[s.member], s.score))
            .collect(),
        strategy: Some(strategy),
        short_set: items.len() < k,
        fallback: false,
    }
}

/// The `k` most similar instances, highest similarity first. Returns every
/// instance with `short_set` raised when the view holds fewer than `k`.
pub fn retrieve_topk(
    view: &IncompleteView<'_>,
    query: &[f32],
    k: usize,
    exclude_id: Option<&str>,
) -> Result<DemonstrationSet, RetrievalError> {
    if view.is_empty() {
        return Err(RetrievalError::EmptyView);
    }
    if k == 0 {
        return Err(RetrievalError::InvalidConfig("k must be >= 1".into()));
    }
    let scored = score_members(view, query, exclude_id)?;
    let top = top_k_of(view, &scored, k);
    let set = to_set(view, &top, StrategyKind::Kate, k);
    if set.short_set {
        log::warn!("view holds {} candidates, fewer than k = {k}", top.len());
    }
    Ok(set)
}

/// A strategy bound to one view. Query-independent work (clustering) is done
/// once and shared by every query; safe to use from many threads.
pub struct Selector<'v> {
    config: StrategyConfig,
    view: &'v IncompleteView<'v>,
    clustering: OnceLock<Option<Clustering>>,
}

impl<'v> Selector<'v> {
    pub fn new(config: StrategyConfig, view: &'v IncompleteView<'v>) -> Result<Self, RetrievalError> {
        config.validate()?;
        if view.is_empty() {
            return Err(RetrievalError::EmptyView);
        }
        Ok(Self {
            config,
            view,
            clustering: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    fn clustering(&self) -> Option<&Clustering> {
        self.clustering
            .get_or_init(|| {
                let db = self.view.base();
                let points: Vec<&[f32]> = self
                    .view
                    .iter()
                    .map(|inst| db.embedding(inst))
                    .collect();
                match kmeans(&points, self.config.k, self.config.kmeans_iters, self.config.seed) {
                    Ok(c) if c.non_empty_clusters() == self.config.k => Some(c),
                    Ok(c) => {
                        log::warn!(
                            "k-means produced {} distinct clusters for k = {}; using top-k",
                            c.non_empty_clusters(),
                            self.config.k
                        );
                        None
                    }
                    Err(e) => {
                        log::warn!("k-means unavailable ({e}); using top-k");
                        None
                    }
                }
            })
            .as_ref()
    }

    pub fn select(&self, query: &Query) -> Result<DemonstrationSet, RetrievalError> {
        let view = self.view;
        let k = self.config.k;
        let kind = self.config.kind;
        let exclude = Some(query.id.as_str());
        let scored = score_members(view, &query.embedding, exclude)?;
        if scored.is_empty() {
            return Err(RetrievalError::EmptyView);
        }

        let mut set = match kind {
            StrategyKind::Kate => to_set(view, &top_k_of(view, &scored, k), kind, k),
            StrategyKind::Static => {
                // `scored` is already in manifest order.
                let take: Vec<Scored> = scored.iter().take(k).copied().collect();
                to_set(view, &take, kind, k)
            }
            StrategyKind::Random => {
                let mut rng = SeedKey::new("random-demos")
                    .with_u64(self.config.seed)
                    .with_str(&query.id)
                    .rng();
                let n = k.min(scored.len());
                let mut picked: Vec<Scored> = index::sample(&mut rng, scored.len(), n)
                    .into_iter()
                    .map(|i| scored[i])
                    .collect();
                sort_ranked(view, &mut picked);
                to_set(view, &picked, kind, k)
            }
            StrategyKind::ClusterRetrieval | StrategyKind::ClusterDiversity => {
                self.select_clustered(&scored)
            }
            StrategyKind::Rerank => self.select_rerank(query, &scored)?,
        };
        set.strategy = Some(kind);
        Ok(set)
    }

    fn select_clustered(&self, scored: &[Scored]) -> DemonstrationSet {
        let view = self.view;
        let k = self.config.k;
        let kind = self.config.kind;
        let Some(clustering) = self.clustering() else {
            let mut set = to_set(view, &top_k_of(view, scored, k), kind, k);
            set.fallback = true;
            return set;
        };
        let db = view.base();
        let instances = db.instances();
        let members = view.member_indices();
        // Position in `members` -> similarity to the query (None when excluded).
        let mut sim = vec![None; members.len()];
        {
            let mut lookup = std::collections::HashMap::with_capacity(scored.len());
            for s in scored {
                lookup.insert(s.member, s.score);
            }
            for (pos, m) in members.iter().enumerate() {
                sim[pos] = lookup.get(m).copied();
            }
        }

        let mut picked = Vec::with_capacity(k);
        for cluster in 0..clustering.k() {
            let best = clustering
                .members(cluster)
                .filter_map(|pos| sim[pos].map(|s| (pos, s)))
                .min_by(|&(pa, sa), &(pb, sb)| {
                    let (ia, ib) = (&instances[members[pa]], &instances[members[pb]]);
                    match kind {
                        StrategyKind::ClusterRetrieval => rank_order((sa, &ia.id), (sb, &ib.id)),
                        _ => {
                            let c = &clustering.centroids[cluster];
                            let da = kmeans::squared_distance(db.embedding(ia), c);
                            let db_ = kmeans::squared_distance(db.embedding(ib), c);
                            da.total_cmp(&db_).then_with(|| ia.id.cmp(&ib.id))
                        }
                    }
                });
            if let Some((pos, score)) = best {
                picked.push(Scored {
                    member: members[pos],
                    score,
                });
            }
        }

        let mut fallback = false;
        if picked.len() < k {
            // A cluster held only the query itself; fill from top-k.
            fallback = true;
            let have: HashSet<usize> = picked.iter().map(|s| s.member).collect();
            let rest: Vec<Scored> = scored
                .iter()
                .filter(|s| !have.contains(&s.member))
                .copied()
                .collect();
            picked.extend(top_k_of(view, &rest, k - picked.len()));
        }
        sort_ranked(view, &mut picked);
        let mut set = to_set(view, &picked, kind, k);
        set.fallback = fallback;
        set
    }

    fn select_rerank(
        &self,
        query: &Query,
        scored: &[Scored],
    ) -> Result<DemonstrationSet, RetrievalError> {
        let view = self.view;
        let k = self.config.k;
        let pool = top_k_of(view, scored, self.config.rerank_pool());
        let db = view.base();
        let (Some(_), Some(query_aux)) = (db.aux_embeddings(), query.aux_embedding.as_deref())
        else {
            let top: Vec<Scored> = pool.into_iter().take(k).collect();
            return Ok(to_set(view, &top, StrategyKind::Rerank, k));
        };
        let mut rescored = Vec::with_capacity(pool.len());
        for s in pool {
            let inst = &db.instances()[s.member];
            let aux = db.aux_embedding(inst).expect("aux channel present");
            rescored.push(Scored {
                member: s.member,
                score: cosine_similarity(query_aux, aux)?.0,
            });
        }
        sort_ranked(view, &mut rescored);
        rescored.truncate(k);
        Ok(to_set(view, &rescored, StrategyKind::Rerank, k))
    }
}

/// One-shot form of [`Selector::select`].
pub fn retrieve_with_strategy(
    config: &StrategyConfig,
    view: &IncompleteView<'_>,
    query: &Query,
) -> Result<DemonstrationSet, RetrievalError> {
    Selector::new(config.clone(), view)?.select(query)
}
