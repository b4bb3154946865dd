//! Frame ranking for an iconic-action text.
//!
//! Per frame `k`, the total score is the sum of raw cosines between the frame
//! embedding and the action embedding over every configured backend, plus a
//! distribution-normalized cosine on the `clip` backend:
//!
//! ```text
//! dn(k) = cos(I_k - lambda * mean(I), Q - lambda * mean(Q))
//! ```
//!
//! Ties are broken by the earlier frame.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{mean_embedding, BackendMatrix, VideoEmbeddingSet};

pub const CLIP_BACKEND: &str = "clip";
pub const BLIP2_BACKEND: &str = "blip2";
pub const DEFAULT_LAMBDA: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
    #[error("mean-shifted vector is zero")]
    DegenerateShift,
    #[error("backend `{0}` missing from video or query")]
    BackendMissing(String),
    #[error("backend `{backend}`: query has dim {query}, frames have dim {frames}")]
    DimensionMismatch {
        backend: String,
        query: usize,
        frames: usize,
    },
    #[error("invalid scorer config: {0}")]
    InvalidConfig(String),
}

/// Which text embeddings form the text-side mean in the DN term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMeanPopulation {
    /// Mean over all iconic actions decomposed from the current event query.
    CurrentQueryActions,
    /// The action's own embedding; the text shift is then a pure rescale.
    SingleText,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DnConfig {
    lambda: f64,
    text_mean_population: TextMeanPopulation,
}

impl DnConfig {
    pub fn new(lambda: f64, text_mean_population: TextMeanPopulation) -> Result<Self, ScoreError> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(ScoreError::InvalidConfig(format!(
                "lambda must be in [0, 1), got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            text_mean_population,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn text_mean_population(&self) -> TextMeanPopulation {
        self.text_mean_population
    }
}

impl Default for DnConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            text_mean_population: TextMeanPopulation::CurrentQueryActions,
        }
    }
}

/// Which terms enter the ensemble. The default is the full three-term sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Backends contributing a raw cosine term.
    pub cosine_backends: Vec<String>,
    /// Distribution-normalized term; `None` drops it.
    pub dn: Option<DnConfig>,
    pub dn_backend: String,
    /// Standardize each term across frames before summing. Off by default.
    pub zscore_terms: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            cosine_backends: vec![CLIP_BACKEND.to_string(), BLIP2_BACKEND.to_string()],
            dn: Some(DnConfig::default()),
            dn_backend: CLIP_BACKEND.to_string(),
            zscore_terms: false,
        }
    }
}

impl ScorerConfig {
    pub fn with_dn(mut self, dn: DnConfig) -> Self {
        self.dn = Some(dn);
        self
    }

    pub fn without_dn(mut self) -> Self {
        self.dn = None;
        self
    }

    pub fn with_backends<S: Into<String>>(mut self, backends: impl IntoIterator<Item = S>) -> Self {
        self.cosine_backends = backends.into_iter().map(Into::into).collect();
        self
    }

    /// Every backend a query must cover under this config.
    pub fn required_backends(&self) -> Vec<String> {
        let mut names = self.cosine_backends.clone();
        if self.dn.is_some() && !names.contains(&self.dn_backend) {
            names.push(self.dn_backend.clone());
        }
        names
    }
}

/// Per-backend text embeddings of one iconic action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding {
    pub action_text: String,
    pub per_backend: BTreeMap<String, Vec<f32>>,
}

impl QueryEmbedding {
    pub fn new(
        action_text: impl Into<String>,
        per_backend: BTreeMap<String, Vec<f32>>,
    ) -> Result<Self, ScoreError> {
        if per_backend
            .values()
            .any(|v| v.is_empty() || v.iter().all(|&x| x == 0.0))
        {
            return Err(ScoreError::ZeroVector);
        }
        Ok(Self {
            action_text: action_text.into(),
            per_backend,
        })
    }

    fn vector(&self, backend: &str) -> Result<&[f32], ScoreError> {
        self.per_backend
            .get(backend)
            .map(Vec::as_slice)
            .ok_or_else(|| ScoreError::BackendMissing(backend.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedFrame {
    pub frame_index: usize,
    pub timestamp_seconds: f64,
    pub score: f64,
}

/// Frames in descending score order, ties by ascending frame index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedTimestamps {
    pub entries: Vec<RankedFrame>,
}

impl RankedTimestamps {
    pub fn from_scores(scores: &[f64], timestamps: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| rank_order(scores[a], a, scores[b], b));
        Self {
            entries: order
                .into_iter()
                .map(|k| RankedFrame {
                    frame_index: k,
                    timestamp_seconds: timestamps[k],
                    score: scores[k],
                })
                .collect(),
        }
    }

    pub fn best(&self) -> Option<&RankedFrame> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn rank_order(sa: f64, ia: usize, sb: f64, ib: usize) -> Ordering {
    sb.total_cmp(&sa).then(ia.cmp(&ib))
}

/// The first `min(k, N)` timestamps of a ranking.
pub fn top_k(ranking: &RankedTimestamps, k: usize) -> Vec<f64> {
    ranking
        .entries
        .iter()
        .take(k.max(1))
        .map(|e| e.timestamp_seconds)
        .collect()
}

fn dot_norms<A, B>(a: &[A], b: &[B]) -> (f64, f64, f64)
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y): (f64, f64) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na.sqrt(), nb.sqrt())
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, ScoreError> {
    cosine_f64(a, b)
}

fn cosine_f64<A, B>(a: &[A], b: &[B]) -> Result<f64, ScoreError>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    let (dot, na, nb) = dot_norms(a, b);
    if na == 0.0 || nb == 0.0 {
        return Err(ScoreError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn shift(v: &[f32], mean: &[f64], lambda: f64) -> Vec<f64> {
    v.iter()
        .zip(mean)
        .map(|(&x, &m)| f64::from(x) - lambda * m)
        .collect()
}

pub fn dn_score(
    frame: &[f32],
    frame_mean: &[f64],
    text: &[f32],
    text_mean: &[f64],
    cfg: &DnConfig,
) -> Result<f64, ScoreError> {
    let a = shift(frame, frame_mean, cfg.lambda);
    let b = shift(text, text_mean, cfg.lambda);
    cosine_f64(&a, &b).map_err(|_| ScoreError::DegenerateShift)
}

/// Per-frame values of every ensemble term, before ranking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBreakdown {
    pub terms: Vec<(String, Vec<f64>)>,
    pub total: Vec<f64>,
}

fn checked_matrix<'a>(
    video: &'a VideoEmbeddingSet,
    backend: &str,
    query_dim: usize,
) -> Result<&'a BackendMatrix, ScoreError> {
    let m = video
        .backend(backend)
        .ok_or_else(|| ScoreError::BackendMissing(backend.to_string()))?;
    if m.dim() != query_dim {
        return Err(ScoreError::DimensionMismatch {
            backend: backend.to_string(),
            query: query_dim,
            frames: m.dim(),
        });
    }
    Ok(m)
}

fn text_mean(
    query: &QueryEmbedding,
    population: &[QueryEmbedding],
    backend: &str,
    policy: TextMeanPopulation,
) -> Result<Vec<f64>, ScoreError> {
    let own = query.vector(backend)?;
    let members: Vec<&[f32]> = match policy {
        TextMeanPopulation::SingleText => vec![own],
        TextMeanPopulation::CurrentQueryActions if population.is_empty() => vec![own],
        TextMeanPopulation::CurrentQueryActions => population
            .iter()
            .map(|q| q.vector(backend))
            .collect::<Result<_, _>>()?,
    };
    let mut mean = vec![0.0; own.len()];
    for v in &members {
        if v.len() != own.len() {
            return Err(ScoreError::DimensionMismatch {
                backend: backend.to_string(),
                query: own.len(),
                frames: v.len(),
            });
        }
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m += f64::from(x);
        }
    }
    let n = members.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

fn zscore(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Computes every ensemble term for every frame.
///
/// `population` is the set of action embeddings from the current event query
/// (used only by [`TextMeanPopulation::CurrentQueryActions`]); an empty slice
/// means the query stands alone.
pub fn score_breakdown(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    population: &[QueryEmbedding],
    cfg: &ScorerConfig,
) -> Result<ScoreBreakdown, ScoreError> {
    if cfg.cosine_backends.is_empty() && cfg.dn.is_none() {
        return Err(ScoreError::InvalidConfig("no ensemble terms configured".into()));
    }
    let n = video.meta().num_frames();
    let mut terms = Vec::new();
    for backend in &cfg.cosine_backends {
        let q = query.vector(backend)?;
        let m = checked_matrix(video, backend, q.len())?;
        let values = m
            .rows()
            .map(|row| cosine(row, q))
            .collect::<Result<Vec<_>, _>>()?;
        terms.push((backend.clone(), values));
    }
    if let Some(dn) = &cfg.dn {
        let q = query.vector(&cfg.dn_backend)?;
        let m = checked_matrix(video, &cfg.dn_backend, q.len())?;
        let frame_mean = mean_embedding(m);
        let t_mean = text_mean(query, population, &cfg.dn_backend, dn.text_mean_population)?;
        let values = m
            .rows()
            .map(|row| dn_score(row, &frame_mean, q, &t_mean, dn))
            .collect::<Result<Vec<_>, _>>()?;
        terms.push((format!("{}_dn", cfg.dn_backend), values));
    }
    if cfg.zscore_terms {
        for (_, values) in terms.iter_mut() {
            zscore(values);
        }
    }
    let mut total = vec![0.0; n];
    for (_, values) in &terms {
        for (t, v) in total.iter_mut().zip(values) {
            *t += v;
        }
    }
    Ok(ScoreBreakdown { terms, total })
}

/// Full ensemble ranking (raw cosines plus the DN term when configured).
pub fn score_frames(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    population: &[QueryEmbedding],
    cfg: &ScorerConfig,
) -> Result<RankedTimestamps, ScoreError> {
    let breakdown = score_breakdown(video, query, population, cfg)?;
    Ok(RankedTimestamps::from_scores(
        &breakdown.total,
        &video.timestamps(),
    ))
}

/// Ranking from the raw cosine terms only.
pub fn score_frames_no_dn(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &ScorerConfig,
) -> Result<RankedTimestamps, ScoreError> {
    score_frames(video, query, &[], &cfg.clone().without_dn())
}

/// Event-level ranking from several action rankings over the same video:
/// each frame keeps its best score across actions.
pub fn merge_rankings(rankings: &[RankedTimestamps]) -> RankedTimestamps {
    let mut best: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for r in rankings {
        for e in &r.entries {
            best.entry(e.frame_index)
                .and_modify(|(s, _)| *s = s.max(e.score))
                .or_insert((e.score, e.timestamp_seconds));
        }
    }
    let mut entries: Vec<RankedFrame> = best
        .into_iter()
        .map(|(frame_index, (score, timestamp_seconds))| RankedFrame {
            frame_index,
            timestamp_seconds,
            score,
        })
        .collect();
    entries.sort_by(|a, b| rank_order(a.score, a.frame_index, b.score, b.frame_index));
    RankedTimestamps { entries }
}
