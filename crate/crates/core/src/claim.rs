//! Grounding iconic actions to frames, rendering claims, and correcting answers.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::IconicAction;
use crate::embed::{EmbedError, EmbeddingClient};
use crate::parse::{find_mentions, parse_timestamps, MentionValue, TemporalMention};
use crate::scorer::{score_frames, QueryEmbedding, RankedTimestamps, ScoreError, ScorerConfig};
use crate::store::{VideoEmbeddingSet, VideoMeta};
use crate::transform::{ClientError, TextTransformClient};

/// Two timestamps closer than this are the same statement.
const SAME_TIME_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("no actions to ground")]
    NoActions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAction {
    pub action: IconicAction,
    /// Full frame ranking; entry 0 is the chosen frame.
    pub ranking: RankedTimestamps,
    pub chosen_timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Claim {
    pub lines: Vec<String>,
    pub grounded: Vec<GroundedAction>,
    pub video_duration: f64,
}

impl Claim {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub user_query: String,
    pub original_response: String,
    pub claim: Claim,
}

/// Embeds every action on every backend the scorer needs, then ranks frames
/// per action. The actions together form the text-mean population.
pub fn ground_actions(
    video: &VideoEmbeddingSet,
    actions: &[IconicAction],
    embed: &dyn EmbeddingClient,
    cfg: &ScorerConfig,
) -> Result<Vec<GroundedAction>, ClaimError> {
    if actions.is_empty() {
        return Err(ClaimError::NoActions);
    }
    let texts: Vec<String> = actions.iter().map(|a| a.text.clone()).collect();
    let mut per_action: Vec<BTreeMap<String, Vec<f32>>> = vec![BTreeMap::new(); actions.len()];
    for backend in cfg.required_backends() {
        let vectors = embed.embed_texts(&backend, &texts)?;
        if vectors.len() != texts.len() {
            return Err(EmbedError::RowCount {
                expected: texts.len(),
                got: vectors.len(),
            }
            .into());
        }
        for (slot, v) in per_action.iter_mut().zip(vectors) {
            slot.insert(backend.clone(), v);
        }
    }
    let queries = actions
        .iter()
        .zip(per_action)
        .map(|(a, m)| QueryEmbedding::new(a.text.clone(), m))
        .collect::<Result<Vec<_>, _>>()?;
    queries
        .iter()
        .zip(actions)
        .map(|(q, action)| {
            let ranking = score_frames(video, q, &queries, cfg)?;
            let chosen_timestamp = ranking
                .best()
                .map(|e| e.timestamp_seconds)
                .expect("video has at least one frame");
            Ok(GroundedAction {
                action: action.clone(),
                ranking,
                chosen_timestamp,
            })
        })
        .collect()
}

pub fn render_fact(action_text: &str, timestamp: f64, duration: f64) -> String {
    format!(
        "Fact: the event \"{}\" most likely occurs at {timestamp:.1} seconds in this {duration:.1}-second video.",
        action_text.replace('"', "'")
    )
}

/// One fact line per grounded action, in action order.
pub fn render_claim(grounded: &[GroundedAction], meta: &VideoMeta) -> Claim {
    Claim {
        lines: grounded
            .iter()
            .map(|g| render_fact(&g.action.text, g.chosen_timestamp, meta.duration_seconds()))
            .collect(),
        grounded: grounded.to_vec(),
        video_duration: meta.duration_seconds(),
    }
}

pub fn render_correction_prompt(req: &CorrectionRequest) -> String {
    format!(
        "Question: {}\nOriginal answer: {}\nFacts:\n{}\nInstruction: Rewrite the answer so it is consistent with the Facts; change nothing else.",
        req.user_query.trim(),
        req.original_response.trim(),
        req.claim.text()
    )
}

/// Asks the client for a corrected answer. An empty claim passes the answer through.
pub fn correct_response(
    req: &CorrectionRequest,
    client: &dyn TextTransformClient,
) -> Result<String, ClientError> {
    if req.claim.is_empty() {
        return Ok(req.original_response.clone());
    }
    client.correct(req)
}

pub fn fallback_correct(req: &CorrectionRequest) -> String {
    fallback_correct_lines(&req.original_response, &req.claim.lines)
}

fn no_info_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| {
        Regex::new(r"(?i)\bno\s+(?:relevant\s+)?information\b|\bnot\s+mentioned\b|\b(?:cannot|can't|unable\s+to)\s+(?:determine|tell|say|answer)\b|\bunclear\b|\bnot\s+sure\b|\bdon't\s+know\b")
            .expect("static pattern")
    })
}

fn fact_duration(facts: &[String]) -> Option<f64> {
    static P: OnceLock<Regex> = OnceLock::new();
    let re = P.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?)-second video").expect("static pattern"));
    facts
        .iter()
        .filter_map(|f| re.captures(f))
        .filter_map(|c| c[1].parse::<f64>().ok())
        .reduce(f64::max)
}

fn fact_timestamps(facts: &[String]) -> Vec<f64> {
    facts
        .iter()
        .flat_map(|f| parse_timestamps(f, 1.0).points().to_vec())
        .collect()
}

fn supported(mention: &TemporalMention, claimed: &[f64]) -> bool {
    match &mention.value {
        MentionValue::Points(ps) => ps
            .iter()
            .all(|p| claimed.iter().any(|t| (p - t).abs() <= SAME_TIME_TOLERANCE)),
        MentionValue::Interval(lo, hi) => claimed.iter().any(|t| lo <= t && t <= hi),
    }
}

fn tidy(text: &str) -> String {
    static P: OnceLock<(Regex, Regex)> = OnceLock::new();
    let (spaces, before_punct) = P.get_or_init(|| {
        (
            Regex::new(r"[ \t]{2,}").expect("static pattern"),
            Regex::new(r"\s+([,.;!?])").expect("static pattern"),
        )
    });
    let once = spaces.replace_all(text, " ");
    before_punct.replace_all(&once, "$1").trim().to_string()
}

/// Rule-based correction.
///
/// * No temporal statement in the answer: the facts are appended (or replace
///   the answer outright when it only says there is no information).
/// * Statements all consistent with the claimed timestamps: unchanged.
/// * Otherwise the first statement becomes `at <t> seconds` with the claimed
///   timestamps and later statements are removed.
pub fn fallback_correct_lines(original: &str, facts: &[String]) -> String {
    if facts.is_empty() {
        return original.to_string();
    }
    let claimed = fact_timestamps(facts);
    let duration = fact_duration(facts)
        .or_else(|| claimed.iter().copied().reduce(f64::max))
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let mentions = find_mentions(original, duration);
    if mentions.is_empty() {
        let facts_text = facts.join(" ");
        if original.trim().is_empty() || no_info_pattern().is_match(original) {
            return facts_text;
        }
        return format!("{} {}", original.trim_end(), facts_text);
    }
    if mentions.iter().all(|m| supported(m, &claimed)) {
        return original.to_string();
    }
    let replacement = format!(
        "at {} seconds",
        claimed
            .iter()
            .map(|t| format!("{t:.1}"))
            .collect::<Vec<_>>()
            .join(" seconds, ")
    );
    let mut out = String::with_capacity(original.len());
    let mut cursor = 0;
    for (i, m) in mentions.iter().enumerate() {
        out.push_str(&original[cursor..m.span.start]);
        if i == 0 {
            out.push_str(&replacement);
        }
        cursor = m.span.end;
    }
    out.push_str(&original[cursor..]);
    tidy(&out)
}
