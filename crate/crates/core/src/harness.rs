//! Timestamp-prediction (task 1) and event-order (task 2) evaluation built
//! from temporally annotated captions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse::{clamp_to_duration, classify_order, hits_window, parse_timestamps, OrderLabel, TimestampSet};
use crate::transform::TextTransformClient;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no valid annotation lines ({skipped} skipped)")]
    NoValidLines { skipped: usize },
    #[error("annotations belong to different videos: {0} vs {1}")]
    VideoMismatch(String, String),
    #[error("no eligible event pairs")]
    NoEligiblePairs,
    #[error("no response for item {0}")]
    MissingResponse(String),
    #[error("unknown duration for video {0}")]
    UnknownDuration(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("trials must be >= 1")]
    NoTrials,
}

/// A captioned moment `[t_start, t_end]` of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub video_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub caption: String,
}

impl EventAnnotation {
    pub fn new(
        video_id: impl Into<String>,
        t_start: f64,
        t_end: f64,
        caption: impl Into<String>,
    ) -> Result<Self, HarnessError> {
        let caption = caption.into().trim().to_string();
        let video_id = video_id.into();
        if !(t_start.is_finite() && t_end.is_finite()) || t_start < 0.0 || t_start >= t_end {
            return Err(HarnessError::InvalidAnnotation(format!(
                "need 0 <= start < end, got {t_start} .. {t_end}"
            )));
        }
        if caption.is_empty() || video_id.is_empty() {
            return Err(HarnessError::InvalidAnnotation("empty caption or video id".into()));
        }
        Ok(Self {
            video_id,
            t_start,
            t_end,
            caption,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub annotations: Vec<EventAnnotation>,
    pub skipped: Vec<SkippedLine>,
}

fn parse_sta_line(line: &str) -> Result<EventAnnotation, String> {
    let (head, sentence) = line
        .split_once("##")
        .ok_or_else(|| "missing `##` separator".to_string())?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    let [video_id, start, end] = fields[..] else {
        return Err(format!("expected `<video_id> <start> <end>`, got {} fields", fields.len()));
    };
    let start: f64 = start.parse().map_err(|_| format!("bad start `{start}`"))?;
    let end: f64 = end.parse().map_err(|_| format!("bad end `{end}`"))?;
    EventAnnotation::new(video_id, start, end, sentence).map_err(|e| e.to_string())
}

/// Parses `<video_id> <start> <end>##<sentence>` lines; blank lines are ignored,
/// malformed ones are skipped with their 1-based line number.
pub fn parse_charades_sta(text: &str) -> Result<Ingested, HarnessError> {
    let mut out = Ingested::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_sta_line(line) {
            Ok(a) => out.annotations.push(a),
            Err(reason) => out.skipped.push(SkippedLine { line: i + 1, reason }),
        }
    }
    if out.annotations.is_empty() {
        return Err(HarnessError::NoValidLines {
            skipped: out.skipped.len(),
        });
    }
    Ok(out)
}

pub fn ingest_charades_sta(path: &Path) -> Result<Ingested, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_charades_sta(&text)
}

/// Intersection over union of two annotated intervals of the same video.
pub fn temporal_iou(a: &EventAnnotation, b: &EventAnnotation) -> Result<f64, HarnessError> {
    if a.video_id != b.video_id {
        return Err(HarnessError::VideoMismatch(a.video_id.clone(), b.video_id.clone()));
    }
    let inter = a.t_end.min(b.t_end) - a.t_start.max(b.t_start);
    if inter <= 0.0 {
        return Ok(0.0);
    }
    let union = a.t_end.max(b.t_end) - a.t_start.min(b.t_start);
    Ok(inter / union)
}

/// Per-video durations: the maximum annotated end time.
pub fn durations_from_annotations(annotations: &[EventAnnotation]) -> HashMap<String, f64> {
    let mut out: HashMap<String, f64> = HashMap::new();
    for a in annotations {
        let d = out.entry(a.video_id.clone()).or_insert(0.0);
        *d = d.max(a.t_end);
    }
    out
}

fn video_groups(annotations: &[EventAnnotation]) -> Vec<(&str, Vec<&EventAnnotation>)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<&EventAnnotation>)> = Vec::new();
    for a in annotations {
        let slot = *index.entry(a.video_id.as_str()).or_insert_with(|| {
            groups.push((a.video_id.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(a);
    }
    groups
}

/// FNV-1a, used to derive one RNG stream per video.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn video_rng(seed: u64, video_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(video_id))
}

fn caption_phrase(caption: &str) -> &str {
    caption.trim().trim_end_matches('.').trim_end()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Before,
    After,
}

impl Relation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::Before => "before",
            Relation::After => "after",
        }
    }
}

impl std::str::FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "before" => Ok(Relation::Before),
            "after" => Ok(Relation::After),
            other => Err(format!("unknown relation `{other}`")),
        }
    }
}

pub fn task1_question_template(caption: &str) -> String {
    format!(
        "When does the event \"{}\" occur in the video?",
        caption_phrase(caption)
    )
}

pub fn task2_question_template(event_a: &str, event_b: &str, relation: Relation) -> String {
    format!(
        "Did the event \"{}\" occur {} the event \"{}\" in the video?",
        caption_phrase(event_a),
        relation.as_str(),
        caption_phrase(event_b)
    )
}

/// "A before B" holds iff A starts earlier; "after" mirrors it.
pub fn order_ground_truth(a: &EventAnnotation, b: &EventAnnotation, relation: Relation) -> OrderLabel {
    let holds = match relation {
        Relation::Before => a.t_start < b.t_start,
        Relation::After => a.t_start > b.t_start,
    };
    if holds {
        OrderLabel::Yes
    } else {
        OrderLabel::No
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Item {
    pub id: String,
    pub annotation: EventAnnotation,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task2Item {
    pub id: String,
    pub video_id: String,
    pub event_a: EventAnnotation,
    pub event_b: EventAnnotation,
    pub relation: Relation,
    pub question: String,
    pub gt_label: OrderLabel,
}

/// One question per annotation. Client failures fall back to the fixed template.
pub fn build_task1(
    annotations: &[EventAnnotation],
    client: Option<&dyn TextTransformClient>,
) -> Vec<Task1Item> {
    annotations
        .iter()
        .enumerate()
        .map(|(n, a)| {
            let question = client
                .and_then(|c| c.task1_question(&a.caption).ok())
                .unwrap_or_else(|| task1_question_template(&a.caption));
            Task1Item {
                id: format!("t1-{n:05}"),
                annotation: a.clone(),
                question,
            }
        })
        .collect()
}

/// Samples up to `max_per_video` event pairs per video with temporal IoU < 0.5,
/// distinct start times and distinct captions. Pair order and relation are drawn
/// from a per-video stream derived from `seed`.
pub fn build_task2(
    annotations: &[EventAnnotation],
    seed: u64,
    max_per_video: usize,
    client: Option<&dyn TextTransformClient>,
) -> Result<Vec<Task2Item>, HarnessError> {
    let mut items = Vec::new();
    for (video_id, events) in video_groups(annotations) {
        let mut rng = video_rng(seed, video_id);
        let mut candidates = Vec::new();
        for i in 0..events.len() {
            for j in i + 1..events.len() {
                let (a, b) = (events[i], events[j]);
                let same_caption = caption_phrase(&a.caption).eq_ignore_ascii_case(caption_phrase(&b.caption));
                if a.t_start != b.t_start && !same_caption && temporal_iou(a, b)? < 0.5 {
                    candidates.push((a, b));
                }
            }
        }
        candidates.shuffle(&mut rng);
        for (a, b) in candidates.into_iter().take(max_per_video) {
            let (a, b) = if rng.gen_bool(0.5) { (b, a) } else { (a, b) };
            let relation = if rng.gen_bool(0.5) {
                Relation::Before
            } else {
                Relation::After
            };
            let question = client
                .and_then(|c| c.task2_question(&a.caption, &b.caption, relation).ok())
                .unwrap_or_else(|| task2_question_template(&a.caption, &b.caption, relation));
            items.push(Task2Item {
                id: format!("t2-{:05}", items.len()),
                video_id: video_id.to_string(),
                gt_label: order_ground_truth(a, b, relation),
                event_a: a.clone(),
                event_b: b.clone(),
                relation,
                question,
            });
        }
    }
    if items.is_empty() {
        return Err(HarnessError::NoEligiblePairs);
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Ranked frame timestamps from the grounding pipeline.
    Pipeline,
    /// Free-text answers parsed into timestamp sets.
    FreeText,
    RandomBaseline,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: u8,
    pub mode: ScoringMode,
    pub n_items: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r5_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Record {
    pub video_id: String,
    pub caption: String,
    pub question: String,
    pub gt_start: f64,
    pub gt_end: f64,
    pub pred_top5: Vec<f64>,
    pub response: String,
    pub r1: bool,
    pub r5: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task2Record {
    pub video_id: String,
    pub event_a: String,
    pub event_b: String,
    pub relation: Relation,
    pub gt_label: OrderLabel,
    pub response: String,
    pub pred_label: OrderLabel,
    pub correct: bool,
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

/// Scores task 1.
///
/// With `predictions` (pipeline mode) R@1 checks the first ranked timestamp and
/// R@5 any of the first five; responses are optional. Without predictions every
/// item needs a free-text response, which is parsed, clamped to the video
/// duration and scored as a single accuracy.
pub fn score_task1(
    items: &[Task1Item],
    responses: &HashMap<String, String>,
    predictions: Option<&HashMap<String, Vec<f64>>>,
    durations: &HashMap<String, f64>,
    parser: Option<&dyn TextTransformClient>,
) -> Result<(EvalReport, Vec<Task1Record>), HarnessError> {
    let mut records = Vec::with_capacity(items.len());
    for item in items {
        let a = &item.annotation;
        let record = match predictions {
            Some(preds) => {
                let ranked = preds
                    .get(&item.id)
                    .ok_or_else(|| HarnessError::MissingResponse(item.id.clone()))?;
                let top5: Vec<f64> = ranked.iter().take(5).copied().collect();
                let hit = |t: &f64| a.t_start <= *t && *t <= a.t_end;
                Task1Record {
                    video_id: a.video_id.clone(),
                    caption: a.caption.clone(),
                    question: item.question.clone(),
                    gt_start: a.t_start,
                    gt_end: a.t_end,
                    r1: top5.first().is_some_and(hit),
                    r5: top5.iter().any(hit),
                    pred_top5: top5,
                    response: responses.get(&item.id).cloned().unwrap_or_default(),
                }
            }
            None => {
                let response = responses
                    .get(&item.id)
                    .ok_or_else(|| HarnessError::MissingResponse(item.id.clone()))?;
                let duration = *durations
                    .get(&a.video_id)
                    .ok_or_else(|| HarnessError::UnknownDuration(a.video_id.clone()))?;
                let parsed = parser
                    .and_then(|p| p.parse_timestamps(response, duration).ok())
                    .unwrap_or_else(|| parse_timestamps(response, duration));
                let set: TimestampSet = clamp_to_duration(&parsed, duration);
                let hit = hits_window(&set, a.t_start, a.t_end);
                Task1Record {
                    video_id: a.video_id.clone(),
                    caption: a.caption.clone(),
                    question: item.question.clone(),
                    gt_start: a.t_start,
                    gt_end: a.t_end,
                    pred_top5: set.points().iter().take(5).copied().collect(),
                    response: response.clone(),
                    r1: hit,
                    r5: hit,
                }
            }
        };
        records.push(record);
    }
    let n = records.len();
    let r1 = percent(records.iter().filter(|r| r.r1).count(), n);
    let r5 = percent(records.iter().filter(|r| r.r5).count(), n);
    let report = match predictions {
        Some(_) => EvalReport {
            task: 1,
            mode: ScoringMode::Pipeline,
            n_items: n,
            r1_acc: Some(r1),
            r5_acc: Some(r5),
            acc: None,
            items_path: None,
        },
        None => EvalReport {
            task: 1,
            mode: ScoringMode::FreeText,
            n_items: n,
            r1_acc: None,
            r5_acc: None,
            acc: Some(r1),
            items_path: None,
        },
    };
    Ok((report, records))
}

/// Scores task 2: an item is correct iff its classified answer equals the ground truth.
pub fn score_task2(
    items: &[Task2Item],
    responses: &HashMap<String, String>,
    classifier: Option<&dyn TextTransformClient>,
) -> Result<(EvalReport, Vec<Task2Record>), HarnessError> {
    let mut records = Vec::with_capacity(items.len());
    for item in items {
        let response = responses
            .get(&item.id)
            .ok_or_else(|| HarnessError::MissingResponse(item.id.clone()))?;
        let pred_label = classifier
            .and_then(|c| c.classify_order(response).ok())
            .unwrap_or_else(|| classify_order(response));
        records.push(Task2Record {
            video_id: item.video_id.clone(),
            event_a: item.event_a.caption.clone(),
            event_b: item.event_b.caption.clone(),
            relation: item.relation,
            gt_label: item.gt_label,
            response: response.clone(),
            pred_label,
            correct: pred_label == item.gt_label,
        });
    }
    let n = records.len();
    let report = EvalReport {
        task: 2,
        mode: ScoringMode::Classification,
        n_items: n,
        r1_acc: None,
        r5_acc: None,
        acc: Some(percent(records.iter().filter(|r| r.correct).count(), n)),
        items_path: None,
    };
    Ok((report, records))
}

/// Random timestamp guessing: per item and trial, five i.i.d. uniform draws on
/// `[0, L]`; R@1 checks the first, R@5 any. Returns percentages averaged over trials.
pub fn random_baseline_task1(
    annotations: &[EventAnnotation],
    trials: usize,
    seed: u64,
    durations: &HashMap<String, f64>,
) -> Result<(f64, f64), HarnessError> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    let (mut r1_hits, mut r5_hits, mut total) = (0usize, 0usize, 0usize);
    for (video_id, events) in video_groups(annotations) {
        let duration = *durations
            .get(video_id)
            .filter(|d| d.is_finite() && **d > 0.0)
            .ok_or_else(|| HarnessError::UnknownDuration(video_id.to_string()))?;
        let mut rng = video_rng(seed, video_id);
        for _ in 0..trials {
            for a in &events {
                let draws: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.0..=duration));
                let hit = |t: &f64| a.t_start <= *t && *t <= a.t_end;
                r1_hits += usize::from(hit(&draws[0]));
                r5_hits += usize::from(draws.iter().any(hit));
                total += 1;
            }
        }
    }
    Ok((percent(r1_hits, total), percent(r5_hits, total)))
}

/// One row of a results table.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub method: String,
    pub report: EvalReport,
}

/// Plain-text results table. Task 1 rows show R@1/R@5, or one merged cell for
/// free-text scoring; task 2 rows show accuracy.
pub fn render_table(title: &str, rows: &[TableRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.method.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let task1 = rows.iter().any(|r| r.report.task == 1);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let rule = if task1 {
        format!("+{}+---------+---------+", "-".repeat(width + 2))
    } else {
        format!("+{}+---------+", "-".repeat(width + 2))
    };
    let _ = writeln!(out, "{rule}");
    if task1 {
        let _ = writeln!(out, "| {:<width$} | R@1 Acc | R@5 Acc |", "Method");
    } else {
        let _ = writeln!(out, "| {:<width$} |   Acc   |", "Method");
    }
    let _ = writeln!(out, "{rule}");
    for row in rows {
        let r = &row.report;
        match (r.r1_acc, r.r5_acc, r.acc) {
            (Some(r1), Some(r5), _) => {
                let _ = writeln!(out, "| {:<width$} | {r1:>7.2} | {r5:>7.2} |", row.method);
            }
            (_, _, Some(acc)) if task1 => {
                let _ = writeln!(out, "| {:<width$} | {:^17} |", row.method, format!("{acc:.2}"));
            }
            (_, _, Some(acc)) => {
                let _ = writeln!(out, "| {:<width$} | {acc:>7.2} |", row.method);
            }
            _ => {}
        }
    }
    let _ = writeln!(out, "{rule}");
    out
}
