//! Browser bindings for three small operations on the core library. Each
//! export returns a JSON string; the plain `*_json` functions carry the logic
//! so they can be tested off the browser.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vidclaim::claim::render_fact;
use vidclaim::harness::{random_baseline_task1, EventAnnotation};
use vidclaim::parse::{find_mentions, hits_window, parse_timestamps, MentionValue};
use vidclaim::scorer::{score_breakdown, top_k, DnConfig, RankedTimestamps, ScorerConfig, TextMeanPopulation};
use vidclaim::store::{BackendMatrix, VideoEmbeddingSet, VideoMeta};
use vidclaim::QueryEmbedding;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Mention {
    start: usize,
    end: usize,
    text: String,
    points: Vec<f64>,
    interval: Option<[f64; 2]>,
}

#[derive(Serialize)]
struct ParsedAnswer {
    mentions: Vec<Mention>,
    points: Vec<f64>,
    intervals: Vec<[f64; 2]>,
    hits_window: bool,
}

/// Parses the times in `response` and checks them against `[t_start, t_end]`.
pub fn parse_answer_json(response: &str, duration: f64, t_start: f64, t_end: f64) -> Result<String, String> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err("duration must be positive".into());
    }
    let mentions = find_mentions(response, duration)
        .into_iter()
        .map(|m| {
            let (points, interval) = match m.value {
                MentionValue::Points(p) => (p, None),
                MentionValue::Interval(a, b) => (Vec::new(), Some([a, b])),
            };
            Mention {
                text: response[m.span.clone()].to_string(),
                start: m.span.start,
                end: m.span.end,
                points,
                interval,
            }
        })
        .collect();
    let ts = parse_timestamps(response, duration);
    let out = ParsedAnswer {
        mentions,
        points: ts.points().to_vec(),
        intervals: ts.intervals().to_vec(),
        hits_window: hits_window(&ts, t_start, t_end),
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct Grounding {
    timestamps: Vec<f64>,
    terms: Vec<(String, Vec<f64>)>,
    total: Vec<f64>,
    top5: Vec<f64>,
    fact: String,
}

fn noisy(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f32> {
    (0..d).map(|_| (rng.gen_range(-1.0..1.0) * scale) as f32).collect()
}

/// Scores a synthetic video at 1 fps. Every frame shares a common offset;
/// frame `signal` also carries the query direction at strength `signal_gain`.
#[allow(clippy::too_many_arguments)]
pub fn ground_demo_json(
    seed: u32,
    frames: usize,
    dim: usize,
    signal: usize,
    signal_gain: f64,
    lambda: f64,
    use_dn: bool,
) -> Result<String, String> {
    if frames == 0 || dim < 2 || signal >= frames {
        return Err("need frames > 0, dim >= 2 and signal < frames".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.into());
    let offset = noisy(&mut rng, dim, 1.0);
    let mut query = BTreeMap::new();
    let mut other = BTreeMap::new();
    let mut matrices = Vec::new();
    for name in ["clip", "blip2"] {
        let q = noisy(&mut rng, dim, 1.0);
        let rows: Vec<Vec<f32>> = (0..frames)
            .map(|k| {
                let mut row = noisy(&mut rng, dim, 1.0);
                for j in 0..dim {
                    row[j] += offset[j];
                    if k == signal {
                        row[j] += (signal_gain * f64::from(q[j])) as f32;
                    }
                }
                row
            })
            .collect();
        matrices.push(BackendMatrix::from_rows(name, &rows).map_err(|e| e.to_string())?);
        other.insert(name.to_string(), noisy(&mut rng, dim, 1.0));
        query.insert(name.to_string(), q);
    }
    let meta = VideoMeta::new("demo", 1.0, frames, frames as f64).map_err(|e| e.to_string())?;
    let video = VideoEmbeddingSet::new(meta, matrices).map_err(|e| e.to_string())?;
    let query = QueryEmbedding::new("the planted action", query).map_err(|e| e.to_string())?;
    let distractor = QueryEmbedding::new("another action", other).map_err(|e| e.to_string())?;

    let cfg = if use_dn {
        let dn = DnConfig::new(lambda, TextMeanPopulation::CurrentQueryActions).map_err(|e| e.to_string())?;
        ScorerConfig::default().with_dn(dn)
    } else {
        ScorerConfig::default().without_dn()
    };
    let breakdown =
        score_breakdown(&video, &query, &[query.clone(), distractor], &cfg).map_err(|e| e.to_string())?;
    let timestamps = video.timestamps();
    let ranking = RankedTimestamps::from_scores(&breakdown.total, &timestamps);
    let best = ranking.best().map_or(0.0, |f| f.timestamp_seconds);
    let out = Grounding {
        fact: render_fact("the planted action", best, frames as f64),
        top5: top_k(&ranking, 5),
        timestamps,
        terms: breakdown.terms,
        total: breakdown.total,
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct Baseline {
    r1: f64,
    r5: f64,
    expected_r1: f64,
    expected_r5: f64,
}

/// Random guessing for one window: simulated rates next to their closed forms.
pub fn random_baseline_json(duration: f64, t_start: f64, t_end: f64, trials: u32, seed: u32) -> Result<String, String> {
    let ann = EventAnnotation::new("demo", t_start, t_end, "window").map_err(|e| e.to_string())?;
    if duration.is_nan() || duration < t_end {
        return Err("window must end within the video".into());
    }
    let durations = HashMap::from([("demo".to_string(), duration)]);
    let (r1, r5) = random_baseline_task1(&[ann], trials as usize, seed.into(), &durations).map_err(|e| e.to_string())?;
    let p = (t_end - t_start) / duration;
    let out = Baseline {
        r1,
        r5,
        expected_r1: 100.0 * p,
        expected_r5: 100.0 * (1.0 - (1.0 - p).powi(5)),
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[wasm_bindgen]
pub fn parse_answer(response: &str, duration: f64, t_start: f64, t_end: f64) -> Result<String, JsError> {
    parse_answer_json(response, duration, t_start, t_end).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ground_demo(
    seed: u32,
    frames: usize,
    dim: usize,
    signal: usize,
    signal_gain: f64,
    lambda: f64,
    use_dn: bool,
) -> Result<String, JsError> {
    ground_demo_json(seed, frames, dim, signal, signal_gain, lambda, use_dn).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn random_baseline(duration: f64, t_start: f64, t_end: f64, trials: u32, seed: u32) -> Result<String, JsError> {
    random_baseline_json(duration, t_start, t_end, trials, seed).map_err(|e| JsError::new(&e))
}
