//! Fixtures and an independent reference scorer shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidclaim::embed::FileEmbeddingClient;
use vidclaim::scorer::{BLIP2_BACKEND, CLIP_BACKEND};
use vidclaim::store::{BackendMatrix, VideoEmbeddingSet, VideoMeta};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in [-1, 1]; rerolls the (practically impossible) zero row.
pub fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n).map(|_| random_vector(rng, d)).collect()
}

pub struct SyntheticVideo {
    pub set: VideoEmbeddingSet,
    pub clip: Vec<Vec<f32>>,
    pub blip2: Vec<Vec<f32>>,
}

pub fn video_from_rows(id: &str, fps: f64, clip: Vec<Vec<f32>>, blip2: Vec<Vec<f32>>) -> SyntheticVideo {
    let n = clip.len();
    let meta = VideoMeta::new(id, fps, n, n as f64 / fps).unwrap();
    let set = VideoEmbeddingSet::new(
        meta,
        vec![
            BackendMatrix::from_rows(CLIP_BACKEND, &clip).unwrap(),
            BackendMatrix::from_rows(BLIP2_BACKEND, &blip2).unwrap(),
        ],
    )
    .unwrap();
    SyntheticVideo { set, clip, blip2 }
}

pub fn random_video(rng: &mut ChaCha8Rng, n: usize, d_clip: usize, d_blip: usize) -> SyntheticVideo {
    let clip = random_rows(rng, n, d_clip);
    let blip2 = random_rows(rng, n, d_blip);
    video_from_rows("synthetic", 1.0, clip, blip2)
}

pub fn query_map(clip: &[f32], blip2: &[f32]) -> BTreeMap<String, Vec<f32>> {
    BTreeMap::from([
        (CLIP_BACKEND.to_string(), clip.to_vec()),
        (BLIP2_BACKEND.to_string(), blip2.to_vec()),
    ])
}

pub mod oracle {
    //! Straight-line reference: f64 throughout, explicit loops, rank by counting.

    fn norm(v: &[f64]) -> f64 {
        let mut s = 0.0;
        for x in v {
            s += x * x;
        }
        s.sqrt()
    }

    pub fn to64(v: &[f32]) -> Vec<f64> {
        v.iter().map(|&x| x as f64).collect()
    }

    pub fn cos(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        for i in 0..a.len() {
            dot += a[i] * b[i];
        }
        dot / (norm(a) * norm(b))
    }

    pub fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
        let d = rows[0].len();
        let mut m = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                m[j] += r[j];
            }
        }
        for x in m.iter_mut() {
            *x /= rows.len() as f64;
        }
        m
    }

    pub fn shifted(v: &[f64], mean: &[f64], lambda: f64) -> Vec<f64> {
        (0..v.len()).map(|j| v[j] - lambda * mean[j]).collect()
    }

    /// Per-frame totals: cos_clip + cos_blip2 [+ DN on clip].
    pub fn scores(
        clip: &[Vec<f32>],
        blip2: &[Vec<f32>],
        q_clip: &[f32],
        q_blip2: &[f32],
        text_mean_clip: Option<&[f64]>,
        lambda: Option<f64>,
    ) -> Vec<f64> {
        let clip: Vec<Vec<f64>> = clip.iter().map(|r| to64(r)).collect();
        let blip2: Vec<Vec<f64>> = blip2.iter().map(|r| to64(r)).collect();
        let qc = to64(q_clip);
        let qb = to64(q_blip2);
        let mu_i = column_mean(&clip);
        let mut out = Vec::with_capacity(clip.len());
        for k in 0..clip.len() {
            let mut s = cos(&clip[k], &qc) + cos(&blip2[k], &qb);
            if let Some(l) = lambda {
                let mu_q = text_mean_clip.map(<[f64]>::to_vec).unwrap_or_else(|| qc.clone());
                s += cos(&shifted(&clip[k], &mu_i, l), &shifted(&qc, &mu_q, l));
            }
            out.push(s);
        }
        out
    }

    /// Frame indices by descending score, earlier frame first on ties. Each
    /// frame's position is counted directly rather than obtained by sorting.
    pub fn ranking(scores: &[f64]) -> Vec<usize> {
        let n = scores.len();
        let mut order = vec![usize::MAX; n];
        for k in 0..n {
            let mut pos = 0;
            for j in 0..n {
                if scores[j] > scores[k] || (scores[j] == scores[k] && j < k) {
                    pos += 1;
                }
            }
            order[pos] = k;
        }
        order
    }
}

/// One planted query: a video whose `signal_frame` row equals the action's
/// embedding on both backends, among random distractors.
pub struct PlantedCase {
    pub video: SyntheticVideo,
    pub action: String,
    pub signal_frame: usize,
}

pub fn planted_case(rng: &mut ChaCha8Rng, id: &str, action: &str, n: usize, d: usize) -> (PlantedCase, Vec<f32>, Vec<f32>) {
    let mut clip = random_rows(rng, n, d);
    let mut blip2 = random_rows(rng, n, d);
    let signal_frame = rng.gen_range(0..n);
    let q_clip = random_vector(rng, d);
    let q_blip2 = random_vector(rng, d);
    clip[signal_frame] = q_clip.clone();
    blip2[signal_frame] = q_blip2.clone();
    (
        PlantedCase {
            video: video_from_rows(id, 1.0, clip, blip2),
            action: action.to_string(),
            signal_frame,
        },
        q_clip,
        q_blip2,
    )
}

pub fn register(client: &mut FileEmbeddingClient, text: &str, q_clip: Vec<f32>, q_blip2: Vec<f32>) {
    client.insert(CLIP_BACKEND, text, q_clip);
    client.insert(BLIP2_BACKEND, text, q_blip2);
}
