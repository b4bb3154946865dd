mod common;

use common::oracle;
use proptest::prelude::*;
use vidclaim::scorer::{
    cosine, dn_score, score_breakdown, score_frames, score_frames_no_dn, DnConfig, QueryEmbedding,
    ScorerConfig, TextMeanPopulation,
};
use vidclaim::store::{mean_embedding, BackendMatrix, VideoEmbeddingSet, VideoMeta};

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, d).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

/// (clip rows, blip2 rows, clip query, blip2 query)
fn instance() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<Vec<f32>>, Vec<f32>, Vec<f32>)> {
    (1usize..=64, 1usize..=32, 1usize..=32).prop_flat_map(|(n, dc, db)| {
        (
            prop::collection::vec(vec_strategy(dc), n),
            prop::collection::vec(vec_strategy(db), n),
            vec_strategy(dc),
            vec_strategy(db),
        )
    })
}

fn ids(r: &vidclaim::RankedTimestamps) -> Vec<usize> {
    r.entries.iter().map(|e| e.frame_index).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn full_ensemble_matches_reference((clip, blip2, qc, qb) in instance(), lambda in 0.0f64..0.9) {
        let video = common::video_from_rows("p", 1.0, clip.clone(), blip2.clone());
        let q = QueryEmbedding::new("a", common::query_map(&qc, &qb)).unwrap();
        let dn = DnConfig::new(lambda, TextMeanPopulation::SingleText).unwrap();
        let cfg = ScorerConfig::default().with_dn(dn);
        let mu = oracle::column_mean(&clip.iter().map(|r| oracle::to64(r)).collect::<Vec<_>>());
        if clip.iter().any(|r| oracle::shifted(&oracle::to64(r), &mu, lambda).iter().all(|x| *x == 0.0)) {
            return Ok(());
        }
        let got = score_frames(&video.set, &q, &[], &cfg).unwrap();
        let want = oracle::scores(&clip, &blip2, &qc, &qb, None, Some(lambda));
        for e in &got.entries {
            prop_assert!((e.score - want[e.frame_index]).abs() <= 1e-9);
            prop_assert_eq!(e.timestamp_seconds, e.frame_index as f64);
        }
        prop_assert_eq!(ids(&got), oracle::ranking(&want));
    }

    #[test]
    fn raw_ensemble_matches_reference((clip, blip2, qc, qb) in instance()) {
        let video = common::video_from_rows("p", 2.0, clip.clone(), blip2.clone());
        let q = QueryEmbedding::new("a", common::query_map(&qc, &qb)).unwrap();
        let got = score_frames_no_dn(&video.set, &q, &ScorerConfig::default()).unwrap();
        let want = oracle::scores(&clip, &blip2, &qc, &qb, None, None);
        for e in &got.entries {
            prop_assert!((e.score - want[e.frame_index]).abs() <= 1e-9);
            prop_assert_eq!(e.timestamp_seconds, e.frame_index as f64 / 2.0);
        }
        prop_assert_eq!(ids(&got), oracle::ranking(&want));
    }

    #[test]
    fn permutation_equivariance((clip, blip2, qc, qb) in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = clip.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut common::rng(seed));
        let pc: Vec<_> = perm.iter().map(|&k| clip[k].clone()).collect();
        let pb: Vec<_> = perm.iter().map(|&k| blip2[k].clone()).collect();
        let q = QueryEmbedding::new("a", common::query_map(&qc, &qb)).unwrap();
        let cfg = ScorerConfig::default();
        let a = score_frames_no_dn(&common::video_from_rows("a", 1.0, clip, blip2).set, &q, &cfg).unwrap();
        let b = score_frames_no_dn(&common::video_from_rows("b", 1.0, pc, pb).set, &q, &cfg).unwrap();
        let mut by_frame = vec![0.0; n];
        for e in &a.entries {
            by_frame[e.frame_index] = e.score;
        }
        for e in &b.entries {
            prop_assert_eq!(e.score, by_frame[perm[e.frame_index]]);
        }
    }

    #[test]
    fn positive_rescale_keeps_ranking((clip, blip2, qc, qb) in instance(), c in prop::sample::select(vec![0.5f32, 2.0, 4.0, 0.25])) {
        let q = QueryEmbedding::new("a", common::query_map(&qc, &qb)).unwrap();
        let scaled: Vec<Vec<f32>> = clip.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        let base = common::video_from_rows("a", 1.0, clip, blip2.clone());
        let scaled = common::video_from_rows("b", 1.0, scaled, blip2);
        for cfg in [ScorerConfig::default().without_dn(), ScorerConfig::default()] {
            let Ok(a) = score_frames(&base.set, &q, &[], &cfg) else { continue };
            let b = score_frames(&scaled.set, &q, &[], &cfg).unwrap();
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(x.frame_index, y.frame_index);
                prop_assert!((x.score - y.score).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_lambda_is_plain_cosine(a in vec_strategy(24), b in vec_strategy(24), ma in prop::collection::vec(-1.0f64..1.0, 24), mb in prop::collection::vec(-1.0f64..1.0, 24)) {
        let cfg = DnConfig::new(0.0, TextMeanPopulation::CurrentQueryActions).unwrap();
        let dn = dn_score(&a, &ma, &b, &mb, &cfg).unwrap();
        prop_assert!((dn - cosine(&a, &b).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn scoring_is_deterministic((clip, blip2, qc, qb) in instance()) {
        let video = common::video_from_rows("p", 1.0, clip, blip2);
        let q = QueryEmbedding::new("a", common::query_map(&qc, &qb)).unwrap();
        let cfg = ScorerConfig::default();
        let first = score_frames(&video.set, &q, &[], &cfg);
        let second = score_frames(&video.set, &q, &[], &cfg);
        prop_assert_eq!(format!("{first:?}"), format!("{second:?}"));
    }
}

#[test]
fn duplicated_frames_tie_break_to_earliest() {
    let row = vec![0.3f32, -0.2, 0.9, 0.1];
    let other = vec![-0.5f32, 0.5, 0.1, 0.2];
    let clip = vec![other.clone(), row.clone(), other.clone(), row.clone(), row.clone()];
    let video = common::video_from_rows("t", 1.0, clip.clone(), clip);
    let q = QueryEmbedding::new("a", common::query_map(&row, &row)).unwrap();
    let r = score_frames(&video.set, &q, &[], &ScorerConfig::default()).unwrap();
    assert_eq!(ids(&r), vec![1, 3, 4, 0, 2]);
    let r = score_frames_no_dn(&video.set, &q, &ScorerConfig::default()).unwrap();
    assert_eq!(ids(&r), vec![1, 3, 4, 0, 2]);
}

#[test]
fn population_mean_enters_text_shift() {
    let mut rng = common::rng(11);
    let video = common::random_video(&mut rng, 12, 8, 6);
    let actions: Vec<QueryEmbedding> = (0..3)
        .map(|i| {
            QueryEmbedding::new(
                format!("a{i}"),
                common::query_map(&common::random_vector(&mut rng, 8), &common::random_vector(&mut rng, 6)),
            )
            .unwrap()
        })
        .collect();
    let texts: Vec<Vec<f64>> = actions
        .iter()
        .map(|q| oracle::to64(&q.per_backend["clip"]))
        .collect();
    let mu_q = oracle::column_mean(&texts);
    let b = score_breakdown(&video.set, &actions[1], &actions, &ScorerConfig::default()).unwrap();
    let want = oracle::scores(
        &video.clip,
        &video.blip2,
        &actions[1].per_backend["clip"],
        &actions[1].per_backend["blip2"],
        Some(&mu_q),
        Some(0.25),
    );
    for (g, w) in b.total.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9, "{g} vs {w}");
    }
    assert_eq!(b.terms.len(), 3);
}

#[test]
fn stored_mean_matches_reference_mean() {
    let mut rng = common::rng(5);
    let rows = common::random_rows(&mut rng, 17, 9);
    let m = BackendMatrix::from_rows("clip", &rows).unwrap();
    let want = oracle::column_mean(&rows.iter().map(|r| oracle::to64(r)).collect::<Vec<_>>());
    for (g, w) in mean_embedding(&m).iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
    let meta = VideoMeta::new("m", 1.0, 17, 17.0).unwrap();
    assert!(VideoEmbeddingSet::new(meta, vec![m]).is_ok());
}
