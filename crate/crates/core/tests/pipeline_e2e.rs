mod common;

use proptest::prelude::*;
use vidclaim::claim::{fallback_correct_lines, render_fact};
use vidclaim::embed::FileEmbeddingClient;
use vidclaim::parse::parse_timestamps;
use vidclaim::pipeline::{CorrectionSource, PipelineError};
use vidclaim::transform::RuleFallback;
use vidclaim::{Pipeline, ScorerConfig};

fn planted(seed: u64) -> (common::PlantedCase, FileEmbeddingClient) {
    let mut rng = common::rng(seed);
    let (case, qc, qb) = common::planted_case(&mut rng, "vid", "the person opens the door", 40, 32);
    let mut embed = FileEmbeddingClient::new();
    common::register(&mut embed, &case.action, qc, qb);
    (case, embed)
}

#[test]
fn planted_frame_is_claimed() {
    let (case, embed) = planted(1);
    let p = Pipeline::new(&RuleFallback, &embed, ScorerConfig::default());
    let out = p
        .ground_query(&case.video.set, "When did the person open the door?")
        .unwrap();
    let claim = out.claim.unwrap();
    assert_eq!(claim.grounded.len(), 1);
    assert_eq!(claim.grounded[0].chosen_timestamp, case.signal_frame as f64);
    assert_eq!(
        claim.lines[0],
        render_fact("the person opens the door", case.signal_frame as f64, 40.0)
    );
}

#[test]
fn grounding_is_byte_identical_across_runs() {
    let (case, embed) = planted(2);
    let p = Pipeline::new(&RuleFallback, &embed, ScorerConfig::default());
    let q = "When did the person open the door?";
    let a = serde_json::to_string(&p.ground_query(&case.video.set, q).unwrap()).unwrap();
    let b = serde_json::to_string(&p.ground_query(&case.video.set, q).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_temporal_query_passes_through() {
    let (case, embed) = planted(3);
    let p = Pipeline::new(&RuleFallback, &embed, ScorerConfig::default());
    let out = p.correct(&case.video.set, "What color is the door?", "It is red.").unwrap();
    assert_eq!(out.corrected, "It is red.");
    assert_eq!(out.source, CorrectionSource::Passthrough);
    assert!(out.grounding.claim.is_none());
}

#[test]
fn wrong_answer_is_rewritten_to_the_claim() {
    let (case, embed) = planted(4);
    let p = Pipeline::new(&RuleFallback, &embed, ScorerConfig::default());
    let t = case.signal_frame as f64;
    let wrong = if t > 20.0 { 5.0 } else { 33.0 };
    let out = p
        .correct(
            &case.video.set,
            "When did the person open the door?",
            &format!("The person opens the door at {wrong} seconds."),
        )
        .unwrap();
    assert_eq!(out.source, CorrectionSource::Client);
    assert_eq!(parse_timestamps(&out.corrected, 40.0).points(), &[t]);
}

#[test]
fn missing_embedding_is_a_service_failure() {
    let (case, _) = planted(5);
    let empty = FileEmbeddingClient::new();
    let p = Pipeline::new(&RuleFallback, &empty, ScorerConfig::default());
    let err = p
        .ground_query(&case.video.set, "When did the person open the door?")
        .unwrap_err();
    assert!(err.is_service_failure());
    assert!(matches!(
        p.ground_query(&case.video.set, "  "),
        Err(PipelineError::EmptyQuery)
    ));
}

proptest! {
    #[test]
    fn chosen_timestamps_lie_on_the_frame_grid(seed in any::<u64>(), fps in prop::sample::select(vec![0.5f64, 1.0, 2.0, 3.0])) {
        let mut rng = common::rng(seed);
        let clip = common::random_rows(&mut rng, 20, 8);
        let blip2 = common::random_rows(&mut rng, 20, 8);
        let video = common::video_from_rows("g", fps, clip, blip2);
        let mut embed = FileEmbeddingClient::new();
        common::register(&mut embed, "a person sits", common::random_vector(&mut rng, 8), common::random_vector(&mut rng, 8));
        common::register(&mut embed, "a person drinks water", common::random_vector(&mut rng, 8), common::random_vector(&mut rng, 8));
        let p = Pipeline::new(&RuleFallback, &embed, ScorerConfig::default());
        let ev = p.ground_event(&video.set, "a person sits and drinks water").unwrap();
        prop_assert_eq!(ev.grounded.len(), 2);
        for g in &ev.grounded {
            let k = (g.chosen_timestamp * fps).round();
            prop_assert!((0.0..20.0).contains(&k));
            prop_assert_eq!(g.chosen_timestamp, k / fps);
        }
    }

    #[test]
    fn fallback_correction_is_idempotent(
        claimed in prop::collection::vec(0u32..600, 1..3),
        said in prop::collection::vec(0u32..600, 0..3),
        filler in "[a-z ]{0,20}",
    ) {
        let facts: Vec<String> = claimed
            .iter()
            .enumerate()
            .map(|(i, t)| render_fact(&format!("action {i}"), *t as f64 / 10.0, 60.0))
            .collect();
        let answer = if said.is_empty() {
            format!("The person {filler}.")
        } else {
            let ts: Vec<String> = said.iter().map(|t| format!("{} seconds", *t as f64 / 10.0)).collect();
            format!("The person {filler} at {}.", ts.join(", "))
        };
        let once = fallback_correct_lines(&answer, &facts);
        let twice = fallback_correct_lines(&once, &facts);
        prop_assert_eq!(&once, &twice);
    }
}
