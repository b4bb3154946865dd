use std::collections::HashMap;

use proptest::prelude::*;
use vidclaim::harness::{
    build_task1, build_task2, durations_from_annotations, order_ground_truth, parse_charades_sta,
    random_baseline_task1, score_task1, score_task2, temporal_iou, EventAnnotation, Relation,
};
use vidclaim::parse::OrderLabel;

fn ann(v: &str, s: f64, e: f64, c: &str) -> EventAnnotation {
    EventAnnotation::new(v, s, e, c).unwrap()
}

/// Overlap ratio computed from sorted endpoints, independent of the library.
fn reference_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let mut pts = [a.0, a.1, b.0, b.1];
    pts.sort_by(f64::total_cmp);
    let disjoint = a.1 <= b.0 || b.1 <= a.0;
    if disjoint {
        return 0.0;
    }
    (pts[2] - pts[1]) / (pts[3] - pts[0])
}

fn fixture(videos: usize, per_video: usize, seed: u64) -> Vec<EventAnnotation> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for v in 0..videos {
        let length: f64 = rng.gen_range(15.0..60.0);
        for i in 0..per_video {
            let s = (rng.gen_range(0.0..length - 2.0) * 10.0f64).round() / 10.0;
            let e = (s + rng.gen_range(1.0..12.0f64)).min(length);
            out.push(ann(&format!("V{v:04}"), s, (e * 10.0).round() / 10.0, &format!("person does thing {i}")));
        }
    }
    out
}

#[test]
fn ingest_documented_line() {
    let got = parse_charades_sta("AO8RW 0.0 6.9##a person is putting a book on a shelf.\nBAD 5 3##x\n").unwrap();
    assert_eq!(got.annotations, vec![ann("AO8RW", 0.0, 6.9, "a person is putting a book on a shelf.")]);
    assert_eq!(got.skipped.len(), 1);
    assert_eq!(got.skipped[0].line, 2);
}

#[test]
fn iou_examples() {
    let a = ann("v", 0.0, 10.0, "a");
    assert!((temporal_iou(&a, &ann("v", 5.0, 15.0, "b")).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(temporal_iou(&ann("v", 0.0, 5.0, "a"), &ann("v", 5.0, 10.0, "b")).unwrap(), 0.0);
    assert_eq!(temporal_iou(&ann("v", 2.0, 8.0, "a"), &ann("v", 2.0, 8.0, "b")).unwrap(), 1.0);
    assert!(temporal_iou(&a, &ann("w", 0.0, 1.0, "b")).is_err());
}

#[test]
fn sampled_pairs_respect_overlap_and_order_rule() {
    let anns = fixture(200, 5, 3);
    let items = build_task2(&anns, 42, 2, None).unwrap();
    assert!(!items.is_empty());
    for it in &items {
        let iou = reference_iou((it.event_a.t_start, it.event_a.t_end), (it.event_b.t_start, it.event_b.t_end));
        assert!(iou < 0.5, "{it:?}");
        let a_first = it.event_a.t_start < it.event_b.t_start;
        let want = match (it.relation, a_first) {
            (Relation::Before, true) | (Relation::After, false) => OrderLabel::Yes,
            _ => OrderLabel::No,
        };
        assert_eq!(it.gt_label, want);
        assert_eq!(it.event_a.video_id, it.video_id);
    }
    let per_video = items.iter().fold(HashMap::<&str, usize>::new(), |mut m, it| {
        *m.entry(&it.video_id).or_default() += 1;
        m
    });
    assert!(per_video.values().all(|&n| n <= 2));
}

#[test]
fn sampling_is_reproducible_and_seed_sensitive() {
    let anns = fixture(100, 5, 9);
    let a = serde_json::to_string(&build_task2(&anns, 1, 2, None).unwrap()).unwrap();
    let b = serde_json::to_string(&build_task2(&anns, 1, 2, None).unwrap()).unwrap();
    let c = serde_json::to_string(&build_task2(&anns, 2, 2, None).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn overlapping_only_video_contributes_nothing() {
    let anns = vec![ann("x", 0.0, 10.0, "a"), ann("x", 1.0, 10.0, "b")];
    assert!(build_task2(&anns, 0, 2, None).is_err());
    let mut more = anns.clone();
    more.push(ann("y", 0.0, 3.0, "c"));
    more.push(ann("y", 10.0, 13.0, "d"));
    let items = build_task2(&more, 0, 2, None).unwrap();
    assert!(items.iter().all(|it| it.video_id == "y"));
}

#[test]
fn documented_order_example() {
    let a = ann("v", 0.0, 10.0, "a");
    let b = ann("v", 5.0, 15.0, "b");
    assert_eq!(order_ground_truth(&a, &b, Relation::Before), OrderLabel::Yes);
    assert_eq!(order_ground_truth(&a, &b, Relation::After), OrderLabel::No);
}

/// Ten items counted by hand: windows, responses and the expected verdicts.
#[test]
fn ten_item_report_matches_hand_count() {
    let rows = [
        (0.0, 6.9, "at 3 seconds", true),
        (10.0, 20.0, "from 5 s to 9 s", false),
        (10.0, 20.0, "from 5 s to 10 s", true),
        (0.0, 5.0, "in the beginning of the video", true),
        (25.0, 30.0, "in the middle of the video", false),
        (22.0, 24.0, "at the end of the video", true),
        (3.0, 4.0, "No information mentioned.", false),
        (12.0, 13.0, "throughout the video", true),
        (14.0, 15.0, "at 2 seconds, 9 seconds", false),
        (14.0, 15.0, "at 2 seconds, 14.5 seconds", true),
    ];
    let anns: Vec<_> = rows
        .iter()
        .enumerate()
        .map(|(i, (s, e, _, _))| ann("vid", *s, *e, &format!("event {i}")))
        .collect();
    let items = build_task1(&anns, None);
    let responses: HashMap<String, String> = items
        .iter()
        .zip(&rows)
        .map(|(it, r)| (it.id.clone(), r.2.to_string()))
        .collect();
    let durations = HashMap::from([("vid".to_string(), 30.0)]);
    let (report, records) = score_task1(&items, &responses, None, &durations, None).unwrap();
    for (rec, row) in records.iter().zip(&rows) {
        assert_eq!(rec.r1, row.3, "{}", row.2);
    }
    assert_eq!(report.acc, Some(60.0));
    assert_eq!(report.n_items, 10);
}

#[test]
fn pipeline_mode_examples() {
    let anns = vec![ann("v", 0.0, 6.9, "a"), ann("v", 31.0, 33.0, "b"), ann("v", 1.0, 2.0, "c")];
    let items = build_task1(&anns, None);
    let preds = HashMap::from([
        (items[0].id.clone(), vec![3.0]),
        (items[1].id.clone(), vec![10.0, 20.0, 30.0, 40.0, 32.0, 31.5]),
        (items[2].id.clone(), vec![]),
    ]);
    let (report, records) = score_task1(&items, &HashMap::new(), Some(&preds), &HashMap::new(), None).unwrap();
    assert!(records[0].r1 && records[0].r5);
    assert!(!records[1].r1 && records[1].r5);
    assert_eq!(records[1].pred_top5.len(), 5);
    assert!(!records[2].r1 && !records[2].r5);
    assert!((report.r1_acc.unwrap() - 100.0 / 3.0).abs() < 1e-9);
    assert!((report.r5_acc.unwrap() - 200.0 / 3.0).abs() < 1e-9);
}

#[test]
fn missing_response_is_an_error() {
    let items = build_task1(&[ann("v", 0.0, 1.0, "a")], None);
    let durations = HashMap::from([("v".to_string(), 10.0)]);
    assert!(score_task1(&items, &HashMap::new(), None, &durations, None).is_err());
}

#[test]
fn flipped_answers_complement_accuracy() {
    let anns = fixture(60, 4, 1);
    let items = build_task2(&anns, 5, 2, None).unwrap();
    let answer = |l: OrderLabel| if l == OrderLabel::Yes { "Yes." } else { "No." };
    let mixed: HashMap<String, String> = items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let l = if i % 3 == 0 { it.gt_label.flipped() } else { it.gt_label };
            (it.id.clone(), answer(l).to_string())
        })
        .collect();
    let flipped: HashMap<String, String> = mixed
        .iter()
        .map(|(k, v)| (k.clone(), if v == "Yes." { "No." } else { "Yes." }.to_string()))
        .collect();
    let (a, _) = score_task2(&items, &mixed, None).unwrap();
    let (b, _) = score_task2(&items, &flipped, None).unwrap();
    assert!((a.acc.unwrap() + b.acc.unwrap() - 100.0).abs() < 1e-9);
    let unsure: HashMap<String, String> = items.iter().map(|it| (it.id.clone(), "Hard to say.".into())).collect();
    assert_eq!(score_task2(&items, &unsure, None).unwrap().0.acc, Some(0.0));
}

#[test]
fn random_baseline_examples() {
    let full = vec![ann("a", 0.0, 40.0, "x"), ann("b", 0.0, 12.0, "y")];
    let d = durations_from_annotations(&full);
    assert_eq!(random_baseline_task1(&full, 10, 0, &d).unwrap(), (100.0, 100.0));

    let quarter = [ann("q", 30.0, 40.0, "x"), ann("q", 0.0, 40.0, "whole")];
    let d = HashMap::from([("q".to_string(), 40.0)]);
    let only_quarter = vec![quarter[0].clone()];
    let (r1, r5) = random_baseline_task1(&only_quarter, 20_000, 7, &d).unwrap();
    assert!((r1 - 25.0).abs() < 1.0, "{r1}");
    let want_r5 = 100.0 * (1.0 - 0.75f64.powi(5));
    assert!((r5 - want_r5).abs() < 1.0, "{r5} vs {want_r5}");

    assert!(random_baseline_task1(&only_quarter, 0, 7, &d).is_err());
    assert!(random_baseline_task1(&only_quarter, 1, 7, &HashMap::new()).is_err());
    let again = random_baseline_task1(&only_quarter, 500, 3, &d).unwrap();
    assert_eq!(again, random_baseline_task1(&only_quarter, 500, 3, &d).unwrap());
}

proptest! {
    #[test]
    fn recall_at_five_dominates_recall_at_one(
        windows in prop::collection::vec((0.0f64..50.0, 0.1f64..20.0), 1..20),
        preds in prop::collection::vec(prop::collection::vec(0.0f64..80.0, 0..8), 20),
    ) {
        let anns: Vec<_> = windows.iter().enumerate().map(|(i, (s, w))| ann("v", *s, s + w, &format!("e{i}"))).collect();
        let items = build_task1(&anns, None);
        let p: HashMap<String, Vec<f64>> = items.iter().zip(&preds).map(|(it, p)| (it.id.clone(), p.clone())).collect();
        let (report, records) = score_task1(&items, &HashMap::new(), Some(&p), &HashMap::new(), None).unwrap();
        prop_assert!(report.r5_acc.unwrap() >= report.r1_acc.unwrap());
        prop_assert!(records.iter().all(|r| r.r5 || !r.r1));
    }

    #[test]
    fn every_sampled_pair_is_low_overlap(seed in any::<u64>(), max in 1usize..4) {
        let anns = fixture(30, 6, seed);
        if let Ok(items) = build_task2(&anns, seed, max, None) {
            for it in &items {
                prop_assert!(reference_iou((it.event_a.t_start, it.event_a.t_end), (it.event_b.t_start, it.event_b.t_end)) < 0.5);
                prop_assert!(it.event_a.t_start != it.event_b.t_start);
            }
        }
    }
}
