use serde_json::Value;
use vidclaim_demo::{ground_demo_json, parse_answer_json, random_baseline_json};

fn json(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn parse_reports_mentions_and_window_hit() {
    let v = json(parse_answer_json("It happens at 12 seconds, not from 20 to 25 seconds.", 30.0, 10.0, 13.0).unwrap());
    assert_eq!(v["points"], serde_json::json!([12.0]));
    assert_eq!(v["intervals"], serde_json::json!([[20.0, 25.0]]));
    assert_eq!(v["mentions"].as_array().unwrap().len(), 2);
    assert_eq!(v["hits_window"], true);

    let v = json(parse_answer_json("No times here.", 30.0, 10.0, 13.0).unwrap());
    assert_eq!(v["hits_window"], false);
    assert!(parse_answer_json("x", 0.0, 0.0, 1.0).is_err());
}

#[test]
fn strong_signal_wins_the_ranking() {
    let v = json(ground_demo_json(3, 40, 16, 23, 6.0, 0.25, true).unwrap());
    assert_eq!(v["top5"][0], 23.0);
    assert_eq!(v["terms"].as_array().unwrap().len(), 3);
    assert_eq!(v["total"].as_array().unwrap().len(), 40);
    assert!(v["fact"].as_str().unwrap().contains("23.0 seconds"));

    let raw = json(ground_demo_json(3, 40, 16, 23, 6.0, 0.25, false).unwrap());
    assert_eq!(raw["terms"].as_array().unwrap().len(), 2);
    assert!(ground_demo_json(3, 40, 16, 40, 6.0, 0.25, true).is_err());
    assert!(ground_demo_json(3, 40, 16, 2, 6.0, 1.5, true).is_err());
}

#[test]
fn baseline_tracks_its_closed_form() {
    let v = json(random_baseline_json(30.0, 6.0, 12.0, 4000, 1).unwrap());
    let (r1, e1) = (v["r1"].as_f64().unwrap(), v["expected_r1"].as_f64().unwrap());
    let (r5, e5) = (v["r5"].as_f64().unwrap(), v["expected_r5"].as_f64().unwrap());
    assert!((e1 - 20.0).abs() < 1e-9);
    assert!((r1 - e1).abs() < 2.5, "{r1} vs {e1}");
    assert!((r5 - e5).abs() < 2.5, "{r5} vs {e5}");

    let full = json(random_baseline_json(30.0, 0.0, 30.0, 10, 1).unwrap());
    assert_eq!(full["r1"], 100.0);
    assert!(random_baseline_json(10.0, 6.0, 12.0, 10, 1).is_err());
}
