use serde_json::Value;
use storyreason::gspo::{brute_force_optimum, BRUTE_FORCE_CAP};
use storyreason_demo::{demo_table, gspo_demo, nms_demo, parse_answer_demo};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn nms_keeps_best_of_overlapping_pair() {
    let boxes = r#"[
        {"x": 0, "y": 0, "w": 10, "h": 10, "score": 0.9},
        {"x": 1, "y": 0, "w": 10, "h": 10, "score": 0.8},
        {"x": 50, "y": 50, "w": 10, "h": 10, "score": 0.7}
    ]"#;
    let v = parse(nms_demo(boxes, 0.5));
    assert_eq!(v["kept"], serde_json::json!([0, 2]));
    let iou01 = v["iou"][0][1].as_f64().unwrap();
    assert!((iou01 - 90.0 / 110.0).abs() < 1e-12);
    assert_eq!(v["iou"][0][2], 0.0);
    let v = parse(nms_demo(boxes, 0.95));
    assert_eq!(v["kept"], serde_json::json!([0, 1, 2]));
}

#[test]
fn nms_reports_bad_input() {
    assert!(parse(nms_demo("[{\"x\":0}]", 0.5))["error"].is_string());
    assert!(parse(nms_demo(r#"[{"x":0,"y":0,"w":-1,"h":2,"score":1}]"#, 0.5))["error"].is_string());
}

#[test]
fn gspo_never_beats_the_exhaustive_optimum() {
    for seed in 0..5 {
        let v = parse(gspo_demo(seed, 3, 12, true, true));
        let losses: Vec<f64> = v["losses"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(losses.len(), 12);
        assert!(v["final_loss"].as_f64().unwrap() >= v["optimum_loss"].as_f64().unwrap() - 1e-12);
        let (opt, loss) = brute_force_optimum(&demo_table(seed as u64, true), BRUTE_FORCE_CAP).unwrap();
        assert_eq!(v["optimum"], serde_json::json!(opt.indices));
        assert!((v["optimum_loss"].as_f64().unwrap() - loss).abs() < 1e-12);
    }
}

#[test]
fn gspo_is_deterministic_and_validates() {
    assert_eq!(gspo_demo(9, 2, 8, false, true), gspo_demo(9, 2, 8, false, true));
    assert!(parse(gspo_demo(1, 0, 5, true, true))["error"].is_string());
}

#[test]
fn parse_answer_variants() {
    let v = parse(parse_answer_demo("The final answer is **Colleagues**. Same office.", "pipa"));
    assert_eq!(v["label"], "colleagues");
    assert_eq!(v["explanation"], "Same office.");
    assert!(parse(parse_answer_demo("no template here", "pipa"))["error"].is_string());
    let custom = r#"{"name":"toy","labels":["rivals","allies"],"aliases":{}}"#;
    assert_eq!(parse(parse_answer_demo("the final answer is allies.", custom))["label"], "allies");
}
