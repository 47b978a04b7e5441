use serde_json::Value;

use navxai::world::{generate_task, WorldConfig};
use navxai_wasm::{blend_json, city_json, explain_json, lambda_json};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn city_route_is_a_shortest_walk() {
    for seed in [1, 2, 3, 40] {
        let v = parse(city_json(seed).unwrap());
        let task = generate_task(seed, &WorldConfig::default()).unwrap();
        let route = v["route"].as_array().unwrap();
        assert_eq!(route.len() as u32, task.optimal_length + 1);
        assert_eq!(route[0], serde_json::to_value(task.start).unwrap());
        assert_eq!(route.last().unwrap(), &serde_json::to_value(task.goal).unwrap());
        for w in route.windows(2) {
            let step = |k: &str| (w[0][k].as_i64().unwrap() - w[1][k].as_i64().unwrap()).abs();
            assert_eq!(step("row") + step("col"), 1);
        }
    }
}

#[test]
fn blend_matches_hand_values() {
    // Feedback: positives 8, 9, 10 and negatives 2, 1, 0 out of ten each.
    let v = parse(blend_json(&[8, 9, 10], &[2, 1, 0], &[5, 5, 5], &[0, 0, 0], 0.25).unwrap());
    let d_p: Vec<f64> = serde_json::from_value(v["d_p"].clone()).unwrap();
    let want = [0.154_013_455_847_107_35, 0.308_426_763_182_581_3, 0.537_559_780_970_311_4];
    for i in 0..3 {
        assert!((d_p[i] - want[i]).abs() < 1e-12);
    }
    let d_b: Vec<f64> = serde_json::from_value(v["d_b"].clone()).unwrap();
    for i in 0..3 {
        assert!((d_b[i] - (0.25 * want[i] + 0.75 / 3.0)).abs() < 1e-12);
    }
    assert!(blend_json(&[1, 2], &[0, 0, 0], &[0, 0, 0], &[0, 0, 0], 0.5).is_err());
    assert!(blend_json(&[0, 0, 0], &[0, 0, 0], &[0, 0, 0], &[0, 0, 0], 1.5).is_err());
}

#[test]
fn lambda_follows_prediction() {
    let v = parse(lambda_json(&[0.2, 0.7, 0.1], "straight").unwrap());
    assert!((v["lambda"].as_f64().unwrap() - 0.7).abs() < 1e-15);
    let v = parse(lambda_json(&[0.2, 0.7, 0.1], "Left").unwrap());
    assert!((v["lambda"].as_f64().unwrap() - 0.3).abs() < 1e-15);
    assert!(lambda_json(&[0.2, 0.7, 0.1], "back").is_err());
}

#[test]
fn explanations_signal_exactly_when_wrong() {
    for seed in 1..6 {
        for step in 0..3 {
            for m in ["language", "feature-map", "decision-tree"] {
                for correct in [true, false] {
                    let v = parse(explain_json(seed, step, m, correct).unwrap());
                    // A single open direction forces a correct suggestion.
                    let is_correct = v["is_correct"].as_bool().unwrap();
                    assert_eq!(v["red_herring"].as_bool().unwrap(), !is_correct);
                    if correct {
                        assert!(is_correct);
                    }
                    let view = v["explanation"].to_string();
                    assert!(!view.contains("is_correct") && !view.contains("herring"));
                }
            }
        }
    }
    assert!(explain_json(1, 0, "hologram", true).is_err());
}
