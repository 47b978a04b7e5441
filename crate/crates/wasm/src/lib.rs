//! Browser bindings. Every export returns a JSON string; the `*_json`
//! functions are the same operations callable from native code.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use navxai::advisor::{advise, AdvisorConfig, AdvisorRng, Modality, TemplateBank};
use navxai::ledger::{negative_distribution, ChannelCounts};
use navxai::planner::{compute_distances, resolve_optimal};
use navxai::policy::{blend, compute_lambda};
use navxai::world::{apply_move, generate_task, CarState, CityTask, Direction, WorldConfig};

fn task_for(seed: u64) -> Result<CityTask, String> {
    generate_task(seed, &WorldConfig::default()).map_err(|e| e.to_string())
}

/// Task layout plus the optimal route as a list of cells, start included.
pub fn city_json(seed: u64) -> Result<String, String> {
    let task = task_for(seed)?;
    let field = compute_distances(&task).map_err(|e| e.to_string())?;
    let mut car = CarState::at_start(&task);
    let mut cells = vec![car.pos];
    let mut moves = Vec::new();
    while car.pos != task.goal {
        let d = resolve_optimal(&task, &car, &field).map_err(|e| e.to_string())?.direction;
        car = apply_move(&task, &car, d).map_err(|e| e.to_string())?;
        cells.push(car.pos);
        moves.push(d);
    }
    Ok(json!({ "task": task, "route": cells, "moves": moves }).to_string())
}

fn counts(pos: &[u32], neg: &[u32]) -> Result<ChannelCounts, String> {
    let pick = |v: &[u32]| -> Result<[u32; 3], String> {
        v.try_into().map_err(|_| format!("expected 3 counts, got {}", v.len()))
    };
    let (p, n) = (pick(pos)?, pick(neg)?);
    Ok(ChannelCounts { x: std::array::from_fn(|i| p[i] + n[i]), x_plus: p, x_minus: n })
}

/// Preference and performance distributions from the two ledgers and their
/// blend at `lambda`.
pub fn blend_json(
    feedback_pos: &[u32],
    feedback_neg: &[u32],
    perf_pos: &[u32],
    perf_neg: &[u32],
    lambda: f64,
) -> Result<String, String> {
    let d_p = negative_distribution(&counts(feedback_pos, feedback_neg)?);
    let d_t = negative_distribution(&counts(perf_pos, perf_neg)?);
    let d_b = blend(&d_p, &d_t, lambda).map_err(|e| e.to_string())?;
    Ok(json!({ "d_p": d_p.probs(), "d_t": d_t.probs(), "d_b": d_b.probs(), "lambda": lambda }).to_string())
}

/// Weight given to preference for a predicted move distribution over
/// Left, Straight, Right when `optimal` is the right answer.
pub fn lambda_json(prediction: &[f64], optimal: &str) -> Result<String, String> {
    let p: [f64; 3] = prediction.try_into().map_err(|_| "expected 3 probabilities".to_string())?;
    let optimal = direction(optimal)?;
    let c = compute_lambda(&p, optimal).map_err(|e| e.to_string())?;
    Ok(json!({ "lambda": c.lambda, "predicted": c.predicted_direction, "tied": c.tied }).to_string())
}

fn direction(s: &str) -> Result<Direction, String> {
    Direction::ALL
        .into_iter()
        .find(|d| format!("{d:?}").eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown direction {s}"))
}

fn modality(s: &str) -> Result<Modality, String> {
    Modality::ALL
        .into_iter()
        .find(|m| m.label().eq_ignore_ascii_case(s) || format!("{m:?}").eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown modality {s}"))
}

/// Suggestion at the `step`-th intersection of the optimal route, forced
/// correct or incorrect, rendered in `modality`.
pub fn explain_json(seed: u64, step: u32, modality_name: &str, correct: bool) -> Result<String, String> {
    let task = task_for(seed)?;
    let field = compute_distances(&task).map_err(|e| e.to_string())?;
    let mut car = CarState::at_start(&task);
    for _ in 0..step.min(task.optimal_length.saturating_sub(1)) {
        let d = resolve_optimal(&task, &car, &field).map_err(|e| e.to_string())?.direction;
        car = apply_move(&task, &car, d).map_err(|e| e.to_string())?;
    }
    let bank = TemplateBank::personalization();
    let cfg = AdvisorConfig { error_rate: if correct { 0.0 } else { 1.0 } };
    let mut rngs = AdvisorRng::new(seed ^ u64::from(step));
    let s = advise(&task, &car, &field, modality(modality_name)?, &mut rngs, &cfg, &bank).map_err(|e| e.to_string())?;
    let view: Value = s.explanation.participant_view();
    Ok(json!({
        "pos": car.pos,
        "heading": car.heading,
        "direction": s.direction,
        "is_correct": s.is_correct,
        "masked_direction": s.masked_direction,
        "red_herring": s.explanation.has_red_herring(bank.brightness.sky_threshold),
        "explanation": view,
    })
    .to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn city(seed: u32) -> Result<String, JsError> {
    js(city_json(u64::from(seed)))
}

#[wasm_bindgen(js_name = blendDistributions)]
pub fn blend_distributions(
    feedback_pos: &[u32],
    feedback_neg: &[u32],
    perf_pos: &[u32],
    perf_neg: &[u32],
    lambda: f64,
) -> Result<String, JsError> {
    js(blend_json(feedback_pos, feedback_neg, perf_pos, perf_neg, lambda))
}

#[wasm_bindgen(js_name = lambdaFor)]
pub fn lambda_for(prediction: &[f64], optimal: &str) -> Result<String, JsError> {
    js(lambda_json(prediction, optimal))
}

#[wasm_bindgen]
pub fn explain(seed: u32, step: u32, modality: &str, correct: bool) -> Result<String, JsError> {
    js(explain_json(u64::from(seed), step, modality, correct))
}
