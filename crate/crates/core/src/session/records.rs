//! Metric inputs folded directly from a stored log.

use std::collections::HashMap;

use crate::metrics::{InteractionRecord, TaskOutcome};
use crate::policy::Strategy;
use crate::predictor::{state_features, TrainingExample};
use crate::world::CarState;

use super::event::{Event, EventPayload, SessionCreated, SuggestionIssued};
use super::flow::PhaseStrategy;

fn condition(created: &SessionCreated, task_order: usize) -> String {
    let planned = &created.plan[task_order];
    let phase = &created.flow.phases[planned.phase_index];
    match (phase.strategy, planned.fixed_modality) {
        (PhaseStrategy::RotatingModality, Some(m)) => Strategy::FixedModality(m).label(),
        _ => phase.label.clone(),
    }
}

/// Rebuilds interaction records and task outcomes from `events` without
/// re-running the session.
pub fn records_from_log(events: &[Event]) -> (Vec<InteractionRecord>, Vec<TaskOutcome>) {
    let mut records = Vec::new();
    let mut outcomes = Vec::new();
    let Some(Event { payload: EventPayload::SessionCreated(created), .. }) = events.first() else {
        return (records, outcomes);
    };
    let mut pending: Option<&SuggestionIssued> = None;
    let mut by_slot: HashMap<(usize, u32), usize> = HashMap::new();
    let mut task_mods = Vec::new();
    for e in events {
        match &e.payload {
            EventPayload::TaskStarted(_) => task_mods.clear(),
            EventPayload::SuggestionIssued(s) => {
                if !task_mods.contains(&s.suggestion.modality) {
                    task_mods.push(s.suggestion.modality);
                }
                pending = Some(s);
            }
            EventPayload::DecisionMade(d) => {
                let Some(s) = pending.take() else { continue };
                let planned = &created.plan[d.task_order];
                let phase = &created.flow.phases[planned.phase_index];
                by_slot.insert((d.task_order, d.intersection_index), records.len());
                records.push(InteractionRecord {
                    session_id: created.session_id.clone(),
                    user_id: created.config.user_id.clone(),
                    condition: condition(created, d.task_order),
                    phase: phase.kind.label().into(),
                    task_id: planned.task.task_id.clone(),
                    task_order: d.task_order,
                    intersection_index: d.intersection_index,
                    modality: d.modality,
                    suggested: s.suggestion.direction,
                    optimal: s.optimal,
                    suggestion_correct: s.suggestion.is_correct,
                    offered: s.offered.clone(),
                    chosen: d.chosen,
                    feedback: None,
                    consideration_ms: d.consideration_ms,
                    blocked_excursion: d.blocked_excursion,
                });
            }
            EventPayload::FeedbackGiven(f) => {
                if let Some(&i) = by_slot.get(&(f.task_order, f.intersection_index)) {
                    records[i].feedback = Some(f.positive);
                }
            }
            EventPayload::TaskEnded(t) => {
                let planned = &created.plan[t.task_order];
                outcomes.push(TaskOutcome {
                    session_id: created.session_id.clone(),
                    condition: condition(created, t.task_order),
                    phase: created.flow.phases[planned.phase_index].kind.label().into(),
                    task_id: t.task_id.clone(),
                    task_order: t.task_order,
                    steps_taken: t.steps_taken,
                    optimal_length: t.optimal_length,
                    reached_goal: t.outcome == crate::world::Terminal::GoalReached,
                    modalities: task_mods.clone(),
                });
            }
            _ => {}
        }
    }
    (records, outcomes)
}

/// One example per decision: the pose the suggestion was issued at, labelled
/// with the direction the participant chose.
pub fn examples_from_log(events: &[Event]) -> Vec<TrainingExample> {
    let Some(Event { payload: EventPayload::SessionCreated(created), .. }) = events.first() else {
        return Vec::new();
    };
    let mut pending: Option<&SuggestionIssued> = None;
    let mut out = Vec::new();
    for e in events {
        match &e.payload {
            EventPayload::SuggestionIssued(s) => pending = Some(s),
            EventPayload::DecisionMade(d) => {
                let Some(s) = pending.take() else { continue };
                let task = &created.plan[d.task_order].task;
                let car = CarState { pos: s.pose.pos, heading: s.pose.heading, ..CarState::at_start(task) };
                out.push(TrainingExample {
                    features: state_features(task, &car),
                    user_id: created.config.user_id.clone(),
                    task_id: task.task_id.clone(),
                    label: d.chosen,
                });
            }
            _ => {}
        }
    }
    out
}
