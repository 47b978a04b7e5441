//! Runs a whole session with a synthetic participant and a synthetic clock.

use std::sync::Arc;

use serde_json::json;

use crate::advisor::{Modality, TemplateBank};
use crate::metrics::{session_report, InteractionRecord, SessionReport, TaskOutcome};
use crate::predictor::PredictorModel;
use crate::rng::{self, Stream};
use crate::simuser::{decide, SimUserError, SimUserProfile};
use crate::world::TaskBank;

use super::event::Event;
use super::state::{SessionState, SessionStatus};
use super::{SessionConfig, SessionError};

/// Clock advance between a decision and the next command.
pub const SYNTHETIC_PAUSE_MS: u64 = 250;

#[derive(Debug, Clone)]
pub struct HeadlessSetup {
    pub session_id: String,
    pub config: SessionConfig,
    pub profile: SimUserProfile,
    pub templates: Arc<TemplateBank>,
    pub model: Option<PredictorModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadlessOutcome {
    pub events: Vec<Event>,
    pub records: Vec<InteractionRecord>,
    pub outcomes: Vec<TaskOutcome>,
    pub report: SessionReport,
}

fn ranking(profile: &SimUserProfile) -> Vec<&'static str> {
    let mut ms = Modality::ALL.to_vec();
    ms.sort_by(|a, b| profile.pref_weight[b.index()].total_cmp(&profile.pref_weight[a.index()]));
    ms.into_iter().map(Modality::label).collect()
}

pub fn run_headless(setup: HeadlessSetup, bank: &TaskBank) -> Result<HeadlessOutcome, SessionError> {
    let HeadlessSetup { session_id, config, profile, templates, model } = setup;
    profile.validate().map_err(|e: SimUserError| SessionError::Config(e.to_string()))?;
    let mut clock = 0u64;
    let mut state = SessionState::create(session_id, config, bank, templates, model, clock)?;
    let mut rng = rng::stream(profile.seed, Stream::SimUser);
    loop {
        clock += SYNTHETIC_PAUSE_MS;
        match state.status() {
            SessionStatus::Completed => break,
            SessionStatus::AwaitingSurvey { phase_index } => {
                let answers = json!({ "phase_index": phase_index, "ranking": ranking(&profile) });
                state.submit_survey("modality-ranking", answers, clock)?;
            }
            SessionStatus::AwaitingInteraction | SessionStatus::AwaitingDecision => {
                let view = match state.view() {
                    Some(v) => v,
                    None => state.next_interaction(clock)?,
                };
                let suggestion = state.pending().expect("suggestion pending").suggestion.clone();
                let d = decide(&profile, &suggestion, &view.offered, &mut rng);
                clock += d.consideration_ms;
                state.submit_decision(d.chosen, d.consideration_ms, clock)?;
                clock += SYNTHETIC_PAUSE_MS;
                state.submit_feedback(d.feedback, clock)?;
            }
        }
    }
    let report = session_report(&state.session_id, &state.config.user_id, state.records(), state.outcomes());
    Ok(HeadlessOutcome {
        events: state.events().to_vec(),
        records: state.records().to_vec(),
        outcomes: state.outcomes().to_vec(),
        report,
    })
}
