//! Study sessions: flow orchestration, the event log, replay, persistence and
//! the multi-session service used by the HTTP layer.

mod event;
mod flow;
mod headless;
mod records;
mod service;
mod state;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{
    DecisionMade, Event, EventPayload, FeedbackGiven, Pose, SessionCreated, SessionEnded, SuggestionIssued,
    SurveySubmitted, TaskEnded, TaskStarted, LOG_FORMAT_VERSION,
};
pub use flow::{
    counterbalance, latin_row, modality_orderings, plan_tasks, FlowKind, Phase, PhaseKind, PhaseStrategy, PlannedTask,
    StudyFlow,
};
pub use headless::{run_headless, HeadlessOutcome, HeadlessSetup, SYNTHETIC_PAUSE_MS};
pub use records::{examples_from_log, records_from_log};
pub use service::{
    CreateSessionRequest, DecisionRequest, FeedbackRequest, ServiceConfig, SessionService, SessionSummary,
    SurveyRequest,
};
pub use state::{DecisionOutcome, InteractionView, MiniMap, ParticipantSuggestion, SessionState, SessionStatus};
pub use store::{EventStore, IndexEntry};

use crate::advisor::AdvisorError;
use crate::planner::PlannerError;
use crate::policy::{PolicyError, Strategy};
use crate::predictor::PredictorError;
use crate::world::{Direction, WorldError, DEFAULT_INTERACTION_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("out of sequence: {0}")]
    Sequence(String),
    #[error("{0} is not among the offered directions")]
    NotOffered(Direction),
    #[error("a survey must be submitted before continuing")]
    SurveyRequired,
    #[error("session is complete")]
    Completed,
    #[error("replay diverged: {0}")]
    Replay(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error(transparent)]
    Advisor(#[from] AdvisorError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Config(_) => "invalid_config",
            SessionError::DuplicateSession(_) => "duplicate_session",
            SessionError::NotFound(_) => "session_not_found",
            SessionError::Sequence(_) => "out_of_sequence",
            SessionError::NotOffered(_) => "direction_not_offered",
            SessionError::SurveyRequired => "survey_required",
            SessionError::Completed => "session_completed",
            SessionError::Replay(_) => "replay_diverged",
            SessionError::Storage(_) => "storage_error",
            SessionError::Advisor(_) => "advisor_error",
            SessionError::Planner(_) => "planner_error",
            SessionError::World(_) => "world_error",
            SessionError::Policy(_) => "policy_error",
            SessionError::Predictor(_) => "predictor_error",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            SessionError::Config(_) | SessionError::NotOffered(_) => 400,
            SessionError::NotFound(_) => 404,
            SessionError::DuplicateSession(_)
            | SessionError::Sequence(_)
            | SessionError::SurveyRequired
            | SessionError::Completed => 409,
            _ => 500,
        }
    }
}

/// Everything needed to start a session besides the task bank, templates
/// and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub flow: FlowKind,
    pub user_id: String,
    pub seed: u64,
    /// Position in the enrollment sequence; drives counterbalancing.
    #[serde(default)]
    pub enrollment: u64,
    /// Personalization strategies before counterbalancing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_pair: Option<(Strategy, Strategy)>,
    /// The single strategy of a headless-custom flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default = "default_error_rate")]
    pub error_rate: f64,
    #[serde(default = "default_cap")]
    pub interaction_cap: u32,
}

fn default_error_rate() -> f64 {
    0.30
}

fn default_cap() -> u32 {
    DEFAULT_INTERACTION_CAP
}

impl SessionConfig {
    pub fn new(flow: FlowKind, user_id: impl Into<String>, seed: u64) -> Self {
        Self {
            flow,
            user_id: user_id.into(),
            seed,
            enrollment: 0,
            condition_pair: None,
            strategy: None,
            error_rate: default_error_rate(),
            interaction_cap: default_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(SessionError::Config(format!("error_rate {} outside [0, 1]", self.error_rate)));
        }
        if self.interaction_cap == 0 {
            return Err(SessionError::Config("interaction_cap must be positive".into()));
        }
        if self.user_id.is_empty() {
            return Err(SessionError::Config("user_id must not be empty".into()));
        }
        Ok(())
    }

    pub fn build_flow(&self) -> Result<StudyFlow, SessionError> {
        match self.flow {
            FlowKind::Population => Ok(StudyFlow::population()),
            FlowKind::Personalization => {
                let pair = self
                    .condition_pair
                    .ok_or_else(|| SessionError::Config("personalization flow needs a condition pair".into()))?;
                let (a, b) = counterbalance(pair, self.enrollment);
                Ok(StudyFlow::personalization(a, b))
            }
            FlowKind::HeadlessCustom => {
                let s = self
                    .strategy
                    .ok_or_else(|| SessionError::Config("headless-custom flow needs a strategy".into()))?;
                Ok(StudyFlow::headless_custom(s))
            }
        }
    }
}
