//! Append-only session log entries.

use serde::{Deserialize, Serialize};

use crate::advisor::{Modality, Suggestion};
use crate::ledger::ChannelCounts;
use crate::policy::BlendTrace;
use crate::world::{CarState, Direction, GridPos, Heading, Terminal};

use super::flow::{PhaseKind, PlannedTask, StudyFlow};
use super::SessionConfig;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data")]
pub enum EventPayload {
    SessionCreated(Box<SessionCreated>),
    TaskStarted(TaskStarted),
    SuggestionIssued(Box<SuggestionIssued>),
    DecisionMade(DecisionMade),
    FeedbackGiven(FeedbackGiven),
    SurveySubmitted(SurveySubmitted),
    TaskEnded(TaskEnded),
    SessionEnded(SessionEnded),
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::SessionCreated(_) => "SessionCreated",
            EventPayload::TaskStarted(_) => "TaskStarted",
            EventPayload::SuggestionIssued(_) => "SuggestionIssued",
            EventPayload::DecisionMade(_) => "DecisionMade",
            EventPayload::FeedbackGiven(_) => "FeedbackGiven",
            EventPayload::SurveySubmitted(_) => "SurveySubmitted",
            EventPayload::TaskEnded(_) => "TaskEnded",
            EventPayload::SessionEnded(_) => "SessionEnded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub format_version: u32,
    pub session_id: String,
    pub config: SessionConfig,
    pub flow: StudyFlow,
    pub plan: Vec<PlannedTask>,
    pub templates: String,
    pub templates_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStarted {
    pub task_order: usize,
    pub task_id: String,
    pub phase_index: usize,
    pub phase: PhaseKind,
    pub condition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pose {
    pub pos: GridPos,
    pub heading: Heading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionIssued {
    pub task_order: usize,
    pub intersection_index: u32,
    pub pose: Pose,
    pub optimal: Direction,
    pub offered: Vec<Direction>,
    pub suggestion: Suggestion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<BlendTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMade {
    pub task_order: usize,
    pub intersection_index: u32,
    pub modality: Modality,
    pub chosen: Direction,
    pub consideration_ms: u64,
    pub chose_optimal: bool,
    pub blocked_excursion: bool,
    pub car_after: CarState,
    /// Performance tallies after this decision.
    pub performance: ChannelCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackGiven {
    pub task_order: usize,
    pub intersection_index: u32,
    pub modality: Modality,
    pub positive: bool,
    /// Feedback tallies after this answer.
    pub feedback: ChannelCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySubmitted {
    pub phase_index: usize,
    pub form_id: String,
    pub answers: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEnded {
    pub task_order: usize,
    pub task_id: String,
    pub outcome: Terminal,
    pub steps_taken: u32,
    pub optimal_length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEnded {
    pub tasks_completed: usize,
}
