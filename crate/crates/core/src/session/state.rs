//! One participant's session as an event-sourced state machine.
//!
//! Each operation validates against the current state, mutates it, and
//! appends exactly the events that a replay will regenerate.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::advisor::{advise, scene_layout, AdvisorConfig, AdvisorRng, Modality, Scene, Suggestion, TemplateBank};
use crate::ledger::{negative_distribution, ChannelCounts};
use crate::metrics::{InteractionRecord, TaskOutcome};
use crate::planner::{compute_distances, resolve_optimal, DistanceField};
use crate::policy::{compute_lambda, select_modality, BlendTrace, Strategy};
use crate::predictor::{state_features, PredictorModel, TrainingExample};
use crate::rng::{self, Stream, StreamRng};
use crate::world::{apply_move, available_directions, is_terminal, CarState, CityTask, Direction, GridPos, Heading, Terminal};

use super::event::*;
use super::flow::{plan_tasks, PhaseKind, PhaseStrategy, PlannedTask, StudyFlow};
use super::{SessionConfig, SessionError};

/// Mixing weight used by a balanced block when no predictor is loaded.
pub const FALLBACK_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum SessionStatus {
    AwaitingInteraction,
    AwaitingDecision,
    AwaitingSurvey { phase_index: usize },
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniMap {
    pub grid_height: usize,
    pub grid_width: usize,
    pub car: GridPos,
    pub heading: Heading,
    pub goal: GridPos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSuggestion {
    pub direction: Direction,
    pub modality: Modality,
    pub explanation: serde_json::Value,
}

/// What a participant is shown at one intersection. Carries no correctness
/// flag and no blend trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionView {
    pub session_id: String,
    pub task_order: usize,
    pub task_id: String,
    pub phase: PhaseKind,
    pub intersection_index: u32,
    pub interactions_left: u32,
    pub scene: Scene,
    pub offered: Vec<Direction>,
    pub suggestion: ParticipantSuggestion,
    pub minimap: MiniMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub chose_optimal: bool,
    pub blocked_excursion: bool,
    pub car: CarState,
    pub terminal: Terminal,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq)]
struct FeedbackSlot {
    task_order: usize,
    intersection_index: u32,
    modality: Modality,
    updates_ledger: bool,
    record_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub config: SessionConfig,
    pub flow: StudyFlow,
    pub plan: Vec<PlannedTask>,
    templates: Arc<TemplateBank>,
    model: Option<PredictorModel>,
    advisor_rng: AdvisorRng,
    policy_rng: StreamRng,
    rotation_rng: StreamRng,
    rotation_queue: Vec<Modality>,
    task_order: usize,
    intersection: u32,
    car: CarState,
    field: Option<DistanceField>,
    pending: Option<SuggestionIssued>,
    feedback_slot: Option<FeedbackSlot>,
    awaiting_survey: Option<usize>,
    feedback_counts: ChannelCounts,
    performance_counts: ChannelCounts,
    completed: bool,
    events: Vec<Event>,
    records: Vec<InteractionRecord>,
    outcomes: Vec<TaskOutcome>,
    task_modalities: Vec<Modality>,
}

impl SessionState {
    /// Plans tasks for the participant and logs `SessionCreated`.
    pub fn create(
        session_id: impl Into<String>,
        config: SessionConfig,
        bank: &crate::world::TaskBank,
        templates: Arc<TemplateBank>,
        model: Option<PredictorModel>,
        now_ms: u64,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let flow = config.build_flow()?;
        let plan = plan_tasks(&flow, bank, config.enrollment)?;
        Self::start(session_id.into(), config, flow, plan, templates, model, now_ms)
    }

    fn start(
        session_id: String,
        config: SessionConfig,
        flow: StudyFlow,
        plan: Vec<PlannedTask>,
        templates: Arc<TemplateBank>,
        model: Option<PredictorModel>,
        now_ms: u64,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        if let Some(m) = &model {
            if !(m.trained && m.frozen) {
                return Err(SessionError::Config("predictor must be trained and frozen".into()));
            }
        }
        for p in &plan {
            p.task.validate()?;
        }
        if plan.is_empty() {
            return Err(SessionError::Config("no tasks scheduled".into()));
        }
        let first = plan[0].task.clone();
        let seed = config.seed;
        let mut s = SessionState {
            session_id: session_id.clone(),
            config: config.clone(),
            flow: flow.clone(),
            plan: plan.clone(),
            templates: templates.clone(),
            model,
            advisor_rng: AdvisorRng::new(seed),
            policy_rng: rng::stream(seed, Stream::Policy),
            rotation_rng: rng::stream(seed, Stream::Rotation),
            rotation_queue: Vec::new(),
            task_order: 0,
            intersection: 0,
            car: CarState::at_start(&first),
            field: None,
            pending: None,
            feedback_slot: None,
            awaiting_survey: None,
            feedback_counts: ChannelCounts::default(),
            performance_counts: ChannelCounts::default(),
            completed: false,
            events: Vec::new(),
            records: Vec::new(),
            outcomes: Vec::new(),
            task_modalities: Vec::new(),
        };
        let created = SessionCreated {
            format_version: LOG_FORMAT_VERSION,
            session_id,
            config,
            flow,
            plan,
            templates: templates.name.clone(),
            templates_fingerprint: templates.fingerprint(),
            model_checksum: s.model.as_ref().map(PredictorModel::trunk_checksum),
        };
        s.push(now_ms, EventPayload::SessionCreated(Box::new(created)));
        s.begin_task(now_ms)?;
        Ok(s)
    }

    fn push(&mut self, now_ms: u64, payload: EventPayload) {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, timestamp_ms: now_ms, payload });
    }

    fn current(&self) -> &PlannedTask {
        &self.plan[self.task_order]
    }

    fn current_task(&self) -> &CityTask {
        &self.plan[self.task_order].task
    }

    fn phase_index(&self) -> usize {
        self.current().phase_index
    }

    fn begin_task(&mut self, now_ms: u64) -> Result<(), SessionError> {
        let phase_index = self.phase_index();
        let starts_phase = self.task_order == 0 || self.plan[self.task_order - 1].phase_index != phase_index;
        if starts_phase {
            self.rotation_queue.clear();
        }
        let task = self.current_task().clone();
        self.field = Some(compute_distances(&task)?);
        self.car = CarState::at_start(&task);
        self.intersection = 0;
        self.task_modalities.clear();
        let phase = &self.flow.phases[phase_index];
        let started = TaskStarted {
            task_order: self.task_order,
            task_id: task.task_id,
            phase_index,
            phase: phase.kind,
            condition: self.condition_label(),
        };
        self.push(now_ms, EventPayload::TaskStarted(started));
        Ok(())
    }

    fn condition_label(&self) -> String {
        let planned = self.current();
        let phase = &self.flow.phases[planned.phase_index];
        match (phase.strategy, planned.fixed_modality) {
            (PhaseStrategy::RotatingModality, Some(m)) => Strategy::FixedModality(m).label(),
            _ => phase.label.clone(),
        }
    }

    pub fn status(&self) -> SessionStatus {
        if self.completed {
            SessionStatus::Completed
        } else if let Some(phase_index) = self.awaiting_survey {
            SessionStatus::AwaitingSurvey { phase_index }
        } else if self.pending.is_some() {
            SessionStatus::AwaitingDecision
        } else {
            SessionStatus::AwaitingInteraction
        }
    }

    pub fn feedback_pending(&self) -> bool {
        self.feedback_slot.is_some()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn outcomes(&self) -> &[TaskOutcome] {
        &self.outcomes
    }

    pub fn feedback_counts(&self) -> ChannelCounts {
        self.feedback_counts
    }

    pub fn performance_counts(&self) -> ChannelCounts {
        self.performance_counts
    }

    pub fn car(&self) -> CarState {
        self.car
    }

    pub fn task_order(&self) -> usize {
        self.task_order
    }

    pub fn model(&self) -> Option<&PredictorModel> {
        self.model.as_ref()
    }

    pub fn templates(&self) -> &TemplateBank {
        &self.templates
    }

    /// The suggestion awaiting a decision, with its hidden fields.
    pub fn pending(&self) -> Option<&SuggestionIssued> {
        self.pending.as_ref()
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        if self.completed {
            return Err(SessionError::Completed);
        }
        Ok(())
    }

    fn next_rotation(&mut self) -> Modality {
        if self.rotation_queue.is_empty() {
            let mut perm = Modality::ALL.to_vec();
            perm.shuffle(&mut self.rotation_rng);
            perm.reverse();
            self.rotation_queue = perm;
        }
        self.rotation_queue.pop().expect("refilled")
    }

    fn choose_modality(
        &mut self,
        strategy: PhaseStrategy,
        optimal: Direction,
    ) -> Result<(Modality, Option<BlendTrace>), SessionError> {
        match strategy {
            PhaseStrategy::PerIntersectionRotation => Ok((self.next_rotation(), None)),
            PhaseStrategy::RotatingModality => {
                let m = self
                    .current()
                    .fixed_modality
                    .ok_or_else(|| SessionError::Config("task in a rotating block has no modality".into()))?;
                Ok((m, None))
            }
            PhaseStrategy::Strategy(s) => {
                let d_p = negative_distribution(&self.feedback_counts);
                let d_t = negative_distribution(&self.performance_counts);
                let choice = match &self.model {
                    Some(model) => {
                        let features = state_features(self.current_task(), &self.car);
                        let task_id = self.current_task().task_id.clone();
                        let y = model.forward(&features, &self.config.user_id, &task_id)?;
                        Some(compute_lambda(&y, optimal)?)
                    }
                    None => None,
                };
                let lambda = choice.map_or(FALLBACK_LAMBDA, |c| c.lambda);
                let (m, mut trace) = select_modality(s, &d_p, &d_t, lambda, &mut self.policy_rng)?;
                if let Some(c) = &choice {
                    trace = trace.with_lambda_choice(c, optimal);
                } else {
                    trace.optimal_direction = Some(optimal);
                }
                Ok((m, Some(trace)))
            }
        }
    }

    /// Issues the next suggestion. A still-open feedback prompt is closed as
    /// unanswered.
    pub fn next_interaction(&mut self, now_ms: u64) -> Result<InteractionView, SessionError> {
        self.ensure_open()?;
        if self.awaiting_survey.is_some() {
            return Err(SessionError::SurveyRequired);
        }
        if self.pending.is_some() {
            return Err(SessionError::Sequence("a suggestion is already awaiting a decision".into()));
        }
        self.feedback_slot = None;
        let field = self.field.clone().expect("task started");
        let task = self.current_task().clone();
        let optimal = resolve_optimal(&task, &self.car, &field)?.direction;
        let strategy = self.flow.phases[self.phase_index()].strategy;
        let (modality, trace) = self.choose_modality(strategy, optimal)?;
        let suggestion: Suggestion = advise(
            &task,
            &self.car,
            &field,
            modality,
            &mut self.advisor_rng,
            &AdvisorConfig { error_rate: self.config.error_rate },
            &self.templates,
        )?;
        let offered = available_directions(&task, &self.car, suggestion.masked_direction)?;
        if !self.task_modalities.contains(&modality) {
            self.task_modalities.push(modality);
        }
        let issued = SuggestionIssued {
            task_order: self.task_order,
            intersection_index: self.intersection,
            pose: Pose { pos: self.car.pos, heading: self.car.heading },
            optimal,
            offered,
            suggestion,
            trace,
        };
        self.pending = Some(issued.clone());
        self.push(now_ms, EventPayload::SuggestionIssued(Box::new(issued)));
        Ok(self.view().expect("pending set"))
    }

    /// The participant-facing payload for the pending suggestion.
    pub fn view(&self) -> Option<InteractionView> {
        let p = self.pending.as_ref()?;
        let task = self.current_task();
        Some(InteractionView {
            session_id: self.session_id.clone(),
            task_order: self.task_order,
            task_id: task.task_id.clone(),
            phase: self.flow.phases[self.phase_index()].kind,
            intersection_index: p.intersection_index,
            interactions_left: self.config.interaction_cap.saturating_sub(self.car.interactions_used),
            scene: scene_layout(&p.offered),
            offered: p.offered.clone(),
            suggestion: ParticipantSuggestion {
                direction: p.suggestion.direction,
                modality: p.suggestion.modality,
                explanation: p.suggestion.explanation.participant_view(),
            },
            minimap: MiniMap {
                grid_height: task.grid_height,
                grid_width: task.grid_width,
                car: self.car.pos,
                heading: self.car.heading,
                goal: task.goal,
            },
        })
    }

    pub fn submit_decision(
        &mut self,
        chosen: Direction,
        consideration_ms: u64,
        now_ms: u64,
    ) -> Result<DecisionOutcome, SessionError> {
        self.ensure_open()?;
        let issued = self
            .pending
            .clone()
            .ok_or_else(|| SessionError::Sequence("no suggestion is awaiting a decision".into()))?;
        if !issued.offered.contains(&chosen) {
            return Err(SessionError::NotOffered(chosen));
        }
        let task = self.current_task().clone();
        let before = self.car;
        let after = apply_move(&task, &before, chosen)?;
        let modality = issued.suggestion.modality;
        let chose_optimal = chosen == issued.optimal;
        let phase = self.flow.phases[self.phase_index()].clone();
        let learns = phase.kind.updates_ledgers();
        if learns {
            self.performance_counts = self.performance_counts.record(modality, chose_optimal);
            if let Some(model) = &mut self.model {
                let example = TrainingExample {
                    features: state_features(&task, &before),
                    user_id: self.config.user_id.clone(),
                    task_id: task.task_id.clone(),
                    label: chosen,
                };
                model.adapt_online(&example)?;
            }
        }
        self.car = after;
        self.pending = None;
        self.records.push(InteractionRecord {
            session_id: self.session_id.clone(),
            user_id: self.config.user_id.clone(),
            condition: self.condition_label(),
            phase: phase.kind.label().into(),
            task_id: task.task_id.clone(),
            task_order: self.task_order,
            intersection_index: issued.intersection_index,
            modality,
            suggested: issued.suggestion.direction,
            optimal: issued.optimal,
            suggestion_correct: issued.suggestion.is_correct,
            offered: issued.offered.clone(),
            chosen,
            feedback: None,
            consideration_ms,
            blocked_excursion: after.last_move_blocked,
        });
        self.feedback_slot = Some(FeedbackSlot {
            task_order: self.task_order,
            intersection_index: issued.intersection_index,
            modality,
            updates_ledger: learns,
            record_index: self.records.len() - 1,
        });
        self.push(
            now_ms,
            EventPayload::DecisionMade(DecisionMade {
                task_order: self.task_order,
                intersection_index: issued.intersection_index,
                modality,
                chosen,
                consideration_ms,
                chose_optimal,
                blocked_excursion: after.last_move_blocked,
                car_after: after,
                performance: self.performance_counts,
            }),
        );
        self.intersection += 1;
        let terminal = is_terminal(&task, &after, self.config.interaction_cap);
        if terminal != Terminal::Ongoing {
            self.end_task(terminal, now_ms)?;
        }
        Ok(DecisionOutcome {
            chose_optimal,
            blocked_excursion: after.last_move_blocked,
            car: after,
            terminal,
            status: self.status(),
        })
    }

    fn end_task(&mut self, outcome: Terminal, now_ms: u64) -> Result<(), SessionError> {
        let planned = self.current().clone();
        let phase_index = planned.phase_index;
        let phase = self.flow.phases[phase_index].clone();
        self.outcomes.push(TaskOutcome {
            session_id: self.session_id.clone(),
            condition: self.condition_label(),
            phase: phase.kind.label().into(),
            task_id: planned.task.task_id.clone(),
            task_order: self.task_order,
            steps_taken: self.car.steps_taken,
            optimal_length: planned.task.optimal_length,
            reached_goal: outcome == Terminal::GoalReached,
            modalities: self.task_modalities.clone(),
        });
        self.push(
            now_ms,
            EventPayload::TaskEnded(TaskEnded {
                task_order: self.task_order,
                task_id: planned.task.task_id,
                outcome,
                steps_taken: self.car.steps_taken,
                optimal_length: planned.task.optimal_length,
            }),
        );
        self.task_order += 1;
        let phase_done = self.task_order == self.plan.len() || self.plan[self.task_order].phase_index != phase_index;
        if phase_done && phase.survey_after {
            self.awaiting_survey = Some(phase_index);
            Ok(())
        } else {
            self.advance(now_ms)
        }
    }

    fn advance(&mut self, now_ms: u64) -> Result<(), SessionError> {
        if self.task_order < self.plan.len() {
            self.begin_task(now_ms)
        } else {
            self.completed = true;
            self.push(now_ms, EventPayload::SessionEnded(SessionEnded { tasks_completed: self.outcomes.len() }));
            Ok(())
        }
    }

    /// Answers the feedback prompt of the latest decision. Allowed until the
    /// next suggestion or survey, including after the session ends.
    pub fn submit_feedback(&mut self, positive: bool, now_ms: u64) -> Result<(), SessionError> {
        let slot = self
            .feedback_slot
            .take()
            .ok_or_else(|| SessionError::Sequence("no decision is awaiting feedback".into()))?;
        if slot.updates_ledger {
            self.feedback_counts = self.feedback_counts.record(slot.modality, positive);
        }
        self.records[slot.record_index].feedback = Some(positive);
        self.push(
            now_ms,
            EventPayload::FeedbackGiven(FeedbackGiven {
                task_order: slot.task_order,
                intersection_index: slot.intersection_index,
                modality: slot.modality,
                positive,
                feedback: self.feedback_counts,
            }),
        );
        Ok(())
    }

    pub fn submit_survey(
        &mut self,
        form_id: impl Into<String>,
        answers: serde_json::Value,
        now_ms: u64,
    ) -> Result<(), SessionError> {
        self.ensure_open()?;
        let phase_index = self
            .awaiting_survey
            .ok_or_else(|| SessionError::Sequence("no survey is due".into()))?;
        self.feedback_slot = None;
        self.awaiting_survey = None;
        self.push(
            now_ms,
            EventPayload::SurveySubmitted(SurveySubmitted { phase_index, form_id: form_id.into(), answers }),
        );
        self.advance(now_ms)
    }

    /// Rebuilds a session by re-executing the commands in `events` and
    /// checks that the regenerated log matches byte for byte.
    pub fn replay(
        events: &[Event],
        templates: Arc<TemplateBank>,
        model: Option<PredictorModel>,
    ) -> Result<Self, SessionError> {
        let first = events.first().ok_or_else(|| SessionError::Replay("empty log".into()))?;
        let EventPayload::SessionCreated(created) = &first.payload else {
            return Err(SessionError::Replay("log does not start with SessionCreated".into()));
        };
        if created.templates_fingerprint != templates.fingerprint() {
            return Err(SessionError::Replay("template bank differs from the one logged".into()));
        }
        if created.model_checksum != model.as_ref().map(PredictorModel::trunk_checksum) {
            return Err(SessionError::Replay("predictor differs from the one logged".into()));
        }
        let mut s = Self::start(
            created.session_id.clone(),
            created.config.clone(),
            created.flow.clone(),
            created.plan.clone(),
            templates,
            model,
            first.timestamp_ms,
        )?;
        for e in &events[1..] {
            let t = e.timestamp_ms;
            let applied = match &e.payload {
                EventPayload::SuggestionIssued(_) => s.next_interaction(t).map(|_| ()),
                EventPayload::DecisionMade(d) => s.submit_decision(d.chosen, d.consideration_ms, t).map(|_| ()),
                EventPayload::FeedbackGiven(f) => s.submit_feedback(f.positive, t),
                EventPayload::SurveySubmitted(v) => s.submit_survey(v.form_id.clone(), v.answers.clone(), t),
                _ => Ok(()),
            };
            applied.map_err(|err| SessionError::Replay(format!("event {}: {err}", e.seq)))?;
        }
        if s.events.len() != events.len() {
            return Err(SessionError::Replay(format!(
                "replay produced {} events, log has {}",
                s.events.len(),
                events.len()
            )));
        }
        if let Some((i, _)) = s.events.iter().zip(events).enumerate().find(|(_, (a, b))| a != b) {
            return Err(SessionError::Replay(format!("event {i} differs")));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::FlowKind;
    use crate::world::{TaskBank, WorldConfig};

    fn bank() -> TaskBank {
        TaskBank::generate(11, 5, &WorldConfig::default()).unwrap()
    }

    fn config(flow: FlowKind) -> SessionConfig {
        let mut c = SessionConfig::new(flow, "u1", 42);
        c.condition_pair = Some((Strategy::Balanced, Strategy::Random));
        c.strategy = Some(Strategy::PerformanceMax);
        c
    }

    fn new_session(flow: FlowKind) -> SessionState {
        SessionState::create("s1", config(flow), &bank(), Arc::new(TemplateBank::personalization()), None, 0).unwrap()
    }

    /// Follows the optimal direction whenever it is offered.
    fn drive(s: &mut SessionState, t: &mut u64) {
        while s.status() != SessionStatus::Completed {
            *t += 10;
            if let SessionStatus::AwaitingSurvey { .. } = s.status() {
                s.submit_survey("ranking", serde_json::json!({"order": ["language"]}), *t).unwrap();
                continue;
            }
            let v = s.next_interaction(*t).unwrap();
            let p = s.pending().unwrap();
            let pick = if v.offered.contains(&p.optimal) { p.optimal } else { v.offered[0] };
            s.submit_decision(pick, 1200, *t).unwrap();
            s.submit_feedback(true, *t).unwrap();
        }
    }

    #[test]
    fn sequencing_errors() {
        let mut s = new_session(FlowKind::HeadlessCustom);
        assert!(matches!(s.submit_decision(Direction::Left, 1, 1), Err(SessionError::Sequence(_))));
        assert!(matches!(s.submit_feedback(true, 1), Err(SessionError::Sequence(_))));
        assert!(matches!(s.submit_survey("f", serde_json::Value::Null, 1), Err(SessionError::Sequence(_))));
        let v = s.next_interaction(2).unwrap();
        assert!(matches!(s.next_interaction(3), Err(SessionError::Sequence(_))));
        let not_offered = Direction::ALL.into_iter().find(|d| !v.offered.contains(d));
        if let Some(d) = not_offered {
            assert_eq!(s.submit_decision(d, 1, 3), Err(SessionError::NotOffered(d)));
        }
    }

    #[test]
    fn full_personalization_run_completes_and_replays() {
        let mut s = new_session(FlowKind::Personalization);
        let mut t = 0;
        drive(&mut s, &mut t);
        let surveys = s.events.iter().filter(|e| matches!(e.payload, EventPayload::SurveySubmitted(_))).count();
        assert_eq!(surveys, 2);
        assert_eq!(s.outcomes().len(), 9);
        let back = SessionState::replay(s.events(), Arc::new(TemplateBank::personalization()), None).unwrap();
        assert_eq!(back, s);
        assert!(s.events.windows(2).all(|w| w[0].seq + 1 == w[1].seq));
    }

    #[test]
    fn calibration_rotates_through_every_modality() {
        let mut s = new_session(FlowKind::HeadlessCustom);
        let mut t = 0;
        drive(&mut s, &mut t);
        let cal: Vec<Modality> =
            s.records().iter().filter(|r| r.phase == "calibration").map(|r| r.modality).collect();
        for chunk in cal.chunks(3).filter(|c| c.len() == 3) {
            let mut sorted = chunk.to_vec();
            sorted.sort();
            assert_eq!(sorted, Modality::ALL.to_vec());
        }
    }

    #[test]
    fn ledgers_only_learn_outside_training() {
        let mut s = new_session(FlowKind::HeadlessCustom);
        let mut t = 0;
        drive(&mut s, &mut t);
        let learning = s.records().iter().filter(|r| r.phase != "training").count() as u32;
        assert_eq!(s.performance_counts().total(), learning);
        assert_eq!(s.feedback_counts().total(), learning);
    }

    #[test]
    fn block_suggestions_carry_a_trace() {
        let mut s = new_session(FlowKind::HeadlessCustom);
        let mut t = 0;
        drive(&mut s, &mut t);
        for e in s.events() {
            if let EventPayload::SuggestionIssued(i) = &e.payload {
                let in_block = s.plan[i.task_order].phase_index == 2;
                assert_eq!(i.trace.is_some(), in_block);
            }
        }
    }

    #[test]
    fn completed_session_rejects_commands() {
        let mut s = new_session(FlowKind::HeadlessCustom);
        let mut t = 0;
        drive(&mut s, &mut t);
        assert_eq!(s.next_interaction(t), Err(SessionError::Completed));
        assert!(matches!(s.events().last().unwrap().payload, EventPayload::FeedbackGiven(_)));
    }

    #[test]
    fn personalization_needs_a_pair() {
        let mut c = config(FlowKind::Personalization);
        c.condition_pair = None;
        let err = SessionState::create("x", c, &bank(), Arc::new(TemplateBank::personalization()), None, 0).unwrap_err();
        assert!(matches!(err, SessionError::Config(_)));
    }
}
