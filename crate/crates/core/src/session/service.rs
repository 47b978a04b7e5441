//! Thread-safe registry of live sessions, shared by the HTTP server and
//! in-process callers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::advisor::TemplateBank;
use crate::metrics::{reports_to_csv, session_report, SessionReport};
use crate::policy::Strategy;
use crate::predictor::PredictorModel;
use crate::rng::derive_seed;
use crate::world::{Direction, TaskBank};

use super::event::Event;
use super::flow::FlowKind;
use super::state::{DecisionOutcome, InteractionView, SessionState, SessionStatus};
use super::store::{EventStore, IndexEntry};
use super::{SessionConfig, SessionError};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0))
}

pub struct ServiceConfig {
    pub tasks: TaskBank,
    pub population_templates: Arc<TemplateBank>,
    pub personalization_templates: Arc<TemplateBank>,
    pub model: Option<Arc<PredictorModel>>,
    pub store: Option<EventStore>,
    /// Seeds sessions whose request carries none.
    pub base_seed: u64,
    pub clock: Clock,
}

impl ServiceConfig {
    pub fn new(tasks: TaskBank) -> Self {
        Self {
            tasks,
            population_templates: Arc::new(TemplateBank::population()),
            personalization_templates: Arc::new(TemplateBank::personalization()),
            model: None,
            store: None,
            base_seed: 0,
            clock: system_clock(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub flow: FlowKind,
    pub user_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub enrollment: Option<u64>,
    #[serde(default)]
    pub condition_pair: Option<(Strategy, Strategy)>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub error_rate: Option<f64>,
    #[serde(default)]
    pub interaction_cap: Option<u32>,
}

impl CreateSessionRequest {
    pub fn new(flow: FlowKind, user_id: impl Into<String>) -> Self {
        Self {
            flow,
            user_id: user_id.into(),
            session_id: None,
            seed: None,
            enrollment: None,
            condition_pair: None,
            strategy: None,
            error_rate: None,
            interaction_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub direction: Direction,
    #[serde(default)]
    pub consideration_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRequest {
    pub form_id: String,
    #[serde(default)]
    pub answers: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub user_id: String,
    pub flow: FlowKind,
    pub enrollment: u64,
    pub status: SessionStatus,
    pub feedback_pending: bool,
    pub tasks_completed: usize,
    pub tasks_total: usize,
    pub event_count: usize,
}

struct Entry {
    state: SessionState,
    persisted: usize,
    created_ms: u64,
}

pub struct SessionService {
    cfg: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    enrollment: AtomicU64,
}

fn summary(s: &SessionState) -> SessionSummary {
    SessionSummary {
        session_id: s.session_id.clone(),
        user_id: s.config.user_id.clone(),
        flow: s.config.flow,
        enrollment: s.config.enrollment,
        status: s.status(),
        feedback_pending: s.feedback_pending(),
        tasks_completed: s.outcomes().len(),
        tasks_total: s.plan.len(),
        event_count: s.events().len(),
    }
}

impl SessionService {
    /// Builds the service and, with a store, replays every indexed session.
    pub fn new(cfg: ServiceConfig) -> Result<Self, SessionError> {
        cfg.tasks.validate()?;
        let service = Self { cfg, sessions: RwLock::new(HashMap::new()), enrollment: AtomicU64::new(0) };
        if let Some(store) = &service.cfg.store {
            let index = store.read_index()?;
            let mut map = service.sessions.write().expect("lock");
            let mut next = 0;
            for (id, entry) in index {
                let events = store.load(&id)?;
                let state = SessionState::replay(&events, service.templates_for(entry.flow), service.model())?;
                next = next.max(state.config.enrollment + 1);
                let persisted = events.len();
                map.insert(id, Arc::new(Mutex::new(Entry { state, persisted, created_ms: entry.created_ms })));
            }
            service.enrollment.store(next, Ordering::SeqCst);
        }
        Ok(service)
    }

    fn templates_for(&self, flow: FlowKind) -> Arc<TemplateBank> {
        match flow {
            FlowKind::Population => self.cfg.population_templates.clone(),
            _ => self.cfg.personalization_templates.clone(),
        }
    }

    fn model(&self) -> Option<PredictorModel> {
        self.cfg.model.as_deref().cloned()
    }

    pub fn now(&self) -> u64 {
        (self.cfg.clock)()
    }

    pub fn create(&self, req: CreateSessionRequest) -> Result<SessionSummary, SessionError> {
        let enrollment = match req.enrollment {
            Some(e) => {
                self.enrollment.fetch_max(e + 1, Ordering::SeqCst);
                e
            }
            None => self.enrollment.fetch_add(1, Ordering::SeqCst),
        };
        let id = req.session_id.clone().unwrap_or_else(|| format!("s{enrollment:05}"));
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(SessionError::Config(format!("invalid session id '{id}'")));
        }
        let mut config = SessionConfig::new(req.flow, req.user_id, req.seed.unwrap_or(derive_seed(self.cfg.base_seed, enrollment)));
        config.enrollment = enrollment;
        config.condition_pair = req.condition_pair;
        config.strategy = req.strategy;
        if let Some(r) = req.error_rate {
            config.error_rate = r;
        }
        if let Some(c) = req.interaction_cap {
            config.interaction_cap = c;
        }
        let now = self.now();
        let mut map = self.sessions.write().expect("lock");
        if map.contains_key(&id) {
            return Err(SessionError::DuplicateSession(id));
        }
        let state =
            SessionState::create(id.clone(), config, &self.cfg.tasks, self.templates_for(req.flow), self.model(), now)?;
        let mut entry = Entry { state, persisted: 0, created_ms: now };
        self.persist(&mut entry)?;
        let out = summary(&entry.state);
        map.insert(id, Arc::new(Mutex::new(entry)));
        Ok(out)
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, SessionError> {
        self.sessions.read().expect("lock").get(id).cloned().ok_or_else(|| SessionError::NotFound(id.into()))
    }

    fn persist(&self, entry: &mut Entry) -> Result<(), SessionError> {
        let Some(store) = &self.cfg.store else { return Ok(()) };
        let events = entry.state.events();
        if entry.persisted == events.len() {
            return Ok(());
        }
        store.append(&entry.state.session_id, &events[entry.persisted..])?;
        entry.persisted = events.len();
        store.upsert(IndexEntry {
            session_id: entry.state.session_id.clone(),
            user_id: entry.state.config.user_id.clone(),
            flow: entry.state.config.flow,
            created_ms: entry.created_ms,
            completed: entry.state.status() == SessionStatus::Completed,
            event_count: events.len(),
        })
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut SessionState, u64) -> Result<T, SessionError>) -> Result<T, SessionError> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().expect("lock");
        let now = self.now();
        let out = f(&mut guard.state, now);
        // Events from a failed command are never emitted, so persisting is
        // safe either way.
        self.persist(&mut guard)?;
        out
    }

    /// The pending interaction, or a freshly issued one.
    pub fn interaction(&self, id: &str) -> Result<InteractionView, SessionError> {
        self.with(id, |s, now| match s.view() {
            Some(v) => Ok(v),
            None => s.next_interaction(now),
        })
    }

    pub fn decision(&self, id: &str, req: DecisionRequest) -> Result<DecisionOutcome, SessionError> {
        self.with(id, |s, now| s.submit_decision(req.direction, req.consideration_ms, now))
    }

    pub fn feedback(&self, id: &str, req: FeedbackRequest) -> Result<SessionSummary, SessionError> {
        self.with(id, |s, now| {
            s.submit_feedback(req.positive, now)?;
            Ok(summary(s))
        })
    }

    pub fn survey(&self, id: &str, req: SurveyRequest) -> Result<SessionSummary, SessionError> {
        self.with(id, |s, now| {
            s.submit_survey(req.form_id, req.answers, now)?;
            Ok(summary(s))
        })
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary, SessionError> {
        let entry = self.entry(id)?;
        let guard = entry.lock().expect("lock");
        Ok(summary(&guard.state))
    }

    pub fn log(&self, id: &str) -> Result<Vec<Event>, SessionError> {
        let entry = self.entry(id)?;
        let guard = entry.lock().expect("lock");
        Ok(guard.state.events().to_vec())
    }

    /// All sessions ordered by id.
    pub fn list(&self) -> Vec<SessionSummary> {
        let map = self.sessions.read().expect("lock");
        let mut out: Vec<SessionSummary> = map.values().map(|e| summary(&e.lock().expect("lock").state)).collect();
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    pub fn reports(&self) -> Vec<SessionReport> {
        let map = self.sessions.read().expect("lock");
        let mut out: Vec<SessionReport> = map
            .values()
            .map(|e| {
                let g = e.lock().expect("lock");
                session_report(&g.state.session_id, &g.state.config.user_id, g.state.records(), g.state.outcomes())
            })
            .collect();
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    pub fn export_csv(&self) -> String {
        reports_to_csv(&self.reports())
    }
}
