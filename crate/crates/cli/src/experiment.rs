//! Synthetic-participant experiments: plan sessions, run them in parallel,
//! aggregate, and render the output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use navxai::advisor::TemplateBank;
use navxai::metrics::{
    aggregate, aggregate_to_csv, reports_to_csv, session_report, AggregateRow, AggregateTable, Grouping, SessionReport,
};
use navxai::policy::Strategy;
use navxai::predictor::{train_offline, Hyperparams, PredictorModel, TrainingReport};
use navxai::rng::derive_seed;
use navxai::session::{
    examples_from_log, records_from_log, run_headless, Event, EventPayload, EventStore, FlowKind, HeadlessSetup,
    IndexEntry, SessionConfig,
};
use navxai::simuser::{population_preset, PopulationPreset, SimUserProfile};
use navxai::world::{TaskBank, WorldConfig};

const TAG_TASKS: u64 = 0x7a5c;
const TAG_USERS: u64 = 0x05e2;
const TAG_PILOT: u64 = 0x0b17;
const TAG_SESSION: u64 = 0x5e55_0000;

/// Labels of the warm-up phases, left out of strategy comparisons.
pub const WARMUP_CONDITIONS: [&str; 3] = ["training", "calibration", "practice"];

pub const DEFAULT_TASK_COUNT: usize = 11;

pub fn default_tasks(seed: u64, world: &WorldConfig) -> anyhow::Result<TaskBank> {
    Ok(TaskBank::generate(DEFAULT_TASK_COUNT, derive_seed(seed, TAG_TASKS), world)?)
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub flow: FlowKind,
    pub compare: Vec<Strategy>,
    pub preset: PopulationPreset,
    pub n: usize,
    pub seed: u64,
    pub error_rate: f64,
    pub tasks: TaskBank,
    /// Replaces the built-in bank for every flow.
    pub templates: Option<Arc<TemplateBank>>,
    pub model: Option<PredictorModel>,
    pub pilot_sessions: usize,
    pub hyperparams: Hyperparams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub session_id: String,
    pub events: Vec<Event>,
    pub report: SessionReport,
}

#[derive(Debug, Clone)]
pub struct Pilot {
    pub model: PredictorModel,
    pub report: TrainingReport,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// Sorted by session id.
    pub runs: Vec<SessionRun>,
    pub pilot: Option<Pilot>,
}

impl SimulationOutput {
    pub fn reports(&self) -> Vec<SessionReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }
}

impl Experiment {
    pub fn new(tasks: TaskBank) -> Self {
        Self {
            flow: FlowKind::HeadlessCustom,
            compare: vec![Strategy::Balanced, Strategy::PreferenceMax],
            preset: PopulationPreset::PaperLike,
            n: 20,
            seed: 0,
            error_rate: 0.30,
            tasks,
            templates: None,
            model: None,
            pilot_sessions: 40,
            hyperparams: Hyperparams::default(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.n == 0 {
            bail!("population size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            bail!("error rate {} outside [0, 1]", self.error_rate);
        }
        match self.flow {
            FlowKind::HeadlessCustom if self.compare.is_empty() => bail!("--compare needs at least one strategy"),
            FlowKind::Personalization if self.compare.len() != 2 => {
                bail!("the personalization flow compares exactly two strategies")
            }
            _ => Ok(()),
        }
    }

    fn templates_for(&self, flow: FlowKind) -> Arc<TemplateBank> {
        match (&self.templates, flow) {
            (Some(t), _) => t.clone(),
            (None, FlowKind::Population) => Arc::new(TemplateBank::population()),
            (None, _) => Arc::new(TemplateBank::personalization()),
        }
    }

    fn needs_model(&self) -> bool {
        self.flow != FlowKind::Population && self.compare.contains(&Strategy::Balanced)
    }

    pub fn participants(&self) -> Vec<SimUserProfile> {
        population_preset(self.preset, self.n, derive_seed(self.seed, TAG_USERS))
    }

    /// Every session of the run. Conditions share participants and session
    /// seeds, so each participant meets the same tasks and advice draws under
    /// every strategy.
    pub fn plan(&self, model: Option<&PredictorModel>) -> Vec<HeadlessSetup> {
        let users = self.participants();
        let conditions: Vec<(String, Option<Strategy>)> = match self.flow {
            FlowKind::HeadlessCustom => self.compare.iter().map(|s| (s.label(), Some(*s))).collect(),
            FlowKind::Personalization => vec![("pers".into(), None)],
            FlowKind::Population => vec![("pop".into(), None)],
        };
        let mut out = Vec::new();
        for (prefix, strategy) in &conditions {
            for (i, profile) in users.iter().enumerate() {
                let mut config = SessionConfig::new(self.flow, profile.user_id.clone(), derive_seed(self.seed, TAG_SESSION + i as u64));
                config.enrollment = i as u64;
                config.error_rate = self.error_rate;
                config.strategy = *strategy;
                if self.flow == FlowKind::Personalization {
                    config.condition_pair = Some((self.compare[0], self.compare[1]));
                }
                let uses_model = match self.flow {
                    FlowKind::HeadlessCustom => *strategy == Some(Strategy::Balanced),
                    FlowKind::Personalization => self.needs_model(),
                    FlowKind::Population => false,
                };
                out.push(HeadlessSetup {
                    session_id: format!("{prefix}-{i:04}"),
                    config,
                    profile: profile.clone(),
                    templates: self.templates_for(self.flow),
                    model: if uses_model { model.cloned() } else { None },
                });
            }
        }
        out
    }

    /// Fits the predictor on Random-strategy sessions of a separate cohort.
    pub fn train_pilot(&self) -> anyhow::Result<Pilot> {
        let users = population_preset(self.preset, self.pilot_sessions.max(1), derive_seed(self.seed, TAG_PILOT));
        let setups: Vec<HeadlessSetup> = users
            .into_iter()
            .enumerate()
            .map(|(i, mut profile)| {
                profile.user_id = format!("pilot-{i:04}");
                let mut config = SessionConfig::new(FlowKind::HeadlessCustom, profile.user_id.clone(), derive_seed(self.seed, TAG_PILOT + 1 + i as u64));
                config.enrollment = i as u64;
                config.error_rate = self.error_rate;
                config.strategy = Some(Strategy::Random);
                HeadlessSetup {
                    session_id: format!("pilot-{i:04}"),
                    config,
                    profile,
                    templates: self.templates_for(FlowKind::HeadlessCustom),
                    model: None,
                }
            })
            .collect();
        let logs = setups
            .into_par_iter()
            .map(|s| run_headless(s, &self.tasks).map(|o| o.events))
            .collect::<Result<Vec<_>, _>>()?;
        let examples: Vec<_> = logs.iter().flat_map(|l| examples_from_log(l)).collect();
        let (model, report) = train_offline(&examples, &self.hyperparams, derive_seed(self.seed, TAG_PILOT))?;
        Ok(Pilot { model, report })
    }

    pub fn run(&self) -> anyhow::Result<SimulationOutput> {
        self.validate()?;
        self.tasks.validate()?;
        let pilot = match (&self.model, self.needs_model()) {
            (None, true) => Some(self.train_pilot().context("training the pilot predictor")?),
            _ => None,
        };
        let model = self.model.as_ref().or(pilot.as_ref().map(|p| &p.model));
        let mut runs = self
            .plan(model)
            .into_par_iter()
            .map(|s| {
                let id = s.session_id.clone();
                run_headless(s, &self.tasks)
                    .map(|o| SessionRun { session_id: id, events: o.events, report: o.report })
                    .with_context(|| "running a synthetic session".to_string())
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        runs.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(SimulationOutput { runs, pilot })
    }
}

/// Rebuilds the per-session report from a stored log.
pub fn report_from_log(events: &[Event]) -> anyhow::Result<SessionReport> {
    let Some(Event { payload: EventPayload::SessionCreated(created), .. }) = events.first() else {
        bail!("log does not start with SessionCreated");
    };
    let (records, outcomes) = records_from_log(events);
    Ok(session_report(&created.session_id, &created.config.user_id, &records, &outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateDocument {
    pub schema_version: u32,
    pub sessions: usize,
    pub by_strategy: AggregateTable,
    pub by_strategy_modality: AggregateTable,
    /// Per-session compliance per condition, sorted by session id.
    pub series: BTreeMap<String, Vec<SeriesPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub session_id: String,
    pub inappropriate_compliance: f64,
    pub incorrect_suggestions: usize,
    pub mistakes: usize,
}

pub struct Rendered {
    pub sessions_csv: String,
    pub aggregate_csv: String,
    pub aggregate_json: String,
    pub summary: String,
    pub document: AggregateDocument,
}

/// Everything written for a set of reports. Input order does not matter.
pub fn render(reports: &[SessionReport], grouping: Grouping) -> Rendered {
    let mut sorted = reports.to_vec();
    sorted.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let by_strategy = aggregate(&sorted, Grouping::Strategy);
    let by_strategy_modality = aggregate(&sorted, Grouping::StrategyModality);
    let mut series: BTreeMap<String, Vec<SeriesPoint>> = BTreeMap::new();
    for r in &sorted {
        for row in r.rows.iter().filter(|row| row.modality.is_none()) {
            series.entry(row.condition.clone()).or_default().push(SeriesPoint {
                session_id: r.session_id.clone(),
                inappropriate_compliance: row.summary.inappropriate_compliance,
                incorrect_suggestions: row.summary.incorrect_suggestions,
                mistakes: row.summary.mistakes,
            });
        }
    }
    let document = AggregateDocument {
        schema_version: by_strategy.schema_version,
        sessions: sorted.len(),
        by_strategy: by_strategy.clone(),
        by_strategy_modality,
        series,
    };
    let csv_table = match grouping {
        Grouping::Strategy => by_strategy.clone(),
        g => aggregate(&sorted, g),
    };
    Rendered {
        sessions_csv: reports_to_csv(&sorted),
        aggregate_csv: aggregate_to_csv(&csv_table),
        aggregate_json: serde_json::to_string_pretty(&document).expect("serializable"),
        summary: summary(&by_strategy),
        document,
    }
}

pub fn comparison_rows(table: &AggregateTable) -> Vec<&AggregateRow> {
    table
        .rows
        .iter()
        .filter(|r| r.modality.is_none() && r.condition.as_deref().is_some_and(|c| !WARMUP_CONDITIONS.contains(&c)))
        .collect()
}

/// Pooled two-proportion z statistic of `a` minus `b`.
pub fn two_proportion_z(a: &AggregateRow, b: &AggregateRow) -> f64 {
    let (na, nb) = (a.incorrect_suggestions as f64, b.incorrect_suggestions as f64);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let p = (a.pooled_compliance * na + b.pooled_compliance * nb) / (na + nb);
    let se = (p * (1.0 - p) * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (a.pooled_compliance - b.pooled_compliance) / se
    }
}

fn summary(table: &AggregateTable) -> String {
    let rows = comparison_rows(table);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>8} {:>10} {:>10} {:>12} {:>9} {:>10}",
        "condition", "sessions", "incorrect", "compliance", "mean/session", "mistakes", "steps+opt"
    );
    for r in &rows {
        let _ = writeln!(
            s,
            "{:<18} {:>8} {:>10} {:>10.4} {:>12.4} {:>9.3} {:>10.3}",
            r.condition.as_deref().unwrap_or("-"),
            r.sessions,
            r.incorrect_suggestions,
            r.pooled_compliance,
            r.inappropriate_compliance.mean,
            r.mistakes.mean,
            r.steps_above_optimal.mean,
        );
    }
    if let Some((first, rest)) = rows.split_first() {
        if !rest.is_empty() {
            let name = first.condition.as_deref().unwrap_or("-");
            let _ = writeln!(s, "\ndeltas against {name} (other minus {name}):");
            for r in rest {
                let _ = writeln!(
                    s,
                    "  {:<16} compliance {:+.4}  z {:+.2}  mistakes/session {:+.3}",
                    r.condition.as_deref().unwrap_or("-"),
                    r.pooled_compliance - first.pooled_compliance,
                    two_proportion_z(r, first),
                    r.mistakes.mean - first.mistakes.mean,
                );
            }
        }
    }
    s
}

/// Writes logs, CSV/JSON tables and the summary under `out`. Existing logs
/// under `out/sessions` are replaced so reruns produce identical trees.
pub fn write_outputs(out: &Path, output: &SimulationOutput, grouping: Grouping) -> anyhow::Result<Rendered> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let sessions_dir = out.join("sessions");
    if sessions_dir.exists() {
        std::fs::remove_dir_all(&sessions_dir).with_context(|| format!("clearing {}", sessions_dir.display()))?;
    }
    let _ = std::fs::remove_file(out.join("index.json"));
    let store = EventStore::open(out)?;
    let mut index = BTreeMap::new();
    for run in &output.runs {
        store.append(&run.session_id, &run.events)?;
        let EventPayload::SessionCreated(created) = &run.events[0].payload else { unreachable!("logs start with SessionCreated") };
        index.insert(run.session_id.clone(), IndexEntry {
            session_id: run.session_id.clone(),
            user_id: created.config.user_id.clone(),
            flow: created.config.flow,
            created_ms: run.events[0].timestamp_ms,
            completed: matches!(run.events.last().map(|e| &e.payload), Some(EventPayload::SessionEnded(_))),
            event_count: run.events.len(),
        });
    }
    store.write_index(&index)?;
    let rendered = render(&output.reports(), grouping);
    write(out, "sessions.csv", &rendered.sessions_csv)?;
    write(out, "aggregate.csv", &rendered.aggregate_csv)?;
    write(out, "aggregate.json", &rendered.aggregate_json)?;
    write(out, "summary.txt", &rendered.summary)?;
    if let Some(p) = &output.pilot {
        write(out, "pilot-model.json", &p.model.to_json())?;
    }
    Ok(rendered)
}

pub fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Loads every `*.jsonl` log in `dir`, or in `dir/sessions` when present,
/// ordered by file name.
pub fn load_logs(dir: &Path) -> anyhow::Result<Vec<Vec<Event>>> {
    let base = if dir.join("sessions").is_dir() { dir.join("sessions") } else { dir.to_path_buf() };
    let mut files: Vec<_> = std::fs::read_dir(&base)
        .with_context(|| format!("reading {}", base.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str::<Event>(l).with_context(|| format!("parsing {}", p.display())))
                .collect()
        })
        .collect()
}
