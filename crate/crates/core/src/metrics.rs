//! Study metrics computed from interaction records, and their aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::advisor::Modality;
use crate::world::Direction;

/// Version of the CSV/JSON export column set.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One answered intersection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub session_id: String,
    pub user_id: String,
    /// Strategy label for personalized blocks, or the phase's rotation label.
    pub condition: String,
    pub phase: String,
    pub task_id: String,
    /// Position of the task within the session.
    pub task_order: usize,
    pub intersection_index: u32,
    pub modality: Modality,
    pub suggested: Direction,
    pub optimal: Direction,
    pub suggestion_correct: bool,
    pub offered: Vec<Direction>,
    pub chosen: Direction,
    pub feedback: Option<bool>,
    pub consideration_ms: u64,
    pub blocked_excursion: bool,
}

impl InteractionRecord {
    pub fn is_mistake(&self) -> bool {
        self.chosen != self.optimal
    }

    pub fn complied_with_incorrect(&self) -> bool {
        !self.suggestion_correct && self.chosen == self.suggested
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub session_id: String,
    pub condition: String,
    pub phase: String,
    pub task_id: String,
    pub task_order: usize,
    pub steps_taken: u32,
    pub optimal_length: u32,
    pub reached_goal: bool,
    /// Modalities shown during the task, in first-seen order.
    pub modalities: Vec<Modality>,
}

/// Fraction of incorrect suggestions that were followed; 0 with none.
pub fn inappropriate_compliance(records: &[InteractionRecord]) -> f64 {
    let (followed, incorrect) = compliance_counts(records);
    if incorrect == 0 {
        0.0
    } else {
        followed as f64 / incorrect as f64
    }
}

/// (followed incorrect, total incorrect)
pub fn compliance_counts(records: &[InteractionRecord]) -> (usize, usize) {
    let incorrect = records.iter().filter(|r| !r.suggestion_correct).count();
    let followed = records.iter().filter(|r| r.complied_with_incorrect()).count();
    (followed, incorrect)
}

pub fn mistakes(records: &[InteractionRecord]) -> usize {
    records.iter().filter(|r| r.is_mistake()).count()
}

fn by_position(records: &[InteractionRecord]) -> Vec<&InteractionRecord> {
    let mut sorted: Vec<&InteractionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.session_id, a.task_order, a.intersection_index).cmp(&(&b.session_id, b.task_order, b.intersection_index))
    });
    sorted
}

/// Pairs of mistakes at neighbouring intersections of the same task, over
/// the total number of mistakes. 0 with no mistakes.
pub fn consecutive_mistakes(records: &[InteractionRecord]) -> f64 {
    let total = mistakes(records);
    if total == 0 {
        return 0.0;
    }
    let sorted = by_position(records);
    let pairs = sorted
        .windows(2)
        .filter(|w| {
            w[0].session_id == w[1].session_id
                && w[0].task_order == w[1].task_order
                && w[0].intersection_index + 1 == w[1].intersection_index
                && w[0].is_mistake()
                && w[1].is_mistake()
        })
        .count();
    pairs as f64 / total as f64
}

/// Sum of `steps_taken - optimal_length` over tasks.
pub fn steps_above_optimal(tasks: &[TaskOutcome]) -> u64 {
    tasks.iter().map(|t| u64::from(t.steps_taken.saturating_sub(t.optimal_length))).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub interactions: usize,
    pub incorrect_suggestions: usize,
    pub complied_incorrect: usize,
    pub inappropriate_compliance: f64,
    pub mistakes: usize,
    pub consecutive_mistakes_norm: f64,
    pub tasks: usize,
    pub steps_above_optimal: u64,
    pub feedback_pos: usize,
    pub feedback_neg: usize,
    pub mean_consideration_ms: f64,
}

pub fn summarize(records: &[InteractionRecord], tasks: &[TaskOutcome]) -> MetricSummary {
    let (complied_incorrect, incorrect_suggestions) = compliance_counts(records);
    let mean_consideration_ms = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.consideration_ms).sum::<u64>() as f64 / records.len() as f64
    };
    MetricSummary {
        interactions: records.len(),
        incorrect_suggestions,
        complied_incorrect,
        inappropriate_compliance: inappropriate_compliance(records),
        mistakes: mistakes(records),
        consecutive_mistakes_norm: consecutive_mistakes(records),
        tasks: tasks.len(),
        steps_above_optimal: steps_above_optimal(tasks),
        feedback_pos: records.iter().filter(|r| r.feedback == Some(true)).count(),
        feedback_neg: records.iter().filter(|r| r.feedback == Some(false)).count(),
        mean_consideration_ms,
    }
}

/// One (session, condition, modality) slice. `modality` is `None` for the
/// row covering every modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub session_id: String,
    pub user_id: String,
    pub condition: String,
    pub modality: Option<Modality>,
    #[serde(flatten)]
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub user_id: String,
    pub rows: Vec<ReportRow>,
}

impl SessionReport {
    pub fn row(&self, condition: &str, modality: Option<Modality>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.condition == condition && r.modality == modality)
    }
}

/// Rows per condition, each split by modality plus an all-modality row.
/// A task counts toward a modality row only if every interaction in it used
/// that modality.
pub fn session_report(
    session_id: &str,
    user_id: &str,
    records: &[InteractionRecord],
    tasks: &[TaskOutcome],
) -> SessionReport {
    let mut conditions: Vec<&str> = records.iter().map(|r| r.condition.as_str()).collect();
    conditions.extend(tasks.iter().map(|t| t.condition.as_str()));
    conditions.sort();
    conditions.dedup();
    let mut rows = Vec::new();
    for cond in conditions {
        let recs: Vec<InteractionRecord> = records.iter().filter(|r| r.condition == cond).cloned().collect();
        let ts: Vec<TaskOutcome> = tasks.iter().filter(|t| t.condition == cond).cloned().collect();
        rows.push(ReportRow {
            session_id: session_id.into(),
            user_id: user_id.into(),
            condition: cond.into(),
            modality: None,
            summary: summarize(&recs, &ts),
        });
        for m in Modality::ALL {
            let mrecs: Vec<InteractionRecord> = recs.iter().filter(|r| r.modality == m).cloned().collect();
            let mts: Vec<TaskOutcome> = ts.iter().filter(|t| t.modalities == [m]).cloned().collect();
            if mrecs.is_empty() && mts.is_empty() {
                continue;
            }
            rows.push(ReportRow {
                session_id: session_id.into(),
                user_id: user_id.into(),
                condition: cond.into(),
                modality: Some(m),
                summary: summarize(&mrecs, &mts),
            });
        }
    }
    SessionReport { session_id: session_id.into(), user_id: user_id.into(), rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    Strategy,
    Modality,
    StrategyModality,
}

impl std::str::FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "strategy" | "condition" => Ok(Grouping::Strategy),
            "modality" => Ok(Grouping::Modality),
            "strategy-modality" | "both" => Ok(Grouping::StrategyModality),
            other => Err(format!("unknown grouping '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

fn stat(mut values: Vec<f64>) -> Stat {
    if values.is_empty() {
        return Stat::default();
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 };
    Stat { mean, median }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub condition: Option<String>,
    pub modality: Option<Modality>,
    pub sessions: usize,
    pub interactions: usize,
    pub incorrect_suggestions: usize,
    /// Followed-incorrect over incorrect, pooled across sessions.
    pub pooled_compliance: f64,
    /// Per-session rate, over sessions that saw an incorrect suggestion.
    pub inappropriate_compliance: Stat,
    pub mistakes: Stat,
    pub consecutive_mistakes_norm: Stat,
    pub steps_above_optimal: Stat,
    pub feedback_pos: usize,
    pub feedback_neg: usize,
    pub mean_consideration_ms: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub schema_version: u32,
    pub grouping: Grouping,
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn find(&self, condition: Option<&str>, modality: Option<Modality>) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.condition.as_deref() == condition && r.modality == modality)
    }
}

/// Order-independent: rows are keyed and values sorted before reduction.
pub fn aggregate(reports: &[SessionReport], grouping: Grouping) -> AggregateTable {
    let mut groups: BTreeMap<(Option<String>, Option<Modality>), Vec<&ReportRow>> = BTreeMap::new();
    for row in reports.iter().flat_map(|r| r.rows.iter()) {
        let key = match grouping {
            Grouping::Strategy if row.modality.is_none() => (Some(row.condition.clone()), None),
            Grouping::Modality if row.modality.is_some() => (None, row.modality),
            Grouping::StrategyModality => (Some(row.condition.clone()), row.modality),
            _ => continue,
        };
        groups.entry(key).or_default().push(row);
    }
    let rows = groups
        .into_iter()
        .map(|((condition, modality), rows)| {
            // Modality grouping merges conditions, so fold each session first.
            let mut per_session: BTreeMap<&str, MetricSummary> = BTreeMap::new();
            for r in &rows {
                let acc = per_session.entry(r.session_id.as_str()).or_default();
                merge(acc, &r.summary);
            }
            let sessions: Vec<&MetricSummary> = per_session.values().collect();
            let incorrect: usize = sessions.iter().map(|s| s.incorrect_suggestions).sum();
            let complied: usize = sessions.iter().map(|s| s.complied_incorrect).sum();
            let interactions: usize = sessions.iter().map(|s| s.interactions).sum();
            AggregateRow {
                condition,
                modality,
                sessions: sessions.len(),
                interactions,
                incorrect_suggestions: incorrect,
                pooled_compliance: if incorrect == 0 { 0.0 } else { complied as f64 / incorrect as f64 },
                inappropriate_compliance: stat(
                    sessions.iter().filter(|s| s.incorrect_suggestions > 0).map(|s| s.inappropriate_compliance).collect(),
                ),
                mistakes: stat(sessions.iter().map(|s| s.mistakes as f64).collect()),
                consecutive_mistakes_norm: stat(sessions.iter().map(|s| s.consecutive_mistakes_norm).collect()),
                steps_above_optimal: stat(sessions.iter().map(|s| s.steps_above_optimal as f64).collect()),
                feedback_pos: sessions.iter().map(|s| s.feedback_pos).sum(),
                feedback_neg: sessions.iter().map(|s| s.feedback_neg).sum(),
                mean_consideration_ms: stat(
                    sessions.iter().filter(|s| s.interactions > 0).map(|s| s.mean_consideration_ms).collect(),
                ),
            }
        })
        .collect();
    AggregateTable { schema_version: REPORT_SCHEMA_VERSION, grouping, rows }
}

/// Combines two summaries of disjoint record sets. Consecutive-mistake
/// ratios are re-weighted by mistakes, which is exact because pairs never
/// span two slices of different conditions.
fn merge(acc: &mut MetricSummary, s: &MetricSummary) {
    let pairs = acc.consecutive_mistakes_norm * acc.mistakes as f64 + s.consecutive_mistakes_norm * s.mistakes as f64;
    let ms = acc.mean_consideration_ms * acc.interactions as f64 + s.mean_consideration_ms * s.interactions as f64;
    acc.interactions += s.interactions;
    acc.incorrect_suggestions += s.incorrect_suggestions;
    acc.complied_incorrect += s.complied_incorrect;
    acc.mistakes += s.mistakes;
    acc.tasks += s.tasks;
    acc.steps_above_optimal += s.steps_above_optimal;
    acc.feedback_pos += s.feedback_pos;
    acc.feedback_neg += s.feedback_neg;
    acc.inappropriate_compliance = if acc.incorrect_suggestions == 0 {
        0.0
    } else {
        acc.complied_incorrect as f64 / acc.incorrect_suggestions as f64
    };
    acc.consecutive_mistakes_norm = if acc.mistakes == 0 { 0.0 } else { pairs / acc.mistakes as f64 };
    acc.mean_consideration_ms = if acc.interactions == 0 { 0.0 } else { ms / acc.interactions as f64 };
}

pub const SESSION_CSV_HEADER: [&str; 16] = [
    "schema_version",
    "session_id",
    "user_id",
    "condition",
    "modality",
    "interactions",
    "incorrect_suggestions",
    "complied_incorrect",
    "inappropriate_compliance",
    "mistakes",
    "consecutive_mistakes_norm",
    "tasks",
    "steps_above_optimal",
    "feedback_pos",
    "feedback_neg",
    "mean_consideration_ms",
];

/// One row per session x condition x modality (`all` for the pooled row),
/// sorted by session id.
pub fn reports_to_csv(reports: &[SessionReport]) -> String {
    let mut sorted: Vec<&SessionReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SESSION_CSV_HEADER).expect("in-memory write");
    for row in sorted.iter().flat_map(|r| r.rows.iter()) {
        let s = &row.summary;
        w.write_record([
            REPORT_SCHEMA_VERSION.to_string(),
            row.session_id.clone(),
            row.user_id.clone(),
            row.condition.clone(),
            row.modality.map_or_else(|| "all".to_string(), |m| m.label().to_string()),
            s.interactions.to_string(),
            s.incorrect_suggestions.to_string(),
            s.complied_incorrect.to_string(),
            s.inappropriate_compliance.to_string(),
            s.mistakes.to_string(),
            s.consecutive_mistakes_norm.to_string(),
            s.tasks.to_string(),
            s.steps_above_optimal.to_string(),
            s.feedback_pos.to_string(),
            s.feedback_neg.to_string(),
            s.mean_consideration_ms.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub const AGGREGATE_CSV_HEADER: [&str; 17] = [
    "schema_version",
    "condition",
    "modality",
    "sessions",
    "interactions",
    "incorrect_suggestions",
    "pooled_compliance",
    "compliance_mean",
    "compliance_median",
    "mistakes_mean",
    "mistakes_median",
    "consecutive_mistakes_mean",
    "steps_above_optimal_mean",
    "steps_above_optimal_median",
    "feedback_pos",
    "feedback_neg",
    "consideration_ms_mean",
];

pub fn aggregate_to_csv(table: &AggregateTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_CSV_HEADER).expect("in-memory write");
    for r in &table.rows {
        w.write_record([
            table.schema_version.to_string(),
            r.condition.clone().unwrap_or_else(|| "all".into()),
            r.modality.map_or_else(|| "all".to_string(), |m| m.label().to_string()),
            r.sessions.to_string(),
            r.interactions.to_string(),
            r.incorrect_suggestions.to_string(),
            r.pooled_compliance.to_string(),
            r.inappropriate_compliance.mean.to_string(),
            r.inappropriate_compliance.median.to_string(),
            r.mistakes.mean.to_string(),
            r.mistakes.median.to_string(),
            r.consecutive_mistakes_norm.mean.to_string(),
            r.steps_above_optimal.mean.to_string(),
            r.steps_above_optimal.median.to_string(),
            r.feedback_pos.to_string(),
            r.feedback_neg.to_string(),
            r.mean_consideration_ms.mean.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    fn rec(task: usize, idx: u32, suggested: Direction, optimal: Direction, chosen: Direction) -> InteractionRecord {
        InteractionRecord {
            session_id: "s".into(),
            user_id: "u".into(),
            condition: "balanced".into(),
            phase: "block".into(),
            task_id: format!("t{task}"),
            task_order: task,
            intersection_index: idx,
            modality: Modality::Language,
            suggested,
            optimal,
            suggestion_correct: suggested == optimal,
            offered: vec![Left, Straight, Right],
            chosen,
            feedback: None,
            consideration_ms: 1000,
            blocked_excursion: false,
        }
    }

    #[test]
    fn compliance_examples() {
        assert_eq!(inappropriate_compliance(&[rec(0, 0, Left, Left, Left)]), 0.0);
        let mut log: Vec<InteractionRecord> = (0..10).map(|i| rec(0, i, Right, Left, Left)).collect();
        for r in log.iter_mut().take(3) {
            r.chosen = Right;
        }
        assert!((inappropriate_compliance(&log) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn consecutive_examples() {
        // Mistakes at 2 and 3 of one task.
        let log = vec![
            rec(0, 0, Left, Left, Left),
            rec(0, 1, Left, Left, Left),
            rec(0, 2, Left, Left, Right),
            rec(0, 3, Left, Left, Right),
            rec(0, 4, Left, Left, Left),
        ];
        assert_eq!(mistakes(&log), 2);
        assert_eq!(consecutive_mistakes(&log), 0.5);
        let alternating: Vec<_> =
            (0..6).map(|i| rec(0, i, Left, Left, if i % 2 == 0 { Right } else { Left })).collect();
        assert_eq!(consecutive_mistakes(&alternating), 0.0);
        // Neighbouring mistakes in different tasks do not pair.
        let split = vec![rec(0, 5, Left, Left, Right), rec(1, 0, Left, Left, Right)];
        assert_eq!(consecutive_mistakes(&split), 0.0);
    }

    #[test]
    fn aggregation_is_order_independent() {
        let a = session_report("a", "u", &[rec(0, 0, Right, Left, Right)], &[]);
        let mut b_rec = rec(0, 0, Right, Left, Left);
        b_rec.session_id = "b".into();
        let b = session_report("b", "u", &[b_rec], &[]);
        let t1 = aggregate(&[a.clone(), b.clone()], Grouping::Strategy);
        let t2 = aggregate(&[b, a.clone()], Grouping::Strategy);
        assert_eq!(t1, t2);
        let row = t1.find(Some("balanced"), None).unwrap();
        assert_eq!(row.inappropriate_compliance.mean, 0.5);
        assert_eq!(row.pooled_compliance, 0.5);
        let single = aggregate(std::slice::from_ref(&a), Grouping::Strategy);
        assert_eq!(single.rows[0].inappropriate_compliance.mean, a.rows[0].summary.inappropriate_compliance);
    }

    #[test]
    fn csv_has_versioned_header() {
        let csv = reports_to_csv(&[]);
        assert_eq!(csv.trim(), SESSION_CSV_HEADER.join(","));
        let r = session_report("a", "u", &[rec(0, 0, Left, Left, Left)], &[]);
        let csv = reports_to_csv(&[r]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,a,u,balanced,all,1,"));
    }
}
