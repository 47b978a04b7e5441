//! Study flows: which tasks a participant sees, in what order, and how the
//! explanation modality is chosen in each phase.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::advisor::Modality;
use crate::policy::Strategy;
use crate::world::{CityTask, TaskBank};

use super::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Population,
    Personalization,
    HeadlessCustom,
}

impl FlowKind {
    pub fn label(self) -> &'static str {
        match self {
            FlowKind::Population => "population",
            FlowKind::Personalization => "personalization",
            FlowKind::HeadlessCustom => "headless-custom",
        }
    }

    /// Tasks a bank must hold for this flow.
    pub fn tasks_needed(self) -> usize {
        match self {
            FlowKind::Population => 11,
            FlowKind::Personalization | FlowKind::HeadlessCustom => 9,
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FlowKind {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "population" => Ok(FlowKind::Population),
            "personalization" => Ok(FlowKind::Personalization),
            "headless-custom" | "headless" | "custom" => Ok(FlowKind::HeadlessCustom),
            other => Err(SessionError::Config(format!("unknown flow '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Training,
    Calibration,
    Block,
}

impl PhaseKind {
    /// Ledgers and embeddings only learn from these phases.
    pub fn updates_ledgers(self) -> bool {
        matches!(self, PhaseKind::Calibration | PhaseKind::Block)
    }

    pub fn label(self) -> &'static str {
        match self {
            PhaseKind::Training => "training",
            PhaseKind::Calibration => "calibration",
            PhaseKind::Block => "block",
        }
    }
}

/// How modalities are chosen within a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseStrategy {
    /// Seeded permutation of all three modalities, redrawn every three
    /// intersections.
    PerIntersectionRotation,
    /// Each task shows one modality taken from the participant's ordering.
    RotatingModality,
    Strategy(Strategy),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub task_count: usize,
    pub strategy: PhaseStrategy,
    pub survey_after: bool,
    /// Condition label carried into metrics.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyFlow {
    pub kind: FlowKind,
    pub phases: Vec<Phase>,
}

fn rotation(kind: PhaseKind, n: usize, label: &str) -> Phase {
    Phase { kind, task_count: n, strategy: PhaseStrategy::PerIntersectionRotation, survey_after: false, label: label.into() }
}

fn block(s: Strategy, n: usize, survey_after: bool) -> Phase {
    Phase { kind: PhaseKind::Block, task_count: n, strategy: PhaseStrategy::Strategy(s), survey_after, label: s.label() }
}

impl StudyFlow {
    /// Two practice tasks, nine single-modality tasks, then a ranking survey.
    pub fn population() -> Self {
        StudyFlow {
            kind: FlowKind::Population,
            phases: vec![
                rotation(PhaseKind::Training, 2, "practice"),
                Phase {
                    kind: PhaseKind::Block,
                    task_count: 9,
                    strategy: PhaseStrategy::RotatingModality,
                    survey_after: true,
                    label: "fixed-per-task".into(),
                },
            ],
        }
    }

    /// One training task, two calibration tasks, then three tasks under each
    /// strategy of the pair with a survey after each block.
    pub fn personalization(first: Strategy, second: Strategy) -> Self {
        StudyFlow {
            kind: FlowKind::Personalization,
            phases: vec![
                rotation(PhaseKind::Training, 1, "training"),
                rotation(PhaseKind::Calibration, 2, "calibration"),
                block(first, 3, true),
                block(second, 3, true),
            ],
        }
    }

    /// Training and calibration as in the personalization flow, then six
    /// tasks of one strategy and no surveys.
    pub fn headless_custom(strategy: Strategy) -> Self {
        StudyFlow {
            kind: FlowKind::HeadlessCustom,
            phases: vec![
                rotation(PhaseKind::Training, 1, "training"),
                rotation(PhaseKind::Calibration, 2, "calibration"),
                block(strategy, 6, false),
            ],
        }
    }

    pub fn task_count(&self) -> usize {
        self.phases.iter().map(|p| p.task_count).sum()
    }

    /// Phase index of every task slot, in order.
    pub fn phase_of_slots(&self) -> Vec<usize> {
        self.phases.iter().enumerate().flat_map(|(i, p)| std::iter::repeat_n(i, p.task_count)).collect()
    }
}

/// Row `row` of the cyclic `n x n` Latin square: `(row + j) mod n`.
pub fn latin_row(n: usize, row: usize) -> Vec<usize> {
    (0..n).map(|j| (row + j) % n).collect()
}

/// The six orderings of the three modalities, in lexicographic order.
pub fn modality_orderings() -> [[Modality; 3]; 6] {
    use Modality::*;
    [
        [Language, FeatureMap, DecisionTree],
        [Language, DecisionTree, FeatureMap],
        [FeatureMap, Language, DecisionTree],
        [FeatureMap, DecisionTree, Language],
        [DecisionTree, Language, FeatureMap],
        [DecisionTree, FeatureMap, Language],
    ]
}

/// One task as scheduled for a participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub task: CityTask,
    pub phase_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_modality: Option<Modality>,
}

/// Condition order for a personalization participant: odd enrollment
/// indices get the pair reversed.
pub fn counterbalance(pair: (Strategy, Strategy), enrollment: u64) -> (Strategy, Strategy) {
    if enrollment.is_multiple_of(2) {
        pair
    } else {
        (pair.1, pair.0)
    }
}

/// Assigns bank tasks to the flow's slots.
///
/// Population: tasks 0-1 are practice, tasks 2-10 follow row
/// `enrollment mod 9` of a 9x9 Latin square, and modality ordering
/// `enrollment mod 6` cycles across them. Other flows: task 0 trains, 1-2
/// calibrate, and 3-8 follow row `enrollment mod 6` of a 6x6 Latin square.
pub fn plan_tasks(flow: &StudyFlow, bank: &TaskBank, enrollment: u64) -> Result<Vec<PlannedTask>, SessionError> {
    let need = flow.kind.tasks_needed();
    if bank.tasks.len() < need {
        return Err(SessionError::Config(format!(
            "{} flow needs {need} tasks, bank has {}",
            flow.kind,
            bank.tasks.len()
        )));
    }
    if flow.task_count() != need {
        return Err(SessionError::Config(format!("{} flow must schedule {need} tasks", flow.kind)));
    }
    let (lead, square) = match flow.kind {
        FlowKind::Population => (2, 9),
        _ => (3, 6),
    };
    let row = latin_row(square, (enrollment % square as u64) as usize);
    let order: Vec<usize> = (0..lead).chain(row.into_iter().map(|j| lead + j)).collect();
    let ordering = modality_orderings()[(enrollment % 6) as usize];
    let phases = flow.phase_of_slots();
    let mut rotating_seen = 0usize;
    let mut plan = Vec::with_capacity(order.len());
    for (slot, &bank_index) in order.iter().enumerate() {
        let phase_index = phases[slot];
        let fixed_modality = match flow.phases[phase_index].strategy {
            PhaseStrategy::RotatingModality => {
                let m = ordering[rotating_seen % 3];
                rotating_seen += 1;
                Some(m)
            }
            _ => None,
        };
        plan.push(PlannedTask { task: bank.tasks[bank_index].clone(), phase_index, fixed_modality });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WorldConfig;

    fn bank() -> TaskBank {
        TaskBank::generate(11, 17, &WorldConfig::default()).unwrap()
    }

    #[test]
    fn default_flows_have_their_shapes() {
        let p = StudyFlow::personalization(Strategy::Balanced, Strategy::Random);
        let counts: Vec<(PhaseKind, usize)> = p.phases.iter().map(|ph| (ph.kind, ph.task_count)).collect();
        assert_eq!(
            counts,
            vec![(PhaseKind::Training, 1), (PhaseKind::Calibration, 2), (PhaseKind::Block, 3), (PhaseKind::Block, 3)]
        );
        assert!(p.phases[2].survey_after && p.phases[3].survey_after);
        let pop = StudyFlow::population();
        assert_eq!(pop.task_count(), 11);
        assert!(pop.phases.last().unwrap().survey_after);
    }

    #[test]
    fn consecutive_enrollments_swap_conditions() {
        let pair = (Strategy::Balanced, Strategy::PreferenceMax);
        assert_eq!(counterbalance(pair, 4), pair);
        assert_eq!(counterbalance(pair, 5), (Strategy::PreferenceMax, Strategy::Balanced));
    }

    #[test]
    fn latin_square_rows_cover_positions_evenly() {
        let b = bank();
        let flow = StudyFlow::population();
        // Over 9 participants each study task appears once in each position.
        let mut seen = vec![vec![0usize; 9]; 9];
        for e in 0..9 {
            let plan = plan_tasks(&flow, &b, e).unwrap();
            for (pos, p) in plan[2..].iter().enumerate() {
                let idx = b.tasks.iter().position(|t| t.task_id == p.task.task_id).unwrap() - 2;
                seen[idx][pos] += 1;
            }
        }
        assert!(seen.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn population_tasks_use_a_single_modality_each() {
        let plan = plan_tasks(&StudyFlow::population(), &bank(), 1).unwrap();
        assert!(plan[..2].iter().all(|p| p.fixed_modality.is_none()));
        let mods: Vec<Modality> = plan[2..].iter().map(|p| p.fixed_modality.unwrap()).collect();
        for m in Modality::ALL {
            assert_eq!(mods.iter().filter(|&&x| x == m).count(), 3);
        }
    }

    #[test]
    fn short_bank_is_rejected() {
        let b = TaskBank::generate(5, 1, &WorldConfig::default()).unwrap();
        assert!(plan_tasks(&StudyFlow::headless_custom(Strategy::Random), &b, 0).is_err());
    }
}
