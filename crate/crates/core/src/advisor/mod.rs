//! The driving agent's suggestions and their explanations.
//!
//! Roughly `error_rate` of the time the agent points the wrong way on purpose
//! and its explanation carries exactly one red herring: an irrelevant outside
//! factor in a sentence, a red-herring predicate on the highlighted path of a
//! decision tree, or a bright sky region in a feature-importance map.
//! Participants are told to treat any such marker as a malfunction.

mod feature_map;
mod language;
mod templates;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feature_map::{render_feature_map, scene_layout, FeatureMapExplanation, Region, RegionColor, RegionKind, Scene, SceneArm};
pub use language::{render_language, Citation, LanguageContext, LanguageExplanation};
pub use templates::{BrightnessConfig, LanguageBank, TemplateBank, TreeTemplate, TreeTemplateNode};
pub use tree::{render_tree, DecisionTreeExplanation, NodeKind, TreeNode, TreeVariant};

use crate::planner::{resolve_optimal, DistanceField, PlannerError};
use crate::rng::{self, Stream, StreamRng};
use crate::world::{available_directions, CarState, CityTask, Direction, WorldError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdvisorError {
    #[error("template bank has no {0} templates")]
    EmptyTemplateBank(&'static str),
    #[error("template error: {0}")]
    Template(String),
    #[error("brightness ranges overlap or are malformed: {0}")]
    Brightness(String),
    #[error("advisor invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Language,
    FeatureMap,
    DecisionTree,
}

impl Modality {
    /// Fixed index order used by every per-modality vector.
    pub const ALL: [Modality; 3] = [Modality::Language, Modality::FeatureMap, Modality::DecisionTree];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Modality> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Modality::Language => "language",
            Modality::FeatureMap => "feature-map",
            Modality::DecisionTree => "decision-tree",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "language" | "lang" => Ok(Modality::Language),
            "feature-map" | "featuremap" | "feature" => Ok(Modality::FeatureMap),
            "decision-tree" | "decisiontree" | "tree" => Ok(Modality::DecisionTree),
            other => Err(format!("unknown modality '{other}'")),
        }
    }
}

/// Irrelevant outside factors that mark an explanation as wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RedHerring {
    Weather,
    Radio,
    Sky,
    Traffic,
    RushHour,
    Motorcade,
}

impl RedHerring {
    pub const ALL: [RedHerring; 6] = [
        RedHerring::Weather,
        RedHerring::Radio,
        RedHerring::Sky,
        RedHerring::Traffic,
        RedHerring::RushHour,
        RedHerring::Motorcade,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", content = "payload")]
pub enum Explanation {
    Language(LanguageExplanation),
    FeatureMap(FeatureMapExplanation),
    DecisionTree(DecisionTreeExplanation),
}

impl Explanation {
    pub fn modality(&self) -> Modality {
        match self {
            Explanation::Language(_) => Modality::Language,
            Explanation::FeatureMap(_) => Modality::FeatureMap,
            Explanation::DecisionTree(_) => Modality::DecisionTree,
        }
    }

    /// Whether the explanation carries the malfunction signal.
    pub fn has_red_herring(&self, sky_threshold: f64) -> bool {
        match self {
            Explanation::Language(l) => matches!(l.cites, Citation::Herring(_)),
            Explanation::FeatureMap(m) => m.sky_brightness().is_some_and(|b| b >= sky_threshold),
            Explanation::DecisionTree(t) => t.herring_on_path().is_some(),
        }
    }

    /// Copy safe to show a participant: drops the citation tag and the
    /// herring annotations on tree nodes.
    pub fn participant_view(&self) -> serde_json::Value {
        match self {
            Explanation::Language(l) => serde_json::json!({
                "modality": "Language",
                "payload": { "text": l.text },
            }),
            Explanation::FeatureMap(m) => serde_json::json!({
                "modality": "FeatureMap",
                "payload": m,
            }),
            Explanation::DecisionTree(t) => serde_json::json!({
                "modality": "DecisionTree",
                "payload": t.participant_view(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub direction: Direction,
    pub modality: Modality,
    pub explanation: Explanation,
    /// Hidden from participants.
    pub is_correct: bool,
    pub masked_direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvisorConfig {
    pub error_rate: f64,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        Self { error_rate: 0.30 }
    }
}

/// The three random streams the advisor consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvisorRng {
    pub correctness: StreamRng,
    pub mask: StreamRng,
    pub render: StreamRng,
}

impl AdvisorRng {
    pub fn new(seed: u64) -> Self {
        Self {
            correctness: rng::stream(seed, Stream::Correctness),
            mask: rng::stream(seed, Stream::Mask),
            render: rng::stream(seed, Stream::Render),
        }
    }
}

/// `true` means the suggestion will be correct. One uniform draw per call.
pub fn decide_correctness<R: Rng + ?Sized>(rng: &mut R, error_rate: f64) -> bool {
    let u: f64 = rng.random();
    u >= error_rate
}

/// Wrong direction for an optimal one, plus the lateral to hide from the menu.
///
/// Left and Right swap. When the optimal move is Straight one lateral is
/// masked (chosen uniformly if both exist) and the other is suggested. If the
/// opposite lateral of a turn is off the grid the agent suggests Straight.
pub fn oppose<R: Rng + ?Sized>(
    optimal: Direction,
    available: &[Direction],
    rng: &mut R,
) -> Result<(Direction, Option<Direction>), AdvisorError> {
    match optimal {
        Direction::Straight => {
            let left = available.contains(&Direction::Left);
            let right = available.contains(&Direction::Right);
            let mask_right = rng.random_bool(0.5);
            match (left, right) {
                (true, true) if mask_right => Ok((Direction::Left, Some(Direction::Right))),
                (true, true) => Ok((Direction::Right, Some(Direction::Left))),
                (true, false) => Ok((Direction::Left, Some(Direction::Right))),
                (false, true) => Ok((Direction::Right, Some(Direction::Left))),
                (false, false) => Err(AdvisorError::Invariant("optimal is Straight but no lateral exists".into())),
            }
        }
        lateral => {
            let opposite = lateral.opposite().expect("lateral has an opposite");
            if available.contains(&opposite) {
                Ok((opposite, None))
            } else if available.contains(&Direction::Straight) {
                Ok((Direction::Straight, None))
            } else {
                Err(AdvisorError::Invariant(format!("no wrong option exists against {lateral}")))
            }
        }
    }
}

pub fn incorrect_direction<R: Rng + ?Sized>(
    task: &CityTask,
    car: &CarState,
    field: &DistanceField,
    rng: &mut R,
) -> Result<(Direction, Option<Direction>), AdvisorError> {
    let optimal = resolve_optimal(task, car, field)?.direction;
    let available = available_directions(task, car, None)?;
    oppose(optimal, &available, rng)
}

/// Produces one suggestion in `modality` for the car's current pose.
///
/// Poses with a single available direction always get a correct suggestion,
/// since no wrong option exists there.
pub fn advise(
    task: &CityTask,
    car: &CarState,
    field: &DistanceField,
    modality: Modality,
    rngs: &mut AdvisorRng,
    config: &AdvisorConfig,
    bank: &TemplateBank,
) -> Result<Suggestion, AdvisorError> {
    let optimal = resolve_optimal(task, car, field)?.direction;
    let available = available_directions(task, car, None)?;
    let drawn_correct = decide_correctness(&mut rngs.correctness, config.error_rate);
    let is_correct = drawn_correct || available.len() < 2;

    let (direction, masked_direction) = if is_correct {
        (optimal, None)
    } else {
        oppose(optimal, &available, &mut rngs.mask)?
    };
    let offered: Vec<Direction> = available.iter().copied().filter(|&d| Some(d) != masked_direction).collect();

    let explanation = match modality {
        Modality::Language => {
            let cause = if is_correct {
                offered
                    .iter()
                    .filter(|&&d| d != direction)
                    .find_map(|&d| task.blocked_segment(car.pos, car.heading, d).map(|s| (s.obstacle(), d)))
            } else {
                None
            };
            let ctx = LanguageContext { direction, cause };
            Explanation::Language(render_language(is_correct, &ctx, &mut rngs.render, &bank.language)?)
        }
        Modality::FeatureMap => Explanation::FeatureMap(render_feature_map(
            is_correct,
            direction,
            &offered,
            &mut rngs.render,
            &bank.brightness,
        )?),
        Modality::DecisionTree => {
            Explanation::DecisionTree(render_tree(is_correct, direction, &bank.tree, &mut rngs.render)?)
        }
    };

    Ok(Suggestion { direction, modality, explanation, is_correct, masked_direction })
}
