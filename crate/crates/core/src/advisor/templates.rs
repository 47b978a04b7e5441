//! Authored explanation content: sentence templates, tree templates and the
//! feature-map brightness ranges, loaded from a versioned JSON document.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::language::Citation;
use super::tree::TreeVariant;
use super::{AdvisorError, RedHerring};
use crate::world::{Direction, ObstacleKind};

pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

const POPULATION_JSON: &str = include_str!("../../assets/templates_population.json");
const PERSONALIZATION_JSON: &str = include_str!("../../assets/templates_personalization.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub version: u32,
    pub name: String,
    pub language: LanguageBank,
    pub tree: TreeTemplate,
    pub brightness: BrightnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectTemplate {
    pub cites: Citation,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageBank {
    /// Slots: `{direction}` and, for obstacle templates, `{cause}`.
    pub correct: Vec<CorrectTemplate>,
    /// Obstacle clauses per kind. Slot: `{avoid}`.
    pub causes: BTreeMap<ObstacleKind, Vec<String>>,
    /// Slots: `{direction}` and `{herring}`.
    pub incorrect: Vec<String>,
    pub herrings: BTreeMap<RedHerring, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTemplate {
    pub variant: TreeVariant,
    /// Node 0 is the root.
    pub nodes: Vec<TreeTemplateNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeTemplateNode {
    Decision {
        id: u32,
        predicate: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        herring: Option<RedHerring>,
        if_true: u32,
        if_false: u32,
    },
    Leaf {
        id: u32,
        action: Direction,
    },
}

impl TreeTemplateNode {
    pub fn id(&self) -> u32 {
        match self {
            TreeTemplateNode::Decision { id, .. } | TreeTemplateNode::Leaf { id, .. } => *id,
        }
    }
}

/// Brightness ranges for feature-map regions. Correct-explanation
/// distractors draw from `[correct_min, correct_max)`, the incorrect-signal
/// sky from `[incorrect_min, incorrect_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessConfig {
    pub correct_min: f64,
    pub correct_max: f64,
    pub incorrect_min: f64,
    pub incorrect_max: f64,
    pub sky_threshold: f64,
}

impl Default for BrightnessConfig {
    fn default() -> Self {
        Self { correct_min: 0.0, correct_max: 0.4, incorrect_min: 0.6, incorrect_max: 1.0, sky_threshold: 0.5 }
    }
}

impl BrightnessConfig {
    pub fn validate(&self) -> Result<(), AdvisorError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if ![self.correct_min, self.correct_max, self.incorrect_min, self.incorrect_max].into_iter().all(in_unit) {
            return Err(AdvisorError::Brightness("values must lie in [0, 1]".into()));
        }
        if self.correct_min >= self.correct_max || self.incorrect_min > self.incorrect_max {
            return Err(AdvisorError::Brightness("empty range".into()));
        }
        if self.correct_max > self.incorrect_min {
            return Err(AdvisorError::Brightness(format!(
                "correct range ends at {} after incorrect range starts at {}",
                self.correct_max, self.incorrect_min
            )));
        }
        if !(self.correct_max..=self.incorrect_min).contains(&self.sky_threshold) {
            return Err(AdvisorError::Brightness("sky threshold must separate the ranges".into()));
        }
        Ok(())
    }
}

impl TemplateBank {
    /// Six correct-form sentences and the smaller decision tree.
    pub fn population() -> Self {
        Self::from_json(POPULATION_JSON).expect("shipped population bank is valid")
    }

    /// Forty-seven correct-form sentences and the extended decision tree.
    pub fn personalization() -> Self {
        Self::from_json(PERSONALIZATION_JSON).expect("shipped personalization bank is valid")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "population" => Some(Self::population()),
            "personalization" => Some(Self::personalization()),
            _ => None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, AdvisorError> {
        let bank: TemplateBank = serde_json::from_str(s).map_err(|e| AdvisorError::Template(e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template bank serializes")
    }

    /// Short content hash recorded in session logs.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(serde_json::to_vec(self).expect("template bank serializes"));
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), AdvisorError> {
        if self.version != TEMPLATE_FORMAT_VERSION {
            return Err(AdvisorError::Template(format!("unsupported template version {}", self.version)));
        }
        let lang = &self.language;
        if lang.correct.is_empty() {
            return Err(AdvisorError::EmptyTemplateBank("correct"));
        }
        if lang.incorrect.is_empty() {
            return Err(AdvisorError::EmptyTemplateBank("incorrect"));
        }
        if !lang.correct.iter().any(|t| t.cites == Citation::ShortestPath) {
            return Err(AdvisorError::Template("no shortest-path template".into()));
        }
        for t in &lang.correct {
            if !t.text.contains("{direction}") {
                return Err(AdvisorError::Template(format!("missing {{direction}} in '{}'", t.text)));
            }
            match t.cites {
                Citation::ShortestPath => {}
                Citation::Construction | Citation::Crash => {
                    if !t.text.contains("{cause}") {
                        return Err(AdvisorError::Template(format!("missing {{cause}} in '{}'", t.text)));
                    }
                    let kind = if t.cites == Citation::Crash { ObstacleKind::Crash } else { ObstacleKind::Construction };
                    if lang.causes.get(&kind).is_none_or(|c| c.is_empty()) {
                        return Err(AdvisorError::EmptyTemplateBank("cause"));
                    }
                }
                Citation::Herring(_) => {
                    return Err(AdvisorError::Template("correct template cites a red herring".into()));
                }
            }
        }
        for t in &lang.incorrect {
            if !t.contains("{direction}") || !t.contains("{herring}") {
                return Err(AdvisorError::Template(format!("incorrect template '{t}' lacks a slot")));
            }
        }
        for h in RedHerring::ALL {
            if lang.herrings.get(&h).is_none_or(|p| p.is_empty()) {
                return Err(AdvisorError::Template(format!("no phrases for {h:?}")));
            }
        }
        self.tree.validate()?;
        self.brightness.validate()
    }
}

impl TreeTemplate {
    pub fn node(&self, id: u32) -> Option<&TreeTemplateNode> {
        self.nodes.iter().find(|n| n.id() == id)
    }

    /// Strict binary tree rooted at node 0 with every node reachable once.
    pub fn validate(&self) -> Result<(), AdvisorError> {
        let err = |m: String| AdvisorError::Template(format!("tree: {m}"));
        let ids: BTreeSet<u32> = self.nodes.iter().map(TreeTemplateNode::id).collect();
        if ids.len() != self.nodes.len() {
            return Err(err("duplicate node ids".into()));
        }
        if !ids.contains(&0) {
            return Err(err("missing root node 0".into()));
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(err(format!("node {id} reached twice")));
            }
            match self.node(id) {
                Some(TreeTemplateNode::Decision { if_true, if_false, .. }) => {
                    stack.push(*if_true);
                    stack.push(*if_false);
                }
                Some(TreeTemplateNode::Leaf { .. }) => {}
                None => return Err(err(format!("dangling child {id}"))),
            }
        }
        if seen.len() != self.nodes.len() {
            return Err(err("unreachable nodes".into()));
        }
        Ok(())
    }

    pub fn decision_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeTemplateNode::Decision { .. })).count()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.decision_count()
    }
}
