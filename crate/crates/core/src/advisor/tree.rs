//! Decision-tree explanations: a fixed tree per variant with one highlighted
//! root-to-leaf path ending at the suggested action.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::templates::{TreeTemplate, TreeTemplateNode};
use super::{AdvisorError, RedHerring};
use crate::world::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeVariant {
    PopulationTree,
    PersonalizationTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Decision,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_id: u32,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Direction>,
    /// Set on highlighted decision nodes: which branch the path takes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_value: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub herring: Option<RedHerring>,
    pub highlighted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub if_true: Option<Box<TreeNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub if_false: Option<Box<TreeNode>>,
}

impl TreeNode {
    pub fn children(&self) -> impl Iterator<Item = &TreeNode> {
        self.if_true.iter().chain(self.if_false.iter()).map(|b| b.as_ref())
    }

    pub fn count(&self) -> (usize, usize) {
        match self.kind {
            NodeKind::Leaf => (0, 1),
            NodeKind::Decision => self.children().fold((1, 0), |(d, l), c| {
                let (cd, cl) = c.count();
                (d + cd, l + cl)
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTreeExplanation {
    pub root: TreeNode,
    pub variant: TreeVariant,
}

impl DecisionTreeExplanation {
    pub fn highlighted_path(&self) -> Vec<&TreeNode> {
        let mut path = Vec::new();
        let mut node = Some(&self.root).filter(|n| n.highlighted);
        while let Some(n) = node {
            path.push(n);
            node = n.children().find(|c| c.highlighted);
        }
        path
    }

    pub fn highlighted_action(&self) -> Option<Direction> {
        self.highlighted_path().last().and_then(|n| n.action)
    }

    pub fn herring_on_path(&self) -> Option<RedHerring> {
        self.highlighted_path().iter().find_map(|n| n.herring)
    }

    /// (decision nodes, leaves)
    pub fn counts(&self) -> (usize, usize) {
        self.root.count()
    }

    /// The tree without herring annotations.
    pub fn participant_view(&self) -> serde_json::Value {
        fn strip(v: &mut serde_json::Value) {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("herring");
                for key in ["if_true", "if_false"] {
                    if let Some(child) = obj.get_mut(key) {
                        strip(child);
                    }
                }
            }
        }
        let mut v = serde_json::to_value(self).expect("tree serializes");
        if let Some(root) = v.get_mut("root") {
            strip(root);
        }
        v
    }
}

struct PathStep {
    id: u32,
    took_true: Option<bool>,
}

fn paths_to(template: &TreeTemplate, action: Direction) -> Vec<(Vec<PathStep>, usize)> {
    fn walk(
        t: &TreeTemplate,
        id: u32,
        action: Direction,
        prefix: &mut Vec<(u32, bool)>,
        herrings: usize,
        out: &mut Vec<(Vec<PathStep>, usize)>,
    ) {
        match t.node(id) {
            Some(TreeTemplateNode::Leaf { action: a, .. }) if *a == action => {
                let mut steps: Vec<PathStep> =
                    prefix.iter().map(|&(id, took)| PathStep { id, took_true: Some(took) }).collect();
                steps.push(PathStep { id, took_true: None });
                out.push((steps, herrings));
            }
            Some(TreeTemplateNode::Decision { herring, if_true, if_false, .. }) => {
                let h = herrings + usize::from(herring.is_some());
                for (child, took) in [(*if_true, true), (*if_false, false)] {
                    prefix.push((id, took));
                    walk(t, child, action, prefix, h, out);
                    prefix.pop();
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(template, 0, action, &mut Vec::new(), 0, &mut out);
    out
}

fn build(template: &TreeTemplate, id: u32, path: &[PathStep]) -> TreeNode {
    let step = path.iter().find(|s| s.id == id);
    match template.node(id).expect("validated template") {
        TreeTemplateNode::Leaf { action, .. } => TreeNode {
            node_id: id,
            kind: NodeKind::Leaf,
            predicate_label: None,
            action: Some(*action),
            truth_value: None,
            herring: None,
            highlighted: step.is_some(),
            if_true: None,
            if_false: None,
        },
        TreeTemplateNode::Decision { predicate, herring, if_true, if_false, .. } => TreeNode {
            node_id: id,
            kind: NodeKind::Decision,
            predicate_label: Some(predicate.clone()),
            action: None,
            truth_value: step.and_then(|s| s.took_true),
            herring: *herring,
            highlighted: step.is_some(),
            if_true: Some(Box::new(build(template, *if_true, path))),
            if_false: Some(Box::new(build(template, *if_false, path))),
        },
    }
}

/// Highlights a uniformly chosen path to a `suggested` leaf that crosses no
/// herring node when `correct`, exactly one otherwise.
pub fn render_tree<R: Rng + ?Sized>(
    correct: bool,
    suggested: Direction,
    template: &TreeTemplate,
    rng: &mut R,
) -> Result<DecisionTreeExplanation, AdvisorError> {
    let want = usize::from(!correct);
    let candidates: Vec<Vec<PathStep>> =
        paths_to(template, suggested).into_iter().filter(|(_, h)| *h == want).map(|(p, _)| p).collect();
    let path = candidates.choose(rng).ok_or_else(|| {
        AdvisorError::Template(format!(
            "{:?} has no {} path to a {suggested} leaf",
            template.variant,
            if correct { "herring-free" } else { "single-herring" }
        ))
    })?;
    Ok(DecisionTreeExplanation { root: build(template, 0, path), variant: template.variant })
}
