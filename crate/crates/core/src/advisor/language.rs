//! Sentence explanations filled from authored templates.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::templates::LanguageBank;
use super::{AdvisorError, RedHerring};
use crate::world::{Direction, ObstacleKind};

/// What a sentence gives as its reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Citation {
    ShortestPath,
    Construction,
    Crash,
    Herring(RedHerring),
}

impl Citation {
    pub fn herring(self) -> Option<RedHerring> {
        match self {
            Citation::Herring(h) => Some(h),
            _ => None,
        }
    }
}

impl From<ObstacleKind> for Citation {
    fn from(k: ObstacleKind) -> Self {
        match k {
            ObstacleKind::Construction => Citation::Construction,
            ObstacleKind::Crash => Citation::Crash,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LanguageContext {
    pub direction: Direction,
    /// Obstacle on another offered road, and which road it is on.
    pub cause: Option<(ObstacleKind, Direction)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageExplanation {
    pub text: String,
    /// Correct templates are numbered first, incorrect ones follow.
    pub template_id: u32,
    pub cites: Citation,
}

pub fn render_language<R: Rng + ?Sized>(
    correct: bool,
    ctx: &LanguageContext,
    rng: &mut R,
    bank: &LanguageBank,
) -> Result<LanguageExplanation, AdvisorError> {
    let direction = ctx.direction.phrase();
    if correct {
        if bank.correct.is_empty() {
            return Err(AdvisorError::EmptyTemplateBank("correct"));
        }
        // An obstacle on a rejected road is cited whenever the bank can say so.
        let wanted = ctx.cause.map(|(kind, _)| Citation::from(kind)).filter(|c| bank.correct.iter().any(|t| t.cites == *c));
        let wanted = wanted.unwrap_or(Citation::ShortestPath);
        let pool: Vec<usize> = (0..bank.correct.len()).filter(|&i| bank.correct[i].cites == wanted).collect();
        let &idx = pool.choose(rng).ok_or(AdvisorError::EmptyTemplateBank("shortest-path"))?;
        let template = &bank.correct[idx];
        let mut text = template.text.replace("{direction}", direction);
        if let Some((kind, blocked)) = ctx.cause.filter(|_| wanted != Citation::ShortestPath) {
            let clause = bank
                .causes
                .get(&kind)
                .and_then(|c| c.choose(rng))
                .ok_or(AdvisorError::EmptyTemplateBank("cause"))?;
            text = text.replace("{cause}", &clause.replace("{avoid}", blocked.phrase()));
        }
        Ok(LanguageExplanation { text, template_id: idx as u32, cites: wanted })
    } else {
        if bank.incorrect.is_empty() {
            return Err(AdvisorError::EmptyTemplateBank("incorrect"));
        }
        let herring = *RedHerring::ALL.choose(rng).expect("non-empty");
        let phrase = bank
            .herrings
            .get(&herring)
            .and_then(|p| p.choose(rng))
            .ok_or(AdvisorError::EmptyTemplateBank("herring"))?;
        let j = rng.random_range(0..bank.incorrect.len());
        let text = bank.incorrect[j].replace("{direction}", direction).replace("{herring}", phrase);
        Ok(LanguageExplanation {
            text,
            template_id: (bank.correct.len() + j) as u32,
            cites: Citation::Herring(herring),
        })
    }
}
