//! Synthetic participants for headless runs.
//!
//! Each profile has a per-modality chance of judging a suggestion's
//! correctness right, a per-modality appetite for more explanations of that
//! kind, and a log-normal consideration time. Nothing is learned within a
//! session.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{Modality, Suggestion};
use crate::rng::{self, derive_seed, Stream};
use crate::world::Direction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimUserError {
    #[error("unknown population preset '{0}'")]
    UnknownPreset(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid population parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimUserProfile {
    pub user_id: String,
    /// Indexed (Language, FeatureMap, DecisionTree).
    pub detect_rate: [f64; 3],
    pub pref_weight: [f64; 3],
    pub feedback_noise: f64,
    /// Median consideration time per modality, milliseconds.
    pub consider_ms: [f64; 3],
    pub consider_sigma: f64,
    pub seed: u64,
}

impl SimUserProfile {
    pub fn validate(&self) -> Result<(), SimUserError> {
        let bad = |m: &str| Err(SimUserError::InvalidProfile(m.into()));
        if !self.detect_rate.iter().all(|d| (0.0..=1.0).contains(d)) {
            return bad("detect rates must lie in [0, 1]");
        }
        if self.pref_weight.iter().any(|w| !w.is_finite() || *w < 0.0) || self.pref_weight.iter().all(|w| *w <= 0.0) {
            return bad("preference weights must be non-negative with one positive");
        }
        if !(0.0..=1.0).contains(&self.feedback_noise) {
            return bad("feedback noise must lie in [0, 1]");
        }
        if self.consider_ms.iter().any(|m| !m.is_finite() || *m <= 0.0) || !(self.consider_sigma >= 0.0) {
            return bad("consideration times must be positive");
        }
        Ok(())
    }

    /// Probability of a "yes, more like this" answer before noise.
    pub fn p_yes(&self, m: Modality) -> f64 {
        let max = self.pref_weight.iter().copied().fold(0.0, f64::max);
        self.pref_weight[m.index()] / max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimDecision {
    pub chosen: Direction,
    pub believed_correct: bool,
    pub feedback: bool,
    pub consideration_ms: u64,
}

/// The move a participant makes when they think the agent is wrong: the
/// opposite turn if it is offered, the remaining road if only two are, and a
/// uniform pick among the rest otherwise.
pub fn counter_move<R: Rng + ?Sized>(suggested: Direction, options: &[Direction], rng: &mut R) -> Direction {
    if let Some(opp) = suggested.opposite().filter(|o| options.contains(o)) {
        return opp;
    }
    let others: Vec<Direction> = options.iter().copied().filter(|&d| d != suggested).collect();
    others.choose(rng).copied().unwrap_or(suggested)
}

/// Draw order is fixed: detection, counter-move (only when needed),
/// feedback, noise, time.
pub fn decide<R: Rng + ?Sized>(
    profile: &SimUserProfile,
    suggestion: &Suggestion,
    options: &[Direction],
    rng: &mut R,
) -> SimDecision {
    let m = suggestion.modality.index();
    let detected = rng.random_bool(profile.detect_rate[m].clamp(0.0, 1.0));
    let believed_correct = if detected { suggestion.is_correct } else { !suggestion.is_correct };
    let chosen = if believed_correct || options.len() < 2 {
        suggestion.direction
    } else {
        counter_move(suggestion.direction, options, rng)
    };
    let mut feedback = rng.random_bool(profile.p_yes(suggestion.modality).clamp(0.0, 1.0));
    if rng.random_bool(profile.feedback_noise) {
        feedback = !feedback;
    }
    let consideration_ms = LogNormal::new(profile.consider_ms[m].ln(), profile.consider_sigma)
        .map(|d| d.sample(rng))
        .unwrap_or(profile.consider_ms[m])
        .round()
        .max(1.0) as u64;
    SimDecision { chosen, believed_correct, feedback, consideration_ms }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PopulationPreset {
    PaperLike,
    Uniform,
    TreeLover,
}

impl PopulationPreset {
    pub const ALL: [PopulationPreset; 3] = [PopulationPreset::PaperLike, PopulationPreset::Uniform, PopulationPreset::TreeLover];

    pub fn label(self) -> &'static str {
        match self {
            PopulationPreset::PaperLike => "paper-like",
            PopulationPreset::Uniform => "uniform",
            PopulationPreset::TreeLover => "tree-lover",
        }
    }
}

impl fmt::Display for PopulationPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PopulationPreset {
    type Err = SimUserError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "paperlike" | "paper" => Ok(PopulationPreset::PaperLike),
            "uniform" => Ok(PopulationPreset::Uniform),
            "treelover" => Ok(PopulationPreset::TreeLover),
            _ => Err(SimUserError::UnknownPreset(s.into())),
        }
    }
}

/// Generating parameters for a population. Detection rates are drawn as
/// `mean + N(0, detect_sd)` clipped to [0, 1]; preference weights as
/// `mean * Gamma(pref_shape, 1 / pref_shape)` so their expectation is the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationParams {
    pub detect_mean: [f64; 3],
    pub detect_sd: f64,
    pub pref_mean: [f64; 3],
    /// `None` gives every profile exactly `pref_mean`.
    pub pref_shape: Option<f64>,
    /// Force the largest sampled weight onto this modality.
    pub favorite: Option<Modality>,
    pub feedback_noise: f64,
    pub consider_ms: [f64; 3],
    pub consider_sigma: f64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams::preset(PopulationPreset::PaperLike)
    }
}

impl PopulationParams {
    pub fn preset(p: PopulationPreset) -> Self {
        let base = PopulationParams {
            detect_mean: [0.90, 0.60, 0.75],
            detect_sd: 0.05,
            pref_mean: [1.0, 0.6, 0.35],
            pref_shape: Some(1.0),
            favorite: None,
            feedback_noise: 0.1,
            consider_ms: [3500.0, 3500.0, 5500.0],
            consider_sigma: 0.35,
        };
        match p {
            PopulationPreset::PaperLike => base,
            PopulationPreset::Uniform => PopulationParams {
                detect_mean: [0.75; 3],
                pref_mean: [1.0; 3],
                pref_shape: None,
                consider_ms: [4000.0; 3],
                ..base
            },
            PopulationPreset::TreeLover => PopulationParams {
                pref_mean: [0.35, 0.6, 1.0],
                favorite: Some(Modality::DecisionTree),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), SimUserError> {
        let bad = |m: &str| Err(SimUserError::InvalidParams(m.into()));
        if !self.detect_mean.iter().all(|d| (0.0..=1.0).contains(d)) || !(self.detect_sd >= 0.0) {
            return bad("detection means must lie in [0, 1] with a non-negative spread");
        }
        if self.pref_mean.iter().any(|w| *w < 0.0) || self.pref_mean.iter().all(|w| *w <= 0.0) {
            return bad("preference means must be non-negative with one positive");
        }
        if self.pref_shape.is_some_and(|s| !(s > 0.0)) {
            return bad("preference shape must be positive");
        }
        Ok(())
    }

    pub fn sample_profile<R: Rng + ?Sized>(&self, user_id: String, seed: u64, rng: &mut R) -> SimUserProfile {
        let jitter = Normal::new(0.0, self.detect_sd).expect("validated spread");
        let detect_rate = self.detect_mean.map(|m| (m + jitter.sample(rng)).clamp(0.0, 1.0));
        let mut pref_weight = match self.pref_shape {
            Some(shape) => {
                let g = Gamma::new(shape, 1.0 / shape).expect("validated shape");
                self.pref_mean.map(|m| m * g.sample(rng))
            }
            None => self.pref_mean,
        };
        if let Some(fav) = self.favorite {
            let top = (0..3).fold(0, |b, i| if pref_weight[i] > pref_weight[b] { i } else { b });
            pref_weight.swap(top, fav.index());
        }
        if pref_weight.iter().all(|w| *w <= 0.0) {
            pref_weight = self.pref_mean;
        }
        SimUserProfile {
            user_id,
            detect_rate,
            pref_weight,
            feedback_noise: self.feedback_noise,
            consider_ms: self.consider_ms,
            consider_sigma: self.consider_sigma,
            seed,
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<SimUserProfile>, SimUserError> {
        self.validate()?;
        let mut r = rng::stream(seed, Stream::Population);
        Ok((0..n)
            .map(|i| self.sample_profile(format!("sim-{i:04}"), derive_seed(seed, i as u64), &mut r))
            .collect())
    }
}

pub fn population_preset(p: PopulationPreset, n: usize, seed: u64) -> Vec<SimUserProfile> {
    PopulationParams::preset(p).sample(n, seed).expect("presets are valid")
}
