//! Explanation-selection strategies.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::Modality;
use crate::ledger::ModalityDistribution;
use crate::world::Direction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("prediction must be 3 finite non-negative values summing to 1, got {0:?}")]
    BadPrediction([f64; 3]),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
}

/// Serialized as its label, e.g. `"balanced"` or `"fixed-language"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Balanced,
    PreferenceMax,
    PerformanceMax,
    Random,
    FixedModality(Modality),
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Balanced,
        Strategy::PreferenceMax,
        Strategy::PerformanceMax,
        Strategy::Random,
        Strategy::FixedModality(Modality::Language),
        Strategy::FixedModality(Modality::FeatureMap),
        Strategy::FixedModality(Modality::DecisionTree),
    ];

    pub fn label(self) -> String {
        match self {
            Strategy::Balanced => "balanced".into(),
            Strategy::PreferenceMax => "preference".into(),
            Strategy::PerformanceMax => "performance".into(),
            Strategy::Random => "random".into(),
            Strategy::FixedModality(m) => format!("fixed-{}", m.label()),
        }
    }

    /// Whether this strategy reads the predictor's output.
    pub fn needs_model(self) -> bool {
        self == Strategy::Balanced
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.label()
    }
}

impl TryFrom<String> for Strategy {
    type Error = PolicyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Strategy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "balanced" => Ok(Strategy::Balanced),
            "preference" | "preference-max" | "preferencemax" | "pref" => Ok(Strategy::PreferenceMax),
            "performance" | "performance-max" | "performancemax" | "perf" => Ok(Strategy::PerformanceMax),
            "random" => Ok(Strategy::Random),
            other => {
                let m = other.strip_prefix("fixed-").unwrap_or(other);
                m.parse::<Modality>().map(Strategy::FixedModality).map_err(|_| PolicyError::UnknownStrategy(s.into()))
            }
        }
    }
}

pub fn blend(
    d_p: &ModalityDistribution,
    d_t: &ModalityDistribution,
    lambda: f64,
) -> Result<ModalityDistribution, PolicyError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PolicyError::LambdaOutOfRange(lambda));
    }
    if lambda == 1.0 {
        return Ok(*d_p);
    }
    if lambda == 0.0 {
        return Ok(*d_t);
    }
    let (p, t) = (d_p.probs(), d_t.probs());
    let b: [f64; 3] = std::array::from_fn(|i| lambda * p[i] + (1.0 - lambda) * t[i]);
    Ok(ModalityDistribution::new(b).expect("convex combination of distributions"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub predicted_direction: Direction,
    pub predicted_prob: f64,
    /// More than one direction shared the top probability.
    pub tied: bool,
}

/// `p*` when the most likely predicted move is optimal, else `1 - p*`.
pub fn compute_lambda(prediction: &[f64; 3], optimal: Direction) -> Result<LambdaChoice, PolicyError> {
    let sum: f64 = prediction.iter().sum();
    if prediction.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(PolicyError::BadPrediction(*prediction));
    }
    let mut best = 0;
    for i in 1..3 {
        if prediction[i] > prediction[best] {
            best = i;
        }
    }
    let p_star = prediction[best];
    let tied = prediction.iter().filter(|&&p| p == p_star).count() > 1;
    let predicted_direction = Direction::ALL[best];
    let lambda = if predicted_direction == optimal { p_star } else { 1.0 - p_star };
    Ok(LambdaChoice { lambda: lambda.clamp(0.0, 1.0), predicted_direction, predicted_prob: p_star, tied })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendTrace {
    pub strategy: Strategy,
    pub d_p: ModalityDistribution,
    pub d_t: ModalityDistribution,
    pub d_b: ModalityDistribution,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_direction: Option<Direction>,
    #[serde(default)]
    pub tied: bool,
    /// The uniform draw consumed for this selection.
    pub draw: f64,
    pub chosen: Modality,
}

impl BlendTrace {
    pub fn with_lambda_choice(mut self, choice: &LambdaChoice, optimal: Direction) -> Self {
        self.predicted_direction = Some(choice.predicted_direction);
        self.predicted_prob = Some(choice.predicted_prob);
        self.optimal_direction = Some(optimal);
        self.tied = choice.tied;
        self
    }
}

/// Distribution `strategy` samples from.
pub fn strategy_distribution(
    strategy: Strategy,
    d_p: &ModalityDistribution,
    d_t: &ModalityDistribution,
    lambda: f64,
) -> Result<ModalityDistribution, PolicyError> {
    Ok(match strategy {
        Strategy::Balanced => blend(d_p, d_t, lambda)?,
        Strategy::PreferenceMax => *d_p,
        Strategy::PerformanceMax => *d_t,
        Strategy::Random => ModalityDistribution::uniform(),
        Strategy::FixedModality(m) => ModalityDistribution::point(m),
    })
}

/// Draws exactly one uniform from `rng` whatever the strategy, so streams
/// stay aligned across conditions.
pub fn select_modality<R: Rng + ?Sized>(
    strategy: Strategy,
    d_p: &ModalityDistribution,
    d_t: &ModalityDistribution,
    lambda: f64,
    rng: &mut R,
) -> Result<(Modality, BlendTrace), PolicyError> {
    let d_b = blend(d_p, d_t, lambda)?;
    let dist = strategy_distribution(strategy, d_p, d_t, lambda)?;
    let draw: f64 = rng.random();
    let chosen = dist.sample_with(draw);
    let trace = BlendTrace {
        strategy,
        d_p: *d_p,
        d_t: *d_t,
        d_b,
        lambda,
        predicted_direction: None,
        predicted_prob: None,
        optimal_direction: None,
        tied: false,
        draw,
        chosen,
    };
    Ok((chosen, trace))
}

/// Pearson chi-square statistic of `counts` against `dist`, skipping cells
/// with zero expected mass.
pub fn chi_square(counts: &[u64; 3], dist: &ModalityDistribution) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(dist.probs())
        .filter(|(_, p)| *p > 0.0)
        .map(|(&c, p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

/// Upper 1% point of chi-square with 2 degrees of freedom: `-2 ln 0.01`.
pub fn chi_square_df2_crit_01() -> f64 {
    -2.0 * 0.01f64.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn dist(p: [f64; 3]) -> ModalityDistribution {
        ModalityDistribution::new(p).unwrap()
    }

    #[test]
    fn blend_examples() {
        let p = dist([0.6, 0.3, 0.1]);
        let t = dist([0.2, 0.2, 0.6]);
        assert_eq!(blend(&p, &t, 1.0).unwrap(), p);
        assert_eq!(blend(&p, &t, 0.0).unwrap(), t);
        let b = blend(&p, &t, 0.5).unwrap().probs();
        for (x, y) in b.iter().zip([0.4, 0.25, 0.35]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(blend(&p, &t, 1.5), Err(PolicyError::LambdaOutOfRange(1.5)));
        assert!(blend(&p, &t, -0.1).is_err());
    }

    #[test]
    fn lambda_examples() {
        let pred = [0.8, 0.1, 0.1];
        assert!((compute_lambda(&pred, Direction::Left).unwrap().lambda - 0.8).abs() < 1e-12);
        assert!((compute_lambda(&pred, Direction::Right).unwrap().lambda - 0.2).abs() < 1e-12);
        let u = [1.0 / 3.0; 3];
        let c = compute_lambda(&u, Direction::Left).unwrap();
        assert!(c.tied);
        assert_eq!(c.predicted_direction, Direction::Left);
        assert!((c.lambda - 1.0 / 3.0).abs() < 1e-12);
        assert!(compute_lambda(&[0.5, 0.5, 0.5], Direction::Left).is_err());
    }

    #[test]
    fn fixed_and_degenerate_strategies() {
        let mut r = stream(1, Stream::Policy);
        let u = ModalityDistribution::uniform();
        for _ in 0..200 {
            let (m, _) = select_modality(Strategy::FixedModality(Modality::Language), &u, &u, 0.5, &mut r).unwrap();
            assert_eq!(m, Modality::Language);
            let point = ModalityDistribution::point(Modality::Language);
            let (m, _) = select_modality(Strategy::Balanced, &point, &point, 0.3, &mut r).unwrap();
            assert_eq!(m, Modality::Language);
        }
    }

    #[test]
    fn random_is_uniform() {
        let mut r = stream(2, Stream::Policy);
        let u = ModalityDistribution::uniform();
        let mut counts = [0u64; 3];
        for _ in 0..30_000 {
            counts[select_modality(Strategy::Random, &u, &u, 0.5, &mut r).unwrap().0.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn strategy_labels_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.label().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("tree".parse::<Strategy>().unwrap(), Strategy::FixedModality(Modality::DecisionTree));
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn chi_square_critical_value() {
        assert!((chi_square_df2_crit_01() - 9.2103).abs() < 1e-4);
    }
}
