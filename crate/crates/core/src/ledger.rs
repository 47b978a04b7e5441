//! Per-modality interaction tallies and the negative-interaction softmax that
//! turns them into sampling distributions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::Modality;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("probability {0} is negative or not finite")]
    BadEntry(f64),
    #[error("probabilities sum to {0}, not 1")]
    BadSum(f64),
}

/// Probabilities over (Language, FeatureMap, DecisionTree).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ModalityDistribution {
    p: [f64; 3],
}

impl ModalityDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(p: [f64; 3]) -> Result<Self, DistributionError> {
        if let Some(&bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(DistributionError::BadEntry(bad));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(Self { p })
    }

    pub fn uniform() -> Self {
        Self { p: [1.0 / 3.0; 3] }
    }

    /// All mass on one modality.
    pub fn point(m: Modality) -> Self {
        let mut p = [0.0; 3];
        p[m.index()] = 1.0;
        Self { p }
    }

    pub fn probs(&self) -> [f64; 3] {
        self.p
    }

    pub fn get(&self, m: Modality) -> f64 {
        self.p[m.index()]
    }

    /// Inverse CDF over the fixed modality order; `u` in [0, 1).
    pub fn sample_with(&self, u: f64) -> Modality {
        let mut acc = 0.0;
        for (i, &p) in self.p.iter().enumerate() {
            acc += p;
            if u < acc && p > 0.0 {
                return Modality::ALL[i];
            }
        }
        // Rounding left u above the final cumulative sum.
        let last = self.p.iter().rposition(|&p| p > 0.0).unwrap_or(2);
        Modality::ALL[last]
    }

    pub fn l1(&self, other: &Self) -> f64 {
        self.p.iter().zip(other.p.iter()).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl TryFrom<[f64; 3]> for ModalityDistribution {
    type Error = DistributionError;

    fn try_from(p: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<ModalityDistribution> for [f64; 3] {
    fn from(d: ModalityDistribution) -> Self {
        d.p
    }
}

/// Totals, positives and negatives per modality. `x = x_plus + x_minus`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCounts {
    pub x: [u32; 3],
    pub x_plus: [u32; 3],
    pub x_minus: [u32; 3],
}

impl ChannelCounts {
    pub fn record(mut self, modality: Modality, positive: bool) -> Self {
        let i = modality.index();
        self.x[i] += 1;
        if positive {
            self.x_plus[i] += 1;
        } else {
            self.x_minus[i] += 1;
        }
        self
    }

    pub fn is_consistent(&self) -> bool {
        (0..3).all(|i| self.x[i] == self.x_plus[i] + self.x_minus[i])
    }

    pub fn total(&self) -> u32 {
        self.x.iter().sum()
    }
}

pub fn record_feedback(counts: ChannelCounts, modality: Modality, positive: bool) -> ChannelCounts {
    counts.record(modality, positive)
}

pub fn record_performance(counts: ChannelCounts, modality: Modality, chose_optimal: bool) -> ChannelCounts {
    counts.record(modality, chose_optimal)
}

pub fn softmax(v: [f64; 3]) -> [f64; 3] {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = v.map(|x| (x - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

/// `softmax(-(x_minus * x / max(x_plus, 1)) / K)` where `K` counts the
/// modalities with any negative interaction. Uniform when `K = 0`.
pub fn negative_distribution(counts: &ChannelCounts) -> ModalityDistribution {
    let k = counts.x_minus.iter().filter(|&&n| n > 0).count();
    if k == 0 {
        return ModalityDistribution::uniform();
    }
    let v: [f64; 3] = std::array::from_fn(|i| {
        let ratio = f64::from(counts.x[i]) / f64::from(counts.x_plus[i].max(1));
        -(f64::from(counts.x_minus[i]) * ratio) / k as f64
    });
    ModalityDistribution { p: softmax(v) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_examples() {
        let c = record_feedback(ChannelCounts::default(), Modality::Language, true);
        assert_eq!(c.x, [1, 0, 0]);
        assert_eq!(c.x_plus, [1, 0, 0]);
        let c = record_feedback(c, Modality::DecisionTree, false);
        assert_eq!(c.x_minus, [0, 0, 1]);
        let c = record_performance(ChannelCounts::default(), Modality::FeatureMap, false);
        assert_eq!(c.x_minus, [0, 1, 0]);
        assert!(c.is_consistent());
    }

    #[test]
    fn zero_negatives_is_uniform() {
        let c = ChannelCounts { x: [4, 2, 0], x_plus: [4, 2, 0], x_minus: [0; 3] };
        assert_eq!(negative_distribution(&c), ModalityDistribution::uniform());
    }

    #[test]
    fn clamped_denominator_penalizes_all_negative_modality() {
        let c = ChannelCounts { x: [5, 5, 5], x_plus: [0, 5, 5], x_minus: [5, 0, 0] };
        let p = negative_distribution(&c).probs();
        assert!(p[0] < p[1] && p[0] < p[2]);
    }

    #[test]
    fn sampler_skips_zero_mass() {
        let d = ModalityDistribution::new([0.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.sample_with(0.0), Modality::FeatureMap);
        assert_eq!(d.sample_with(0.999_999_999), Modality::FeatureMap);
        let d = ModalityDistribution::new([0.5, 0.5, 0.0]).unwrap();
        assert_eq!(d.sample_with(1.0), Modality::FeatureMap);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(ModalityDistribution::new([0.5, 0.5, 0.5]).is_err());
        assert!(ModalityDistribution::new([1.5, -0.5, 0.0]).is_err());
        assert!(serde_json::from_str::<ModalityDistribution>("[0.2,0.2,0.2]").is_err());
        let d: ModalityDistribution = serde_json::from_str("[0.2,0.3,0.5]").unwrap();
        assert_eq!(d.probs(), [0.2, 0.3, 0.5]);
    }
}
