//! One-sided paired permutation (sign-flip) test.

use rand::Rng;
use serde::Serialize;

use crate::seeding::rng_from_seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("paired sample is empty")]
    EmptySample,

    #[error("treatment and control lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("exact enumeration is limited to 30 pairs, got max_exact_n = {0}")]
    ExactTooLarge(usize),

    #[error("Monte Carlo mode needs at least one resample")]
    ZeroResamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pairs: Vec<(f64, f64)>,
    pub label: String,
}

impl PairedSample {
    pub fn new(label: impl Into<String>, pairs: Vec<(f64, f64)>) -> Result<Self, StatsError> {
        if pairs.is_empty() {
            return Err(StatsError::EmptySample);
        }
        Ok(Self {
            pairs,
            label: label.into(),
        })
    }

    pub fn from_columns(
        label: impl Into<String>,
        treatment: &[f64],
        control: &[f64],
    ) -> Result<Self, StatsError> {
        if treatment.len() != control.len() {
            return Err(StatsError::LengthMismatch(treatment.len(), control.len()));
        }
        Self::new(
            label,
            treatment
                .iter()
                .copied()
                .zip(control.iter().copied())
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn differences(&self) -> Vec<f64> {
        self.pairs.iter().map(|(t, c)| t - c).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Treatment exceeds control.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationConfig {
    pub alternative: Alternative,
    /// Enumerate all sign flips up to this many pairs.
    pub max_exact_n: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl PermutationConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            alternative: Alternative::Greater,
            max_exact_n: 20,
            resamples: 100_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationResult {
    pub p_value: f64,
    /// Mean of treatment minus control.
    pub statistic: f64,
    pub n: usize,
    pub mode: TestMode,
}

/// Tests whether treatment exceeds control on average.
///
/// The null distribution flips the sign of each paired difference
/// independently. Up to `max_exact_n` pairs all `2^n` flips are enumerated;
/// beyond that `resamples` random flips are drawn and the observed labelling
/// is counted once more, so `p >= 1 / (resamples + 1)`. Flipped statistics
/// equal to the observed one (within rounding) count as at least as extreme.
pub fn paired_permutation_test(
    sample: &PairedSample,
    config: &PermutationConfig,
) -> Result<PermutationResult, StatsError> {
    let Alternative::Greater = config.alternative;
    let diffs = sample.differences();
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    let observed: f64 = diffs.iter().sum();
    // Sums of the same magnitudes in different sign patterns can drift by a
    // few ulps; anything within that band is a tie.
    let scale: f64 = diffs.iter().map(|d| d.abs()).sum();
    let floor = observed - scale * 1e-12;

    let (p_value, mode) = if n <= config.max_exact_n {
        if config.max_exact_n > 30 {
            return Err(StatsError::ExactTooLarge(config.max_exact_n));
        }
        let total = 1u64 << n;
        let hits = (0..total)
            .filter(|mask| flipped_sum(&diffs, |i| mask >> i & 1 == 1) >= floor)
            .count();
        (hits as f64 / total as f64, TestMode::Exact)
    } else {
        if config.resamples == 0 {
            return Err(StatsError::ZeroResamples);
        }
        let mut rng = rng_from_seed(config.seed);
        let mut flips = vec![false; n];
        let mut hits = 1usize;
        for _ in 0..config.resamples {
            for f in flips.iter_mut() {
                *f = rng.random();
            }
            if flipped_sum(&diffs, |i| flips[i]) >= floor {
                hits += 1;
            }
        }
        (
            hits as f64 / (config.resamples + 1) as f64,
            TestMode::MonteCarlo,
        )
    };

    Ok(PermutationResult {
        p_value,
        statistic: observed / n as f64,
        n,
        mode,
    })
}

fn flipped_sum(diffs: &[f64], flip: impl Fn(usize) -> bool) -> f64 {
    diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| if flip(i) { -d } else { d })
        .sum()
}

/// Strict `p < alpha`.
pub fn significance_flag(p: f64, alpha: f64) -> bool {
    p < alpha
}
