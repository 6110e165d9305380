//! Synthetic kill matrices and cost profiles with controlled kill-rate spread.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{CostProfile, FaultId, KillMatrix, MrId};
use crate::seeding::{derive_seed, rng_from_seed, SeededRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Parameters of a synthetic campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_mrs: usize,
    pub num_faults: usize,
    pub kill_rate_mean: f64,
    pub kill_rate_sd: f64,
    /// 0 draws every cell independently; 1 makes kills fully nested.
    #[serde(default)]
    pub overlap_bias: f64,
    pub seed: u64,
    /// Seed for the per-MR kill rates only. Two specs sharing a `rate_seed`
    /// describe the same MRs run against different fault sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_seed: Option<u64>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidSpec(msg.to_string()));
        if self.num_mrs == 0 || self.num_faults == 0 {
            return bad("num_mrs and num_faults must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.kill_rate_mean) {
            return bad("kill_rate_mean must lie in [0, 1]");
        }
        if !self.kill_rate_sd.is_finite() || self.kill_rate_sd < 0.0 {
            return bad("kill_rate_sd must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.overlap_bias) {
            return bad("overlap_bias must lie in [0, 1]");
        }
        Ok(())
    }

    /// Per-MR kill probabilities: clipped normal draws.
    pub fn draw_kill_rates(&self) -> Result<Vec<f64>, SynthError> {
        self.validate()?;
        let mut rng = rng_from_seed(derive_seed(self.rate_seed.unwrap_or(self.seed), 0));
        clipped_normal(
            &mut rng,
            self.kill_rate_mean,
            self.kill_rate_sd,
            self.num_mrs,
        )
        .map(|v| v.into_iter().map(|p| p.min(1.0)).collect())
    }

    /// The same spec with both seeds shifted by `offset`.
    pub fn shifted(&self, offset: u64) -> Self {
        Self {
            seed: self.seed.wrapping_add(offset),
            rate_seed: self.rate_seed.map(|s| s.wrapping_add(offset)),
            ..self.clone()
        }
    }
}

fn clipped_normal(
    rng: &mut SeededRng,
    mean: f64,
    sd: f64,
    n: usize,
) -> Result<Vec<f64>, SynthError> {
    if sd == 0.0 {
        return Ok(vec![mean.max(0.0); n]);
    }
    let normal = Normal::new(mean, sd).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok((0..n).map(|_| normal.sample(rng).max(0.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMatrix {
    pub matrix: KillMatrix,
    /// Kill probability drawn for each MR, aligned with `matrix.mrs()`.
    pub kill_rates: Vec<f64>,
}

pub fn mr_names(n: usize) -> Vec<MrId> {
    (1..=n)
        .map(|i| MrId::new(format!("MR{i}")).expect("valid id"))
        .collect()
}

fn fault_names(n: usize) -> Vec<FaultId> {
    let width = n.to_string().len();
    (1..=n)
        .map(|i| FaultId::new(format!("F{i:0width$}")).expect("valid id"))
        .collect()
}

/// Draws a kill matrix.
///
/// Each MR gets a kill probability `p` from the clipped normal. A cell is
/// coupled with probability `overlap_bias`: coupled cells are killed iff the
/// fault sits in the easiest `p` fraction of a shared random fault ranking,
/// so coupled kills of weaker MRs nest inside those of stronger ones. Other
/// cells are independent Bernoulli(`p`) draws.
pub fn gen_kill_matrix(spec: &SynthSpec) -> Result<SyntheticMatrix, SynthError> {
    let kill_rates = spec.draw_kill_rates()?;
    let nf = spec.num_faults;
    let mut rng = rng_from_seed(derive_seed(spec.seed, 1));

    let mut easy: Vec<usize> = (0..nf).collect();
    easy.shuffle(&mut rng);
    let mut rank = vec![0usize; nf];
    for (r, &f) in easy.iter().enumerate() {
        rank[f] = r;
    }

    let table = kill_rates
        .iter()
        .map(|&p| {
            (0..nf)
                .map(|f| {
                    if spec.overlap_bias > 0.0 && rng.random::<f64>() < spec.overlap_bias {
                        (rank[f] as f64) < p * nf as f64
                    } else {
                        rng.random::<f64>() < p
                    }
                })
                .collect()
        })
        .collect();

    let matrix = KillMatrix::from_table(mr_names(spec.num_mrs), fault_names(nf), table)
        .expect("generated dimensions agree");
    Ok(SyntheticMatrix { matrix, kill_rates })
}

/// Per-MR costs drawn from a normal clipped at zero.
pub fn gen_costs(
    mrs: &[MrId],
    mean_seconds: f64,
    sd_seconds: f64,
    seed: u64,
) -> Result<CostProfile, SynthError> {
    if !mean_seconds.is_finite() || mean_seconds <= 0.0 {
        return Err(SynthError::InvalidSpec(
            "mean cost must be positive".to_string(),
        ));
    }
    if !sd_seconds.is_finite() || sd_seconds < 0.0 {
        return Err(SynthError::InvalidSpec(
            "cost sd must be a finite non-negative number".to_string(),
        ));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let costs = clipped_normal(&mut rng, mean_seconds, sd_seconds, mrs.len())?;
    Ok(CostProfile::new(mrs.iter().cloned().zip(costs)).expect("costs are non-negative"))
}
