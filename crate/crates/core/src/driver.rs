//! Brownian driving functions on a uniform time grid.
//!
//! A driver stores the per-step increments sqrt(kappa) * dB of the Loewner
//! driving process. Increment k is drawn from a generator keyed on
//! `(seed, k)`, so a path is reproducible bit-exactly from its parameters
//! and any sub-range can be regenerated independently.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    pub kappa: f64,
    pub dt: f64,
    pub seed: u64,
    /// sqrt(kappa) * dB per step, dB ~ Normal(0, dt).
    increments: Vec<f64>,
}

impl DriverPath {
    /// Samples a driver for `round(total_time / dt)` steps.
    pub fn sample(kappa: f64, total_time: f64, dt: f64, seed: u64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(LabError::Domain(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(dt.is_finite() && dt > 0.0 && total_time.is_finite() && total_time > 0.0) {
            return Err(LabError::Domain(format!(
                "need positive finite total_time and dt, got {total_time}, {dt}"
            )));
        }
        let n_steps = (total_time / dt).round() as usize;
        if n_steps == 0 {
            return Err(LabError::Domain("total_time shorter than one step".into()));
        }
        let scale = (kappa * dt).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let increments = (0..n_steps)
            .map(|k| {
                // Key the generator on the step index: increment k does not
                // depend on how many increments were drawn before it.
                rng.set_stream(k as u64);
                rng.set_word_pos(0);
                let g: f64 = StandardNormal.sample(&mut rng);
                scale * g
            })
            .collect();
        Ok(DriverPath {
            kappa,
            dt,
            seed,
            increments,
        })
    }

    /// Builds a driver directly from increments (used by refinement tests).
    pub fn from_increments(kappa: f64, dt: f64, seed: u64, increments: Vec<f64>) -> Self {
        DriverPath {
            kappa,
            dt,
            seed,
            increments,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Number of steps covering `t`, erroring past the horizon.
    pub fn steps_for(&self, t: f64) -> Result<usize> {
        let n = (t / self.dt).round() as usize;
        if n > self.increments.len() {
            return Err(LabError::Domain(format!(
                "t = {t} beyond driver horizon {}",
                self.total_time()
            )));
        }
        Ok(n)
    }

    /// Coarsens the path by summing pairs of increments: the same Brownian
    /// path on a grid twice as coarse. Requires an even step count.
    pub fn coarsen(&self) -> Result<DriverPath> {
        if !self.increments.len().is_multiple_of(2) {
            return Err(LabError::Domain(
                "coarsening requires an even number of steps".into(),
            ));
        }
        let increments = self
            .increments
            .chunks_exact(2)
            .map(|p| p[0] + p[1])
            .collect();
        Ok(DriverPath {
            kappa: self.kappa,
            dt: 2.0 * self.dt,
            seed: self.seed,
            increments,
        })
    }

    /// Driver of the inverse flow: increments reversed in time and negated.
    /// Running the forward flow with this driver inverts the reverse flow
    /// with the original one step by step.
    pub fn time_reversed_negated(&self) -> DriverPath {
        let increments = self.increments.iter().rev().map(|d| -d).collect();
        DriverPath {
            kappa: self.kappa,
            dt: self.dt,
            seed: self.seed,
            increments,
        }
    }
}
