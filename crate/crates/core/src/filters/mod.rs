//! Online filtering algorithms over an observation stream.
//!
//! Four algorithms share the plumbing in this module: the plain SISR particle
//! filter ([`sisr`]), two Liu-West filters that learn static parameters along
//! the way ([`liu_west`]), and the particle swarm filter that runs one SISR
//! instance per posterior parameter draw ([`swarm`]). Each emits one
//! [`FilterRecord`] per observation.

pub mod liu_west;
pub mod sisr;
pub mod swarm;

use crate::math;
use crate::model::ModelError;
use rand::Rng;
use thiserror::Error;

pub use crate::math::effective_sample_size as ess;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("degenerate particle cloud (all weights zero) at time {time_index}")]
    Degenerate { time_index: usize },
    #[error("degenerate bundle for theta index {theta_index} at time {time_index}")]
    DegenerateBundle { theta_index: usize, time_index: usize },
    #[error("invalid filter configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-step filter output: the conditional evidence estimate
/// log p(y_t | y_{1:t-1}), the filtered state mean E[x_t | y_{1:t}], and the
/// effective sample size of the weighted cloud before any resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRecord {
    pub time_index: usize,
    pub log_cond_evidence: f64,
    pub filter_mean: f64,
    pub ess: f64,
}

/// Weighted latent-state samples at one time step. Log-weights are raw
/// (unnormalized); they reset to zero (weight one) whenever the cloud is
/// resampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub particles: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub time_index: usize,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        math::normalized_weights(&self.log_weights)
    }

    pub fn filter_mean(&self) -> f64 {
        math::weighted_mean(&self.particles, &self.log_weights)
    }

    /// True when every log-weight is exactly the post-resampling reset value.
    pub fn weights_are_reset(&self) -> bool {
        self.log_weights.iter().all(|&lw| lw == 0.0)
    }
}

/// N independent categorical draws from the normalized weights, returned as
/// particle indices.
pub fn multinomial_resample<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Vec<usize> {
    let w = math::normalized_weights(log_weights);
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for wi in &w {
        acc += wi;
        cdf.push(acc);
    }
    // Guard the tail against rounding so the last index stays reachable.
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    (0..log_weights.len())
        .map(|_| {
            let u: f64 = rng.random();
            cdf.partition_point(|&c| c < u).min(log_weights.len() - 1)
        })
        .collect()
}

/// Resample the cloud in place when ess/N drops below `threshold`, resetting
/// all weights. Returns whether resampling happened.
pub(crate) fn maybe_resample<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    pre_resample_ess: f64,
    threshold: f64,
    rng: &mut R,
) -> bool {
    let n = cloud.len() as f64;
    if pre_resample_ess / n >= threshold {
        return false;
    }
    let idx = multinomial_resample(&cloud.log_weights, rng);
    cloud.particles = idx.iter().map(|&i| cloud.particles[i]).collect();
    cloud.log_weights.iter_mut().for_each(|lw| *lw = 0.0);
    true
}
