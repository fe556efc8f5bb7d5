//! Particle-marginal Metropolis-Hastings: a random-walk MH chain over the
//! unconstrained parameter space whose acceptance ratio uses an unbiased
//! particle-filter estimate of the likelihood in place of the intractable
//! exact value. The estimate averages several independent filter replicates,
//! which keeps the estimator unbiased while reducing its variance.
//!
//! The chain itself is strictly sequential; only the likelihood replicates
//! within one iteration run in parallel, each on an RNG stream derived from
//! (master seed, iteration, replicate index), reduced in replicate order so
//! results do not depend on the parallel schedule.

use crate::filters::sisr;
use crate::math::log_mean_exp;
use crate::model::{
    from_unconstrained, log_jacobian, prior_log_density, sample_prior, to_unconstrained,
    ParameterVector, SvModel, UnconstrainedParameterVector,
};
use crate::seed::{self, chain_instance, pmmh_replicate_instance, FilterRng};
use crate::ssm::{Bootstrap, StateSpaceModel};
use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PmmhError {
    #[error("invalid sampler configuration: {0}")]
    BadConfig(String),
    #[error("no initial state with finite estimated likelihood found in {attempts} attempts")]
    InitializationFailed { attempts: usize },
}

/// Maximum prior redraws when searching for a starting point with finite
/// estimated likelihood.
pub const MAX_INIT_ATTEMPTS: usize = 100;

/// Random-walk proposal and estimator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    /// Symmetric positive-definite covariance of the Gaussian random-walk
    /// proposal on the unconstrained space.
    pub covariance: Matrix4<f64>,
    /// Number of independent filter replicates averaged per likelihood
    /// evaluation (K).
    pub n_filter_replicates: usize,
    /// Particles per filter replicate (N).
    pub n_state_particles: usize,
    pub n_iterations: usize,
    pub resample_threshold: f64,
}

impl ProposalConfig {
    pub fn new(
        covariance: Matrix4<f64>,
        n_filter_replicates: usize,
        n_state_particles: usize,
        n_iterations: usize,
        resample_threshold: f64,
    ) -> Result<Self, PmmhError> {
        let config = ProposalConfig {
            covariance,
            n_filter_replicates,
            n_state_particles,
            n_iterations,
            resample_threshold,
        };
        config.cholesky()?;
        if n_filter_replicates == 0 {
            return Err(PmmhError::BadConfig("n_filter_replicates must be >= 1".into()));
        }
        if n_state_particles == 0 {
            return Err(PmmhError::BadConfig("n_state_particles must be >= 1".into()));
        }
        if !(resample_threshold > 0.0 && resample_threshold <= 1.0) {
            return Err(PmmhError::BadConfig(format!(
                "resample_threshold must lie in (0, 1], got {resample_threshold}"
            )));
        }
        Ok(config)
    }

    /// The default proposal covariance I * 2.38^2 / 4 for the
    /// four-dimensional unconstrained space.
    pub fn default_covariance() -> Matrix4<f64> {
        Matrix4::identity() * (2.38_f64 * 2.38 / 4.0)
    }

    /// An isotropic proposal covariance I * scale, for callers that tune the
    /// random-walk step size with a single number.
    pub fn scaled_identity(scale: f64) -> Matrix4<f64> {
        Matrix4::identity() * scale
    }

    fn cholesky(&self) -> Result<Matrix4<f64>, PmmhError> {
        let sym_err = (self.covariance - self.covariance.transpose()).abs().max();
        if sym_err > 1e-12 {
            return Err(PmmhError::BadConfig(format!(
                "proposal covariance is not symmetric (max asymmetry {sym_err:e})"
            )));
        }
        self.covariance
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| {
                PmmhError::BadConfig("proposal covariance is not positive definite".into())
            })
    }
}

/// Current position of the chain with its cached likelihood estimate. The
/// cache is what makes the sampler pseudo-marginal: the current state's
/// estimate is reused verbatim in every ratio, never recomputed.
#[derive(Debug, Clone, Copy)]
pub struct ChainState {
    pub z: UnconstrainedParameterVector,
    pub cached_avg_loglike: f64,
    pub iteration: usize,
    pub accepted_count: usize,
}

/// Full chain output. `samples[i]`, `accepted[i]` and `avg_loglikes[i]`
/// describe iteration i+1; rejected iterations replicate the previous sample
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcOutput {
    pub samples: Vec<ParameterVector>,
    pub accepted: Vec<bool>,
    pub avg_loglikes: Vec<f64>,
    pub acceptance_rate: f64,
}

/// What the chain samples from: an unnormalized log-posterior split into
/// prior and estimated likelihood, plus a prior sampler for initialization.
/// The likelihood may be stochastic; implementations derive their randomness
/// from the iteration index so repeated calls are reproducible.
pub trait PosteriorTarget {
    /// Log prior density on the unconstrained space (Jacobian included).
    fn log_prior(&self, z: &UnconstrainedParameterVector) -> f64;
    /// Estimated (or exact) log likelihood of the data at z.
    fn log_likelihood(&self, z: &UnconstrainedParameterVector, iteration: u64) -> f64;
    /// Draw from the prior, for initialization retries.
    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> UnconstrainedParameterVector;
}

/// Log of the arithmetic mean of `n_replicates` independent particle-filter
/// likelihood estimates of `observations` under `model`. Replicates run in
/// parallel on streams keyed by (master seed, iteration, replicate) and are
/// reduced in replicate order. A degenerate replicate contributes zero
/// likelihood; if every replicate degenerates the result is -infinity.
pub fn averaged_log_likelihood<M>(
    model: &M,
    observations: &[f64],
    n_replicates: usize,
    n_particles: usize,
    resample_threshold: f64,
    master_seed: u64,
    iteration: u64,
) -> f64
where
    M: StateSpaceModel + Sync,
{
    let totals: Vec<f64> = (0..n_replicates)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = FilterRng::new(
                master_seed,
                pmmh_replicate_instance(iteration, replicate as u64),
            );
            sisr::total_log_likelihood(
                model,
                observations,
                n_particles,
                &Bootstrap,
                resample_threshold,
                &mut rng,
            )
            .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    log_mean_exp(&totals)
}

/// The production target: the stochastic-volatility posterior with the
/// averaged particle-filter likelihood.
#[derive(Debug, Clone)]
pub struct SvPosterior<'a> {
    observations: &'a [f64],
    n_filter_replicates: usize,
    n_state_particles: usize,
    resample_threshold: f64,
    master_seed: u64,
}

impl<'a> SvPosterior<'a> {
    pub fn new(observations: &'a [f64], config: &ProposalConfig, master_seed: u64) -> Self {
        SvPosterior {
            observations,
            n_filter_replicates: config.n_filter_replicates,
            n_state_particles: config.n_state_particles,
            resample_threshold: config.resample_threshold,
            master_seed,
        }
    }
}

impl PosteriorTarget for SvPosterior<'_> {
    fn log_prior(&self, z: &UnconstrainedParameterVector) -> f64 {
        prior_log_density(&from_unconstrained(z)) + log_jacobian(z)
    }

    fn log_likelihood(&self, z: &UnconstrainedParameterVector, iteration: u64) -> f64 {
        let model = SvModel::new(from_unconstrained(z));
        averaged_log_likelihood(
            &model,
            self.observations,
            self.n_filter_replicates,
            self.n_state_particles,
            self.resample_threshold,
            self.master_seed,
            iteration,
        )
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> UnconstrainedParameterVector {
        to_unconstrained(&sample_prior(rng))
    }
}

/// Log Metropolis-Hastings ratio for a symmetric random-walk proposal: the
/// proposal densities cancel, leaving prior and likelihood terms. The current
/// state contributes its cached estimate.
pub fn acceptance_log_ratio<T: PosteriorTarget>(
    target: &T,
    current: &ChainState,
    proposed_z: &UnconstrainedParameterVector,
    proposed_avg_loglike: f64,
) -> f64 {
    let proposed = target.log_prior(proposed_z) + proposed_avg_loglike;
    let cur = target.log_prior(&current.z) + current.cached_avg_loglike;
    proposed - cur
}

/// Run the chain for `config.n_iterations` states (the first is the
/// initialization). `init_z` is tried first when given; on failure (or when
/// absent) starting points are drawn from the prior until the estimated
/// likelihood is finite, up to `MAX_INIT_ATTEMPTS` draws.
///
/// Every iteration consumes exactly four proposal normals and one uniform
/// from the chain stream, whether or not the proposal is accepted, so chains
/// with identical seeds and targets are reproducible draw for draw.
pub fn pmmh_run<T: PosteriorTarget>(
    target: &T,
    config: &ProposalConfig,
    init_z: Option<UnconstrainedParameterVector>,
    master_seed: u64,
    chain_index: u64,
) -> Result<McmcOutput, PmmhError> {
    let chol = config.cholesky()?;
    if config.n_iterations == 0 {
        return Ok(McmcOutput {
            samples: Vec::new(),
            accepted: Vec::new(),
            avg_loglikes: Vec::new(),
            acceptance_rate: 0.0,
        });
    }
    let mut rng = seed::scalar_stream(master_seed, chain_instance(chain_index));

    let mut state = initialize(target, init_z, &mut rng)?;
    let n = config.n_iterations;
    let mut samples = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    let mut avg_loglikes = Vec::with_capacity(n);
    samples.push(from_unconstrained(&state.z));
    accepted.push(true);
    avg_loglikes.push(state.cached_avg_loglike);

    for iteration in 2..=n as u64 {
        let step = Vector4::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let u: f64 = rng.random();
        let proposed_z = UnconstrainedParameterVector { z: state.z.z + chol * step };

        let proposed_log_prior = target.log_prior(&proposed_z);
        let proposed_loglike = if proposed_log_prior.is_finite() {
            target.log_likelihood(&proposed_z, iteration)
        } else {
            f64::NEG_INFINITY
        };
        let log_ratio = acceptance_log_ratio(target, &state, &proposed_z, proposed_loglike);

        state.iteration = iteration as usize;
        if u.ln() < log_ratio {
            state.z = proposed_z;
            state.cached_avg_loglike = proposed_loglike;
            state.accepted_count += 1;
            samples.push(from_unconstrained(&state.z));
            accepted.push(true);
        } else {
            let previous = *samples.last().expect("chain has an initial state");
            samples.push(previous);
            accepted.push(false);
        }
        avg_loglikes.push(state.cached_avg_loglike);
    }

    let proposals = n.saturating_sub(1);
    let acceptance_rate = if proposals == 0 {
        0.0
    } else {
        state.accepted_count as f64 / proposals as f64
    };
    Ok(McmcOutput { samples, accepted, avg_loglikes, acceptance_rate })
}

fn initialize<T: PosteriorTarget>(
    target: &T,
    init_z: Option<UnconstrainedParameterVector>,
    rng: &mut ChaCha8Rng,
) -> Result<ChainState, PmmhError> {
    let mut attempts = 0;
    let mut candidate = init_z;
    loop {
        let z = match candidate.take() {
            Some(z) => z,
            None => {
                if attempts >= MAX_INIT_ATTEMPTS {
                    return Err(PmmhError::InitializationFailed { attempts });
                }
                target.sample_prior(rng)
            }
        };
        attempts += 1;
        if target.log_prior(&z).is_finite() {
            let ll = target.log_likelihood(&z, 1);
            if ll.is_finite() {
                return Ok(ChainState {
                    z,
                    cached_avg_loglike: ll,
                    iteration: 1,
                    accepted_count: 0,
                });
            }
        }
    }
}
