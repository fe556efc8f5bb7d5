//! Shared fixtures for the acceptance suite: a linear-Gaussian surrogate
//! model whose likelihood has a closed form via the Kalman filter, an
//! observation-shifted variant with a single free parameter, a plain
//! Metropolis-Hastings reference sampler, and small statistics helpers.
//!
//! Everything here is an independent oracle: none of it calls back into the
//! particle-filter code paths it is used to check, except where a test
//! explicitly feeds the surrogate model through the filters under test.

use nalgebra::Vector4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svolfc::filters::liu_west::AugmentedCloud;
use svolfc::model::{from_unconstrained, ModelError, ParameterVector, UnconstrainedParameterVector};
use svolfc::pmmh::{averaged_log_likelihood, PosteriorTarget, ProposalConfig};
use svolfc::seed::{chain_instance, scalar_stream};
use svolfc::ssm::{normal_log_density, StateSpaceModel};

/// Linear-Gaussian state-space model:
/// x_1 ~ N(init_mean, init_var), x_t = intercept + coeff x_{t-1} + N(0, trans_var),
/// y_t = x_t + N(0, obs_var). The transition ignores the previous observation,
/// so the bootstrap particle filter applies unchanged while the exact
/// likelihood is available from the Kalman recursion below.
#[derive(Debug, Clone, Copy)]
pub struct Lgssm {
    pub init_mean: f64,
    pub init_var: f64,
    pub coeff: f64,
    pub intercept: f64,
    pub trans_var: f64,
    pub obs_var: f64,
}

impl Lgssm {
    /// A stable AR(1) surrogate started from its stationary law.
    pub fn stationary(coeff: f64, intercept: f64, trans_var: f64, obs_var: f64) -> Self {
        assert!(coeff.abs() < 1.0, "surrogate autoregression must be stable");
        Lgssm {
            init_mean: intercept / (1.0 - coeff),
            init_var: trans_var / (1.0 - coeff * coeff),
            coeff,
            intercept,
            trans_var,
            obs_var,
        }
    }
}

impl StateSpaceModel for Lgssm {
    fn initial_moments(&self) -> (f64, f64) {
        (self.init_mean, self.init_var)
    }

    fn transition_moments(&self, x_prev: f64, _y_prev: f64) -> Result<(f64, f64), ModelError> {
        Ok((self.intercept + self.coeff * x_prev, self.trans_var))
    }

    fn observation_log_density(&self, y: f64, x: f64) -> f64 {
        normal_log_density(y, x, self.obs_var)
    }
}

/// The same surrogate with its observation mean shifted by a constant:
/// y_t = x_t + shift + N(0, obs_var). Exactly one free parameter once the
/// base model is fixed, and equivalent to observing y_t - shift under the
/// base model, which keeps the exact likelihood one Kalman pass away.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedLgssm {
    pub base: Lgssm,
    pub shift: f64,
}

impl StateSpaceModel for ShiftedLgssm {
    fn initial_moments(&self) -> (f64, f64) {
        self.base.initial_moments()
    }

    fn transition_moments(&self, x_prev: f64, y_prev: f64) -> Result<(f64, f64), ModelError> {
        self.base.transition_moments(x_prev, y_prev)
    }

    fn observation_log_density(&self, y: f64, x: f64) -> f64 {
        normal_log_density(y, x + self.shift, self.base.obs_var)
    }
}

/// Exact log-likelihood of the surrogate by the Kalman filter: predict,
/// score the observation against the innovation law, update.
pub fn kalman_log_likelihood(model: &Lgssm, observations: &[f64]) -> f64 {
    let mut log_likelihood = 0.0;
    let (mut pred_mean, mut pred_var) = model.initial_moments();
    for &y in observations {
        let innovation_var = pred_var + model.obs_var;
        log_likelihood += normal_log_density(y, pred_mean, innovation_var);
        let gain = pred_var / innovation_var;
        let filt_mean = pred_mean + gain * (y - pred_mean);
        let filt_var = (1.0 - gain) * pred_var;
        pred_mean = model.intercept + model.coeff * filt_mean;
        pred_var = model.coeff * model.coeff * filt_var + model.trans_var;
    }
    log_likelihood
}

/// Simulate observations from the shifted surrogate (shift 0 recovers the
/// base model).
pub fn simulate_lgssm<R: Rng + ?Sized>(
    model: &Lgssm,
    shift: f64,
    t_len: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut observations = Vec::with_capacity(t_len);
    let mut x = model.sample_initial(rng);
    for t in 0..t_len {
        let noise: f64 = rng.sample(StandardNormal);
        observations.push(x + shift + model.obs_var.sqrt() * noise);
        if t + 1 < t_len {
            x = model
                .sample_transition(x, observations[t], rng)
                .expect("linear-Gaussian transition moments are always finite");
        }
    }
    observations
}

fn standard_normal_log_prior(z: &UnconstrainedParameterVector) -> f64 {
    z.z.iter().map(|&v| normal_log_density(v, 0.0, 1.0)).sum()
}

fn standard_normal_draw(rng: &mut ChaCha8Rng) -> UnconstrainedParameterVector {
    UnconstrainedParameterVector {
        z: Vector4::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ),
    }
}

/// Sampler target whose likelihood is the exact Kalman likelihood of the
/// shifted surrogate. Coordinate 0 of the unconstrained vector is the
/// observation shift; the other three coordinates do not enter the
/// likelihood. All four coordinates carry independent standard normal
/// priors, so the target factorizes and the shift marginal is exactly
/// prior(shift) times the Kalman likelihood.
pub struct ExactShiftTarget<'a> {
    pub model: Lgssm,
    pub observations: &'a [f64],
}

impl ExactShiftTarget<'_> {
    pub fn exact_log_likelihood(&self, shift: f64) -> f64 {
        let centered: Vec<f64> = self.observations.iter().map(|y| y - shift).collect();
        kalman_log_likelihood(&self.model, &centered)
    }
}

impl PosteriorTarget for ExactShiftTarget<'_> {
    fn log_prior(&self, z: &UnconstrainedParameterVector) -> f64 {
        standard_normal_log_prior(z)
    }

    fn log_likelihood(&self, z: &UnconstrainedParameterVector, _iteration: u64) -> f64 {
        self.exact_log_likelihood(z.z[0])
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> UnconstrainedParameterVector {
        standard_normal_draw(rng)
    }
}

/// The same target with the likelihood replaced by the averaged
/// particle-filter estimate, run on the shifted surrogate.
pub struct NoisyShiftTarget<'a> {
    pub model: Lgssm,
    pub observations: &'a [f64],
    pub n_replicates: usize,
    pub n_particles: usize,
    pub resample_threshold: f64,
    pub master_seed: u64,
}

impl PosteriorTarget for NoisyShiftTarget<'_> {
    fn log_prior(&self, z: &UnconstrainedParameterVector) -> f64 {
        standard_normal_log_prior(z)
    }

    fn log_likelihood(&self, z: &UnconstrainedParameterVector, iteration: u64) -> f64 {
        let shifted = ShiftedLgssm { base: self.model, shift: z.z[0] };
        averaged_log_likelihood(
            &shifted,
            self.observations,
            self.n_replicates,
            self.n_particles,
            self.resample_threshold,
            self.master_seed,
            iteration,
        )
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> UnconstrainedParameterVector {
        standard_normal_draw(rng)
    }
}

/// Textbook random-walk Metropolis-Hastings with a deterministic likelihood,
/// written independently of the production sampler but drawing from the same
/// chain stream: the given starting point consumes no chain randomness, and
/// each subsequent iteration consumes four proposal normals followed by one
/// acceptance uniform. Returns the per-iteration samples (mapped to the
/// constrained space) and acceptance flags.
pub fn textbook_mh(
    target: &ExactShiftTarget<'_>,
    config: &ProposalConfig,
    init_z: UnconstrainedParameterVector,
    master_seed: u64,
    chain_index: u64,
) -> (Vec<ParameterVector>, Vec<bool>) {
    let chol = config
        .covariance
        .cholesky()
        .expect("reference sampler needs a positive-definite proposal covariance")
        .l();
    let mut rng = scalar_stream(master_seed, chain_instance(chain_index));

    let mut z = init_z;
    let mut log_prior = target.log_prior(&z);
    let mut log_like = target.log_likelihood(&z, 1);
    assert!(
        log_prior.is_finite() && log_like.is_finite(),
        "reference sampler expects a valid starting point"
    );

    let n = config.n_iterations;
    let mut samples = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    samples.push(from_unconstrained(&z));
    accepted.push(true);

    for iteration in 2..=n as u64 {
        let step = Vector4::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let u: f64 = rng.random();
        let proposed = UnconstrainedParameterVector { z: z.z + chol * step };
        let proposed_prior = target.log_prior(&proposed);
        let proposed_like = if proposed_prior.is_finite() {
            target.log_likelihood(&proposed, iteration)
        } else {
            f64::NEG_INFINITY
        };
        let log_ratio = (proposed_prior + proposed_like) - (log_prior + log_like);
        if u.ln() < log_ratio {
            z = proposed;
            log_prior = proposed_prior;
            log_like = proposed_like;
            samples.push(from_unconstrained(&z));
            accepted.push(true);
        } else {
            let previous = *samples.last().expect("chain has an initial state");
            samples.push(previous);
            accepted.push(false);
        }
    }
    (samples, accepted)
}

/// Parameters used to simulate realistic volatility paths: a persistent,
/// negatively leveraged configuration typical of fitted daily equity series.
pub fn sv_truth() -> ParameterVector {
    ParameterVector::new(-0.7, 0.95, 0.03, -0.4).expect("fixture parameters are valid")
}

/// Independent uniform parameter draws from a moderate box around
/// `sv_truth`, for seeding parameter-learning filters.
pub fn box_draws<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ParameterVector> {
    (0..n)
        .map(|_| {
            ParameterVector::new(
                rng.random_range(-1.2..-0.2),
                rng.random_range(0.90..0.98),
                rng.random_range(0.01..0.09),
                rng.random_range(-0.6..-0.2),
            )
            .expect("box draws stay inside the parameter space")
        })
        .collect()
}

/// Weighted posterior mean of each parameter coordinate under the cloud's
/// normalized weights, ordered (mu, phi, sigma_sq, rho).
pub fn weighted_param_means(cloud: &AugmentedCloud) -> [f64; 4] {
    let weights = cloud.normalized_weights();
    let mut means = [0.0; 4];
    for (theta, w) in cloud.params.iter().zip(&weights) {
        means[0] += w * theta.mu;
        means[1] += w * theta.phi;
        means[2] += w * theta.sigma_sq;
        means[3] += w * theta.rho;
    }
    means
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the n-1 divisor.
pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Standard error of the sample mean for independent draws.
pub fn standard_error(values: &[f64]) -> f64 {
    sample_sd(values) / (values.len() as f64).sqrt()
}

/// Pearson correlation between two equal-length series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Median of three timing measurements.
pub fn median3(a: f64, b: f64, c: f64) -> f64 {
    let mut v = [a, b, c];
    v.sort_by(|x, y| x.partial_cmp(y).expect("timings are finite"));
    v[1]
}
