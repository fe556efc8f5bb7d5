//! State-space abstraction the particle filters run against.
//!
//! The filters only need three things from a model: the Gaussian law of the
//! first latent state, the Gaussian law of a state transition (which may
//! condition on the previous observation), and the observation log-density.
//! The volatility model in [`crate::model`] is the production implementation;
//! linear-Gaussian models used as exact-likelihood references in tests
//! implement the same trait.

use crate::model::ModelError;
use rand::Rng;
use rand_distr::StandardNormal;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log-density of N(mean, var) at x. Returns -inf when var underflows to 0
/// and x != mean.
pub fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// A model with conditionally Gaussian state laws and an arbitrary
/// observation density. Latent states and observations are scalar.
pub trait StateSpaceModel {
    /// Mean and variance of the time-1 state.
    fn initial_moments(&self) -> (f64, f64);

    /// Mean and variance of x_t given x_{t-1} and y_{t-1}. Errors when the
    /// moments are not representable (e.g. an exponential saturates).
    fn transition_moments(&self, x_prev: f64, y_prev: f64) -> Result<(f64, f64), ModelError>;

    /// Log-density of observation y given state x. Underflow maps to -inf.
    fn observation_log_density(&self, y: f64, x: f64) -> f64;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (m, v) = self.initial_moments();
        let z: f64 = rng.sample(StandardNormal);
        m + v.sqrt() * z
    }

    fn initial_log_density(&self, x: f64) -> f64 {
        let (m, v) = self.initial_moments();
        normal_log_density(x, m, v)
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        x_prev: f64,
        y_prev: f64,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let (m, v) = self.transition_moments(x_prev, y_prev)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(m + v.sqrt() * z)
    }

    fn transition_log_density(&self, x: f64, x_prev: f64, y_prev: f64) -> Result<f64, ModelError> {
        let (m, v) = self.transition_moments(x_prev, y_prev)?;
        Ok(normal_log_density(x, m, v))
    }
}

/// Importance proposal for the state particles.
///
/// The default methods implement the generic weight algebra
/// g * (initial or transition density) / proposal density; implementations
/// that propose from the model law itself override the weight hooks so the
/// cancellation is exact rather than numerical.
pub trait StateProposal<M: StateSpaceModel> {
    fn sample_initial<R: Rng + ?Sized>(&self, model: &M, y1: f64, rng: &mut R) -> f64;

    fn initial_log_density(&self, model: &M, x: f64, y1: f64) -> f64;

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        model: &M,
        x_prev: f64,
        y_prev: f64,
        y_t: f64,
        rng: &mut R,
    ) -> Result<f64, ModelError>;

    fn transition_log_density(
        &self,
        model: &M,
        x: f64,
        x_prev: f64,
        y_prev: f64,
        y_t: f64,
    ) -> Result<f64, ModelError>;

    /// log [ g(y1|x) * mu(x) / q(x|y1) ] for a freshly proposed first state.
    fn initial_log_weight(&self, model: &M, x: f64, y1: f64) -> f64 {
        model.observation_log_density(y1, x) + model.initial_log_density(x)
            - self.initial_log_density(model, x, y1)
    }

    /// log [ g(y_t|x) * f(x|x_prev, y_prev) / q(x|...) ] for one transition.
    fn transition_log_weight(
        &self,
        model: &M,
        x: f64,
        x_prev: f64,
        y_prev: f64,
        y_t: f64,
    ) -> Result<f64, ModelError> {
        Ok(model.observation_log_density(y_t, x)
            + model.transition_log_density(x, x_prev, y_prev)?
            - self.transition_log_density(model, x, x_prev, y_prev, y_t)?)
    }
}

/// Propose from the model's own initial and transition laws, so the
/// incremental weight is exactly the observation density.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bootstrap;

impl<M: StateSpaceModel> StateProposal<M> for Bootstrap {
    fn sample_initial<R: Rng + ?Sized>(&self, model: &M, _y1: f64, rng: &mut R) -> f64 {
        model.sample_initial(rng)
    }

    fn initial_log_density(&self, model: &M, x: f64, _y1: f64) -> f64 {
        model.initial_log_density(x)
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        model: &M,
        x_prev: f64,
        y_prev: f64,
        _y_t: f64,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        model.sample_transition(x_prev, y_prev, rng)
    }

    fn transition_log_density(
        &self,
        model: &M,
        x: f64,
        x_prev: f64,
        y_prev: f64,
        _y_t: f64,
    ) -> Result<f64, ModelError> {
        model.transition_log_density(x, x_prev, y_prev)
    }

    fn initial_log_weight(&self, model: &M, x: f64, y1: f64) -> f64 {
        model.observation_log_density(y1, x)
    }

    fn transition_log_weight(
        &self,
        model: &M,
        x: f64,
        _x_prev: f64,
        _y_prev: f64,
        y_t: f64,
    ) -> Result<f64, ModelError> {
        Ok(model.observation_log_density(y_t, x))
    }
}
