//! The leverage stochastic-volatility model: parameter constraints, state and
//! observation laws, prior, and the bijection onto unconstrained coordinates
//! used by the MCMC proposal.
//!
//! Observations are continuously-compounded percent returns y_t with
//! y_t | x_t ~ N(0, exp(x_t)); the latent log-volatility follows an AR(1)
//! whose innovation is correlated with the previous return (the leverage
//! term rho * sigma * exp(-x/2) * y).

use crate::math;
use crate::ssm::{normal_log_density, StateSpaceModel};
use nalgebra::Vector4;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use statrs::distribution::{Beta as BetaDist, Continuous, InverseGamma, Normal as NormalDist};
use thiserror::Error;

/// Arguments to exp() outside this band saturate double precision (overflow
/// above, variance-killing underflow below) and are treated as errors.
pub const EXP_ARG_LIMIT: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter out of range: {0}")]
    InvalidParameter(String),
    #[error("exp argument {arg} exceeds saturation limit {limit} in {context}")]
    ExpSaturated {
        arg: f64,
        limit: f64,
        context: &'static str,
    },
    #[error("empty particle cloud")]
    EmptyCloud,
}

/// exp(x), erroring instead of silently saturating double precision.
fn checked_exp(x: f64, context: &'static str) -> Result<f64, ModelError> {
    if x.abs() > EXP_ARG_LIMIT {
        return Err(ModelError::ExpSaturated {
            arg: x,
            limit: EXP_ARG_LIMIT,
            context,
        });
    }
    Ok(x.exp())
}

/// Static model parameters theta = (phi, mu, sigma_sq, rho).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterVector {
    /// Log-variance level.
    pub mu: f64,
    /// AR(1) persistence, in (-1, 1).
    pub phi: f64,
    /// State innovation variance, positive.
    pub sigma_sq: f64,
    /// Leverage correlation, in (-1, 1).
    pub rho: f64,
}

impl ParameterVector {
    pub fn new(mu: f64, phi: f64, sigma_sq: f64, rho: f64) -> Result<Self, ModelError> {
        let theta = ParameterVector { mu, phi, sigma_sq, rho };
        if !theta.is_valid() {
            return Err(ModelError::InvalidParameter(format!(
                "mu={mu}, phi={phi}, sigma_sq={sigma_sq}, rho={rho}"
            )));
        }
        Ok(theta)
    }

    pub fn is_valid(&self) -> bool {
        self.mu.is_finite()
            && self.phi > -1.0
            && self.phi < 1.0
            && self.rho > -1.0
            && self.rho < 1.0
            && self.sigma_sq > 0.0
            && self.sigma_sq.is_finite()
    }
}

/// Parameters mapped to R^4 for random-walk proposals:
/// (logit((phi+1)/2), mu, ln sigma_sq, logit((rho+1)/2)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnconstrainedParameterVector {
    pub z: Vector4<f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn to_unconstrained(theta: &ParameterVector) -> UnconstrainedParameterVector {
    UnconstrainedParameterVector {
        z: Vector4::new(
            logit((theta.phi + 1.0) / 2.0),
            theta.mu,
            theta.sigma_sq.ln(),
            logit((theta.rho + 1.0) / 2.0),
        ),
    }
}

pub fn from_unconstrained(u: &UnconstrainedParameterVector) -> ParameterVector {
    ParameterVector {
        phi: 2.0 * sigmoid(u.z[0]) - 1.0,
        mu: u.z[1],
        sigma_sq: u.z[2].exp(),
        rho: 2.0 * sigmoid(u.z[3]) - 1.0,
    }
}

/// ln |det d(theta)/d(z)| of the map from unconstrained to constrained
/// coordinates. Added to the constrained-space prior log-density, this gives
/// the prior pushed forward to z, the density PMMH must target there.
pub fn log_jacobian(u: &UnconstrainedParameterVector) -> f64 {
    let theta = from_unconstrained(u);
    // d(phi)/dz0 = (1 - phi^2)/2, d(sigma_sq)/dz2 = sigma_sq, d(rho)/dz3 likewise.
    ((1.0 - theta.phi * theta.phi) / 2.0).ln()
        + theta.sigma_sq.ln()
        + ((1.0 - theta.rho * theta.rho) / 2.0).ln()
}

/// Log-density of the parameter prior:
/// (phi+1)/2 ~ Beta(20, 1.5), mu ~ N(0, 25), sigma_sq ~ InverseGamma(2.5, 0.025),
/// rho ~ Uniform(-1, 1). Returns -inf outside the support.
pub fn prior_log_density(theta: &ParameterVector) -> f64 {
    if !theta.is_valid() {
        return f64::NEG_INFINITY;
    }
    let beta = BetaDist::new(20.0, 1.5).expect("fixed prior hyperparameters");
    let normal = NormalDist::new(0.0, 5.0).expect("fixed prior hyperparameters");
    let inv_gamma = InverseGamma::new(2.5, 0.025).expect("fixed prior hyperparameters");
    // Prior is placed on (phi+1)/2; the change of variable contributes ln(1/2).
    let lp_phi = beta.ln_pdf((theta.phi + 1.0) / 2.0) + 0.5f64.ln();
    let lp_rho = 0.5f64.ln();
    lp_phi + normal.ln_pdf(theta.mu) + inv_gamma.ln_pdf(theta.sigma_sq) + lp_rho
}

/// One draw from the parameter prior.
pub fn sample_prior<R: Rng + ?Sized>(rng: &mut R) -> ParameterVector {
    let beta = Beta::new(20.0, 1.5).expect("fixed prior hyperparameters");
    // 1/Gamma(shape, scale = 1/rate) is InverseGamma(shape, rate).
    let gamma = Gamma::new(2.5, 1.0 / 0.025).expect("fixed prior hyperparameters");
    let phi = 2.0 * beta.sample(rng) - 1.0;
    let z: f64 = rng.sample(StandardNormal);
    let mu = 5.0 * z;
    let sigma_sq = 1.0 / gamma.sample(rng);
    let rho = 2.0 * rng.random::<f64>() - 1.0;
    ParameterVector { mu, phi, sigma_sq, rho }
}

/// The model bound to one parameter value, ready to drive a filter.
#[derive(Debug, Clone, Copy)]
pub struct SvModel {
    pub theta: ParameterVector,
}

impl SvModel {
    pub fn new(theta: ParameterVector) -> Self {
        SvModel { theta }
    }
}

impl StateSpaceModel for SvModel {
    fn initial_moments(&self) -> (f64, f64) {
        initial_state_moments(&self.theta)
    }

    fn transition_moments(&self, x_prev: f64, y_prev: f64) -> Result<(f64, f64), ModelError> {
        transition_moments(&self.theta, x_prev, y_prev)
    }

    fn observation_log_density(&self, y: f64, x: f64) -> f64 {
        observation_log_density(y, x)
    }
}

/// Mean and variance of the stationary time-1 state law N(mu, sigma_sq/(1-phi^2)).
pub fn initial_state_moments(theta: &ParameterVector) -> (f64, f64) {
    (theta.mu, theta.sigma_sq / (1.0 - theta.phi * theta.phi))
}

/// Mean and variance of x_t given (x_{t-1}, y_{t-1}).
pub fn transition_moments(
    theta: &ParameterVector,
    x_prev: f64,
    y_prev: f64,
) -> Result<(f64, f64), ModelError> {
    let leverage = if theta.rho == 0.0 || y_prev == 0.0 {
        0.0
    } else {
        theta.rho * theta.sigma_sq.sqrt() * checked_exp(-x_prev / 2.0, "transition mean")? * y_prev
    };
    let mean = theta.mu + theta.phi * (x_prev - theta.mu) + leverage;
    let variance = theta.sigma_sq * (1.0 - theta.rho * theta.rho);
    Ok((mean, variance))
}

/// Log-density of y ~ N(0, exp(x)).
pub fn observation_log_density(y: f64, x: f64) -> f64 {
    // Written via exp(-x) so large x stays finite; for very negative x the
    // quadratic term overflows to -inf, which callers treat as zero weight.
    let quad = if y == 0.0 { 0.0 } else { y * y * (-x).exp() };
    -0.5 * (crate::ssm::LN_2PI + x + quad)
}

/// Log-density of the state transition.
pub fn transition_log_density(
    x_new: f64,
    x_prev: f64,
    y_prev: f64,
    theta: &ParameterVector,
) -> Result<f64, ModelError> {
    let (m, v) = transition_moments(theta, x_prev, y_prev)?;
    Ok(normal_log_density(x_new, m, v))
}

/// One-step-ahead forecast of the squared return E[y_{t+1}^2 | cloud, y_t]:
/// the weighted average over particles of the lognormal mean
/// exp(m_i + v/2), with (m_i, v) the transition moments at particle x_i.
pub fn forecast_second_moment(
    states: &[f64],
    log_weights: &[f64],
    y_t: f64,
    theta: &ParameterVector,
) -> Result<f64, ModelError> {
    if states.is_empty() {
        return Err(ModelError::EmptyCloud);
    }
    debug_assert_eq!(states.len(), log_weights.len());
    let w = math::normalized_weights(log_weights);
    let mut acc = 0.0;
    for (x, w) in states.iter().zip(&w) {
        if *w == 0.0 {
            continue;
        }
        let (m, v) = transition_moments(theta, *x, y_t)?;
        acc += w * checked_exp(m + v / 2.0, "forecast second moment")?;
    }
    Ok(acc)
}

/// Simulate a path of latent states and observations of length `t_len`.
pub fn simulate<R: Rng + ?Sized>(
    theta: &ParameterVector,
    t_len: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let model = SvModel::new(*theta);
    let mut xs = Vec::with_capacity(t_len);
    let mut ys = Vec::with_capacity(t_len);
    let mut x = model.sample_initial(rng);
    for t in 0..t_len {
        let z: f64 = rng.sample(StandardNormal);
        let y = checked_exp(x / 2.0, "simulated observation")? * z;
        xs.push(x);
        ys.push(y);
        if t + 1 < t_len {
            x = model.sample_transition(x, y, rng)?;
        }
    }
    Ok((xs, ys))
}
