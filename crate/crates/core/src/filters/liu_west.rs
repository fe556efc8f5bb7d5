//! Liu-West filters: joint particle filtering of the latent state and the
//! static parameters, with kernel-shrinkage artificial parameter dynamics.
//!
//! Both variants shrink each parameter particle toward the cloud average
//! (coefficient a = (3δ-1)/(2δ)) and then jitter it with a normal kernel of
//! covariance h²V, h² = 1 - a², which preserves the cloud's first two
//! moments. The shrinkage and the kernel draw operate on unconstrained
//! parameter coordinates so every proposed parameter is valid.
//!
//! The first variant (`lw1_step`) is auxiliary-style: a lookahead resampling
//! stage selects ancestors by predicted observation fit before states are
//! propagated. The second (`lw2_step`) skips the lookahead and accumulates
//! SISR-style carried weights.

use super::{ess, FilterError, FilterRecord, ParticleCloud};
use crate::math::{self, log_sum_exp};
use crate::model::{
    self, from_unconstrained, to_unconstrained, ParameterVector, SvModel,
    UnconstrainedParameterVector,
};
use crate::seed::FilterRng;
use crate::ssm::StateSpaceModel;
use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

/// Diagonal jitter added to the parameter covariance before factorization so
/// degenerate clouds (all particles identical) still yield a usable kernel.
pub const COVARIANCE_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiuWestConfig {
    /// Discount factor delta controlling how much artificial parameter
    /// evolution is allowed; must lie in (1/3, 1) so that a in (0, 1).
    pub delta: f64,
    pub n_particles: usize,
    pub resample_threshold: f64,
}

impl LiuWestConfig {
    pub fn new(delta: f64, n_particles: usize, resample_threshold: f64) -> Result<Self, FilterError> {
        let cfg = LiuWestConfig { delta, n_particles, resample_threshold };
        if !(delta > 1.0 / 3.0 && delta < 1.0) {
            return Err(FilterError::BadConfig(format!(
                "delta must lie in (1/3, 1) for a positive shrinkage coefficient, got {delta}"
            )));
        }
        if n_particles == 0 {
            return Err(FilterError::BadConfig("n_particles must be >= 1".into()));
        }
        if !(resample_threshold > 0.0 && resample_threshold <= 1.0) {
            return Err(FilterError::BadConfig(format!(
                "resample_threshold must lie in (0, 1], got {resample_threshold}"
            )));
        }
        Ok(cfg)
    }

    /// Shrinkage coefficient a = (3δ - 1) / (2δ).
    pub fn a(&self) -> f64 {
        (3.0 * self.delta - 1.0) / (2.0 * self.delta)
    }

    /// Kernel bandwidth h² = 1 - a².
    pub fn h_sq(&self) -> f64 {
        let a = self.a();
        1.0 - a * a
    }
}

/// Joint state/parameter particle cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCloud {
    pub states: Vec<f64>,
    pub params: Vec<ParameterVector>,
    pub log_weights: Vec<f64>,
    pub time_index: usize,
}

impl AugmentedCloud {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        math::normalized_weights(&self.log_weights)
    }

    pub fn filter_mean(&self) -> f64 {
        math::weighted_mean(&self.states, &self.log_weights)
    }

    /// The state marginal of the augmented cloud, as a plain particle cloud.
    pub fn state_view(&self) -> ParticleCloud {
        ParticleCloud {
            particles: self.states.clone(),
            log_weights: self.log_weights.clone(),
            time_index: self.time_index,
        }
    }
}

/// Shrink each location toward the plain cloud average:
/// m_i = a·z_i + (1-a)·mean(z). The output's mean equals the input's mean
/// identically for any a.
pub fn shrink_locations(zs: &[Vector4<f64>], a: f64) -> Vec<Vector4<f64>> {
    let mean: Vector4<f64> = zs.iter().sum::<Vector4<f64>>() / zs.len() as f64;
    zs.iter().map(|z| a * z + (1.0 - a) * mean).collect()
}

/// Weighted sample covariance of the locations under normalized weights.
pub fn weighted_covariance(zs: &[Vector4<f64>], weights: &[f64]) -> Matrix4<f64> {
    debug_assert_eq!(zs.len(), weights.len());
    let mut mean = Vector4::zeros();
    for (z, w) in zs.iter().zip(weights) {
        mean += *w * z;
    }
    let mut cov = Matrix4::zeros();
    for (z, w) in zs.iter().zip(weights) {
        let d = z - mean;
        cov += *w * d * d.transpose();
    }
    cov
}

struct ParameterKernel {
    /// Cholesky factor of h²(V + ridge·I).
    scale: Matrix4<f64>,
}

impl ParameterKernel {
    fn build(
        zs: &[Vector4<f64>],
        weights: &[f64],
        h_sq: f64,
    ) -> Result<ParameterKernel, FilterError> {
        let cov = weighted_covariance(zs, weights) + Matrix4::identity() * COVARIANCE_RIDGE;
        let chol = (cov * h_sq).cholesky().ok_or_else(|| {
            FilterError::BadConfig("parameter kernel covariance is not positive definite".into())
        })?;
        Ok(ParameterKernel { scale: chol.l() })
    }

    fn draw<R: Rng + ?Sized>(&self, location: &Vector4<f64>, rng: &mut R) -> ParameterVector {
        let xi = Vector4::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        from_unconstrained(&UnconstrainedParameterVector { z: location + self.scale * xi })
    }
}

/// Start either Liu-West filter from a set of parameter draws: one particle
/// per draw, its state sampled from that parameter's initial law.
pub fn lw_init(
    theta_draws: &[ParameterVector],
    y1: f64,
    config: &LiuWestConfig,
    rng: &mut FilterRng,
) -> Result<(AugmentedCloud, FilterRecord), FilterError> {
    if theta_draws.len() != config.n_particles {
        return Err(FilterError::BadConfig(format!(
            "expected {} parameter draws, got {}",
            config.n_particles,
            theta_draws.len()
        )));
    }
    let n = theta_draws.len();
    let mut states = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for theta in theta_draws {
        let x = SvModel::new(*theta).sample_initial(&mut rng.state);
        log_weights.push(model::observation_log_density(y1, x));
        states.push(x);
    }
    if !log_sum_exp(&log_weights).is_finite() {
        return Err(FilterError::Degenerate { time_index: 1 });
    }
    let mut cloud = AugmentedCloud {
        states,
        params: theta_draws.to_vec(),
        log_weights,
        time_index: 1,
    };
    let record = FilterRecord {
        time_index: 1,
        log_cond_evidence: log_sum_exp(&cloud.log_weights) - (n as f64).ln(),
        filter_mean: cloud.filter_mean(),
        ess: ess(&cloud.log_weights),
    };
    resample_augmented(&mut cloud, record.ess, config.resample_threshold, rng);
    Ok((cloud, record))
}

fn resample_augmented(
    cloud: &mut AugmentedCloud,
    pre_ess: f64,
    threshold: f64,
    rng: &mut FilterRng,
) -> bool {
    let n = cloud.len() as f64;
    if pre_ess / n >= threshold {
        return false;
    }
    let idx = super::multinomial_resample(&cloud.log_weights, &mut rng.resample);
    cloud.states = idx.iter().map(|&i| cloud.states[i]).collect();
    cloud.params = idx.iter().map(|&i| cloud.params[i]).collect();
    cloud.log_weights.iter_mut().for_each(|lw| *lw = 0.0);
    true
}

/// Auxiliary-style step: lookahead resampling, kernel parameter refresh,
/// state propagation, second-stage reweighting.
pub fn lw1_step(
    cloud: &mut AugmentedCloud,
    y_t: f64,
    y_prev: f64,
    config: &LiuWestConfig,
    rng: &mut FilterRng,
) -> Result<FilterRecord, FilterError> {
    let n = cloud.len();
    let time_index = cloud.time_index + 1;
    let a = config.a();

    let zs: Vec<Vector4<f64>> = cloud.params.iter().map(|p| to_unconstrained(p).z).collect();
    let shrunk = shrink_locations(&zs, a);
    let shrunk_params: Vec<ParameterVector> = shrunk
        .iter()
        .map(|m| from_unconstrained(&UnconstrainedParameterVector { z: *m }))
        .collect();

    // Observation-fit lookahead at each particle's predictive state mean,
    // evaluated under its shrunk parameter location.
    let mut lookahead = Vec::with_capacity(n);
    for i in 0..n {
        let (m, _) = model::transition_moments(&shrunk_params[i], cloud.states[i], y_prev)?;
        lookahead.push(model::observation_log_density(y_t, m));
    }

    let carried_lse = log_sum_exp(&cloud.log_weights);
    let aux_log_probs: Vec<f64> = cloud
        .log_weights
        .iter()
        .zip(&lookahead)
        .map(|(lw, la)| lw + la)
        .collect();
    let aux_lse = log_sum_exp(&aux_log_probs);
    if !aux_lse.is_finite() {
        return Err(FilterError::Degenerate { time_index });
    }
    // Mean lookahead weight: the first factor of the conditional evidence.
    let first_stage_log_factor = aux_lse - carried_lse;

    let ancestors = super::multinomial_resample(&aux_log_probs, &mut rng.resample);

    let kernel = ParameterKernel::build(&zs, &cloud.normalized_weights(), config.h_sq())?;

    let mut states = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for &k in &ancestors {
        let theta = kernel.draw(&shrunk[k], &mut rng.kernel);
        let x = SvModel::new(theta).sample_transition(cloud.states[k], y_prev, &mut rng.state)?;
        log_weights.push(model::observation_log_density(y_t, x) - lookahead[k]);
        states.push(x);
        params.push(theta);
    }
    let second_lse = log_sum_exp(&log_weights);
    if !second_lse.is_finite() {
        return Err(FilterError::Degenerate { time_index });
    }

    cloud.states = states;
    cloud.params = params;
    cloud.log_weights = log_weights;
    cloud.time_index = time_index;

    let record = FilterRecord {
        time_index,
        log_cond_evidence: first_stage_log_factor + second_lse - (n as f64).ln(),
        filter_mean: cloud.filter_mean(),
        ess: ess(&cloud.log_weights),
    };
    resample_augmented(cloud, record.ess, config.resample_threshold, rng);
    Ok(record)
}

/// SISR-style step: every particle shrinks and jitters its own parameter,
/// propagates its state from the transition, and multiplies its carried
/// weight by the observation density.
pub fn lw2_step(
    cloud: &mut AugmentedCloud,
    y_t: f64,
    y_prev: f64,
    config: &LiuWestConfig,
    rng: &mut FilterRng,
) -> Result<FilterRecord, FilterError> {
    let n = cloud.len();
    let time_index = cloud.time_index + 1;
    let carried_lse = log_sum_exp(&cloud.log_weights);

    let zs: Vec<Vector4<f64>> = cloud.params.iter().map(|p| to_unconstrained(p).z).collect();
    let shrunk = shrink_locations(&zs, config.a());
    let kernel = ParameterKernel::build(&zs, &cloud.normalized_weights(), config.h_sq())?;

    for i in 0..n {
        let theta = kernel.draw(&shrunk[i], &mut rng.kernel);
        let x = SvModel::new(theta).sample_transition(cloud.states[i], y_prev, &mut rng.state)?;
        cloud.log_weights[i] += model::observation_log_density(y_t, x);
        cloud.states[i] = x;
        cloud.params[i] = theta;
    }
    let lse = log_sum_exp(&cloud.log_weights);
    if !lse.is_finite() {
        return Err(FilterError::Degenerate { time_index });
    }
    cloud.time_index = time_index;
    let record = FilterRecord {
        time_index,
        log_cond_evidence: lse - carried_lse,
        filter_mean: cloud.filter_mean(),
        ess: ess(&cloud.log_weights),
    };
    resample_augmented(cloud, record.ess, config.resample_threshold, rng);
    Ok(record)
}

/// Run one Liu-West variant across a whole observation slice.
pub fn run(
    variant: LiuWestVariant,
    theta_draws: &[ParameterVector],
    observations: &[f64],
    config: &LiuWestConfig,
    rng: &mut FilterRng,
) -> Result<(AugmentedCloud, Vec<FilterRecord>), FilterError> {
    let mut records = Vec::with_capacity(observations.len());
    let (mut cloud, first) = lw_init(theta_draws, observations[0], config, rng)?;
    records.push(first);
    for t in 1..observations.len() {
        let rec = match variant {
            LiuWestVariant::Auxiliary => {
                lw1_step(&mut cloud, observations[t], observations[t - 1], config, rng)?
            }
            LiuWestVariant::Plain => {
                lw2_step(&mut cloud, observations[t], observations[t - 1], config, rng)?
            }
        };
        records.push(rec);
    }
    Ok((cloud, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiuWestVariant {
    /// Lookahead (auxiliary) first stage.
    Auxiliary,
    /// Carried SISR-style weights, no lookahead.
    Plain,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::sisr;
    use crate::seed::filter_instance;
    use crate::ssm::Bootstrap;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta(mu: f64, phi: f64, sigma_sq: f64, rho: f64) -> ParameterVector {
        ParameterVector::new(mu, phi, sigma_sq, rho).unwrap()
    }

    fn scattered_thetas(n: usize, seed: u64) -> Vec<ParameterVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                theta(
                    -0.5 + rng.random::<f64>(),
                    0.8 + 0.15 * rng.random::<f64>(),
                    0.02 + 0.1 * rng.random::<f64>(),
                    -0.8 + 1.2 * rng.random::<f64>(),
                )
            })
            .collect()
    }

    #[test]
    fn config_rejects_bad_delta() {
        assert!(LiuWestConfig::new(0.2, 10, 0.5).is_err());
        assert!(LiuWestConfig::new(1.0, 10, 0.5).is_err());
        assert!(LiuWestConfig::new(0.99, 10, 0.0).is_err());
        assert!(LiuWestConfig::new(0.99, 0, 0.5).is_err());
        assert!(LiuWestConfig::new(0.99, 10, 1.0).is_ok());
    }

    #[test]
    fn shrinkage_constants_at_usual_delta() {
        let cfg = LiuWestConfig::new(0.99, 10, 0.5).unwrap();
        assert_abs_diff_eq!(cfg.a(), 0.9949495, epsilon = 1e-7);
        assert_eq!(cfg.a(), (3.0 * 0.99 - 1.0) / (2.0 * 0.99));
        assert_eq!(cfg.h_sq(), 1.0 - cfg.a() * cfg.a());
    }

    #[test]
    fn shrinkage_preserves_cloud_mean_exactly() {
        let zs: Vec<Vector4<f64>> = (0..37)
            .map(|i| {
                let x = i as f64;
                Vector4::new(x.sin(), x.cos() * 3.0, 0.1 * x, -x.sqrt())
            })
            .collect();
        for a in [0.2, 0.9949494949494949, 1.0] {
            let shrunk = shrink_locations(&zs, a);
            let m0: Vector4<f64> = zs.iter().sum::<Vector4<f64>>() / zs.len() as f64;
            let m1: Vector4<f64> = shrunk.iter().sum::<Vector4<f64>>() / zs.len() as f64;
            assert!((m0 - m1).abs().max() < 1e-12, "a={a}");
        }
        // a = 1 is the identity
        let shrunk = shrink_locations(&zs, 1.0);
        for (z, m) in zs.iter().zip(&shrunk) {
            assert_eq!(z, m);
        }
    }

    #[test]
    fn near_unit_delta_keeps_identical_parameters_fixed() {
        // The zero-variance-kernel limit: identical parameter particles and
        // delta -> 1 leave parameters essentially unchanged across a step.
        let th = theta(-0.3, 0.9, 0.05, -0.4);
        let cfg = LiuWestConfig::new(1.0 - 1e-9, 50, 0.5).unwrap();
        let draws = vec![th; 50];
        let mut rng = FilterRng::new(21, filter_instance(0));
        let (mut cloud, _) = lw_init(&draws, 0.2, &cfg, &mut rng).unwrap();
        lw1_step(&mut cloud, -0.4, 0.2, &cfg, &mut rng).unwrap();
        for p in &cloud.params {
            assert_abs_diff_eq!(p.mu, th.mu, epsilon = 1e-6);
            assert_abs_diff_eq!(p.phi, th.phi, epsilon = 1e-6);
            assert_abs_diff_eq!(p.sigma_sq, th.sigma_sq, epsilon = 1e-6);
            assert_abs_diff_eq!(p.rho, th.rho, epsilon = 1e-6);
        }
    }

    #[test]
    fn lw2_with_vanishing_kernel_matches_sisr() {
        // Identical parameters and h^2 -> 0: the parameter dynamics vanish and
        // the state/resample draws line up with a plain SISR run at the same
        // seed because those live on dedicated streams.
        let th = theta(0.0, 0.9, 0.1, -0.5);
        let n = 100;
        let cfg = LiuWestConfig::new(1.0 - 1e-12, n, 0.5).unwrap();
        let ys: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..60).map(|_| 0.8 * r.random::<f64>() - 0.4).collect()
        };

        let mut lw_rng = FilterRng::new(33, filter_instance(0));
        let (_, lw_records) =
            run(LiuWestVariant::Plain, &vec![th; n], &ys, &cfg, &mut lw_rng).unwrap();

        let mut pf_rng = FilterRng::new(33, filter_instance(0));
        let (_, pf_records) =
            sisr::run(&SvModel::new(th), &ys, n, &Bootstrap, 0.5, &mut pf_rng).unwrap();

        for (a, b) in lw_records.iter().zip(&pf_records) {
            assert_eq!(a.time_index, b.time_index);
            assert_abs_diff_eq!(a.filter_mean, b.filter_mean, epsilon = 1e-6);
            assert_abs_diff_eq!(a.log_cond_evidence, b.log_cond_evidence, epsilon = 1e-6);
            assert_abs_diff_eq!(a.ess, b.ess, epsilon = 1e-4);
        }
    }

    #[test]
    fn lw1_and_lw2_track_simulated_volatility() {
        let true_theta = theta(-0.2, 0.93, 0.08, -0.5);
        let mut sim_rng = ChaCha8Rng::seed_from_u64(5150);
        let (_, ys) = model::simulate(&true_theta, 150, &mut sim_rng).unwrap();
        let cfg = LiuWestConfig::new(0.99, 400, 0.5).unwrap();
        let draws = scattered_thetas(400, 7);

        for variant in [LiuWestVariant::Auxiliary, LiuWestVariant::Plain] {
            let mut rng = FilterRng::new(44, filter_instance(0));
            let (cloud, records) = run(variant, &draws, &ys, &cfg, &mut rng).unwrap();
            assert_eq!(records.len(), ys.len());
            assert!(records.iter().all(|r| r.log_cond_evidence.is_finite()));
            assert!(records.iter().all(|r| r.ess >= 1.0 && r.ess <= 400.0));
            // parameters stay in their constrained ranges through every kernel move
            for p in &cloud.params {
                assert!(p.is_valid());
            }
        }
    }

    #[test]
    fn weighted_covariance_of_identical_points_is_zero() {
        let zs = vec![Vector4::new(1.0, -2.0, 0.5, 3.0); 8];
        let w = vec![0.125; 8];
        assert!(weighted_covariance(&zs, &w).abs().max() < 1e-15);
    }

    #[test]
    fn marginal_parameter_samples_are_exposed_each_step() {
        let cfg = LiuWestConfig::new(0.99, 64, 0.5).unwrap();
        let draws = scattered_thetas(64, 3);
        let mut rng = FilterRng::new(55, filter_instance(0));
        let (mut cloud, _) = lw_init(&draws, 0.1, &cfg, &mut rng).unwrap();
        for t in 1..5 {
            lw1_step(&mut cloud, 0.1 * t as f64, 0.1 * (t - 1) as f64, &cfg, &mut rng).unwrap();
            assert_eq!(cloud.params.len(), 64);
            assert_eq!(cloud.log_weights.len(), 64);
            let w: f64 = cloud.normalized_weights().iter().sum();
            assert_relative_eq!(w, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_view_matches_cloud() {
        let cfg = LiuWestConfig::new(0.95, 16, 0.5).unwrap();
        let draws = scattered_thetas(16, 9);
        let mut rng = FilterRng::new(66, filter_instance(0));
        let (cloud, _) = lw_init(&draws, -0.3, &cfg, &mut rng).unwrap();
        let v = cloud.state_view();
        assert_eq!(v.particles, cloud.states);
        assert_eq!(v.filter_mean(), cloud.filter_mean());
    }
}
