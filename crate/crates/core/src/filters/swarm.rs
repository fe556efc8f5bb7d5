//! Particle swarm filter: many non-interacting SISR filters, one per
//! parameter draw, whose per-step outputs are averaged. Bundles never
//! exchange particles and their parameters are never refreshed, so the swarm
//! tracks an approximate posterior-predictive law for a frozen parameter
//! sample.
//!
//! Bundles advance in parallel; every bundle owns deterministic RNG streams
//! derived from (master seed, bundle index), and aggregation is a sequential
//! reduction in bundle-index order, so outputs are bitwise independent of the
//! worker count.

use super::{sisr, FilterError, FilterRecord, ParticleCloud};
use crate::math::{log_mean_exp, weighted_mean};
use crate::model::{ParameterVector, SvModel};
use crate::seed::{filter_instance, FilterRng};
use crate::ssm::Bootstrap;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmConfig {
    pub n_particles_per_theta: usize,
    pub resample_threshold: f64,
    /// When set, the aggregate conditional evidence weights each bundle by
    /// its past marginal likelihood (the mixture-predictive form) instead of
    /// the plain arithmetic average of per-bundle conditional evidences.
    pub history_weighted: bool,
}

impl SwarmConfig {
    pub fn new(n_particles_per_theta: usize, resample_threshold: f64) -> Result<Self, FilterError> {
        if n_particles_per_theta == 0 {
            return Err(FilterError::BadConfig(
                "n_particles_per_theta must be >= 1".into(),
            ));
        }
        if !(resample_threshold > 0.0 && resample_threshold <= 1.0) {
            return Err(FilterError::BadConfig(format!(
                "resample_threshold must lie in (0, 1], got {resample_threshold}"
            )));
        }
        Ok(SwarmConfig {
            n_particles_per_theta,
            resample_threshold,
            history_weighted: false,
        })
    }

    pub fn with_history_weighting(mut self) -> Self {
        self.history_weighted = true;
        self
    }
}

/// One parameter draw with its private particle cloud and RNG streams.
/// `theta` is fixed for the bundle's lifetime.
#[derive(Debug, Clone)]
pub struct SwarmBundle {
    pub theta: ParameterVector,
    pub cloud: ParticleCloud,
    /// Per-step log conditional evidence under this bundle's theta.
    pub log_evidence_history: Vec<f64>,
    rng: FilterRng,
}

impl SwarmBundle {
    /// Cumulative log evidence log p̂(y_{1:t} | theta) so far.
    pub fn cumulative_log_evidence(&self) -> f64 {
        self.log_evidence_history.iter().sum()
    }
}

/// Start one independent SISR filter per parameter draw, with per-bundle RNG
/// streams derived from the master seed and the bundle index.
pub fn swarm_init(
    thetas: &[ParameterVector],
    y1: f64,
    config: &SwarmConfig,
    master_seed: u64,
) -> Result<(Vec<SwarmBundle>, FilterRecord), FilterError> {
    let rngs = (0..thetas.len())
        .map(|b| FilterRng::new(master_seed, filter_instance(b as u64)))
        .collect();
    swarm_init_with_rngs(thetas, y1, config, rngs)
}

/// As `swarm_init`, but with caller-supplied RNG streams (one per theta).
pub fn swarm_init_with_rngs(
    thetas: &[ParameterVector],
    y1: f64,
    config: &SwarmConfig,
    rngs: Vec<FilterRng>,
) -> Result<(Vec<SwarmBundle>, FilterRecord), FilterError> {
    if thetas.is_empty() {
        return Err(FilterError::BadConfig(
            "swarm requires at least one parameter draw".into(),
        ));
    }
    if rngs.len() != thetas.len() {
        return Err(FilterError::BadConfig(format!(
            "expected {} RNG streams, got {}",
            thetas.len(),
            rngs.len()
        )));
    }
    let results: Vec<Result<(SwarmBundle, FilterRecord), FilterError>> = thetas
        .par_iter()
        .zip(rngs.into_par_iter())
        .map(|(&theta, mut rng)| {
            let model = SvModel::new(theta);
            let (cloud, record) = sisr::sisr_init(
                &model,
                y1,
                config.n_particles_per_theta,
                &Bootstrap,
                config.resample_threshold,
                &mut rng,
            )?;
            let bundle = SwarmBundle {
                theta,
                cloud,
                log_evidence_history: vec![record.log_cond_evidence],
                rng,
            };
            Ok((bundle, record))
        })
        .collect();

    let mut bundles = Vec::with_capacity(thetas.len());
    let mut records = Vec::with_capacity(thetas.len());
    for (theta_index, result) in results.into_iter().enumerate() {
        let (bundle, record) = result.map_err(|e| tag_bundle_error(e, theta_index))?;
        bundles.push(bundle);
        records.push(record);
    }
    let aggregate = aggregate_record(&bundles, &records, config.history_weighted);
    Ok((bundles, aggregate))
}

/// Advance every bundle one observation; bundles never exchange particles
/// and their parameters are never updated.
pub fn swarm_step(
    bundles: &mut [SwarmBundle],
    y_t: f64,
    y_prev: f64,
    config: &SwarmConfig,
) -> Result<FilterRecord, FilterError> {
    let results: Vec<Result<FilterRecord, FilterError>> = bundles
        .par_iter_mut()
        .map(|bundle| {
            let model = SvModel::new(bundle.theta);
            let record = sisr::sisr_step(
                &mut bundle.cloud,
                &model,
                y_t,
                y_prev,
                &Bootstrap,
                config.resample_threshold,
                &mut bundle.rng,
            )?;
            bundle.log_evidence_history.push(record.log_cond_evidence);
            Ok(record)
        })
        .collect();

    let mut records = Vec::with_capacity(bundles.len());
    for (theta_index, result) in results.into_iter().enumerate() {
        records.push(result.map_err(|e| tag_bundle_error(e, theta_index))?);
    }
    Ok(aggregate_record(bundles, &records, config.history_weighted))
}

/// Run a whole observation slice, returning the final bundles plus the
/// aggregate record stream.
pub fn run(
    thetas: &[ParameterVector],
    observations: &[f64],
    config: &SwarmConfig,
    master_seed: u64,
) -> Result<(Vec<SwarmBundle>, Vec<FilterRecord>), FilterError> {
    let mut records = Vec::with_capacity(observations.len());
    let (mut bundles, first) = swarm_init(thetas, observations[0], config, master_seed)?;
    records.push(first);
    for t in 1..observations.len() {
        records.push(swarm_step(
            &mut bundles,
            observations[t],
            observations[t - 1],
            config,
        )?);
    }
    Ok((bundles, records))
}

fn tag_bundle_error(e: FilterError, theta_index: usize) -> FilterError {
    match e {
        FilterError::Degenerate { time_index } => FilterError::DegenerateBundle {
            theta_index,
            time_index,
        },
        other => other,
    }
}

/// Sequential reduction of per-bundle records, in bundle-index order.
///
/// The aggregate conditional evidence is the arithmetic mean of per-bundle
/// conditional evidences (computed in log space). The aggregate filter mean
/// weights per-bundle means by per-bundle conditional evidence at the current
/// time. The aggregate ESS is the total effective size across bundles, lying
/// in [1, N * N_theta].
fn aggregate_record(
    bundles: &[SwarmBundle],
    records: &[FilterRecord],
    history_weighted: bool,
) -> FilterRecord {
    let evidences: Vec<f64> = records.iter().map(|r| r.log_cond_evidence).collect();
    let log_cond_evidence = if history_weighted {
        let cum_now: Vec<f64> = bundles.iter().map(|b| b.cumulative_log_evidence()).collect();
        let cum_prev: Vec<f64> = cum_now
            .iter()
            .zip(&evidences)
            .map(|(now, inc)| now - inc)
            .collect();
        log_mean_exp(&cum_now) - log_mean_exp(&cum_prev)
    } else {
        log_mean_exp(&evidences)
    };
    let means: Vec<f64> = records.iter().map(|r| r.filter_mean).collect();
    FilterRecord {
        time_index: records[0].time_index,
        log_cond_evidence,
        filter_mean: weighted_mean(&means, &evidences),
        ess: records.iter().map(|r| r.ess).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_sum_exp;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn theta(mu: f64, phi: f64, sigma_sq: f64, rho: f64) -> ParameterVector {
        ParameterVector::new(mu, phi, sigma_sq, rho).unwrap()
    }

    fn observations(n: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| 1.2 * r.random::<f64>() - 0.6).collect()
    }

    #[test]
    fn empty_theta_set_is_rejected() {
        let cfg = SwarmConfig::new(10, 0.5).unwrap();
        assert!(matches!(
            swarm_init(&[], 0.1, &cfg, 1),
            Err(FilterError::BadConfig(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SwarmConfig::new(0, 0.5).is_err());
        assert!(SwarmConfig::new(5, 0.0).is_err());
        assert!(SwarmConfig::new(5, 1.5).is_err());
        assert!(SwarmConfig::new(5, 1.0).is_ok());
    }

    #[test]
    fn single_bundle_swarm_equals_standalone_sisr_bitwise() {
        let th = theta(-0.5, 0.9, 0.1, -0.3);
        let ys = observations(80, 11);
        let cfg = SwarmConfig::new(200, 0.5).unwrap();
        let (_, swarm_records) = run(&[th], &ys, &cfg, 4242).unwrap();

        let mut rng = FilterRng::new(4242, filter_instance(0));
        let (_, solo_records) = sisr::run(
            &SvModel::new(th),
            &ys,
            200,
            &Bootstrap,
            0.5,
            &mut rng,
        )
        .unwrap();

        assert_eq!(swarm_records.len(), solo_records.len());
        for (a, b) in swarm_records.iter().zip(&solo_records) {
            assert_eq!(a.time_index, b.time_index);
            assert_eq!(a.log_cond_evidence.to_bits(), b.log_cond_evidence.to_bits());
            assert_eq!(a.filter_mean.to_bits(), b.filter_mean.to_bits());
            assert_eq!(a.ess.to_bits(), b.ess.to_bits());
        }
    }

    #[test]
    fn duplicated_bundles_with_equal_streams_match_single_filter_exactly() {
        let th = theta(0.2, 0.85, 0.06, 0.0);
        let ys = observations(40, 3);
        let cfg = SwarmConfig::new(100, 0.5).unwrap();
        // Every bundle gets the SAME stream, so all three runs are copies.
        let rngs = (0..3)
            .map(|_| FilterRng::new(7, filter_instance(0)))
            .collect();
        let (mut bundles, first) = swarm_init_with_rngs(&[th; 3], ys[0], &cfg, rngs).unwrap();
        let mut records = vec![first];
        for t in 1..ys.len() {
            records.push(swarm_step(&mut bundles, ys[t], ys[t - 1], &cfg).unwrap());
        }

        let mut rng = FilterRng::new(7, filter_instance(0));
        let (_, solo) = sisr::run(&SvModel::new(th), &ys, 100, &Bootstrap, 0.5, &mut rng).unwrap();
        for (a, b) in records.iter().zip(&solo) {
            // mean of three identical evidences is that evidence
            assert_abs_diff_eq!(a.log_cond_evidence, b.log_cond_evidence, epsilon = 1e-12);
            assert_abs_diff_eq!(a.filter_mean, b.filter_mean, epsilon = 1e-12);
            assert_abs_diff_eq!(a.ess, 3.0 * b.ess, epsilon = 1e-9);
        }
    }

    #[test]
    fn aggregate_evidence_is_log_mean_of_bundle_evidences() {
        // Two bundles with per-theta evidences 1 and 3 average to 2.
        let records = [
            FilterRecord {
                time_index: 1,
                log_cond_evidence: 1.0f64.ln(),
                filter_mean: 0.0,
                ess: 10.0,
            },
            FilterRecord {
                time_index: 1,
                log_cond_evidence: 3.0f64.ln(),
                filter_mean: 1.0,
                ess: 12.0,
            },
        ];
        let bundles: Vec<SwarmBundle> = records
            .iter()
            .map(|r| SwarmBundle {
                theta: theta(0.0, 0.5, 0.1, 0.0),
                cloud: ParticleCloud {
                    particles: vec![0.0],
                    log_weights: vec![0.0],
                    time_index: 1,
                },
                log_evidence_history: vec![r.log_cond_evidence],
                rng: FilterRng::new(0, filter_instance(0)),
            })
            .collect();
        let agg = aggregate_record(&bundles, &records, false);
        assert_abs_diff_eq!(agg.log_cond_evidence, 2.0f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(agg.ess, 22.0, epsilon = 1e-14);
        // mean weighted by conditional evidence: (1*0 + 3*1)/4
        assert_abs_diff_eq!(agg.filter_mean, 0.75, epsilon = 1e-14);
        // equal evidences aggregate to themselves
        let equal = [records[0], records[0]];
        let agg_eq = aggregate_record(&bundles, &equal, false);
        assert_abs_diff_eq!(agg_eq.log_cond_evidence, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn history_weighting_tilts_toward_better_explaining_bundles() {
        let thetas = [
            theta(-0.4, 0.92, 0.07, -0.4),
            theta(3.0, 0.2, 0.5, 0.6),
        ];
        let ys = observations(60, 21);
        let plain = SwarmConfig::new(150, 0.5).unwrap();
        let weighted = plain.with_history_weighting();
        let (_, rec_plain) = run(&thetas, &ys, &plain, 99).unwrap();
        let (_, rec_weighted) = run(&thetas, &ys, &weighted, 99).unwrap();
        // First step has no history; the two estimators coincide there.
        assert_abs_diff_eq!(
            rec_plain[0].log_cond_evidence,
            rec_weighted[0].log_cond_evidence,
            epsilon = 1e-12
        );
        // Totals diverge once histories separate the bundles.
        let total_plain: f64 = rec_plain.iter().map(|r| r.log_cond_evidence).sum();
        let total_weighted: f64 = rec_weighted.iter().map(|r| r.log_cond_evidence).sum();
        assert!(total_plain.is_finite() && total_weighted.is_finite());
        assert!((total_plain - total_weighted).abs() > 1e-6);
    }

    #[test]
    fn aggregate_evidence_is_permutation_invariant() {
        let thetas = vec![
            theta(-0.5, 0.9, 0.1, -0.3),
            theta(0.1, 0.8, 0.05, 0.2),
            theta(-1.0, 0.95, 0.2, -0.6),
        ];
        let ys = observations(50, 17);
        let cfg = SwarmConfig::new(120, 0.5).unwrap();

        let order: Vec<usize> = vec![0, 1, 2];
        let perm: Vec<usize> = vec![2, 0, 1];
        let run_in = |idx: &[usize]| {
            let ths: Vec<ParameterVector> = idx.iter().map(|&i| thetas[i]).collect();
            let rngs = idx
                .iter()
                .map(|&i| FilterRng::new(31, filter_instance(i as u64)))
                .collect();
            let (mut bundles, first) = swarm_init_with_rngs(&ths, ys[0], &cfg, rngs).unwrap();
            let mut recs = vec![first];
            for t in 1..ys.len() {
                recs.push(swarm_step(&mut bundles, ys[t], ys[t - 1], &cfg).unwrap());
            }
            recs
        };
        let a = run_in(&order);
        let b = run_in(&perm);
        for (ra, rb) in a.iter().zip(&b) {
            assert_abs_diff_eq!(ra.log_cond_evidence, rb.log_cond_evidence, epsilon = 1e-12);
            assert_abs_diff_eq!(ra.ess, rb.ess, epsilon = 1e-9);
        }
    }

    #[test]
    fn bundle_errors_name_the_theta_index_and_time() {
        // A state far in the right tail saturates exp(-x/2) scaling in the
        // leverage term only when rho != 0; drive a bundle into saturation by
        // an extreme observation with an extreme mu.
        let good = theta(0.0, 0.9, 0.1, -0.3);
        let cfg = SwarmConfig::new(50, 0.5).unwrap();
        let (mut bundles, _) = swarm_init(&[good, good], 0.5, &cfg, 5).unwrap();
        // Force the second bundle's cloud into impossible territory: particles
        // at huge negative log-variance make every observation density zero.
        let cloud = &mut bundles[1].cloud;
        cloud.particles.iter_mut().for_each(|x| *x = -600.0);
        cloud.log_weights.iter_mut().for_each(|lw| *lw = 0.0);
        let err = swarm_step(&mut bundles, 4.0, 0.5, &cfg).unwrap_err();
        match err {
            FilterError::DegenerateBundle { theta_index, time_index } => {
                assert_eq!(theta_index, 1);
                assert_eq!(time_index, 2);
            }
            other => panic!("expected a bundle-tagged degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn worker_count_does_not_change_outputs() {
        let thetas = vec![
            theta(-0.5, 0.9, 0.1, -0.3),
            theta(0.1, 0.8, 0.05, 0.2),
            theta(-1.0, 0.95, 0.2, -0.6),
            theta(0.4, 0.7, 0.3, 0.5),
        ];
        let ys = observations(30, 23);
        let cfg = SwarmConfig::new(80, 0.5).unwrap();
        let baseline = run(&thetas, &ys, &cfg, 77).unwrap().1;
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&thetas, &ys, &cfg, 77).unwrap().1);
        for (a, b) in baseline.iter().zip(&single) {
            assert_eq!(a.log_cond_evidence.to_bits(), b.log_cond_evidence.to_bits());
            assert_eq!(a.filter_mean.to_bits(), b.filter_mean.to_bits());
            assert_eq!(a.ess.to_bits(), b.ess.to_bits());
        }
    }

    #[test]
    fn per_bundle_evidence_streams_are_exposed() {
        let thetas = vec![theta(-0.5, 0.9, 0.1, -0.3), theta(0.1, 0.8, 0.05, 0.2)];
        let ys = observations(25, 29);
        let cfg = SwarmConfig::new(60, 0.5).unwrap();
        let (bundles, _) = run(&thetas, &ys, &cfg, 13).unwrap();
        for b in &bundles {
            assert_eq!(b.log_evidence_history.len(), ys.len());
            assert!(b.cumulative_log_evidence().is_finite());
            // normalized weights of every surviving cloud sum to 1
            let s: f64 = b.cloud.normalized_weights().iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            assert!(log_sum_exp(&b.cloud.log_weights).is_finite());
        }
    }
}
