//! Sequential importance sampling with resampling.
//!
//! The filter carries raw log-weights between steps and resets them to zero
//! on resampling. The per-step conditional evidence is the ratio of raw
//! weight sums before and after the incremental reweighting,
//! log p(y_t | y_{1:t-1}) = lse(new log-weights) - lse(carried log-weights),
//! which reduces to the plain log-mean of weights whenever the previous step
//! resampled and keeps the running product equal to the standard unbiased
//! likelihood estimator under adaptive resampling.

use super::{ess, maybe_resample, FilterError, FilterRecord, ParticleCloud};
use crate::math::log_sum_exp;
use crate::seed::FilterRng;
use crate::ssm::{StateProposal, StateSpaceModel};

/// Start a filter on the first observation.
pub fn sisr_init<M, P>(
    model: &M,
    y1: f64,
    n_particles: usize,
    proposal: &P,
    resample_threshold: f64,
    rng: &mut FilterRng,
) -> Result<(ParticleCloud, FilterRecord), FilterError>
where
    M: StateSpaceModel,
    P: StateProposal<M>,
{
    if n_particles == 0 {
        return Err(FilterError::BadConfig("n_particles must be >= 1".into()));
    }
    let mut particles = Vec::with_capacity(n_particles);
    let mut log_weights = Vec::with_capacity(n_particles);
    for _ in 0..n_particles {
        let x = proposal.sample_initial(model, y1, &mut rng.state);
        log_weights.push(proposal.initial_log_weight(model, x, y1));
        particles.push(x);
    }
    let lse = log_sum_exp(&log_weights);
    if !lse.is_finite() {
        return Err(FilterError::Degenerate { time_index: 1 });
    }
    let mut cloud = ParticleCloud { particles, log_weights, time_index: 1 };
    let record = FilterRecord {
        time_index: 1,
        log_cond_evidence: lse - (n_particles as f64).ln(),
        filter_mean: cloud.filter_mean(),
        ess: ess(&cloud.log_weights),
    };
    maybe_resample(&mut cloud, record.ess, resample_threshold, &mut rng.resample);
    Ok((cloud, record))
}

/// Advance the cloud from time t-1 to t.
pub fn sisr_step<M, P>(
    cloud: &mut ParticleCloud,
    model: &M,
    y_t: f64,
    y_prev: f64,
    proposal: &P,
    resample_threshold: f64,
    rng: &mut FilterRng,
) -> Result<FilterRecord, FilterError>
where
    M: StateSpaceModel,
    P: StateProposal<M>,
{
    let carried_lse = log_sum_exp(&cloud.log_weights);
    let time_index = cloud.time_index + 1;
    for i in 0..cloud.len() {
        let x_prev = cloud.particles[i];
        let x = proposal.sample_transition(model, x_prev, y_prev, y_t, &mut rng.state)?;
        cloud.log_weights[i] += proposal.transition_log_weight(model, x, x_prev, y_prev, y_t)?;
        cloud.particles[i] = x;
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
    maybe_resample(cloud, record.ess, resample_threshold, &mut rng.resample);
    Ok(record)
}

/// Run the filter across a whole observation slice.
pub fn run<M, P>(
    model: &M,
    observations: &[f64],
    n_particles: usize,
    proposal: &P,
    resample_threshold: f64,
    rng: &mut FilterRng,
) -> Result<(ParticleCloud, Vec<FilterRecord>), FilterError>
where
    M: StateSpaceModel,
    P: StateProposal<M>,
{
    let mut records = Vec::with_capacity(observations.len());
    let (mut cloud, first) = sisr_init(
        model,
        observations[0],
        n_particles,
        proposal,
        resample_threshold,
        rng,
    )?;
    records.push(first);
    for t in 1..observations.len() {
        let rec = sisr_step(
            &mut cloud,
            model,
            observations[t],
            observations[t - 1],
            proposal,
            resample_threshold,
            rng,
        )?;
        records.push(rec);
    }
    Ok((cloud, records))
}

/// Total log-likelihood estimate: the sum of per-step conditional evidences.
pub fn total_log_likelihood<M, P>(
    model: &M,
    observations: &[f64],
    n_particles: usize,
    proposal: &P,
    resample_threshold: f64,
    rng: &mut FilterRng,
) -> Result<f64, FilterError>
where
    M: StateSpaceModel,
    P: StateProposal<M>,
{
    let (_, records) = run(model, observations, n_particles, proposal, resample_threshold, rng)?;
    Ok(records.iter().map(|r| r.log_cond_evidence).sum())
}
