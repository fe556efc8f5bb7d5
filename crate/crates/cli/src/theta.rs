//! Parameter sources for filter initialization.
//!
//! Filters that track parameters (or a swarm of them) need an initial set of
//! parameter draws; the plain state filter needs a single point estimate.
//! Draws can come from a posterior samples file (resampled rows, informative
//! uniforms over its central 95% interval, or its mean as a point estimate),
//! from the model prior, or from explicit values on the command line.

use anyhow::{bail, Context, Result};
use rand::Rng;
use std::str::FromStr;
use svolfc::diagnostics::parameter_summaries;
use svolfc::io::PosteriorRow;
use svolfc::model::{self, ParameterVector};
use svolfc::seed::{scalar_stream, theta_source_instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaSource {
    /// Resample rows of a posterior samples file with replacement.
    PosteriorCsv,
    /// Independent uniforms over each parameter's central 95% posterior
    /// interval.
    UniformBounds,
    /// A single point estimate: the posterior mean, or explicit values.
    Fixed,
    /// Draws from the model prior.
    Prior,
}

impl ThetaSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThetaSource::PosteriorCsv => "posterior-csv",
            ThetaSource::UniformBounds => "uniform-bounds",
            ThetaSource::Fixed => "fixed",
            ThetaSource::Prior => "prior",
        }
    }

}

impl FromStr for ThetaSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "posterior-csv" => Ok(ThetaSource::PosteriorCsv),
            "uniform-bounds" => Ok(ThetaSource::UniformBounds),
            "fixed" => Ok(ThetaSource::Fixed),
            "prior" => Ok(ThetaSource::Prior),
            other => Err(format!(
                "unknown theta source `{other}` (expected posterior-csv, uniform-bounds, fixed, or prior)"
            )),
        }
    }
}

/// Everything a source may need: posterior rows (already read), explicit
/// parameter values, the burn-in fraction to discard, and the seed material
/// for reproducible draws.
pub struct ThetaContext<'a> {
    pub posterior: Option<&'a [PosteriorRow]>,
    pub explicit: Option<ParameterVector>,
    pub burn_in: f64,
    pub master_seed: u64,
    pub run_index: u64,
}

/// Posterior rows with the burn-in prefix dropped.
fn usable_rows<'a>(ctx: &ThetaContext<'a>) -> Result<&'a [PosteriorRow]> {
    let rows = ctx
        .posterior
        .context("this theta source needs a posterior samples file (--posterior)")?;
    if !(0.0..1.0).contains(&ctx.burn_in) {
        bail!("burn-in fraction must lie in [0, 1), got {}", ctx.burn_in);
    }
    let skip = (rows.len() as f64 * ctx.burn_in).floor() as usize;
    let kept = &rows[skip.min(rows.len())..];
    if kept.is_empty() {
        bail!("posterior file has no samples left after burn-in");
    }
    Ok(kept)
}

fn posterior_thetas(rows: &[PosteriorRow]) -> Vec<ParameterVector> {
    rows.iter().map(|r| r.theta).collect()
}

fn uniform_in<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// The single parameter point a fixed source resolves to: explicit values
/// when given, otherwise the burn-in-trimmed posterior mean.
pub fn point_estimate(ctx: &ThetaContext) -> Result<ParameterVector> {
    if let Some(theta) = ctx.explicit {
        return Ok(theta);
    }
    let rows = usable_rows(ctx).context(
        "fixed theta source needs either explicit values (--mu --phi --sigma-sq --rho) \
         or a posterior samples file",
    )?;
    let thetas = posterior_thetas(rows);
    let s = parameter_summaries(&thetas);
    ParameterVector::new(s.mu.mean, s.phi.mean, s.sigma_sq.mean, s.rho.mean)
        .context("posterior mean is not a valid parameter point")
}

/// Draw `n` parameter vectors from the source. Draws are deterministic in
/// (master_seed, run_index).
pub fn draw_thetas(source: ThetaSource, n: usize, ctx: &ThetaContext) -> Result<Vec<ParameterVector>> {
    if n == 0 {
        bail!("cannot draw 0 parameter vectors");
    }
    let mut rng = scalar_stream(ctx.master_seed, theta_source_instance(ctx.run_index));
    match source {
        ThetaSource::Fixed => {
            let theta = point_estimate(ctx)?;
            Ok(vec![theta; n])
        }
        ThetaSource::Prior => Ok((0..n).map(|_| model::sample_prior(&mut rng)).collect()),
        ThetaSource::PosteriorCsv => {
            let rows = usable_rows(ctx)?;
            Ok((0..n)
                .map(|_| rows[rng.random_range(0..rows.len())].theta)
                .collect())
        }
        ThetaSource::UniformBounds => {
            let rows = usable_rows(ctx)?;
            let s = parameter_summaries(&posterior_thetas(rows));
            let bounds = [
                (s.mu.lower, s.mu.upper),
                (s.phi.lower, s.phi.upper),
                (s.sigma_sq.lower, s.sigma_sq.upper),
                (s.rho.lower, s.rho.upper),
            ];
            (0..n)
                .map(|_| {
                    let mu = uniform_in(&mut rng, bounds[0]);
                    let phi = uniform_in(&mut rng, bounds[1]);
                    let sigma_sq = uniform_in(&mut rng, bounds[2]);
                    let rho = uniform_in(&mut rng, bounds[3]);
                    ParameterVector::new(mu, phi, sigma_sq, rho)
                        .context("uniform bounds produced an invalid parameter point")
                })
                .collect()
        }
    }
}
