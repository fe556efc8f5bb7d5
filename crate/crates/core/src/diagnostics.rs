//! Posterior and forecast diagnostics: potential scale reduction (R-hat),
//! sample autocorrelation, posterior summaries with central credible
//! intervals, cumulative log evidence, and relative-evidence simplex series
//! for comparing algorithms' conditional evidence streams.

use crate::filters::FilterRecord;
use crate::math::{mean, quantile};
use crate::model::ParameterVector;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("zero within-chain variance in every chain")]
    ZeroWithinVariance,
    #[error("constant series has no autocorrelation")]
    ConstantSeries,
    #[error("all log evidences are -infinity at time index {time_index}")]
    AllNegInfinite { time_index: usize },
}

/// Potential scale reduction factor across chains of scalar samples.
///
/// Uses the pooled-variance form R̂ = sqrt(V / W), where V is the variance of
/// all samples about the grand mean and W the mean within-chain variance
/// (matching divisors). V = W + B is an algebraic identity, so R̂ ≥ 1 exactly,
/// with equality only when every chain mean coincides. With `split` set
/// (the default in the harness), each chain is halved first, which exposes
/// within-chain drift; odd-length chains drop their middle sample.
pub fn rhat(chains: &[Vec<f64>], split: bool) -> Result<f64, DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::BadInput(format!(
            "R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(DiagnosticsError::BadInput("chains have unequal lengths".into()));
    }
    if len < 4 {
        return Err(DiagnosticsError::BadInput(format!(
            "R-hat needs chains of length >= 4, got {len}"
        )));
    }

    let sequences: Vec<&[f64]> = if split {
        let half = len / 2;
        chains
            .iter()
            .flat_map(|c| [&c[..half], &c[len - half..]])
            .collect()
    } else {
        chains.iter().map(|c| c.as_slice()).collect()
    };

    let n = sequences[0].len() as f64;
    let m = sequences.len() as f64;
    let seq_means: Vec<f64> = sequences.iter().map(|s| mean(s)).collect();
    let grand = mean(&seq_means);
    let within: f64 = sequences
        .iter()
        .zip(&seq_means)
        .map(|(s, sm)| s.iter().map(|x| (x - sm) * (x - sm)).sum::<f64>() / n)
        .sum::<f64>()
        / m;
    if within == 0.0 {
        return Err(DiagnosticsError::ZeroWithinVariance);
    }
    let between: f64 = seq_means.iter().map(|sm| (sm - grand) * (sm - grand)).sum::<f64>() / m;
    Ok(((within + between) / within).sqrt())
}

/// R-hat for each model parameter across chains of parameter samples,
/// in the order (mu, phi, sigma_sq, rho).
pub fn rhat_per_parameter(
    chains: &[Vec<ParameterVector>],
    split: bool,
) -> Result<[f64; 4], DiagnosticsError> {
    let extract = |f: fn(&ParameterVector) -> f64| -> Vec<Vec<f64>> {
        chains.iter().map(|c| c.iter().map(f).collect()).collect()
    };
    Ok([
        rhat(&extract(|p| p.mu), split)?,
        rhat(&extract(|p| p.phi), split)?,
        rhat(&extract(|p| p.sigma_sq), split)?,
        rhat(&extract(|p| p.rho), split)?,
    ])
}

/// Sample autocorrelations of `series` at lags 0..=max_lag (lag 0 is 1).
/// Both numerator and denominator are divided by the series length, the
/// convention of mainstream statistics packages.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>, DiagnosticsError> {
    if series.len() <= max_lag {
        return Err(DiagnosticsError::BadInput(format!(
            "series of length {} cannot support lag {max_lag}",
            series.len()
        )));
    }
    let n = series.len();
    let m = mean(series);
    let denom: f64 = series.iter().map(|x| (x - m) * (x - m)).sum();
    if denom == 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let num: f64 = (0..n - lag)
            .map(|t| (series[t] - m) * (series[t + lag] - m))
            .sum();
        out.push(num / denom);
    }
    Ok(out)
}

/// Posterior mean with an empirical 95% central credible interval
/// (2.5% and 97.5% type-7 quantiles). The interval doubles as the support of
/// the "informative uniform" parameter source for filter initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn posterior_summary(samples: &[f64]) -> PosteriorSummary {
    assert!(!samples.is_empty(), "posterior summary of empty sample set");
    PosteriorSummary {
        mean: mean(samples),
        lower: quantile(samples, 0.025),
        upper: quantile(samples, 0.975),
    }
}

/// Per-parameter posterior summaries for a sampled parameter chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSummaries {
    pub mu: PosteriorSummary,
    pub phi: PosteriorSummary,
    pub sigma_sq: PosteriorSummary,
    pub rho: PosteriorSummary,
}

pub fn parameter_summaries(samples: &[ParameterVector]) -> ParameterSummaries {
    let col = |f: fn(&ParameterVector) -> f64| -> Vec<f64> { samples.iter().map(f).collect() };
    ParameterSummaries {
        mu: posterior_summary(&col(|p| p.mu)),
        phi: posterior_summary(&col(|p| p.phi)),
        sigma_sq: posterior_summary(&col(|p| p.sigma_sq)),
        rho: posterior_summary(&col(|p| p.rho)),
    }
}

/// Running sum of log conditional evidences: entry t is
/// log p̂(y_{1:t+1} | history before the records began).
pub fn cumulative_log_evidence(records: &[FilterRecord]) -> Vec<f64> {
    records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.log_cond_evidence;
            Some(*acc)
        })
        .collect()
}

/// Per-time points on the (K-1)-simplex with coordinate i proportional to
/// algorithm i's conditional evidence at that time. Streams are per-algorithm
/// log-evidence series of equal length; normalization is max-shifted so only
/// evidence ratios matter.
pub fn simplex_series(streams: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DiagnosticsError> {
    if streams.len() < 2 {
        return Err(DiagnosticsError::BadInput(format!(
            "simplex series needs at least 2 algorithms, got {}",
            streams.len()
        )));
    }
    let len = streams[0].len();
    if streams.iter().any(|s| s.len() != len) {
        return Err(DiagnosticsError::BadInput("evidence streams have unequal lengths".into()));
    }
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let logs: Vec<f64> = streams.iter().map(|s| s[t]).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(DiagnosticsError::AllNegInfinite { time_index: t + 1 });
        }
        let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        out.push(raw.iter().map(|w| w / total).collect());
    }
    Ok(out)
}

/// Batch-means standard error of the mean of a correlated series: the series
/// is cut into `n_batches` equal batches (trailing remainder dropped) and the
/// standard deviation of the batch means, divided by sqrt(n_batches), is
/// returned. Requires at least two elements per batch.
pub fn batch_means_se(series: &[f64], n_batches: usize) -> Result<f64, DiagnosticsError> {
    if n_batches < 2 {
        return Err(DiagnosticsError::BadInput(format!(
            "batch means need at least 2 batches, got {n_batches}"
        )));
    }
    let batch_len = series.len() / n_batches;
    if batch_len < 2 {
        return Err(DiagnosticsError::BadInput(format!(
            "series of length {} is too short for {n_batches} batches",
            series.len()
        )));
    }
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&series[b * batch_len..(b + 1) * batch_len]))
        .collect();
    let grand = mean(&batch_means);
    let var = batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>()
        / (n_batches - 1) as f64;
    Ok((var / n_batches as f64).sqrt())
}
