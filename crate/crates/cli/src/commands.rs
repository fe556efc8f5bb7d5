//! The five pipeline commands: price-to-return conversion, offline
//! estimation, online filtering, evidence comparison, and replicated
//! posterior approximation.
//!
//! Every command resolves its settings from defaults, then the config file,
//! then command-line flags, and embeds the resolved configuration as a `#`
//! comment at the top of each file it writes. All randomness derives from
//! the master seed, so reruns with the same settings reproduce outputs
//! exactly; the worker-thread count never changes results.

use crate::config::{echo, FileConfig};
use crate::theta::{draw_thetas, point_estimate, ThetaContext, ThetaSource};
use anyhow::{bail, Context, Result};
use clap::Args;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use svolfc::data::{log_returns, load_prices, split_by_year, ReturnSeries};
use svolfc::diagnostics::{
    acf, batch_means_se, cumulative_log_evidence, parameter_summaries, rhat_per_parameter,
    simplex_series,
};
use svolfc::filters::{liu_west, sisr, swarm};
use svolfc::io::{self, CloudRow, PosteriorRow};
use svolfc::model::{ParameterVector, SvModel};
use svolfc::pmmh::{pmmh_run, McmcOutput, ProposalConfig, SvPosterior};
use svolfc::seed::{experiment_instance, filter_instance, FilterRng};
use svolfc::ssm::Bootstrap;

const PARAM_NAMES: [&str; 4] = ["mu", "phi", "sigma_sq", "rho"];
const DEFAULT_SEED: u64 = 1;
const DEFAULT_THRESHOLD: f64 = 0.5;
const DEFAULT_DELTA: f64 = 0.99;
const DEFAULT_BURN_IN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sisr,
    Lw1,
    Lw2,
    Swarm,
}

impl Algorithm {
    fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sisr => "sisr",
            Algorithm::Lw1 => "lw1",
            Algorithm::Lw2 => "lw2",
            Algorithm::Swarm => "swarm",
        }
    }

    fn default_particles(&self) -> usize {
        match self {
            Algorithm::Sisr => 1000,
            Algorithm::Lw1 | Algorithm::Lw2 => 500,
            Algorithm::Swarm => 100,
        }
    }

    fn default_theta_source(&self) -> ThetaSource {
        match self {
            Algorithm::Sisr => ThetaSource::Fixed,
            Algorithm::Lw1 | Algorithm::Lw2 => ThetaSource::UniformBounds,
            Algorithm::Swarm => ThetaSource::PosteriorCsv,
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sisr" => Ok(Algorithm::Sisr),
            "lw1" => Ok(Algorithm::Lw1),
            "lw2" => Ok(Algorithm::Lw2),
            "swarm" => Ok(Algorithm::Swarm),
            other => Err(format!(
                "unknown algorithm `{other}` (expected sisr, lw1, lw2, or swarm)"
            )),
        }
    }
}

fn require_path(value: Option<PathBuf>, what: &str, flag: &str) -> Result<PathBuf> {
    value.with_context(|| format!("{what} is required (pass {flag} or set it in the config file)"))
}

fn read_nonempty_returns(path: &Path) -> Result<ReturnSeries> {
    let series = io::read_returns(path)?;
    if series.returns.is_empty() {
        bail!("returns file {} holds no observations", path.display());
    }
    Ok(series)
}

/// The training prefix: everything up to the cutoff year when one is given,
/// the whole series otherwise.
fn training_slice(series: &ReturnSeries, cutoff_year: Option<i32>) -> Result<(Vec<f64>, String)> {
    match cutoff_year {
        None => Ok((series.returns.clone(), "none".to_string())),
        Some(year) => {
            let spec = split_by_year(series, year)?;
            let (train, _) = series.split(&spec);
            Ok((train.to_vec(), year.to_string()))
        }
    }
}

fn validate_burn_in(burn_in: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&burn_in) {
        bail!("burn-in fraction must lie in [0, 1), got {burn_in}");
    }
    Ok(burn_in)
}

fn per_parameter_series(samples: &[ParameterVector]) -> [Vec<f64>; 4] {
    [
        samples.iter().map(|p| p.mu).collect(),
        samples.iter().map(|p| p.phi).collect(),
        samples.iter().map(|p| p.sigma_sq).collect(),
        samples.iter().map(|p| p.rho).collect(),
    ]
}

fn drop_burn_in<T: Clone>(samples: &[T], burn_in: f64) -> Vec<T> {
    let skip = (samples.len() as f64 * burn_in).floor() as usize;
    samples[skip.min(samples.len())..].to_vec()
}

fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

// ---------------------------------------------------------------------------
// returns
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReturnsArgs {
    /// Price CSV with columns date,adj_close.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Output returns CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_returns(args: ReturnsArgs, file: &FileConfig) -> Result<()> {
    let prices = require_path(file.resolve_opt(args.prices, "prices")?, "a price CSV", "--prices")?;
    let out = require_path(file.resolve_opt(args.out, "out")?, "an output path", "--out")?;

    let report = load_prices(&prices)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let series = log_returns(&report.series)?;
    let comment = echo(
        "returns",
        &[
            ("prices", prices.display().to_string()),
            ("out", out.display().to_string()),
        ],
    );
    io::write_returns(&out, &comment, &series)?;
    println!(
        "wrote {} returns ({} .. {}) to {}",
        series.returns.len(),
        series.dates.first().map(|d| d.to_string()).unwrap_or_default(),
        series.dates.last().map(|d| d.to_string()).unwrap_or_default(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Returns CSV (date,return_pct).
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Train on returns dated up to and including this year.
    #[arg(long)]
    cutoff_year: Option<i32>,
    /// Sampler iterations (the first is the initial state).
    #[arg(long)]
    iterations: Option<usize>,
    /// Particles per filter replicate.
    #[arg(long)]
    n_particles: Option<usize>,
    /// Independent filter replicates averaged per likelihood evaluation.
    #[arg(long)]
    replicates: Option<usize>,
    /// ESS fraction below which filters resample.
    #[arg(long)]
    resample_threshold: Option<f64>,
    /// Isotropic random-walk proposal variance on the unconstrained space.
    #[arg(long)]
    proposal_scale: Option<f64>,
    /// Independent chains (chain k uses its own seed stream).
    #[arg(long)]
    chains: Option<usize>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of each chain discarded before summaries (raw chains are
    /// always persisted; traces and autocorrelations stay raw).
    #[arg(long)]
    burn_in: Option<f64>,
    /// Largest autocorrelation lag in the ACF tables.
    #[arg(long)]
    max_lag: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn cmd_estimate(args: EstimateArgs, file: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let returns_path =
        require_path(file.resolve_opt(args.returns, "returns")?, "a returns CSV", "--returns")?;
    let out_dir = require_path(
        file.resolve_opt(args.out_dir, "out_dir")?,
        "an output directory",
        "--out-dir",
    )?;
    let cutoff_year = file.resolve_opt(args.cutoff_year, "cutoff_year")?;
    let iterations = file.resolve(args.iterations, "iterations", 2000)?;
    let n_particles = file.resolve(args.n_particles, "n_particles", 100)?;
    let replicates = file.resolve(args.replicates, "replicates", 7)?;
    let threshold = file.resolve(args.resample_threshold, "resample_threshold", DEFAULT_THRESHOLD)?;
    let scale = file.resolve(args.proposal_scale, "proposal_scale", 2.38 * 2.38 / 4.0)?;
    let chains = file.resolve(args.chains, "chains", 1)?;
    let seed = file.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let burn_in = validate_burn_in(file.resolve(args.burn_in, "burn_in", DEFAULT_BURN_IN)?)?;
    let max_lag = file.resolve(args.max_lag, "max_lag", 50)?;
    if chains == 0 {
        bail!("chains must be >= 1");
    }

    let series = read_nonempty_returns(&returns_path)?;
    let (train, cutoff_echo) = training_slice(&series, cutoff_year)?;
    if train.is_empty() {
        bail!("training window holds no observations");
    }

    let config = ProposalConfig::new(
        ProposalConfig::scaled_identity(scale),
        replicates,
        n_particles,
        iterations,
        threshold,
    )?;
    let comment = echo(
        "estimate",
        &[
            ("returns", returns_path.display().to_string()),
            ("out_dir", out_dir.display().to_string()),
            ("cutoff_year", cutoff_echo),
            ("training_len", train.len().to_string()),
            ("iterations", iterations.to_string()),
            ("n_particles", n_particles.to_string()),
            ("replicates", replicates.to_string()),
            ("resample_threshold", threshold.to_string()),
            ("proposal_scale", scale.to_string()),
            ("chains", chains.to_string()),
            ("seed", seed.to_string()),
            ("burn_in", burn_in.to_string()),
            ("max_lag", max_lag.to_string()),
        ],
    );

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("failed to create {}", out_dir.display()))?;

    let mut outputs: Vec<McmcOutput> = Vec::with_capacity(chains);
    for chain in 0..chains {
        let target = SvPosterior::new(&train, &config, seed);
        let output = pmmh_run(&target, &config, None, seed, chain as u64)?;
        let path = if chains == 1 {
            out_dir.join("samples.csv")
        } else {
            out_dir.join(format!("samples_chain{}.csv", chain + 1))
        };
        io::write_posterior_samples(&path, &comment, &output)?;
        println!(
            "chain {}: {} samples, acceptance_rate={} -> {}",
            chain + 1,
            output.samples.len(),
            output.acceptance_rate,
            path.display()
        );
        outputs.push(output);
    }

    if iterations == 0 {
        println!("no iterations requested; diagnostics skipped");
        println!("elapsed_seconds={}", start.elapsed().as_secs_f64());
        return Ok(());
    }

    // Point summaries pool the burn-in-trimmed chains; convergence and
    // mixing diagnostics look at the raw chains.
    let pooled: Vec<ParameterVector> = outputs
        .iter()
        .flat_map(|o| drop_burn_in(&o.samples, burn_in))
        .collect();
    let summaries = parameter_summaries(&pooled);
    let summary_rows = [
        summaries.mu,
        summaries.phi,
        summaries.sigma_sq,
        summaries.rho,
    ];

    let rhats: [Option<f64>; 4] = if chains >= 2 {
        let chain_samples: Vec<Vec<ParameterVector>> =
            outputs.iter().map(|o| o.samples.clone()).collect();
        match rhat_per_parameter(&chain_samples, true) {
            Ok(values) => [Some(values[0]), Some(values[1]), Some(values[2]), Some(values[3])],
            Err(e) => {
                eprintln!("warning: potential scale reduction unavailable: {e}");
                [None; 4]
            }
        }
    } else {
        [None; 4]
    };

    let report: Vec<(String, svolfc::diagnostics::PosteriorSummary, Option<f64>)> = PARAM_NAMES
        .iter()
        .zip(summary_rows.iter())
        .zip(rhats.iter())
        .map(|((name, summary), rhat)| (name.to_string(), *summary, *rhat))
        .collect();
    io::write_parameter_report(&out_dir.join("diagnostics.csv"), &comment, &report)?;

    let first_chain = per_parameter_series(&outputs[0].samples);
    for (name, series) in PARAM_NAMES.iter().zip(first_chain.iter()) {
        io::write_trace(&out_dir.join(format!("trace_{name}.csv")), &comment, series)?;
        if series.len() < 2 {
            continue;
        }
        let lag = max_lag.min(series.len() - 1);
        match acf(series, lag) {
            Ok(values) => {
                io::write_acf(&out_dir.join(format!("acf_{name}.csv")), &comment, &values)?
            }
            Err(e) => eprintln!("warning: no ACF for {name}: {e}"),
        }
    }

    println!(
        "posterior means after burn-in: mu={} phi={} sigma_sq={} rho={}",
        summaries.mu.mean, summaries.phi.mean, summaries.sigma_sq.mean, summaries.rho.mean
    );
    println!("elapsed_seconds={}", start.elapsed().as_secs_f64());
    Ok(())
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Returns CSV (date,return_pct).
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Algorithm: sisr, lw1, lw2, or swarm.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// State particles (per parameter draw for swarm).
    #[arg(long)]
    n_particles: Option<usize>,
    /// Parameter draws for the swarm.
    #[arg(long)]
    n_theta: Option<usize>,
    /// Liu-West discount factor in (1/3, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// ESS fraction below which the filter resamples.
    #[arg(long)]
    resample_threshold: Option<f64>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Where initial parameters come from: posterior-csv, uniform-bounds,
    /// fixed, or prior.
    #[arg(long)]
    theta_source: Option<ThetaSource>,
    /// Posterior samples CSV backing the posterior-derived theta sources.
    #[arg(long)]
    posterior: Option<PathBuf>,
    /// Fraction of posterior samples discarded before use.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Weight swarm aggregates by whole-history evidence instead of the
    /// per-step default.
    #[arg(long)]
    history_weighted: bool,
    /// Explicit parameter point for the fixed source (give all four).
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_sq: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Output records CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn explicit_theta(args: &FilterArgs, file: &FileConfig) -> Result<Option<ParameterVector>> {
    let mu = file.resolve_opt(args.mu, "mu")?;
    let phi = file.resolve_opt(args.phi, "phi")?;
    let sigma_sq = file.resolve_opt(args.sigma_sq, "sigma_sq")?;
    let rho = file.resolve_opt(args.rho, "rho")?;
    match (mu, phi, sigma_sq, rho) {
        (None, None, None, None) => Ok(None),
        (Some(mu), Some(phi), Some(sigma_sq), Some(rho)) => {
            Ok(Some(ParameterVector::new(mu, phi, sigma_sq, rho)?))
        }
        _ => bail!("an explicit parameter point needs all of --mu --phi --sigma-sq --rho"),
    }
}

pub fn cmd_filter(args: FilterArgs, file: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let returns_path = require_path(
        file.resolve_opt(args.returns.clone(), "returns")?,
        "a returns CSV",
        "--returns",
    )?;
    let out = require_path(file.resolve_opt(args.out.clone(), "out")?, "an output path", "--out")?;
    let algorithm = file.resolve(args.algorithm, "algorithm", Algorithm::Sisr)?;
    let n_particles =
        file.resolve(args.n_particles, "n_particles", algorithm.default_particles())?;
    let n_theta = file.resolve(args.n_theta, "n_theta", 100)?;
    let delta = file.resolve(args.delta, "delta", DEFAULT_DELTA)?;
    let threshold =
        file.resolve(args.resample_threshold, "resample_threshold", DEFAULT_THRESHOLD)?;
    let seed = file.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let source =
        file.resolve(args.theta_source, "theta_source", algorithm.default_theta_source())?;
    let posterior_path = file.resolve_opt(args.posterior.clone(), "posterior")?;
    let burn_in = validate_burn_in(file.resolve(args.burn_in, "burn_in", DEFAULT_BURN_IN)?)?;
    let history_weighted = if args.history_weighted {
        true
    } else {
        file.resolve(None, "history_weighted", false)?
    };
    let explicit = explicit_theta(&args, file)?;

    let series = read_nonempty_returns(&returns_path)?;
    let observations = &series.returns;

    let posterior_rows: Option<Vec<PosteriorRow>> = match &posterior_path {
        Some(p) => Some(io::read_posterior_samples(p)?),
        None => None,
    };
    let ctx = ThetaContext {
        posterior: posterior_rows.as_deref(),
        explicit,
        burn_in,
        master_seed: seed,
        run_index: 0,
    };

    let mut pairs: Vec<(&str, String)> = vec![
        ("returns", returns_path.display().to_string()),
        ("out", out.display().to_string()),
        ("algorithm", algorithm.as_str().to_string()),
        ("n_particles", n_particles.to_string()),
        ("resample_threshold", threshold.to_string()),
        ("seed", seed.to_string()),
        ("theta_source", source.as_str().to_string()),
        ("burn_in", burn_in.to_string()),
    ];
    if let Some(p) = &posterior_path {
        pairs.push(("posterior", p.display().to_string()));
    }

    let records = match algorithm {
        Algorithm::Sisr => {
            if source != ThetaSource::Fixed {
                bail!(
                    "algorithm sisr runs at a single parameter point; \
                     use --theta-source fixed"
                );
            }
            let theta = point_estimate(&ctx)?;
            pairs.extend([
                ("mu", theta.mu.to_string()),
                ("phi", theta.phi.to_string()),
                ("sigma_sq", theta.sigma_sq.to_string()),
                ("rho", theta.rho.to_string()),
            ]);
            let model = SvModel::new(theta);
            let mut rng = FilterRng::new(seed, filter_instance(0));
            let (_, records) =
                sisr::run(&model, observations, n_particles, &Bootstrap, threshold, &mut rng)?;
            records
        }
        Algorithm::Lw1 | Algorithm::Lw2 => {
            let variant = if algorithm == Algorithm::Lw1 {
                liu_west::LiuWestVariant::Auxiliary
            } else {
                liu_west::LiuWestVariant::Plain
            };
            pairs.push(("delta", delta.to_string()));
            let draws = draw_thetas(source, n_particles, &ctx)?;
            let config = liu_west::LiuWestConfig::new(delta, n_particles, threshold)?;
            let mut rng = FilterRng::new(seed, filter_instance(0));
            let (_, records) = liu_west::run(variant, &draws, observations, &config, &mut rng)?;
            records
        }
        Algorithm::Swarm => {
            pairs.extend([
                ("n_theta", n_theta.to_string()),
                ("history_weighted", history_weighted.to_string()),
            ]);
            let thetas = draw_thetas(source, n_theta, &ctx)?;
            let mut config = swarm::SwarmConfig::new(n_particles, threshold)?;
            if history_weighted {
                config = config.with_history_weighting();
            }
            let (_, records) = swarm::run(&thetas, observations, &config, seed)?;
            records
        }
    };

    let comment = echo("filter", &pairs);
    io::write_filter_records(&out, &comment, algorithm.as_str(), &records)?;

    let total: f64 = records.iter().map(|r| r.log_cond_evidence).sum();
    println!(
        "{}: {} records, total_log_evidence={} -> {}",
        algorithm.as_str(),
        records.len(),
        total,
        out.display()
    );
    println!("elapsed_seconds={}", start.elapsed().as_secs_f64());
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Two or more record CSVs written by the filter command.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn dedupe_labels(labels: Vec<String>) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    labels
        .into_iter()
        .map(|label| {
            let count = seen.entry(label.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                label
            } else {
                format!("{label}_{count}")
            }
        })
        .collect()
}

pub fn cmd_compare(args: CompareArgs, file: &FileConfig) -> Result<()> {
    let out_dir = require_path(
        file.resolve_opt(args.out_dir, "out_dir")?,
        "an output directory",
        "--out-dir",
    )?;
    if args.inputs.len() < 2 {
        bail!(
            "comparison needs at least two record files, got {}",
            args.inputs.len()
        );
    }

    let mut labeled = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let records = io::read_filter_records(path)?;
        if records.records.is_empty() {
            bail!("{} holds no records", path.display());
        }
        labeled.push((path, records));
    }

    let (first_path, first) = &labeled[0];
    for (path, other) in &labeled[1..] {
        if other.records.len() != first.records.len() {
            bail!(
                "misaligned record files: {} has {} records but {} has {}",
                first_path.display(),
                first.records.len(),
                path.display(),
                other.records.len()
            );
        }
        for (a, b) in first.records.iter().zip(&other.records) {
            if a.time_index != b.time_index {
                bail!(
                    "misaligned time indices: {} has t={} where {} has t={}",
                    first_path.display(),
                    a.time_index,
                    path.display(),
                    b.time_index
                );
            }
        }
    }

    let labels = dedupe_labels(
        labeled
            .iter()
            .map(|(_, l)| l.algorithm_id.clone())
            .collect(),
    );
    let time_indices: Vec<usize> = first.records.iter().map(|r| r.time_index).collect();
    let cumulative: Vec<Vec<f64>> = labeled
        .iter()
        .map(|(_, l)| cumulative_log_evidence(&l.records))
        .collect();
    let simplex = simplex_series(&cumulative)?;
    let simplex_columns: Vec<Vec<f64>> = (0..labels.len())
        .map(|k| simplex.iter().map(|row| row[k]).collect())
        .collect();

    let comment = echo(
        "compare",
        &[
            (
                "inputs",
                args.inputs
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            ("algorithms", labels.join(";")),
            ("out_dir", out_dir.display().to_string()),
        ],
    );
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("failed to create {}", out_dir.display()))?;
    io::write_wide_table(
        &out_dir.join("cumulative_evidence.csv"),
        &comment,
        &labels,
        &time_indices,
        &cumulative,
    )?;
    io::write_wide_table(
        &out_dir.join("simplex.csv"),
        &comment,
        &labels,
        &time_indices,
        &simplex_columns,
    )?;

    println!("final cumulative log evidence:");
    for (label, cum) in labels.iter().zip(&cumulative) {
        println!("  {label}: {}", cum.last().unwrap());
    }
    println!("final relative evidence:");
    let last = simplex.last().unwrap();
    for (label, weight) in labels.iter().zip(last) {
        println!("  {label}: {weight}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// replicate-posteriors
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReplicateArgs {
    /// Returns CSV (date,return_pct).
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Train on returns dated up to and including this year.
    #[arg(long)]
    cutoff_year: Option<i32>,
    /// Independent replicate runs per Liu-West variant.
    #[arg(long)]
    runs: Option<usize>,
    /// Particles per Liu-West run.
    #[arg(long)]
    n_particles: Option<usize>,
    /// Liu-West discount factor in (1/3, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// ESS fraction below which the filters resample.
    #[arg(long)]
    resample_threshold: Option<f64>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Where each run's initial parameter cloud comes from.
    #[arg(long)]
    theta_source: Option<ThetaSource>,
    /// Posterior samples CSV backing posterior-derived theta sources.
    #[arg(long)]
    posterior: Option<PathBuf>,
    /// Fraction of reference samples discarded as burn-in.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Reference sampler iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Particles per reference filter replicate.
    #[arg(long)]
    pmmh_particles: Option<usize>,
    /// Filter replicates averaged per reference likelihood evaluation.
    #[arg(long)]
    replicates: Option<usize>,
    /// Isotropic proposal variance of the reference sampler.
    #[arg(long)]
    proposal_scale: Option<f64>,
    /// Output CSV of weighted parameter draws.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_replicate_posteriors(args: ReplicateArgs, file: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let returns_path =
        require_path(file.resolve_opt(args.returns, "returns")?, "a returns CSV", "--returns")?;
    let out = require_path(file.resolve_opt(args.out, "out")?, "an output path", "--out")?;
    let cutoff_year = file.resolve_opt(args.cutoff_year, "cutoff_year")?;
    let runs = file.resolve(args.runs, "runs", 20)?;
    let n_particles = file.resolve(args.n_particles, "n_particles", 500)?;
    let delta = file.resolve(args.delta, "delta", DEFAULT_DELTA)?;
    let threshold =
        file.resolve(args.resample_threshold, "resample_threshold", DEFAULT_THRESHOLD)?;
    let seed = file.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let source = file.resolve(args.theta_source, "theta_source", ThetaSource::Prior)?;
    let posterior_path = file.resolve_opt(args.posterior, "posterior")?;
    let burn_in = validate_burn_in(file.resolve(args.burn_in, "burn_in", DEFAULT_BURN_IN)?)?;
    let iterations = file.resolve(args.iterations, "iterations", 2000)?;
    let pmmh_particles = file.resolve(args.pmmh_particles, "pmmh_particles", 100)?;
    let replicates = file.resolve(args.replicates, "replicates", 7)?;
    let scale = file.resolve(args.proposal_scale, "proposal_scale", 2.38 * 2.38 / 4.0)?;
    if runs == 0 {
        bail!("runs must be >= 1");
    }
    if iterations == 0 {
        bail!("the reference sampler needs at least 1 iteration");
    }

    let series = read_nonempty_returns(&returns_path)?;
    let (train, cutoff_echo) = training_slice(&series, cutoff_year)?;
    if train.is_empty() {
        bail!("training window holds no observations");
    }

    let posterior_rows: Option<Vec<PosteriorRow>> = match &posterior_path {
        Some(p) => Some(io::read_posterior_samples(p)?),
        None => None,
    };

    let comment = echo(
        "replicate-posteriors",
        &[
            ("returns", returns_path.display().to_string()),
            ("out", out.display().to_string()),
            ("cutoff_year", cutoff_echo),
            ("training_len", train.len().to_string()),
            ("runs", runs.to_string()),
            ("n_particles", n_particles.to_string()),
            ("delta", delta.to_string()),
            ("resample_threshold", threshold.to_string()),
            ("seed", seed.to_string()),
            ("theta_source", source.as_str().to_string()),
            ("burn_in", burn_in.to_string()),
            ("iterations", iterations.to_string()),
            ("pmmh_particles", pmmh_particles.to_string()),
            ("replicates", replicates.to_string()),
            ("proposal_scale", scale.to_string()),
        ],
    );

    let lw_config = liu_west::LiuWestConfig::new(delta, n_particles, threshold)?;
    let variants = [
        (liu_west::LiuWestVariant::Auxiliary, "lw1", 0u64),
        (liu_west::LiuWestVariant::Plain, "lw2", 1u64),
    ];

    let mut rows: Vec<CloudRow> = Vec::new();
    // Per-variant, per-parameter posterior means across runs.
    let mut run_means: HashMap<&str, [Vec<f64>; 4]> = HashMap::new();
    for (variant, alg, salt) in variants {
        let mut means: [Vec<f64>; 4] = Default::default();
        for run in 0..runs {
            let run_index = 2 * run as u64 + salt;
            let ctx = ThetaContext {
                posterior: posterior_rows.as_deref(),
                explicit: None,
                burn_in,
                master_seed: seed,
                run_index,
            };
            let draws = draw_thetas(source, n_particles, &ctx)?;
            let mut rng = FilterRng::new(seed, experiment_instance(run_index));
            let (cloud, _) = liu_west::run(variant, &draws, &train, &lw_config, &mut rng)
                .with_context(|| format!("{alg} run {}", run + 1))?;
            let weights = cloud.normalized_weights();
            let mut mean = [0.0; 4];
            for ((theta, weight), index) in
                cloud.params.iter().zip(&weights).zip(0..cloud.params.len())
            {
                mean[0] += weight * theta.mu;
                mean[1] += weight * theta.phi;
                mean[2] += weight * theta.sigma_sq;
                mean[3] += weight * theta.rho;
                rows.push(CloudRow {
                    algorithm: alg.to_string(),
                    replicate: run + 1,
                    particle_index: index,
                    theta: *theta,
                    weight: *weight,
                });
            }
            for (store, value) in means.iter_mut().zip(mean) {
                store.push(value);
            }
        }
        run_means.insert(alg, means);
    }

    let pmmh_config = ProposalConfig::new(
        ProposalConfig::scaled_identity(scale),
        replicates,
        pmmh_particles,
        iterations,
        threshold,
    )?;
    let target = SvPosterior::new(&train, &pmmh_config, seed);
    let reference = pmmh_run(&target, &pmmh_config, None, seed, 0)?;
    let kept = drop_burn_in(&reference.samples, burn_in);
    if kept.is_empty() {
        bail!("reference sampler produced no samples after burn-in");
    }
    let weight = 1.0 / kept.len() as f64;
    for (index, theta) in kept.iter().enumerate() {
        rows.push(CloudRow {
            algorithm: "pmmh".to_string(),
            replicate: 0,
            particle_index: index,
            theta: *theta,
            weight,
        });
    }

    io::write_parameter_clouds(&out, &comment, &rows)?;

    let reference_series = per_parameter_series(&kept);
    println!(
        "dispersion of final-time posterior means across {runs} runs, \
         against the reference chain's batch-means standard error:"
    );
    for (p, name) in PARAM_NAMES.iter().enumerate() {
        let lw1_sd = sample_sd(&run_means["lw1"][p]);
        let lw2_sd = sample_sd(&run_means["lw2"][p]);
        let n_batches = 20.min(reference_series[p].len() / 2).max(2);
        let reference_se = batch_means_se(&reference_series[p], n_batches);
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into());
        println!(
            "  {name}: lw1_sd={} lw2_sd={} pmmh_se={}",
            fmt_opt(lw1_sd),
            fmt_opt(lw2_sd),
            fmt_opt(reference_se.ok()),
        );
    }
    println!(
        "wrote {} weighted draws ({} blocks) to {}",
        rows.len(),
        2 * runs + 1,
        out.display()
    );
    println!("elapsed_seconds={}", start.elapsed().as_secs_f64());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_ids_round_trip() {
        for id in ["sisr", "lw1", "lw2", "swarm"] {
            let alg: Algorithm = id.parse().unwrap();
            assert_eq!(alg.as_str(), id);
        }
        assert!("bogus".parse::<Algorithm>().is_err());
    }

    #[test]
    fn repeated_labels_become_distinct() {
        let labels = dedupe_labels(vec![
            "sisr".to_string(),
            "lw1".to_string(),
            "sisr".to_string(),
            "sisr".to_string(),
        ]);
        assert_eq!(labels, vec!["sisr", "lw1", "sisr_2", "sisr_3"]);
    }

    #[test]
    fn sample_sd_needs_two_values() {
        assert_eq!(sample_sd(&[1.0]), None);
        let sd = sample_sd(&[1.0, 3.0]).unwrap();
        assert!((sd - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn burn_in_drops_the_leading_fraction() {
        let kept = drop_burn_in(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 0.1);
        assert_eq!(kept, vec![2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let all = drop_burn_in(&[1, 2, 3], 0.0);
        assert_eq!(all, vec![1, 2, 3]);
    }
}
