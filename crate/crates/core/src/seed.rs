//! Deterministic RNG stream derivation.
//!
//! Every random draw in the library flows from a single master seed through
//! named ChaCha streams, so outputs are bitwise reproducible regardless of
//! thread count or evaluation order. A stream is addressed by
//! (purpose, instance): the purpose separates state transitions, parameter
//! kernels, and resampling draws within one filter instance, and the instance
//! identifies the consumer (a filter/bundle index, a PMMH replicate at a given
//! iteration, a chain, ...).
//!
//! Layout of the 64-bit stream id: `purpose << 56 | instance`, with the
//! instance itself `domain << 48 | payload`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PURPOSE_STATE: u64 = 1;
const PURPOSE_KERNEL: u64 = 2;
const PURPOSE_RESAMPLE: u64 = 3;
const PURPOSE_SCALAR: u64 = 4;

const DOMAIN_FILTER: u64 = 0;
const DOMAIN_PMMH_REPLICATE: u64 = 1;
const DOMAIN_CHAIN: u64 = 2;
const DOMAIN_SIM: u64 = 3;
const DOMAIN_THETA_SOURCE: u64 = 4;
const DOMAIN_EXPERIMENT: u64 = 5;

fn stream(master_seed: u64, purpose: u64, instance: u64) -> ChaCha8Rng {
    debug_assert!(instance < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(purpose << 56 | instance);
    rng
}

/// Instance id for a standalone filter or a swarm bundle. Standalone runs use
/// index 0, so a one-bundle swarm consumes exactly the streams a standalone
/// filter would.
pub fn filter_instance(bundle_index: u64) -> u64 {
    debug_assert!(bundle_index < 1 << 48);
    DOMAIN_FILTER << 48 | bundle_index
}

/// Instance id for one likelihood replicate inside a PMMH iteration.
pub fn pmmh_replicate_instance(iteration: u64, replicate: u64) -> u64 {
    debug_assert!(iteration < 1 << 40 && replicate < 1 << 8);
    DOMAIN_PMMH_REPLICATE << 48 | iteration << 8 | replicate
}

/// Instance id for an MCMC chain's proposal and accept/reject draws.
pub fn chain_instance(chain_index: u64) -> u64 {
    DOMAIN_CHAIN << 48 | chain_index
}

/// Instance id for synthetic data simulation.
pub fn simulation_instance(run_index: u64) -> u64 {
    DOMAIN_SIM << 48 | run_index
}

/// Instance id for drawing filter parameters from a configured source.
pub fn theta_source_instance(run_index: u64) -> u64 {
    DOMAIN_THETA_SOURCE << 48 | run_index
}

/// Instance id for replicate-level experiment loops.
pub fn experiment_instance(replicate: u64) -> u64 {
    DOMAIN_EXPERIMENT << 48 | replicate
}

/// A single general-purpose stream for an instance (chain draws, parameter
/// source sampling, simulation).
pub fn scalar_stream(master_seed: u64, instance: u64) -> ChaCha8Rng {
    stream(master_seed, PURPOSE_SCALAR, instance)
}

/// The three purpose streams one filter instance consumes.
///
/// Keeping transitions, parameter kernels, and resampling on separate streams
/// means filters that skip a stage (a plain particle filter has no parameter
/// kernel) still draw identical values for the stages they share.
#[derive(Debug, Clone)]
pub struct FilterRng {
    pub state: ChaCha8Rng,
    pub kernel: ChaCha8Rng,
    pub resample: ChaCha8Rng,
}

impl FilterRng {
    pub fn new(master_seed: u64, instance: u64) -> Self {
        FilterRng {
            state: stream(master_seed, PURPOSE_STATE, instance),
            kernel: stream(master_seed, PURPOSE_KERNEL, instance),
            resample: stream(master_seed, PURPOSE_RESAMPLE, instance),
        }
    }
}
