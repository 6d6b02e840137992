//! Shared fixtures for the benchmarks.

use qevalue::simgen::{simulate_dataset, SimConfig};
use qevalue::rng::substream;
use qevalue::{Dataset, TruthSpec};

/// Simulated dataset with `m` MZ families and the default SNP blocks.
pub fn fixture(m: usize, seed: u64) -> (Dataset, TruthSpec) {
    let config = SimConfig { m, seed, ..SimConfig::default() };
    simulate_dataset(&config, &mut substream(seed, &[0])).expect("default simulation config is valid")
}
