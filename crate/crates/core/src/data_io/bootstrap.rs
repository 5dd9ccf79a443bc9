use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GsecError, Result};

/// One resample with replacement at the source size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BootstrapSample {
    pub seed: u64,
    pub indices: Vec<usize>,
}

/// Draws `run_count` bootstrap resamples of `0..n`. Run `r` is seeded from
/// `seed` and `r`, so individual runs can be regenerated in isolation.
pub fn bootstrap(n: usize, run_count: usize, seed: u64) -> Result<Vec<BootstrapSample>> {
    if n == 0 {
        return Err(GsecError::Domain("cannot bootstrap an empty dataset".into()));
    }
    if run_count == 0 {
        return Err(GsecError::Domain("run_count must be at least 1".into()));
    }
    Ok((0..run_count as u64)
        .map(|r| {
            let run_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            BootstrapSample {
                seed: run_seed,
                indices: (0..n).map(|_| rng.random_range(0..n)).collect(),
            }
        })
        .collect())
}
