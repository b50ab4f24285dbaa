//! Thread-parallel Monte-Carlo.
//!
//! Sample `k` always draws from random stream `k`, and results are gathered
//! in index order, so output is bit-identical for any thread count.

use rayon::prelude::*;
use weakshift_core::forward::Observables;
use weakshift_core::noise::{summarize, MeasurementSimulator, MonteCarloObservables};
use weakshift_core::{NoiseModel, PulseModel, Result};

/// Per-sample observables in index order. `threads = None` uses rayon's
/// global pool; `Some(1)` runs serially on the calling thread.
pub fn sample_observables(
    sim: &MeasurementSimulator,
    nominal_gamma: f64,
    threads: Option<usize>,
) -> Vec<Result<Observables>> {
    let n = sim.noise().samples() as u64;
    let run = || -> Vec<Result<Observables>> {
        (0..n)
            .into_par_iter()
            .map(|k| sim.sample(nominal_gamma, k))
            .collect()
    };
    match threads {
        Some(1) => (0..n).map(|k| sim.sample(nominal_gamma, k)).collect(),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

pub fn monte_carlo_observables(
    model: &PulseModel,
    delay_fs: f64,
    nominal_gamma: f64,
    noise: &NoiseModel,
    threads: Option<usize>,
) -> Result<MonteCarloObservables> {
    if !nominal_gamma.is_finite() {
        return Err(weakshift_core::Error::InvalidParameter(
            "angle must be finite",
        ));
    }
    let sim = MeasurementSimulator::new(model, delay_fs, noise)?;
    summarize(sample_observables(&sim, nominal_gamma, threads))
}
