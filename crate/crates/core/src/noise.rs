//! Post-selection jitter and Monte-Carlo error bars.
//!
//! Temperature drift of the retarder shows up as random changes of `Γ`.
//! Each Monte-Carlo sample draws an independent angle per spectrometer scan,
//! averages the scans, applies the instrument line shape and evaluates the
//! observables against the equally smoothed input.
//!
//! Sample `k` draws from ChaCha8 stream `k` of the model seed, so samples can
//! be evaluated in any order, or concurrently, with identical results.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward::{
    observables_between, output_spectrum, InterferometerConfig, Observables, PulseModel,
    DEFAULT_FLOOR,
};
use crate::spectra::{convolve_instrument, InstrumentModel, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    gamma_jitter_sigma: f64,
    instrument: InstrumentModel,
    seed: u64,
    samples: usize,
}

impl NoiseModel {
    pub fn new(
        gamma_jitter_sigma: f64,
        instrument: InstrumentModel,
        seed: u64,
        samples: usize,
    ) -> Result<Self> {
        if !(gamma_jitter_sigma.is_finite() && gamma_jitter_sigma >= 0.0) {
            return Err(Error::InvalidParameter(
                "jitter sigma must be finite and ≥ 0",
            ));
        }
        if samples == 0 {
            return Err(Error::InvalidParameter("at least one sample is required"));
        }
        Ok(Self {
            gamma_jitter_sigma,
            instrument,
            seed,
            samples,
        })
    }

    pub fn gamma_jitter_sigma(&self) -> f64 {
        self.gamma_jitter_sigma
    }

    pub fn instrument(&self) -> &InstrumentModel {
        &self.instrument
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn with_sigma(&self, gamma_jitter_sigma: f64) -> Self {
        Self {
            gamma_jitter_sigma,
            ..*self
        }
    }

    /// Independent generator for sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Post-selection angles of each scan in sample `index`.
    pub fn scan_gammas(&self, nominal: f64, index: u64) -> Vec<f64> {
        let mut rng = self.rng(index);
        (0..self.instrument.scans_to_average())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                nominal + self.gamma_jitter_sigma * z
            })
            .collect()
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainValue {
    pub mean: f64,
    pub std: f64,
    pub sample_count: usize,
}

impl UncertainValue {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std: 0.0,
            sample_count: 1,
        }
    }

    /// `None` for an empty slice. Uses the `n − 1` normalisation; a single
    /// sample has zero spread.
    pub fn from_samples(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        // offset by the first value so identical samples give an exact mean
        let offset = values[0];
        let mean = offset + values.iter().map(|v| v - offset).sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            sample_count: n,
        })
    }
}

/// One draw of the post-selection angle per sample.
pub fn sample_gamma(nominal: f64, nm: &NoiseModel) -> Vec<f64> {
    (0..nm.samples as u64)
        .map(|k| {
            let z: f64 = StandardNormal.sample(&mut nm.rng(k));
            nominal + nm.gamma_jitter_sigma * z
        })
        .collect()
}

/// Per-sample measurement pipeline, prepared once for a fixed configuration.
#[derive(Debug, Clone)]
pub struct MeasurementSimulator {
    input: Spectrum,
    measured_input: Spectrum,
    delay_fs: f64,
    noise: NoiseModel,
}

impl MeasurementSimulator {
    pub fn new(model: &PulseModel, delay_fs: f64, noise: &NoiseModel) -> Result<Self> {
        if !delay_fs.is_finite() {
            return Err(Error::InvalidParameter("delay must be finite"));
        }
        let input = model.spectrum()?;
        let measured_input = convolve_instrument(&input, &noise.instrument);
        Ok(Self {
            input,
            measured_input,
            delay_fs,
            noise: *noise,
        })
    }

    pub fn delay_fs(&self) -> f64 {
        self.delay_fs
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Scan-averaged, instrument-smoothed output spectrum of sample `index`.
    pub fn measured_output(&self, nominal_gamma: f64, index: u64) -> Result<Spectrum> {
        let gammas = self.noise.scan_gammas(nominal_gamma, index);
        let scans = gammas.len() as f64;
        let mut sum = alloc::vec![0.0; self.input.grid().count()];
        for gamma in gammas {
            let cfg = InterferometerConfig::with_delay(self.delay_fs, gamma)?;
            let out = output_spectrum(&self.input, &cfg);
            for (acc, v) in sum.iter_mut().zip(out.values()) {
                *acc += v;
            }
        }
        sum.iter_mut().for_each(|v| *v /= scans);
        let averaged = Spectrum::new(*self.input.grid(), sum)?;
        Ok(convolve_instrument(&averaged, &self.noise.instrument))
    }

    /// Observables measured in sample `index` at a nominal angle.
    pub fn sample(&self, nominal_gamma: f64, index: u64) -> Result<Observables> {
        let out = self.measured_output(nominal_gamma, index)?;
        observables_between(&self.measured_input, &out, DEFAULT_FLOOR)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloObservables {
    pub shift: UncertainValue,
    pub loss: UncertainValue,
    /// Samples whose output energy fell below the floor.
    pub excluded: usize,
}

/// Aggregates per-sample results in index order. Singular samples are
/// excluded and counted; any other error is returned.
pub fn summarize<I>(results: I) -> Result<MonteCarloObservables>
where
    I: IntoIterator<Item = Result<Observables>>,
{
    let mut shifts = Vec::new();
    let mut losses = Vec::new();
    let mut excluded = 0;
    for r in results {
        match r {
            Ok(o) => {
                shifts.push(o.delta_f_thz);
                losses.push(o.loss_db);
            }
            Err(Error::EnergyBelowFloor { .. }) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    match (
        UncertainValue::from_samples(&shifts),
        UncertainValue::from_samples(&losses),
    ) {
        (Some(shift), Some(loss)) => Ok(MonteCarloObservables {
            shift,
            loss,
            excluded,
        }),
        _ => Err(Error::AllSamplesSingular { samples: excluded }),
    }
}

/// Serial Monte-Carlo estimate of shift and loss with their spreads.
pub fn monte_carlo_observables(
    model: &PulseModel,
    delay_fs: f64,
    nominal_gamma: f64,
    nm: &NoiseModel,
) -> Result<MonteCarloObservables> {
    if !nominal_gamma.is_finite() {
        return Err(Error::InvalidParameter("angle must be finite"));
    }
    let sim = MeasurementSimulator::new(model, delay_fs, nm)?;
    summarize((0..nm.samples as u64).map(|k| sim.sample(nominal_gamma, k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{
        delta_f_gaussian, delta_f_gaussian_at_detuning, observables_numeric,
        post_selection_for_detuning,
    };
    use crate::spectra::GaussianPulse;
    use core::f64::consts::FRAC_PI_2;

    fn model() -> (GaussianPulse, PulseModel) {
        let p = GaussianPulse::new(193.44, 320.0).unwrap();
        (p, PulseModel::Gaussian(p))
    }

    fn noise(sigma: f64, samples: usize) -> NoiseModel {
        NoiseModel::new(sigma, InstrumentModel::ideal(), 7, samples).unwrap()
    }

    #[test]
    fn zero_sigma_draws_are_nominal() {
        assert!(sample_gamma(0.3, &noise(0.0, 50)).iter().all(|&g| g == 0.3));
    }

    #[test]
    fn draws_are_reproducible() {
        let a = sample_gamma(0.3, &noise(0.1, 100));
        let b = sample_gamma(0.3, &noise(0.1, 100));
        assert_eq!(a, b);
        let c = sample_gamma(0.3, &noise(0.1, 100).with_seed(8));
        assert_ne!(a, c);
    }

    #[test]
    fn draw_mean_within_standard_error() {
        let sigma = 0.05;
        let draws = sample_gamma(1.0, &noise(sigma, 10_000));
        let u = UncertainValue::from_samples(&draws).unwrap();
        assert!((u.mean - 1.0).abs() < 4.0 * sigma / 100.0);
        assert!((u.std / sigma - 1.0).abs() < 0.05);
    }

    #[test]
    fn first_scan_matches_sample_draw() {
        let nm = NoiseModel::new(0.1, InstrumentModel::new(0.0, 5).unwrap(), 3, 20).unwrap();
        let draws = sample_gamma(0.0, &nm);
        for (k, draw) in draws.iter().enumerate() {
            let scans = nm.scan_gammas(0.0, k as u64);
            assert_eq!(scans.len(), 5);
            assert_eq!(scans[0], *draw);
        }
    }

    #[test]
    fn noiseless_monte_carlo_is_deterministic_value() {
        let (p, m) = model();
        let gamma = 0.4;
        let mc = monte_carlo_observables(&m, 53.0, gamma, &noise(0.0, 8)).unwrap();
        let s = m.spectrum().unwrap();
        let exact = observables_numeric(
            &s,
            &InterferometerConfig::with_delay(53.0, gamma).unwrap(),
            DEFAULT_FLOOR,
        )
        .unwrap();
        assert_eq!(mc.shift.std, 0.0);
        assert_eq!(mc.loss.std, 0.0);
        assert_eq!(mc.shift.mean, exact.delta_f_thz);
        assert_eq!(mc.loss.mean, exact.loss_db);
        assert_eq!(mc.excluded, 0);
        assert!((mc.shift.mean - delta_f_gaussian(&p, 53.0, gamma).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn linear_propagation_near_low_loss_point() {
        let (p, m) = model();
        let t = 53.0;
        let gamma0 = post_selection_for_detuning(193.44, t, 0.0);
        let sigma = 0.01;
        // dΔf/dΓ = −dΔf/dθ by central difference of the closed form
        let h = 1e-6;
        let slope = (delta_f_gaussian_at_detuning(&p, t, h, 0.0).unwrap()
            - delta_f_gaussian_at_detuning(&p, t, -h, 0.0).unwrap())
            / (2.0 * h);
        let mc = monte_carlo_observables(&m, t, gamma0, &noise(sigma, 2000)).unwrap();
        let predicted = slope.abs() * sigma;
        assert!(
            (mc.shift.std / predicted - 1.0).abs() < 0.10,
            "{} vs {}",
            mc.shift.std,
            predicted
        );
    }

    #[test]
    fn spread_scales_with_sigma() {
        let (_, m) = model();
        let gamma = post_selection_for_detuning(193.44, 53.0, 0.8);
        let a = monte_carlo_observables(&m, 53.0, gamma, &noise(0.004, 400)).unwrap();
        let b = monte_carlo_observables(&m, 53.0, gamma, &noise(0.002, 400)).unwrap();
        assert!((a.shift.std / b.shift.std / 2.0 - 1.0).abs() < 0.15);
    }

    #[test]
    fn singular_samples_are_excluded() {
        let (_, m) = model();
        let mc = monte_carlo_observables(&m, 0.0, FRAC_PI_2, &noise(1e-6, 200)).unwrap();
        assert!(mc.excluded > 0 && mc.excluded < 200, "{}", mc.excluded);
        assert_eq!(mc.shift.sample_count + mc.excluded, 200);
        let err = monte_carlo_observables(&m, 0.0, FRAC_PI_2, &noise(0.0, 10)).unwrap_err();
        assert_eq!(err, Error::AllSamplesSingular { samples: 10 });
    }

    #[test]
    fn scan_averaging_reduces_spread() {
        let (_, m) = model();
        let gamma = post_selection_for_detuning(193.44, 53.0, 0.5);
        let one = monte_carlo_observables(&m, 53.0, gamma, &noise(0.01, 300)).unwrap();
        let nm = NoiseModel::new(0.01, InstrumentModel::new(0.0, 4).unwrap(), 7, 300).unwrap();
        let four = monte_carlo_observables(&m, 53.0, gamma, &nm).unwrap();
        let r = one.shift.std / four.shift.std;
        assert!((r - 2.0).abs() < 0.4, "{r}");
    }

    #[test]
    fn uncertain_value_edge_cases() {
        assert!(UncertainValue::from_samples(&[]).is_none());
        let u = UncertainValue::from_samples(&[2.0]).unwrap();
        assert_eq!((u.mean, u.std, u.sample_count), (2.0, 0.0, 1));
        let u = UncertainValue::from_samples(&[1.0, 3.0]).unwrap();
        assert_eq!(u.mean, 2.0);
        assert!((u.std - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_noise_model() {
        assert!(NoiseModel::new(-1.0, InstrumentModel::ideal(), 0, 1).is_err());
        assert!(NoiseModel::new(0.1, InstrumentModel::ideal(), 0, 0).is_err());
    }
}
