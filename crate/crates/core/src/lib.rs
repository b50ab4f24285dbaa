//! Spectral interference between two polarization-delayed optical pulses.
//!
//! A left-circularly polarized pulse is split by a polarizing beam splitter
//! into its horizontal and vertical components, which pick up delays `T1`
//! and `T2` before recombining. Projecting the result onto the polarization
//! state `[x + exp(iΓ) y]/√2` produces a frequency-dependent interference
//! factor. For delays much smaller than the pulse width the net effect is a
//! shift of the spectral centroid, tunable through the post-selection angle
//! `Γ`, at the cost of an insertion loss.
//!
//! The crate covers:
//!
//! - [`spectra`]: frequency grids, sampled spectral densities, Gaussian
//!   pulses, trapezoidal energy and centroid, instrument smoothing.
//! - [`forward`]: output field and spectral density, numerical and
//!   closed-form observables.
//! - [`regimes`]: `Γ` sweeps and the shift/loss trade-off.
//! - [`noise`]: post-selection jitter and Monte-Carlo error bars.
//! - [`estimator`]: recovering the delay from `Γ`-sweep data.
//!
//! Units are fixed throughout: frequency in THz, time in fs, wavelength in
//! nm, angles in rad, losses in dB.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.
#![cfg_attr(not(feature = "std"), no_std)]
// NaN must fail validity checks, so `!(x > y)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod estimator;
pub mod forward;
pub mod noise;
pub mod regimes;
pub mod spectra;
pub mod units;

pub use estimator::{
    fit_delay, fit_uncertainty, invert_small_shift, synthesize_sweep, FitProblem, FitResult,
};
pub use noise::{monte_carlo_observables, sample_gamma, NoiseModel, UncertainValue};

pub use regimes::{
    classify_regime, gamma_sweep, max_shift_at_loss_budget, Regime, SweepResult, WorkingPoint,
};

pub use error::{Error, Result};

pub use forward::{
    delta_f_gaussian, gamma_factor, loss_gaussian, observables_numeric, output_field,
    output_spectrum, ComplexSpectrum, InterferometerConfig, Observables, PulseModel,
};

pub use spectra::{
    centroid, convolve_instrument, energy, gaussian_spectrum, load_spectrum, FrequencyGrid,
    GaussianPulse, InstrumentModel, Spectrum,
};
