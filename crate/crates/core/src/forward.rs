//! Interferometer forward model.
//!
//! The input pulse is pre-selected in the left-circular state
//! `(x − iy)/√2`; the horizontal and vertical components are delayed by
//! `T1` and `T2`, recombined and projected onto `[x + exp(iΓ) y]/√2`. The
//! output field is
//!
//! ```text
//! E_out(ν) = E_in(ν)/2 · [exp(−iωT1) − i·exp(−iωT2 − iΓ)],   ω = 2πν
//! ```
//!
//! and the output density is
//!
//! ```text
//! S_out(ν) = S_in(ν)/2 · [1 + cos(2πνT − Γ − π/2)],   T = T1 − T2.
//! ```
//!
//! A delay multiplies the field by `exp(−iωT)`; with that convention the two
//! expressions agree for every `(T1, T2, Γ)`.
//!
//! For Gaussian pulses the centroid shift and insertion loss have closed
//! forms in `θ = 2πν0T − Γ − π/2` and `γ = exp(−ln2·T²/τ²)`:
//!
//! ```text
//! Δf = −(ln2/π)(T/τ²) · γ sinθ / (1 + γ cosθ)
//! L  = −10 log10[(1 + γ cosθ)/2]
//! ```

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, LN_2, PI, TAU};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::spectra::{gaussian_spectrum, CompensatedSum, FrequencyGrid, GaussianPulse, Spectrum};
use crate::units;

/// Default floor on `F_out/F_in` and on the closed-form denominator.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Delays of the two interferometer arms and the post-selection angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerConfig {
    delay_1_fs: f64,
    delay_2_fs: f64,
    post_selection_rad: f64,
}

impl InterferometerConfig {
    pub fn new(delay_1_fs: f64, delay_2_fs: f64, post_selection_rad: f64) -> Result<Self> {
        if !(delay_1_fs.is_finite() && delay_2_fs.is_finite() && post_selection_rad.is_finite()) {
            return Err(Error::InvalidParameter("delays and angle must be finite"));
        }
        Ok(Self {
            delay_1_fs,
            delay_2_fs,
            post_selection_rad,
        })
    }

    /// Relative delay `T` on the first arm, second arm at zero.
    pub fn with_delay(delay_fs: f64, post_selection_rad: f64) -> Result<Self> {
        Self::new(delay_fs, 0.0, post_selection_rad)
    }

    pub fn from_arm_lengths(d1_mm: f64, d2_mm: f64, post_selection_rad: f64) -> Result<Self> {
        let (t1, t2) = delay_from_arm_lengths(d1_mm, d2_mm)?;
        Self::new(t1, t2, post_selection_rad)
    }

    pub fn delay_1_fs(&self) -> f64 {
        self.delay_1_fs
    }

    pub fn delay_2_fs(&self) -> f64 {
        self.delay_2_fs
    }

    pub fn post_selection_rad(&self) -> f64 {
        self.post_selection_rad
    }

    /// `T = T1 − T2`.
    pub fn delay(&self) -> f64 {
        self.delay_1_fs - self.delay_2_fs
    }

    pub fn with_post_selection(&self, post_selection_rad: f64) -> Self {
        Self {
            post_selection_rad,
            ..*self
        }
    }
}

/// `(T1, T2)` in fs for mirror distances in mm.
pub fn delay_from_arm_lengths(d1_mm: f64, d2_mm: f64) -> Result<(f64, f64)> {
    if !(d1_mm >= 0.0 && d2_mm >= 0.0) || !d1_mm.is_finite() || !d2_mm.is_finite() {
        return Err(Error::InvalidParameter(
            "arm lengths must be finite and ≥ 0",
        ));
    }
    Ok((
        units::round_trip_delay_fs(d1_mm),
        units::round_trip_delay_fs(d2_mm),
    ))
}

/// Complex field amplitude per grid node. `|E|²` is the spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    grid: FrequencyGrid,
    amplitudes: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(grid: FrequencyGrid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.count() {
            return Err(Error::InvalidSpectrum(
                "amplitude count does not match the grid",
            ));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSpectrum("amplitudes must be finite"));
        }
        Ok(Self { grid, amplitudes })
    }

    /// Real, flat-phase field `√S`.
    pub fn from_density(s: &Spectrum) -> Self {
        Self {
            grid: *s.grid(),
            amplitudes: s
                .values()
                .iter()
                .map(|v| Complex64::new(v.sqrt(), 0.0))
                .collect(),
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn density(&self) -> Spectrum {
        Spectrum::from_parts(
            self.grid,
            self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
        )
    }
}

/// Angular phase `2πνT` for ν in THz and T in fs.
#[inline]
fn phase(frequency_thz: f64, delay_fs: f64) -> f64 {
    TAU * frequency_thz * delay_fs * units::THZ_FS
}

pub fn output_field(e_in: &ComplexSpectrum, cfg: &InterferometerConfig) -> ComplexSpectrum {
    let g = e_in.grid;
    let minus_i = Complex64::new(0.0, -1.0);
    let amplitudes = e_in
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let nu = g.node(i);
            let arm_1 = Complex64::cis(-phase(nu, cfg.delay_1_fs));
            let arm_2 = Complex64::cis(-cfg.post_selection_rad - phase(nu, cfg.delay_2_fs));
            e * 0.5 * (arm_1 + minus_i * arm_2)
        })
        .collect();
    ComplexSpectrum {
        grid: g,
        amplitudes,
    }
}

/// Fraction of the input density transmitted at `ν`:
/// `[1 + cos(2πνT − Γ − π/2)]/2 = cos²((2πνT − Γ − π/2)/2)`.
#[inline]
pub fn transmission(frequency_thz: f64, delay_fs: f64, post_selection_rad: f64) -> f64 {
    let c = (0.5 * (phase(frequency_thz, delay_fs) - post_selection_rad - FRAC_PI_2)).cos();
    c * c
}

pub fn output_spectrum(s_in: &Spectrum, cfg: &InterferometerConfig) -> Spectrum {
    let g = *s_in.grid();
    let t = cfg.delay();
    let gamma = cfg.post_selection_rad;
    let values = s_in
        .values()
        .iter()
        .enumerate()
        .map(|(i, &s)| s * transmission(g.node(i), t, gamma))
        .collect();
    Spectrum::from_parts(g, values)
}

/// Centroid shift, insertion loss and the two energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub delta_f_thz: f64,
    pub loss_db: f64,
    pub f_in: f64,
    pub f_out: f64,
}

/// `−10·log10(ratio)`, `+∞` for a non-positive ratio.
pub fn loss_db_from_ratio(ratio: f64) -> f64 {
    if ratio > 0.0 {
        -10.0 * ratio.log10()
    } else {
        f64::INFINITY
    }
}

/// Centroid shift and loss from trapezoidal moments of the input and output
/// densities.
pub fn observables_numeric(
    s_in: &Spectrum,
    cfg: &InterferometerConfig,
    floor: f64,
) -> Result<Observables> {
    let f_in = s_in.energy();
    if !(f_in > 0.0) {
        return Err(Error::InvalidSpectrum("input energy must be positive"));
    }
    observables_between(s_in, &output_spectrum(s_in, cfg), floor)
}

/// Observables of `s_out` relative to `s_in`; both must share a grid.
pub fn observables_between(s_in: &Spectrum, s_out: &Spectrum, floor: f64) -> Result<Observables> {
    if s_in.grid() != s_out.grid() {
        return Err(Error::InvalidSpectrum("input and output grids differ"));
    }
    let f_in = s_in.energy();
    if !(f_in > 0.0) {
        return Err(Error::InvalidSpectrum("input energy must be positive"));
    }
    let reference = s_in.grid().midpoint();
    let m_in = s_in.first_moment_about(reference);
    let f_out = s_out.energy();
    let m_out = s_out.first_moment_about(reference);
    observables_from_moments(f_in, m_in, f_out, m_out, floor)
}

fn observables_from_moments(
    f_in: f64,
    m_in: f64,
    f_out: f64,
    m_out: f64,
    floor: f64,
) -> Result<Observables> {
    let ratio = f_out / f_in;
    let loss_db = loss_db_from_ratio(ratio);
    if !(ratio >= floor) || !(f_out > 0.0) {
        return Err(Error::EnergyBelowFloor { ratio, loss_db });
    }
    Ok(Observables {
        delta_f_thz: m_out / f_out - m_in / f_in,
        loss_db,
        f_in,
        f_out,
    })
}

/// Trapezoidal fringe moments of a tabulated spectrum for a fixed delay.
///
/// `S_out` is linear in `cos(φ − Γ)`, so the energy and first moment of the
/// output at any `Γ` follow from four integrals computed once per delay:
/// `∫S cosφ`, `∫S sinφ`, `∫(ν−ν_r)S cosφ`, `∫(ν−ν_r)S sinφ` with
/// `φ = 2πνT − π/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeMoments {
    f_in: f64,
    m_in: f64,
    c0: f64,
    s0: f64,
    c1: f64,
    s1: f64,
}

impl FringeMoments {
    pub fn new(s_in: &Spectrum, delay_fs: f64) -> Self {
        let g = s_in.grid();
        let n = g.count();
        let c = 0.5 * (n - 1) as f64;
        let h = g.step();
        let mut sums = [CompensatedSum::default(); 6];
        for (i, &s) in s_in.values().iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 * s } else { s };
            let x = (i as f64 - c) * h;
            // cos(p − π/2) = sin p, sin(p − π/2) = −cos p
            let (sin_p, cos_p) = phase(g.node(i), delay_fs).sin_cos();
            for (acc, term) in sums.iter_mut().zip([
                w,
                w * x,
                w * sin_p,
                -w * cos_p,
                w * x * sin_p,
                -w * x * cos_p,
            ]) {
                acc.add(term);
            }
        }
        let [f_in, m_in, c0, s0, c1, s1] = sums.map(|s| s.value() * h);
        Self {
            f_in,
            m_in,
            c0,
            s0,
            c1,
            s1,
        }
    }

    /// Fringe contrast `ρ` and minimum-loss angle `Γ*`, such that
    /// `F_out/F_in = (1 + ρ cos(Γ − Γ*))/2`.
    pub fn contrast(&self) -> (f64, f64) {
        (self.c0.hypot(self.s0) / self.f_in, self.s0.atan2(self.c0))
    }

    pub fn observables(&self, post_selection_rad: f64, floor: f64) -> Result<Observables> {
        if !(self.f_in > 0.0) {
            return Err(Error::InvalidSpectrum("input energy must be positive"));
        }
        let (sin_g, cos_g) = post_selection_rad.sin_cos();
        let f_out = (0.5 * (self.f_in + cos_g * self.c0 + sin_g * self.s0)).max(0.0);
        let m_out = 0.5 * (self.m_in + cos_g * self.c1 + sin_g * self.s1);
        observables_from_moments(self.f_in, self.m_in, f_out, m_out, floor)
    }
}

/// `γ = exp(−ln2·T²/τ²)`.
pub fn gamma_factor(delay_fs: f64, fwhm_fs: f64) -> f64 {
    let r = delay_fs / fwhm_fs;
    (-LN_2 * r * r).exp()
}

/// `1 − γ`, accurate for `T ≪ τ`.
pub fn one_minus_gamma(delay_fs: f64, fwhm_fs: f64) -> f64 {
    let r = delay_fs / fwhm_fs;
    -(-LN_2 * r * r).exp_m1()
}

/// Detuning `θ = 2πν0T − Γ − π/2` of the post-selection from the
/// low-loss zero-shift angle.
pub fn detuning(center_thz: f64, delay_fs: f64, post_selection_rad: f64) -> f64 {
    phase(center_thz, delay_fs) - post_selection_rad - FRAC_PI_2
}

/// Post-selection angle realizing a detuning `θ`, wrapped to `(−π, π]`.
pub fn post_selection_for_detuning(center_thz: f64, delay_fs: f64, detuning_rad: f64) -> f64 {
    wrap_angle(phase(center_thz, delay_fs) - FRAC_PI_2 - detuning_rad)
}

pub fn wrap_angle(angle: f64) -> f64 {
    let w = angle - TAU * (angle / TAU).round();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// `1 + γ cosθ`, written as `(1 − γ) + 2γ cos²(θ/2)` to keep precision near
/// the orthogonal point.
fn fringe_denominator(delay_fs: f64, fwhm_fs: f64, theta: f64) -> f64 {
    let g = gamma_factor(delay_fs, fwhm_fs);
    let c = (0.5 * theta).cos();
    one_minus_gamma(delay_fs, fwhm_fs) + 2.0 * g * c * c
}

/// Shift amplitude `(ln2/π)·T/τ²` in THz.
pub fn shift_scale(delay_fs: f64, fwhm_fs: f64) -> f64 {
    LN_2 / PI * delay_fs / (fwhm_fs * fwhm_fs) * units::PER_FS_IN_THZ
}

/// Closed-form shift as a function of the detuning `θ`.
pub fn delta_f_gaussian_at_detuning(
    pulse: &GaussianPulse,
    delay_fs: f64,
    theta: f64,
    floor: f64,
) -> Result<f64> {
    let tau = pulse.fwhm_fs();
    let den = fringe_denominator(delay_fs, tau, theta);
    if !(den > floor) {
        return Err(Error::DenominatorBelowFloor { value: den });
    }
    let g = gamma_factor(delay_fs, tau);
    Ok(-shift_scale(delay_fs, tau) * g * theta.sin() / den)
}

/// Closed-form loss as a function of the detuning `θ`.
pub fn loss_gaussian_at_detuning(pulse: &GaussianPulse, delay_fs: f64, theta: f64) -> f64 {
    loss_db_from_ratio(0.5 * fringe_denominator(delay_fs, pulse.fwhm_fs(), theta))
}

/// Closed-form centroid shift (THz) with the default denominator floor.
pub fn delta_f_gaussian(
    pulse: &GaussianPulse,
    delay_fs: f64,
    post_selection_rad: f64,
) -> Result<f64> {
    let theta = detuning(pulse.center_thz(), delay_fs, post_selection_rad);
    delta_f_gaussian_at_detuning(pulse, delay_fs, theta, DEFAULT_FLOOR)
}

/// Closed-form insertion loss (dB); `+∞` when nothing is transmitted.
pub fn loss_gaussian(pulse: &GaussianPulse, delay_fs: f64, post_selection_rad: f64) -> f64 {
    let theta = detuning(pulse.center_thz(), delay_fs, post_selection_rad);
    loss_gaussian_at_detuning(pulse, delay_fs, theta)
}

pub fn observables_gaussian(
    pulse: &GaussianPulse,
    delay_fs: f64,
    post_selection_rad: f64,
    floor: f64,
) -> Result<Observables> {
    let theta = detuning(pulse.center_thz(), delay_fs, post_selection_rad);
    let ratio = 0.5 * fringe_denominator(delay_fs, pulse.fwhm_fs(), theta);
    let f_in = pulse.energy();
    let loss_db = loss_db_from_ratio(ratio);
    if !(ratio >= floor) {
        return Err(Error::EnergyBelowFloor { ratio, loss_db });
    }
    Ok(Observables {
        delta_f_thz: delta_f_gaussian_at_detuning(pulse, delay_fs, theta, floor)?,
        loss_db,
        f_in,
        f_out: f_in * ratio,
    })
}

/// Which form of the forward model produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    GaussianClosedForm,
    NumericSpectrum,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::GaussianClosedForm => "gaussian-closed-form",
            ModelTag::NumericSpectrum => "numeric-spectrum",
        }
    }
}

/// Input pulse: analytic Gaussian or a tabulated (measured) spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseModel {
    Gaussian(GaussianPulse),
    Tabulated(Spectrum),
}

impl PulseModel {
    pub fn tag(&self) -> ModelTag {
        match self {
            PulseModel::Gaussian(_) => ModelTag::GaussianClosedForm,
            PulseModel::Tabulated(_) => ModelTag::NumericSpectrum,
        }
    }

    /// Sampled input density; Gaussians use their default grid.
    pub fn spectrum(&self) -> Result<Spectrum> {
        match self {
            PulseModel::Gaussian(p) => Ok(gaussian_spectrum(p, &p.default_grid()?)),
            PulseModel::Tabulated(s) => Ok(s.clone()),
        }
    }

    /// Carrier frequency: `ν0` or the centroid of the tabulated spectrum.
    pub fn reference_frequency(&self) -> Result<f64> {
        match self {
            PulseModel::Gaussian(p) => Ok(p.center_thz()),
            PulseModel::Tabulated(s) => crate::spectra::centroid(s),
        }
    }

    /// Evaluator for repeated observables at one delay.
    pub fn at_delay(&self, delay_fs: f64) -> DelayModel {
        match self {
            PulseModel::Gaussian(p) => DelayModel::Gaussian(*p, delay_fs),
            PulseModel::Tabulated(s) => DelayModel::Tabulated(FringeMoments::new(s, delay_fs)),
        }
    }

    pub fn observables(
        &self,
        delay_fs: f64,
        post_selection_rad: f64,
        floor: f64,
    ) -> Result<Observables> {
        self.at_delay(delay_fs)
            .observables(post_selection_rad, floor)
    }
}

/// A [`PulseModel`] with the delay fixed; cheap to evaluate across `Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayModel {
    Gaussian(GaussianPulse, f64),
    Tabulated(FringeMoments),
}

impl DelayModel {
    pub fn observables(&self, post_selection_rad: f64, floor: f64) -> Result<Observables> {
        match self {
            DelayModel::Gaussian(p, t) => observables_gaussian(p, *t, post_selection_rad, floor),
            DelayModel::Tabulated(m) => m.observables(post_selection_rad, floor),
        }
    }

    /// Expected observables of a scan average when `Γ` jitters with normal
    /// spread `sigma_rad`. The fringe term of `S_out` is then scaled by the
    /// visibility `V = exp(−σ²/2)`.
    pub fn observables_jittered(
        &self,
        post_selection_rad: f64,
        sigma_rad: f64,
        floor: f64,
    ) -> Result<Observables> {
        if sigma_rad == 0.0 {
            return self.observables(post_selection_rad, floor);
        }
        let half_var = -0.5 * sigma_rad * sigma_rad;
        let visibility = half_var.exp();
        match self {
            DelayModel::Gaussian(p, t) => {
                let tau = p.fwhm_fs();
                let theta = detuning(p.center_thz(), *t, post_selection_rad);
                let g = visibility * gamma_factor(*t, tau);
                let one_minus =
                    one_minus_gamma(*t, tau) - gamma_factor(*t, tau) * half_var.exp_m1();
                let c = (0.5 * theta).cos();
                let den = one_minus + 2.0 * g * c * c;
                let ratio = 0.5 * den;
                let f_in = p.energy();
                let loss_db = loss_db_from_ratio(ratio);
                if !(ratio >= floor) {
                    return Err(Error::EnergyBelowFloor { ratio, loss_db });
                }
                if !(den > floor) {
                    return Err(Error::DenominatorBelowFloor { value: den });
                }
                Ok(Observables {
                    delta_f_thz: -shift_scale(*t, tau) * g * theta.sin() / den,
                    loss_db,
                    f_in,
                    f_out: f_in * ratio,
                })
            }
            DelayModel::Tabulated(m) => FringeMoments {
                c0: m.c0 * visibility,
                s0: m.s0 * visibility,
                c1: m.c1 * visibility,
                s1: m.s1 * visibility,
                ..*m
            }
            .observables(post_selection_rad, floor),
        }
    }
}
