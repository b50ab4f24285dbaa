//! Frequency grids, sampled spectral densities and their functionals.
//!
//! All quadrature is trapezoidal on a uniform grid. Moments are accumulated
//! about the grid midpoint so that centroid differences of a few parts in
//! 10¹⁵ of the carrier frequency stay resolvable.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::units;

/// Node count of the default simulation grid. Odd, so the pulse centre is a node.
pub const DEFAULT_GRID_NODES: usize = (1 << 14) + 1;

/// Half-width of the default simulation grid in spectral standard deviations.
pub const DEFAULT_GRID_HALF_WIDTH_SIGMAS: f64 = 8.0;

/// Default relative energy floor for [`centroid`], as a fraction of `peak·span`.
pub const DEFAULT_ENERGY_FLOOR: f64 = 1e-12;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// A uniform grid of strictly positive frequencies (THz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !start.is_finite() || !step.is_finite() {
            return Err(Error::InvalidGrid("start and step must be finite"));
        }
        if step <= 0.0 {
            return Err(Error::InvalidGrid("step must be positive"));
        }
        if count < 2 {
            return Err(Error::InvalidGrid("at least two nodes are required"));
        }
        if start <= 0.0 {
            return Err(Error::InvalidGrid("frequencies must be positive"));
        }
        Ok(Self { start, step, count })
    }

    /// `count` nodes from `start` to `end` inclusive.
    pub fn spanning(start: f64, end: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid("at least two nodes are required"));
        }
        Self::new(start, (end - start) / (count - 1) as f64, count)
    }

    /// `count` nodes symmetric about `center`, covering `center ± half_width`.
    pub fn centered(center: f64, half_width: f64, count: usize) -> Result<Self> {
        Self::spanning(center - half_width, center + half_width, count)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end(&self) -> f64 {
        self.node(self.count - 1)
    }

    pub fn span(&self) -> f64 {
        self.step * (self.count - 1) as f64
    }

    /// Reference frequency for moment accumulation.
    pub fn midpoint(&self) -> f64 {
        self.start + 0.5 * self.span()
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.node(i))
    }

    /// Index of the node closest to `frequency`, clamped to the grid.
    pub fn nearest_index(&self, frequency: f64) -> usize {
        let x = ((frequency - self.start) / self.step).round();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.count - 1)
        }
    }
}

/// Spectral density sampled on a [`FrequencyGrid`]. Values are finite and ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::InvalidSpectrum(
                "value count does not match the grid",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpectrum("values must be finite"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidSpectrum("values must be non-negative"));
        }
        Ok(Self { grid, values })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(grid: FrequencyGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.count());
        Self { grid, values }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every value by `factor` (≥ 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    /// Trapezoidal `∫S dν`.
    pub fn energy(&self) -> f64 {
        trapezoid(self.grid.step(), &self.values)
    }

    /// Trapezoidal `∫(ν − reference)·S dν`.
    pub fn first_moment_about(&self, reference: f64) -> f64 {
        let g = &self.grid;
        let n = self.values.len();
        // offsets from the midpoint are exact multiples of half a step
        let c = 0.5 * (n - 1) as f64;
        let shift = g.midpoint() - reference;
        let mut sum = CompensatedSum::default();
        for (i, v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            sum.add(w * ((i as f64 - c) * g.step() + shift) * v);
        }
        sum.value() * g.step()
    }

    /// Energy-normalised first moment, failing when the energy is at or
    /// below `floor · peak · span`.
    pub fn centroid_with_floor(&self, floor: f64) -> Result<f64> {
        let e = self.energy();
        let threshold = floor * self.peak() * self.grid.span();
        if !(e > threshold) {
            let scale = self.peak() * self.grid.span();
            return Err(Error::EnergyBelowFloor {
                ratio: if scale > 0.0 { e / scale } else { 0.0 },
                loss_db: f64::INFINITY,
            });
        }
        let reference = self.grid.midpoint();
        Ok(reference + self.first_moment_about(reference) / e)
    }
}

pub(crate) fn trapezoid(step: f64, values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut inner = CompensatedSum::default();
    values.iter().for_each(|&v| inner.add(v));
    step * (inner.value() - 0.5 * (values[0] + values[n - 1]))
}

/// Neumaier summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// A pulse with Gaussian spectral density `exp[−π²τ²(ν−ν0)²/ln2]`, where
/// `τ` is the temporal intensity FWHM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulse {
    center_thz: f64,
    fwhm_fs: f64,
}

impl GaussianPulse {
    pub fn new(center_thz: f64, fwhm_fs: f64) -> Result<Self> {
        if !(center_thz.is_finite() && center_thz > 0.0) {
            return Err(Error::InvalidPulse("centre frequency must be positive"));
        }
        if !(fwhm_fs.is_finite() && fwhm_fs > 0.0) {
            return Err(Error::InvalidPulse("duration must be positive"));
        }
        Ok(Self {
            center_thz,
            fwhm_fs,
        })
    }

    pub fn center_thz(&self) -> f64 {
        self.center_thz
    }

    pub fn fwhm_fs(&self) -> f64 {
        self.fwhm_fs
    }

    /// Standard deviation of the spectral density in THz, `√ln2 / (√2·π·τ)`.
    pub fn spectral_sigma(&self) -> f64 {
        LN_2.sqrt() / (core::f64::consts::SQRT_2 * PI * self.fwhm_fs) * units::PER_FS_IN_THZ
    }

    /// Spectral FWHM in THz; `τ·Δν = 2 ln2/π`.
    pub fn spectral_fwhm(&self) -> f64 {
        2.0 * LN_2 / (PI * self.fwhm_fs) * units::PER_FS_IN_THZ
    }

    /// Analytic `∫S dν` over the whole real line.
    pub fn energy(&self) -> f64 {
        (PI * LN_2).sqrt() / (PI * self.fwhm_fs * units::THZ_FS)
    }

    pub fn density(&self, frequency: f64) -> f64 {
        let x = PI * self.fwhm_fs * (frequency - self.center_thz) * units::THZ_FS;
        (-x * x / LN_2).exp()
    }

    /// `ν0 ± 8σ` with [`DEFAULT_GRID_NODES`] nodes.
    pub fn default_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::centered(
            self.center_thz,
            DEFAULT_GRID_HALF_WIDTH_SIGMAS * self.spectral_sigma(),
            DEFAULT_GRID_NODES,
        )
    }
}

pub fn gaussian_spectrum(pulse: &GaussianPulse, grid: &FrequencyGrid) -> Spectrum {
    Spectrum::from_parts(*grid, grid.nodes().map(|nu| pulse.density(nu)).collect())
}

/// A spectrum resampled from tabulated rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSpectrum {
    pub spectrum: Spectrum,
    /// Rows whose negative density was clamped to zero.
    pub clamped: usize,
}

/// Resamples `(frequency THz, density)` rows onto a uniform grid by linear
/// interpolation.
///
/// The grid spans the input range with a step no larger than the smallest
/// input spacing. Nodes that coincide with an input frequency take that row's
/// value unchanged. Negative densities are clamped to zero and counted.
pub fn load_spectrum(rows: &[(f64, f64)]) -> Result<LoadedSpectrum> {
    if rows.len() < 2 {
        return Err(Error::TooFewRows(rows.len()));
    }
    for (row, &(nu, s)) in rows.iter().enumerate() {
        if !nu.is_finite() || !s.is_finite() {
            return Err(Error::NonFiniteValue { row });
        }
    }
    let mut min_spacing = f64::INFINITY;
    for (row, pair) in rows.windows(2).enumerate() {
        let d = pair[1].0 - pair[0].0;
        if !(d > 0.0) {
            return Err(Error::NonMonotoneFrequencies { row: row + 1 });
        }
        min_spacing = min_spacing.min(d);
    }

    let mut clamped = 0;
    let densities: Vec<f64> = rows
        .iter()
        .map(|&(_, s)| {
            if s < 0.0 {
                clamped += 1;
                0.0
            } else {
                s
            }
        })
        .collect();

    let start = rows[0].0;
    let span = rows[rows.len() - 1].0 - start;
    let ratio = span / min_spacing;
    let intervals = if (ratio - ratio.round()).abs() < 1e-6 * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.ceil()
    };
    let grid = FrequencyGrid::spanning(start, start + span, intervals as usize + 1)?;

    let coincide = 1e-9 * min_spacing;
    let mut values = Vec::with_capacity(grid.count());
    let mut seg = 0;
    for (i, nu) in grid.nodes().enumerate() {
        let nu = if i == grid.count() - 1 {
            rows[rows.len() - 1].0
        } else {
            nu
        };
        while seg + 2 < rows.len() && rows[seg + 1].0 <= nu {
            seg += 1;
        }
        let (x0, x1) = (rows[seg].0, rows[seg + 1].0);
        let (y0, y1) = (densities[seg], densities[seg + 1]);
        let v = if (nu - x0).abs() <= coincide {
            y0
        } else if (nu - x1).abs() <= coincide {
            y1
        } else {
            let t = ((nu - x0) / (x1 - x0)).clamp(0.0, 1.0);
            y0 + t * (y1 - y0)
        };
        values.push(v.max(0.0));
    }

    Ok(LoadedSpectrum {
        spectrum: Spectrum::new(grid, values)?,
        clamped,
    })
}

pub fn energy(s: &Spectrum) -> f64 {
    s.energy()
}

/// `∫ν S dν / ∫S dν` with the default energy floor.
pub fn centroid(s: &Spectrum) -> Result<f64> {
    s.centroid_with_floor(DEFAULT_ENERGY_FLOOR)
}

/// Spectrometer response: Gaussian line shape plus scan averaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstrumentModel {
    resolution_fwhm_thz: f64,
    scans_to_average: usize,
}

impl InstrumentModel {
    pub fn new(resolution_fwhm_thz: f64, scans_to_average: usize) -> Result<Self> {
        if !(resolution_fwhm_thz.is_finite() && resolution_fwhm_thz >= 0.0) {
            return Err(Error::InvalidParameter("resolution must be finite and ≥ 0"));
        }
        if scans_to_average == 0 {
            return Err(Error::InvalidParameter(
                "at least one scan must be averaged",
            ));
        }
        Ok(Self {
            resolution_fwhm_thz,
            scans_to_average,
        })
    }

    /// Resolution quoted as a wavelength width at `center_nm`.
    pub fn from_wavelength_resolution(
        resolution_nm: f64,
        center_nm: f64,
        scans_to_average: usize,
    ) -> Result<Self> {
        Self::new(
            units::wavelength_width_to_frequency(resolution_nm, center_nm),
            scans_to_average,
        )
    }

    /// Perfect resolution, single scan.
    pub fn ideal() -> Self {
        Self {
            resolution_fwhm_thz: 0.0,
            scans_to_average: 1,
        }
    }

    pub fn resolution_fwhm_thz(&self) -> f64 {
        self.resolution_fwhm_thz
    }

    pub fn scans_to_average(&self) -> usize {
        self.scans_to_average
    }

    /// Discrete unit-sum Gaussian kernel for a grid step, truncated at ±4σ.
    /// A single tap means the convolution is the identity.
    pub fn kernel(&self, step: f64) -> Vec<f64> {
        let sigma = self.resolution_fwhm_thz / FWHM_PER_SIGMA;
        let half = if sigma > 0.0 {
            (4.0 * sigma / step).floor() as usize
        } else {
            0
        };
        if half == 0 {
            return alloc::vec![1.0];
        }
        let mut taps: Vec<f64> = (0..=2 * half)
            .map(|k| {
                let x = (k as f64 - half as f64) * step / sigma;
                (-0.5 * x * x).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= total);
        taps
    }
}

/// Convolves `s` with the instrument line shape. Outside the grid the
/// density is taken as zero.
pub fn convolve_instrument(s: &Spectrum, model: &InstrumentModel) -> Spectrum {
    let kernel = model.kernel(s.grid().step());
    if kernel.len() == 1 {
        return s.clone();
    }
    let half = kernel.len() / 2;
    let v = s.values();
    let n = v.len();
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += kernel[j + half - i] * v[j];
            }
            acc
        })
        .collect();
    Spectrum::from_parts(*s.grid(), out)
}
