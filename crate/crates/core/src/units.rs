//! Unit constants and conversions.
//!
//! Frequencies are THz, times fs, wavelengths nm. A phase `2πνT` therefore
//! needs an explicit factor of 10⁻³ (THz·fs = 10⁻³).

/// Speed of light in nm·THz (equivalently nm/ps).
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;

/// Converts a THz·fs product into cycles.
pub const THZ_FS: f64 = 1e-3;

/// Converts `Δ(1/fs)` into THz.
pub const PER_FS_IN_THZ: f64 = 1e3;

const NM_PER_MM: f64 = 1e6;

pub fn wavelength_to_frequency(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT_NM_THZ / wavelength_nm
}

pub fn frequency_to_wavelength(frequency_thz: f64) -> f64 {
    SPEED_OF_LIGHT_NM_THZ / frequency_thz
}

/// Frequency width (THz) of a wavelength interval `Δλ` centred at `λ`:
/// `Δν = c·Δλ/λ²`.
pub fn wavelength_width_to_frequency(width_nm: f64, center_nm: f64) -> f64 {
    SPEED_OF_LIGHT_NM_THZ * width_nm / (center_nm * center_nm)
}

/// Round-trip time (fs) for a mirror at distance `d` (mm): `2d/c`.
pub fn round_trip_delay_fs(distance_mm: f64) -> f64 {
    2.0 * distance_mm * NM_PER_MM / SPEED_OF_LIGHT_NM_THZ / THZ_FS
}
