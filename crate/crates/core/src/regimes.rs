//! `Γ` sweeps and the trade-off between centroid shift and insertion loss.
//!
//! Near `θ = 0` the pre- and post-selected states almost coincide: shifts are
//! small and losses stay within a few dB. Near `θ = π` they are almost
//! orthogonal: shifts grow by orders of magnitude together with the loss.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::forward::{
    self, delta_f_gaussian_at_detuning, gamma_factor, loss_db_from_ratio,
    loss_gaussian_at_detuning, one_minus_gamma, post_selection_for_detuning, FringeMoments,
    ModelTag, PulseModel, DEFAULT_FLOOR,
};
use crate::spectra::{GaussianPulse, Spectrum};

/// Losses at or below this value count as the low-loss regime.
pub const DEFAULT_LOW_LOSS_THRESHOLD_DB: f64 = 12.0;

/// Relative tolerance on `cosθ` for the bisection used with tabulated spectra.
pub const BUDGET_BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LowLoss,
    HighLoss,
}

impl Regime {
    pub fn from_loss(loss_db: f64, threshold_db: f64) -> Self {
        if loss_db <= threshold_db {
            Regime::LowLoss
        } else {
            Regime::HighLoss
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::LowLoss => "low-loss",
            Regime::HighLoss => "high-loss",
        }
    }
}

/// Observables along a uniform `Γ` grid. A `None` shift marks a point where
/// the output energy fell below the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub delay_fs: f64,
    pub gammas: Vec<f64>,
    pub shifts: Vec<Option<f64>>,
    pub losses: Vec<f64>,
    pub model_tag: ModelTag,
}

impl SweepResult {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn singular_count(&self) -> usize {
        self.shifts.iter().filter(|s| s.is_none()).count()
    }

    /// Angles where the shift changes sign between neighbouring regular
    /// points, linearly interpolated.
    pub fn zero_crossings(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 1..self.len() {
            if let (Some(a), Some(b)) = (self.shifts[k - 1], self.shifts[k]) {
                if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
                    let t = a / (a - b);
                    out.push(self.gammas[k - 1] + t * (self.gammas[k] - self.gammas[k - 1]));
                }
            }
        }
        out
    }
}

/// Evaluates shift and loss at `n` uniformly spaced angles in `[lo, hi]`.
pub fn gamma_sweep(
    model: &PulseModel,
    delay_fs: f64,
    gamma_range: (f64, f64),
    n: usize,
) -> Result<SweepResult> {
    let (lo, hi) = gamma_range;
    if n < 2 {
        return Err(Error::InvalidParameter("a sweep needs at least two angles"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(
            "angle range must be finite and increasing",
        ));
    }
    if !delay_fs.is_finite() {
        return Err(Error::InvalidParameter("delay must be finite"));
    }
    let eval = model.at_delay(delay_fs);
    let mut gammas = Vec::with_capacity(n);
    let mut shifts = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    let step = (hi - lo) / (n - 1) as f64;
    for k in 0..n {
        let gamma = if k == n - 1 { hi } else { lo + step * k as f64 };
        let (shift, loss) = match eval.observables(gamma, DEFAULT_FLOOR) {
            Ok(o) => (Some(o.delta_f_thz), o.loss_db),
            Err(Error::EnergyBelowFloor { loss_db, .. }) => (None, loss_db),
            Err(e) => return Err(e),
        };
        gammas.push(gamma);
        shifts.push(shift);
        losses.push(loss);
    }
    Ok(SweepResult {
        delay_fs,
        gammas,
        shifts,
        losses,
        model_tag: model.tag(),
    })
}

/// An operating point on the shift/loss trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingPoint {
    /// Post-selection angle, wrapped to `(−π, π]`.
    pub gamma: f64,
    /// Detuning from the minimum-loss angle.
    pub detuning: f64,
    pub shift_thz: f64,
    pub loss_db: f64,
    pub regime: Regime,
}

pub fn classify_regime(wp: &WorkingPoint, threshold_db: f64) -> Regime {
    Regime::from_loss(wp.loss_db, threshold_db)
}

fn gaussian_point(p: &GaussianPulse, delay_fs: f64, theta: f64) -> WorkingPoint {
    let shift = delta_f_gaussian_at_detuning(p, delay_fs, theta, 0.0).unwrap_or(0.0);
    let loss = loss_gaussian_at_detuning(p, delay_fs, theta);
    WorkingPoint {
        gamma: post_selection_for_detuning(p.center_thz(), delay_fs, theta),
        detuning: theta,
        shift_thz: shift,
        loss_db: loss,
        regime: Regime::from_loss(loss, DEFAULT_LOW_LOSS_THRESHOLD_DB),
    }
}

/// The two zero-shift angles: `θ = 0` (minimum loss) and `θ = π` (maximum loss).
pub fn zero_shift_points(p: &GaussianPulse, delay_fs: f64) -> (WorkingPoint, WorkingPoint) {
    let mut high = gaussian_point(p, delay_fs, PI);
    high.shift_thz = 0.0;
    (gaussian_point(p, delay_fs, 0.0), high)
}

/// Largest `|Δf|` over all `Γ`, at `cosθ = −γ`.
pub fn global_max_shift(p: &GaussianPulse, delay_fs: f64) -> WorkingPoint {
    if one_minus_gamma(delay_fs, p.fwhm_fs()) == 0.0 {
        return gaussian_point(p, delay_fs, 0.0);
    }
    let g = gamma_factor(delay_fs, p.fwhm_fs());
    gaussian_point(p, delay_fs, (-g).acos())
}

/// Maximises `|Δf|` over `Γ` subject to `L(Γ) ≤ budget_db` for a Gaussian
/// pulse. Both `L` and `|Δf|` increase with `θ` on `(0, arccos(−γ))`, so the
/// optimum either sits on the budget or is the global maximum. The returned
/// point lies on the `θ ∈ [0, π]` branch (non-positive shift for `T > 0`).
pub fn max_shift_at_loss_budget(
    p: &GaussianPulse,
    delay_fs: f64,
    budget_db: f64,
) -> Result<WorkingPoint> {
    if budget_db.is_nan() {
        return Err(Error::InvalidParameter("loss budget must not be NaN"));
    }
    let tau = p.fwhm_fs();
    let g = gamma_factor(delay_fs, tau);
    let omg = one_minus_gamma(delay_fs, tau);
    let minimum_db = loss_db_from_ratio(0.5 * (1.0 + g));
    if budget_db < minimum_db {
        return Err(Error::InfeasibleBudget {
            budget_db,
            minimum_db,
        });
    }
    if omg == 0.0 {
        return Ok(gaussian_point(p, delay_fs, 0.0));
    }
    let peak_loss = loss_db_from_ratio(0.5 * omg * (1.0 + g));
    if budget_db >= peak_loss {
        return Ok(global_max_shift(p, delay_fs));
    }
    // 1 + γ cosθ = 2·10^(−L/10)
    let cos_theta = ((2.0 * 10f64.powf(-budget_db / 10.0) - 1.0) / g).clamp(-1.0, 1.0);
    Ok(gaussian_point(p, delay_fs, cos_theta.acos()))
}

/// Budget-constrained maximum shift for a tabulated spectrum.
///
/// The transmitted energy is `F/2·(1 + ρ cos(Γ − Γ*))` for any input, so the
/// feasible set is an arc around the minimum-loss angle `Γ*`. Its edge is
/// found by bisection in `cosθ`; the shift is then maximised over the arc by
/// a dense scan refined with golden-section search.
pub fn max_shift_at_loss_budget_tabulated(
    s: &Spectrum,
    delay_fs: f64,
    budget_db: f64,
) -> Result<WorkingPoint> {
    if budget_db.is_nan() {
        return Err(Error::InvalidParameter("loss budget must not be NaN"));
    }
    let m = FringeMoments::new(s, delay_fs);
    let (rho, best_angle) = m.contrast();
    let loss_at = |cos_theta: f64| loss_db_from_ratio(0.5 * (1.0 + rho * cos_theta));
    let minimum_db = loss_at(1.0);
    if budget_db < minimum_db {
        return Err(Error::InfeasibleBudget {
            budget_db,
            minimum_db,
        });
    }

    // Edge of the feasible arc, as the smallest admissible cosθ.
    let cos_edge = if loss_at(-1.0) <= budget_db {
        -1.0
    } else {
        let (mut lo, mut hi) = (-1.0, 1.0);
        while hi - lo > BUDGET_BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if loss_at(mid) <= budget_db {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let theta_edge = cos_edge.acos();

    let shift_at = |theta: f64| -> Option<f64> {
        m.observables(best_angle - theta, DEFAULT_FLOOR)
            .ok()
            .map(|o| o.delta_f_thz.abs())
    };
    const SCAN: usize = 4096;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=2 * SCAN {
        let theta = theta_edge * (k as f64 / SCAN as f64 - 1.0);
        if let Some(v) = shift_at(theta) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((theta, v));
            }
        }
    }
    let (theta0, _) = best.ok_or(Error::AllSamplesSingular {
        samples: 2 * SCAN + 1,
    })?;
    let h = theta_edge / SCAN as f64;
    let (mut a, mut b) = ((theta0 - h).max(-theta_edge), (theta0 + h).min(theta_edge));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if shift_at(c).unwrap_or(0.0) > shift_at(d).unwrap_or(0.0) {
            b = d;
        } else {
            a = c;
        }
    }
    let theta = 0.5 * (a + b);
    let gamma = forward::wrap_angle(best_angle - theta);
    let o = m.observables(gamma, DEFAULT_FLOOR)?;
    Ok(WorkingPoint {
        gamma,
        detuning: theta,
        shift_thz: o.delta_f_thz,
        loss_db: o.loss_db,
        regime: Regime::from_loss(o.loss_db, DEFAULT_LOW_LOSS_THRESHOLD_DB),
    })
}
