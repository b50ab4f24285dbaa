//! Delay estimation from `Γ`-sweep data.
//!
//! The fit minimises stacked, weighted residuals between the forward model
//! and measured shifts and/or losses. A coarse scan over the delay bracket
//! picks the basin (the density is nearly periodic in `T` with period
//! `1/ν0`), then a damped Gauss-Newton iteration with a finite-difference
//! Jacobian polishes the estimate.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward::{gamma_factor, shift_scale, DelayModel, PulseModel, DEFAULT_FLOOR};
use crate::noise::{MeasurementSimulator, NoiseModel, UncertainValue};
use crate::spectra::GaussianPulse;
use crate::units;

pub const DEFAULT_GRID_NODES: usize = 512;
const OFFSET_GRID_NODES: usize = 64;
const MAX_ITERATIONS: usize = 200;
const STEP_TOL_FS: f64 = 1e-4;
const DECREASE_TOL: f64 = 1e-10;
const JACOBIAN_REL_STEP: f64 = 1e-6;
/// Grid minima within this factor of the best norm are reported.
const ALTERNATIVE_BAND: f64 = 1.05;
const REFINED_STARTS: usize = 8;
/// Coarse-scan density bounds per fringe period `1/ν0`.
const NODES_PER_FRINGE: f64 = 32.0;
const MAX_NODES_PER_FRINGE: f64 = 4096.0;
/// Coarse-scan nodes across the narrowest residual feature.
const NODES_PER_FEATURE: f64 = 4.0;

/// Measured sweep plus everything needed to model it.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    model: PulseModel,
    data_gamma: Vec<f64>,
    data_shift: Option<Vec<Option<f64>>>,
    data_loss: Option<Vec<Option<f64>>>,
    weights: Option<Vec<f64>>,
    t_bracket: (f64, f64),
    fit_gamma_offset: bool,
    shift_scale: Option<f64>,
    loss_scale: Option<f64>,
    grid_nodes: usize,
    gamma_jitter_sigma: f64,
}

impl FitProblem {
    pub fn new(model: PulseModel, data_gamma: Vec<f64>, t_bracket: (f64, f64)) -> Self {
        Self {
            model,
            data_gamma,
            data_shift: None,
            data_loss: None,
            weights: None,
            t_bracket,
            fit_gamma_offset: false,
            shift_scale: None,
            loss_scale: None,
            grid_nodes: DEFAULT_GRID_NODES,
            gamma_jitter_sigma: 0.0,
        }
    }

    /// Shift data in THz; `None` entries are missing.
    pub fn with_shifts(mut self, shifts: Vec<Option<f64>>) -> Self {
        self.data_shift = Some(shifts);
        self
    }

    /// Loss data in dB; `None` entries are missing.
    pub fn with_losses(mut self, losses: Vec<Option<f64>>) -> Self {
        self.data_loss = Some(losses);
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_gamma_offset(mut self, fit: bool) -> Self {
        self.fit_gamma_offset = fit;
        self
    }

    /// Residual divisors per channel. `None` uses the RMS of that channel's data.
    pub fn with_channel_scales(mut self, shift: Option<f64>, loss: Option<f64>) -> Self {
        self.shift_scale = shift;
        self.loss_scale = loss;
        self
    }

    /// Minimum coarse-scan node count. The scan refines further to resolve
    /// fringe-scale and dark-fringe structure.
    pub fn with_grid_nodes(mut self, nodes: usize) -> Self {
        self.grid_nodes = nodes;
        self
    }

    /// Known per-scan `Γ` jitter of the data. The model then predicts the
    /// expected scan average, with fringe visibility `exp(−σ²/2)`.
    pub fn with_gamma_jitter(mut self, sigma_rad: f64) -> Self {
        self.gamma_jitter_sigma = sigma_rad;
        self
    }

    pub fn model(&self) -> &PulseModel {
        &self.model
    }

    pub fn data_gamma(&self) -> &[f64] {
        &self.data_gamma
    }

    pub fn data_shift(&self) -> Option<&[Option<f64>]> {
        self.data_shift.as_deref()
    }

    pub fn data_loss(&self) -> Option<&[Option<f64>]> {
        self.data_loss.as_deref()
    }

    pub fn t_bracket(&self) -> (f64, f64) {
        self.t_bracket
    }

    pub fn fits_gamma_offset(&self) -> bool {
        self.fit_gamma_offset
    }

    fn parameter_count(&self) -> usize {
        if self.fit_gamma_offset {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.t_bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::DegenerateBracket { lo, hi });
        }
        let n = self.data_gamma.len();
        if self.data_gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidFitProblem("angles must be finite"));
        }
        let mut rows_with_data = alloc::vec![false; n];
        let mut any_channel = false;
        for channel in [&self.data_shift, &self.data_loss].into_iter().flatten() {
            if channel.len() != n {
                return Err(Error::InvalidFitProblem(
                    "channel length differs from the angle count",
                ));
            }
            for (row, v) in channel.iter().enumerate() {
                if let Some(v) = v {
                    if !v.is_finite() {
                        return Err(Error::InvalidFitProblem("data values must be finite"));
                    }
                    rows_with_data[row] = true;
                    any_channel = true;
                }
            }
        }
        if !any_channel {
            return Err(Error::InvalidFitProblem("no shift or loss data"));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(Error::InvalidFitProblem(
                    "weight count differs from the angle count",
                ));
            }
            if w.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
                return Err(Error::InvalidFitProblem("weights must be positive"));
            }
        }
        for s in [self.shift_scale, self.loss_scale].into_iter().flatten() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidFitProblem("channel scales must be positive"));
            }
        }
        if rows_with_data.iter().filter(|&&r| r).count() < 3 * self.parameter_count() {
            return Err(Error::InvalidFitProblem(
                "need at least 3 data points per fitted parameter",
            ));
        }
        if !(self.gamma_jitter_sigma.is_finite() && self.gamma_jitter_sigma >= 0.0) {
            return Err(Error::InvalidFitProblem(
                "jitter sigma must be non-negative",
            ));
        }
        if self.grid_nodes < 2 {
            return Err(Error::InvalidFitProblem(
                "coarse grid needs at least two nodes",
            ));
        }
        Ok(())
    }

    fn channel_scale(explicit: Option<f64>, data: &Option<Vec<Option<f64>>>) -> f64 {
        if let Some(s) = explicit {
            return s;
        }
        let present: Vec<f64> = data.iter().flatten().flatten().copied().collect();
        if present.is_empty() {
            return 1.0;
        }
        let rms = (present.iter().map(|v| v * v).sum::<f64>() / present.len() as f64).sqrt();
        if rms > 0.0 {
            rms
        } else {
            1.0
        }
    }

    /// Divisors applied to shift and loss residuals.
    pub fn channel_scales(&self) -> (f64, f64) {
        (
            Self::channel_scale(self.shift_scale, &self.data_shift),
            Self::channel_scale(self.loss_scale, &self.data_loss),
        )
    }
}

/// Stacked residual vector: shift entries (rows with shift data) followed by
/// loss entries (rows with loss data).
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    /// Rows where the model output was below the energy floor; their entries are 0.
    pub singular: usize,
}

impl Residuals {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

struct Evaluator<'a> {
    problem: &'a FitProblem,
    shift_scale: f64,
    loss_scale: f64,
}

/// Centre frequency and RMS spectral width of the model input, in THz.
fn spectral_spread(model: &PulseModel) -> Option<(f64, f64)> {
    match model {
        PulseModel::Gaussian(p) => Some((p.center_thz(), p.spectral_sigma())),
        PulseModel::Tabulated(s) => {
            let nu0 = crate::spectra::centroid(s).ok()?;
            let e = s.energy();
            let var = s
                .grid()
                .nodes()
                .zip(s.values())
                .map(|(nu, v)| (nu - nu0) * (nu - nu0) * v)
                .sum::<f64>()
                * s.grid().step()
                / e;
            (var > 0.0).then(|| (nu0, var.sqrt()))
        }
    }
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a FitProblem) -> Self {
        let (shift_scale, loss_scale) = problem.channel_scales();
        Self {
            problem,
            shift_scale,
            loss_scale,
        }
    }

    fn weight(&self, row: usize) -> f64 {
        self.problem.weights.as_ref().map_or(1.0, |w| w[row])
    }

    /// Model shift/loss per row, `None` where singular.
    fn model_rows(&self, delay_fs: f64, offset: f64) -> Vec<Option<(f64, f64)>> {
        self.rows_at(&self.problem.model.at_delay(delay_fs), offset)
    }

    fn rows_at(&self, eval: &DelayModel, offset: f64) -> Vec<Option<(f64, f64)>> {
        self.problem
            .data_gamma
            .iter()
            .map(|&g| {
                eval.observables_jittered(
                    g + offset,
                    self.problem.gamma_jitter_sigma,
                    DEFAULT_FLOOR,
                )
                .ok()
                .map(|o| (o.delta_f_thz, o.loss_db))
            })
            .collect()
    }

    fn residuals(&self, delay_fs: f64, offset: f64) -> Residuals {
        self.residuals_at(&self.problem.model.at_delay(delay_fs), offset)
    }

    fn residuals_at(&self, eval: &DelayModel, offset: f64) -> Residuals {
        let rows = self.rows_at(eval, offset);
        let p = self.problem;
        let mut values = Vec::new();
        if let Some(shifts) = &p.data_shift {
            for (row, d) in shifts.iter().enumerate() {
                if let Some(d) = d {
                    values.push(
                        rows[row]
                            .map_or(0.0, |(m, _)| self.weight(row) * (m - d) / self.shift_scale),
                    );
                }
            }
        }
        if let Some(losses) = &p.data_loss {
            for (row, d) in losses.iter().enumerate() {
                if let Some(d) = d {
                    values.push(
                        rows[row]
                            .map_or(0.0, |(_, m)| self.weight(row) * (m - d) / self.loss_scale),
                    );
                }
            }
        }
        Residuals {
            values,
            singular: rows.iter().filter(|r| r.is_none()).count(),
        }
    }

    fn channel_rms(&self, delay_fs: f64, offset: f64) -> ChannelRms {
        let rows = self.model_rows(delay_fs, offset);
        let rms = |data: &Option<Vec<Option<f64>>>, pick: fn((f64, f64)) -> f64| {
            let data = data.as_ref()?;
            let diffs: Vec<f64> = data
                .iter()
                .zip(&rows)
                .filter_map(|(d, m)| Some(pick((*m)?) - (*d)?))
                .collect();
            if diffs.is_empty() {
                return None;
            }
            Some((diffs.iter().map(|x| x * x).sum::<f64>() / diffs.len() as f64).sqrt())
        };
        ChannelRms {
            shift_thz: rms(&self.problem.data_shift, |(s, _)| s),
            loss_db: rms(&self.problem.data_loss, |(_, l)| l),
        }
    }
}

/// Weighted residuals at `(T, γ_off)`.
pub fn residuals(problem: &FitProblem, delay_fs: f64, gamma_offset: f64) -> Result<Residuals> {
    problem.validate()?;
    Ok(Evaluator::new(problem).residuals(delay_fs, gamma_offset))
}

/// Unweighted RMS misfit per channel, in THz and dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRms {
    pub shift_thz: Option<f64>,
    pub loss_db: Option<f64>,
}

/// A local minimum of the coarse delay scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    pub delay_fs: f64,
    pub gamma_offset: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub t_hat: f64,
    pub gamma_offset_hat: f64,
    pub residual_norm: f64,
    pub per_channel_rms: ChannelRms,
    pub uncertainty: Option<UncertainValue>,
    pub iterations: usize,
    pub converged: bool,
    pub singular_points: usize,
    /// Refined minima within 5% of the best norm, best first.
    pub grid_minima: Vec<GridMinimum>,
}

fn best_offset(ev: &Evaluator<'_>, delay_fs: f64) -> (f64, f64) {
    let eval = ev.problem.model.at_delay(delay_fs);
    if !ev.problem.fit_gamma_offset {
        return (0.0, ev.residuals_at(&eval, 0.0).norm());
    }
    let mut best = (0.0, f64::INFINITY);
    for k in 0..OFFSET_GRID_NODES {
        let off = -PI + TAU * k as f64 / OFFSET_GRID_NODES as f64;
        let n = ev.residuals_at(&eval, off).norm();
        if n < best.1 {
            best = (off, n);
        }
    }
    best
}

/// Coarse-scan delays. Spacing is the finest of: the uniform grid, a fixed
/// fraction of the fringe period `1/ν0`, and a fraction of the width
/// `σν·|T|/ν0` of the sharpest residual features (dark-fringe shifts
/// narrow as `1 − γ` shrinks).
fn scan_delays(problem: &FitProblem) -> Vec<f64> {
    let (lo, hi) = problem.t_bracket;
    let uniform = (hi - lo) / (problem.grid_nodes - 1) as f64;
    let Some((nu0, sigma)) = spectral_spread(&problem.model) else {
        return (0..problem.grid_nodes)
            .map(|k| lo + uniform * k as f64)
            .collect();
    };
    let fringe = 1.0 / (nu0.abs() * units::THZ_FS);
    let coarse = uniform.min(fringe / NODES_PER_FRINGE);
    let finest = fringe / MAX_NODES_PER_FRINGE;
    let relative = sigma / nu0.abs() / NODES_PER_FEATURE;
    let mut out = Vec::new();
    let mut t = lo;
    while t < hi {
        out.push(t);
        t += coarse.min((relative * t.abs()).max(finest));
    }
    out.push(hi);
    out
}

fn coarse_scan(ev: &Evaluator<'_>) -> Vec<GridMinimum> {
    scan_delays(ev.problem)
        .into_iter()
        .map(|t| {
            let (off, norm) = best_offset(ev, t);
            GridMinimum {
                delay_fs: t,
                gamma_offset: off,
                norm,
            }
        })
        .collect()
}

fn better(a: &GridMinimum, b: &GridMinimum) -> bool {
    let tie = (a.norm - b.norm).abs() <= 1e-12 * b.norm.max(f64::MIN_POSITIVE);
    if tie {
        a.delay_fs.abs() < b.delay_fs.abs()
    } else {
        a.norm < b.norm
    }
}

/// Index of the best node; among equal norms the smallest `|T|` wins.
fn best_node(scan: &[GridMinimum]) -> usize {
    let mut best = 0;
    for (i, m) in scan.iter().enumerate().skip(1) {
        if better(m, &scan[best]) {
            best = i;
        }
    }
    best
}

/// Local minima of the scan, best first.
fn local_minima(scan: &[GridMinimum]) -> Vec<GridMinimum> {
    let mut out: Vec<GridMinimum> = (0..scan.len())
        .filter(|&i| {
            let left = i == 0 || scan[i - 1].norm >= scan[i].norm;
            let right = i + 1 == scan.len() || scan[i + 1].norm > scan[i].norm;
            left && right
        })
        .map(|i| scan[i])
        .collect();
    out.sort_by(|a, b| {
        if better(a, b) {
            core::cmp::Ordering::Less
        } else if better(b, a) {
            core::cmp::Ordering::Greater
        } else {
            core::cmp::Ordering::Equal
        }
    });
    out
}

/// Solves the 1×1 or 2×2 system `(A + λ·diag A)·δ = −g`.
fn damped_step(a: &[[f64; 2]; 2], g: &[f64; 2], lambda: f64, dim: usize) -> [f64; 2] {
    let d = |i: usize| a[i][i] * (1.0 + lambda) + 1e-300;
    if dim == 1 {
        return [-g[0] / d(0), 0.0];
    }
    let (a00, a11, a01) = (d(0), d(1), a[0][1]);
    let det = a00 * a11 - a01 * a01;
    [
        (-g[0] * a11 + g[1] * a01) / det,
        (-g[1] * a00 + g[0] * a01) / det,
    ]
}

struct Refined {
    x: [f64; 2],
    cost: f64,
    iterations: usize,
    converged: bool,
}

/// Levenberg-Marquardt from `start`, with `T` clamped to the bracket.
fn refine(ev: &Evaluator<'_>, start: [f64; 2]) -> Refined {
    let (lo, hi) = ev.problem.t_bracket;
    let dim = ev.problem.parameter_count();
    let clamp = |x: [f64; 2]| [x[0].clamp(lo, hi), x[1]];
    let resid = |x: [f64; 2]| ev.residuals(x[0], x[1]).values;
    let cost = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();

    let mut x = start;
    let mut r = resid(x);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = c == 0.0;
    let mut stalled = false;

    while !converged && !stalled && iterations < MAX_ITERATIONS {
        iterations += 1;
        // central-difference Jacobian
        let mut jac: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (j, col) in jac.iter_mut().enumerate().take(dim) {
            let h = JACOBIAN_REL_STEP * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let (rp, rm) = (resid(xp), resid(xm));
            *col = rp
                .iter()
                .zip(&rm)
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect();
        }
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for i in 0..dim {
            g[i] = jac[i].iter().zip(&r).map(|(j, r)| j * r).sum();
            for k in 0..dim {
                a[i][k] = jac[i].iter().zip(&jac[k]).map(|(p, q)| p * q).sum();
            }
        }

        loop {
            let step = damped_step(&a, &g, lambda, dim);
            let predicted = -(0..dim)
                .map(|i| {
                    g[i] * step[i]
                        + 0.5 * (0..dim).map(|k| step[i] * a[i][k] * step[k]).sum::<f64>()
                })
                .sum::<f64>();
            if step[0].abs() < STEP_TOL_FS && predicted <= DECREASE_TOL * c {
                converged = true;
                break;
            }
            let trial = clamp([x[0] + step[0], x[1] + step[1]]);
            let r_new = resid(trial);
            let c_new = cost(&r_new);
            if c_new < c {
                let moved = (trial[0] - x[0]).abs();
                let decrease = (c - c_new) / c;
                x = trial;
                r = r_new;
                c = c_new;
                lambda = (lambda / 10.0).max(1e-12);
                if c == 0.0 || (moved < STEP_TOL_FS && decrease < DECREASE_TOL) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                stalled = true;
                break;
            }
        }
    }
    Refined {
        x,
        cost: c,
        iterations,
        converged,
    }
}

/// Delay estimate: coarse scan, then damped least squares started from the
/// best few local minima of the scan.
///
/// The residual is nearly periodic in `T` with period `1/ν0`, so several
/// basins are polished and the lowest wins (smallest `|T|` on ties). Other
/// refined minima within 5% of the winner are reported in `grid_minima`.
/// A run that hits the iteration cap returns its best iterate with
/// `converged == false`.
pub fn fit_delay(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let ev = Evaluator::new(problem);

    let scan = coarse_scan(&ev);
    let mut starts = local_minima(&scan);
    if starts.is_empty() {
        starts.push(scan[best_node(&scan)]);
    }
    starts.truncate(REFINED_STARTS);

    let mut refined: Vec<(GridMinimum, Refined)> = starts
        .iter()
        .map(|s| {
            let r = refine(&ev, [s.delay_fs, s.gamma_offset]);
            let m = GridMinimum {
                delay_fs: r.x[0],
                gamma_offset: if problem.fit_gamma_offset {
                    r.x[1]
                } else {
                    0.0
                },
                norm: (2.0 * r.cost).sqrt(),
            };
            (m, r)
        })
        .collect();
    let mut best = 0;
    for i in 1..refined.len() {
        if better(&refined[i].0, &refined[best].0) {
            best = i;
        }
    }
    let (winner, fit) = refined.swap_remove(best);
    let limit = ALTERNATIVE_BAND * winner.norm;
    let mut grid_minima = alloc::vec![winner];
    let mut others: Vec<GridMinimum> = refined
        .into_iter()
        .map(|(m, _)| m)
        .filter(|m| m.norm <= limit && (m.delay_fs - winner.delay_fs).abs() > 10.0 * STEP_TOL_FS)
        .collect();
    others.sort_by(|a, b| a.norm.total_cmp(&b.norm));
    others.dedup_by(|a, b| (a.delay_fs - b.delay_fs).abs() <= 10.0 * STEP_TOL_FS);
    grid_minima.extend(others);

    let x = fit.x;
    Ok(FitResult {
        t_hat: x[0],
        gamma_offset_hat: winner.gamma_offset,
        residual_norm: winner.norm,
        per_channel_rms: ev.channel_rms(x[0], x[1]),
        uncertainty: None,
        iterations: fit.iterations,
        converged: fit.converged,
        singular_points: ev.residuals(x[0], x[1]).singular,
        grid_minima,
    })
}

/// Spread of the delay estimate by parametric bootstrap: synthetic sweeps
/// from the fitted model with jittered angles, each refitted. Sample `k`
/// uses random stream `k` of the noise model.
pub fn fit_uncertainty(
    problem: &FitProblem,
    fit: &FitResult,
    noise: &NoiseModel,
) -> Result<UncertainValue> {
    problem.validate()?;
    let mut estimates = Vec::with_capacity(noise.samples());
    for k in 0..noise.samples() as u64 {
        let eval = problem.model.at_delay(fit.t_hat);
        let mut rng = noise.rng(k);
        let mut shifts = Vec::with_capacity(problem.data_gamma.len());
        let mut losses = Vec::with_capacity(problem.data_gamma.len());
        for &g in &problem.data_gamma {
            let z: f64 = StandardNormal.sample(&mut rng);
            let angle = g + fit.gamma_offset_hat + noise.gamma_jitter_sigma() * z;
            let o = eval.observables(angle, DEFAULT_FLOOR).ok();
            shifts.push(o.map(|o| o.delta_f_thz));
            losses.push(o.map(|o| o.loss_db));
        }
        let mask = |data: &Option<Vec<Option<f64>>>, synth: Vec<Option<f64>>| {
            data.as_ref()
                .map(|d| d.iter().zip(synth).map(|(d, s)| d.and(s)).collect())
        };
        let resampled = FitProblem {
            data_shift: mask(&problem.data_shift, shifts),
            data_loss: mask(&problem.data_loss, losses),
            ..problem.clone()
        };
        if let Ok(r) = fit_delay(&resampled) {
            estimates.push(r.t_hat);
        }
    }
    UncertainValue::from_samples(&estimates).ok_or(Error::AllSamplesSingular {
        samples: noise.samples(),
    })
}

/// Shift (THz) and loss (dB) columns with missing cells.
pub type SweepData = (Vec<Option<f64>>, Vec<Option<f64>>);

/// Simulated measured sweep: point `i` is sample stream `i` of `noise`
/// through the instrument and scan-averaging pipeline. Singular points are
/// returned as missing cells.
pub fn synthesize_sweep(
    model: &PulseModel,
    delay_fs: f64,
    gammas: &[f64],
    noise: &NoiseModel,
) -> Result<SweepData> {
    let sim = MeasurementSimulator::new(model, delay_fs, noise)?;
    let mut shifts = Vec::with_capacity(gammas.len());
    let mut losses = Vec::with_capacity(gammas.len());
    for (i, &g) in gammas.iter().enumerate() {
        match sim.sample(g, i as u64) {
            Ok(o) => {
                shifts.push(Some(o.delta_f_thz));
                losses.push(Some(o.loss_db));
            }
            Err(Error::EnergyBelowFloor { .. }) => {
                shifts.push(None);
                losses.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((shifts, losses))
}

/// First-order delay from a small shift measured at detuning `θ` from the
/// low-loss zero-shift angle.
///
/// With `γ ≈ 1` the closed-form shift reduces to
/// `Δf ≈ −(ln2/π)(T/τ²)·tan(θ/2)`. The estimate is then iterated on the
/// `γ(T)` dependence until self-consistent to 10⁻⁶. Detunings with
/// `|θ| ≥ π/2`, or a correction beyond 10% of the first-order value, are
/// rejected as outside the linear regime.
pub fn invert_small_shift(
    delta_f_thz: f64,
    pulse: &GaussianPulse,
    detuning_rad: f64,
) -> Result<f64> {
    if !delta_f_thz.is_finite() || !detuning_rad.is_finite() {
        return Err(Error::InvalidParameter("shift and detuning must be finite"));
    }
    if !(detuning_rad.cos() > 0.0) {
        return Err(Error::NonlinearRegime {
            correction: f64::INFINITY,
        });
    }
    if delta_f_thz == 0.0 {
        return Ok(0.0);
    }
    let tau = pulse.fwhm_fs();
    let per_fs = shift_scale(1.0, tau);
    let half_tan = (0.5 * detuning_rad).tan();
    if half_tan == 0.0 {
        return Err(Error::NonlinearRegime {
            correction: f64::INFINITY,
        });
    }
    let first_order = -delta_f_thz / (per_fs * half_tan);
    let (sin_t, cos_t) = detuning_rad.sin_cos();
    let mut t = first_order;
    for _ in 0..100 {
        let g = gamma_factor(t, tau);
        let next = -delta_f_thz * (1.0 + g * cos_t) / (per_fs * g * sin_t);
        let done = (next - t).abs() <= 1e-6 * next.abs();
        t = next;
        if done {
            let correction = ((t - first_order) / first_order).abs();
            if correction > 0.1 {
                return Err(Error::NonlinearRegime { correction });
            }
            return Ok(t);
        }
    }
    Err(Error::NonlinearRegime {
        correction: ((t - first_order) / first_order).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{
        delta_f_gaussian_at_detuning, observables_gaussian, post_selection_for_detuning,
    };
    use crate::spectra::gaussian_spectrum;
    use crate::InstrumentModel;

    fn pulse() -> GaussianPulse {
        GaussianPulse::new(193.44, 320.0).unwrap()
    }

    fn sweep(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| -PI + TAU * (k as f64 + 0.5) / n as f64)
            .collect()
    }

    fn synthetic(
        model: &PulseModel,
        t: f64,
        gammas: &[f64],
    ) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        gammas
            .iter()
            .map(|&g| {
                let o = model.observables(t, g, DEFAULT_FLOOR).unwrap();
                (Some(o.delta_f_thz), Some(o.loss_db))
            })
            .unzip()
    }

    fn problem(t0: f64, n: usize) -> FitProblem {
        let model = PulseModel::Gaussian(pulse());
        let gammas = sweep(n);
        let (s, l) = synthetic(&model, t0, &gammas);
        FitProblem::new(model, gammas, (1.0, 100.0))
            .with_shifts(s)
            .with_losses(l)
    }

    #[test]
    fn exact_data_has_zero_residuals() {
        let p = problem(53.0, 30);
        let r = residuals(&p, 53.0, 0.0).unwrap();
        assert_eq!(r.values.len(), 60);
        assert!(r.values.iter().all(|&v| v == 0.0));
        assert_eq!(r.singular, 0);
    }

    #[test]
    fn doubling_weights_doubles_norm() {
        let p = problem(53.0, 30);
        let q = p.clone().with_weights(alloc::vec![2.0; 30]);
        let a = residuals(&p, 50.0, 0.1).unwrap().norm();
        let b = residuals(&q, 50.0, 0.1).unwrap().norm();
        assert!((b - 2.0 * a).abs() < 1e-12 * a);
        let fa = fit_delay(&p.clone().with_grid_nodes(128)).unwrap();
        let fb = fit_delay(&q.with_grid_nodes(128)).unwrap();
        assert!((fa.t_hat - fb.t_hat).abs() < 1e-6);
    }

    #[test]
    fn perturbing_one_datum_touches_one_entry() {
        let model = PulseModel::Gaussian(pulse());
        let gammas = sweep(12);
        let (mut s, l) = synthetic(&model, 40.0, &gammas);
        let mut w = alloc::vec![1.0; 12];
        w[5] = 3.0;
        let base = FitProblem::new(model, gammas, (1.0, 100.0))
            .with_losses(l)
            .with_weights(w)
            .with_channel_scales(Some(0.5), Some(2.0));
        let a = residuals(&base.clone().with_shifts(s.clone()), 41.0, 0.0).unwrap();
        let delta = 0.01;
        s[5] = s[5].map(|v| v + delta);
        let b = residuals(&base.with_shifts(s), 41.0, 0.0).unwrap();
        let changed: Vec<usize> = (0..a.values.len())
            .filter(|&i| a.values[i] != b.values[i])
            .collect();
        assert_eq!(changed, alloc::vec![5]);
        assert!((b.values[5] - a.values[5] - (-delta * 3.0 / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_round_trip() {
        for t0 in [22.0, 53.0] {
            let r = fit_delay(&problem(t0, 30)).unwrap();
            assert!(r.converged, "{r:?}");
            assert!((r.t_hat - t0).abs() < 1e-3, "{t0}: {r:?}");
            assert!(r.residual_norm < 1e-6);
        }
    }

    #[test]
    fn round_trip_over_delay_range() {
        // T/τ from 0.01 to 0.5 at τ = 320 fs
        for t0 in [3.2, 10.0, 37.5, 80.0, 120.0, 160.0] {
            let model = PulseModel::Gaussian(pulse());
            let gammas = sweep(30);
            let (s, l) = synthetic(&model, t0, &gammas);
            let p = FitProblem::new(model, gammas, (0.5, 200.0))
                .with_shifts(s)
                .with_losses(l);
            let r = fit_delay(&p).unwrap();
            assert!((r.t_hat - t0).abs() < 1e-3, "{t0}: {r:?}");
        }
    }

    #[test]
    fn round_trip_with_gamma_offset() {
        let model = PulseModel::Gaussian(pulse());
        let gammas = sweep(30);
        let offset = 0.37;
        let shifted: Vec<f64> = gammas.iter().map(|g| g + offset).collect();
        let (s, l) = synthetic(&model, 53.0, &shifted);
        let p = FitProblem::new(model, gammas, (30.0, 80.0))
            .with_shifts(s)
            .with_losses(l)
            .with_gamma_offset(true);
        let r = fit_delay(&p).unwrap();
        assert!((r.t_hat - 53.0).abs() < 1e-3, "{r:?}");
        let d = crate::forward::wrap_angle(r.gamma_offset_hat - offset);
        assert!(d.abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn tabulated_input_round_trip_and_scale_invariance() {
        let p = pulse();
        let s = gaussian_spectrum(&p, &FrequencyGridExt::osa());
        let model = PulseModel::Tabulated(s.clone());
        let gammas = sweep(30);
        let (sh, lo) = synthetic(&model, 22.0, &gammas);
        let a = fit_delay(
            &FitProblem::new(model, gammas.clone(), (1.0, 100.0))
                .with_shifts(sh.clone())
                .with_losses(lo.clone()),
        )
        .unwrap();
        assert!((a.t_hat - 22.0).abs() < 1e-3, "{a:?}");
        let scaled = PulseModel::Tabulated(s.scaled(1e5).unwrap());
        let b = fit_delay(
            &FitProblem::new(scaled, gammas, (1.0, 100.0))
                .with_shifts(sh)
                .with_losses(lo),
        )
        .unwrap();
        assert!((a.t_hat - b.t_hat).abs() < 1e-9);
    }

    struct FrequencyGridExt;
    impl FrequencyGridExt {
        fn osa() -> crate::FrequencyGrid {
            crate::FrequencyGrid::spanning(191.5, 195.5, 1601).unwrap()
        }
    }

    #[test]
    fn joint_fit_keeps_shift_rms_reasonable() {
        let model = PulseModel::Gaussian(pulse());
        let gammas = sweep(30);
        let nm = NoiseModel::new(0.05, InstrumentModel::ideal(), 11, 1).unwrap();
        let jittered: Vec<f64> = gammas
            .iter()
            .enumerate()
            .map(|(i, g)| nm.scan_gammas(*g, i as u64)[0])
            .collect();
        let (s, l) = synthetic(&model, 53.0, &jittered);
        let shift_only = fit_delay(
            &FitProblem::new(model.clone(), gammas.clone(), (1.0, 100.0)).with_shifts(s.clone()),
        )
        .unwrap();
        let joint = fit_delay(
            &FitProblem::new(model, gammas, (1.0, 100.0))
                .with_shifts(s)
                .with_losses(l),
        )
        .unwrap();
        let (a, b) = (
            shift_only.per_channel_rms.shift_thz.unwrap(),
            joint.per_channel_rms.shift_thz.unwrap(),
        );
        assert!(b <= 2.0 * a, "{a} {b}");
        assert!(joint.per_channel_rms.loss_db.is_some());
        assert!(shift_only.per_channel_rms.loss_db.is_none());
    }

    #[test]
    fn reports_grid_minima() {
        let r = fit_delay(&problem(53.0, 30)).unwrap();
        assert!(!r.grid_minima.is_empty());
        assert!((r.grid_minima[0].delay_fs - 53.0).abs() < 0.5);
        for m in &r.grid_minima[1..] {
            assert!(m.norm <= 1.05 * r.grid_minima[0].norm);
        }
    }

    #[test]
    fn tie_break_prefers_smallest_delay() {
        let scan = [
            GridMinimum {
                delay_fs: -3.0,
                gamma_offset: 0.0,
                norm: 1.0,
            },
            GridMinimum {
                delay_fs: 5.0,
                gamma_offset: 0.0,
                norm: 2.0,
            },
            GridMinimum {
                delay_fs: 2.0,
                gamma_offset: 0.0,
                norm: 1.0,
            },
        ];
        assert_eq!(best_node(&scan), 2);
    }

    #[test]
    fn problem_validation() {
        let p = problem(53.0, 30);
        let model = p.model().clone();
        assert!(matches!(
            fit_delay(
                &p.clone()
                    .with_grid_nodes(512)
                    .clone_with_bracket((5.0, 5.0))
            ),
            Err(Error::DegenerateBracket { .. })
        ));
        assert!(fit_delay(&FitProblem::new(model.clone(), sweep(30), (1.0, 2.0))).is_err());
        assert!(fit_delay(
            &FitProblem::new(model.clone(), sweep(2), (1.0, 2.0))
                .with_shifts(alloc::vec![Some(0.0); 2])
        )
        .is_err());
        assert!(fit_delay(&p.clone().with_weights(alloc::vec![0.0; 30])).is_err());
        assert!(fit_delay(
            &FitProblem::new(model, sweep(5), (1.0, 2.0)).with_shifts(alloc::vec![Some(0.0); 4])
        )
        .is_err());
    }

    impl FitProblem {
        fn clone_with_bracket(mut self, b: (f64, f64)) -> Self {
            self.t_bracket = b;
            self
        }
    }

    #[test]
    fn missing_cells_are_skipped() {
        let model = PulseModel::Gaussian(pulse());
        let gammas = sweep(30);
        let (mut s, mut l) = synthetic(&model, 22.0, &gammas);
        for i in (0..30).step_by(3) {
            s[i] = None;
            l[i + 1] = None;
        }
        let p = FitProblem::new(model, gammas, (1.0, 100.0))
            .with_shifts(s)
            .with_losses(l);
        assert_eq!(residuals(&p, 22.0, 0.0).unwrap().values.len(), 40);
        assert!((fit_delay(&p).unwrap().t_hat - 22.0).abs() < 1e-3);
    }

    #[test]
    fn bootstrap_uncertainty() {
        let p = problem(53.0, 30).with_grid_nodes(128);
        let fit = fit_delay(&p).unwrap();
        let nm = NoiseModel::new(0.05, InstrumentModel::ideal(), 5, 20).unwrap();
        let u = fit_uncertainty(&p, &fit, &nm).unwrap();
        assert_eq!(u.sample_count, 20);
        assert!(u.std > 0.0 && u.std < 2.0, "{u:?}");
        assert!((u.mean - 53.0).abs() < 2.0);
        let u0 = fit_uncertainty(&p, &fit, &nm.with_sigma(0.0)).unwrap();
        assert!(u0.std < 1e-3);
    }

    #[test]
    fn small_shift_round_trip() {
        let p = pulse();
        let theta = 0.05;
        let df = delta_f_gaussian_at_detuning(&p, 5.0, theta, 0.0).unwrap();
        let t = invert_small_shift(df, &p, theta).unwrap();
        assert!((t / 5.0 - 1.0).abs() < 1e-3, "{t}");
        // consistent with the post-selection angle route
        let g = post_selection_for_detuning(193.44, 5.0, theta);
        let o = observables_gaussian(&p, 5.0, g, DEFAULT_FLOOR).unwrap();
        assert!((o.delta_f_thz - df).abs() < 1e-9);
    }

    #[test]
    fn zero_shift_inverts_to_zero_delay() {
        for theta in [0.1, -0.3, 0.7] {
            assert_eq!(invert_small_shift(0.0, &pulse(), theta).unwrap(), 0.0);
        }
    }

    #[test]
    fn near_orthogonal_is_nonlinear() {
        let p = GaussianPulse::new(193.44, 320.0).unwrap();
        assert!(matches!(
            invert_small_shift(-0.1, &p, PI - 0.01),
            Err(Error::NonlinearRegime { .. })
        ));
        // large delay: γ correction above 10%
        let df = delta_f_gaussian_at_detuning(&p, 200.0, 1.2, 0.0).unwrap();
        assert!(matches!(
            invert_small_shift(df, &p, 1.2),
            Err(Error::NonlinearRegime { .. })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn noiseless_round_trip_property(tau in 50.0f64..500.0, ratio in 0.01f64..0.5) {
            let t0 = ratio * tau;
            let model = PulseModel::Gaussian(GaussianPulse::new(193.44, tau).unwrap());
            let gammas = sweep(30);
            let (s, l) = synthetic(&model, t0, &gammas);
            let p = FitProblem::new(model, gammas, (0.005 * tau, 0.6 * tau)).with_shifts(s).with_losses(l);
            let r = fit_delay(&p).unwrap();
            proptest::prop_assert!((r.t_hat - t0).abs() < 1e-3, "{} {:?}", t0, r);
            proptest::prop_assert!(r.t_hat >= 0.005 * tau && r.t_hat <= 0.6 * tau);
        }
    }
}
