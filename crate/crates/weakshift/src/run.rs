//! Command drivers.
//!
//! Each command computes everything in memory first; files are written only
//! at the end, and any already-written file is removed if a write fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use weakshift_core::estimator::{fit_delay, fit_uncertainty, FitProblem};
use weakshift_core::forward::{
    delay_from_arm_lengths, detuning, observables_between, observables_gaussian, FringeMoments,
    DEFAULT_FLOOR,
};
use weakshift_core::noise::{summarize, MeasurementSimulator};
use weakshift_core::regimes::{
    gamma_sweep, global_max_shift, max_shift_at_loss_budget, max_shift_at_loss_budget_tabulated,
    zero_shift_points, Regime, WorkingPoint, DEFAULT_LOW_LOSS_THRESHOLD_DB,
};
use weakshift_core::{
    convolve_instrument, gamma_factor, gaussian_spectrum, output_spectrum, units, Error,
    FrequencyGrid, GaussianPulse, InstrumentModel, InterferometerConfig, NoiseModel, PulseModel,
    Spectrum,
};

use crate::config::{Command, Options, RunConfig};
use crate::error::CliError;
use crate::io::{self, SweepRow};
use crate::parallel;
use crate::svg::{self, LineChart, Series};

pub const DEFAULT_GAMMA_STEPS: usize = 361;
pub const DEFAULT_MONTE_CARLO_SAMPLES: usize = 100;
pub const DEFAULT_BUDGET_DB: f64 = 12.0;

/// JSON number, or a string for non-finite values.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub derived: Value,
    pub results: Value,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

/// Files produced by a command, committed together.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = std::fs::write(&path, bytes) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                let _ = std::fs::remove_file(&path);
                return Err(CliError::Io(format!("{}: {e}", path.display())));
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Input pulse plus its sampled density.
struct Pulse {
    model: PulseModel,
    sampled: Spectrum,
    reference_thz: f64,
}

fn resolve_pulse(o: &Options, warnings: &mut Vec<String>) -> Result<Pulse, CliError> {
    let gaussian_keys = o.tau_fs.is_some() || o.nu0_thz.is_some();
    let grid_keys = o.grid_nodes.is_some() || o.grid_half_width_thz.is_some();
    match (&o.spectrum_file, gaussian_keys) {
        (Some(_), true) => Err(CliError::Conflict(
            "--spectrum-file cannot be combined with --tau-fs/--nu0-thz".into(),
        )),
        (Some(_), false) if grid_keys => Err(CliError::Conflict(
            "grid options apply to Gaussian pulses only; a spectrum file sets its own grid".into(),
        )),
        (Some(path), false) => {
            let loaded = io::read_spectrum_file(path)?;
            if loaded.clamped > 0 {
                warnings.push(format!(
                    "{} negative density values clamped to zero",
                    loaded.clamped
                ));
            }
            let s = loaded.spectrum;
            let reference_thz = weakshift_core::centroid(&s)?;
            Ok(Pulse {
                model: PulseModel::Tabulated(s.clone()),
                sampled: s,
                reference_thz,
            })
        }
        (None, true) => {
            let (Some(tau), Some(nu0)) = (o.tau_fs, o.nu0_thz) else {
                return Err(CliError::Usage(
                    "a Gaussian pulse needs both --tau-fs and --nu0-thz".into(),
                ));
            };
            let p = GaussianPulse::new(nu0, tau)?;
            let default = p.default_grid()?;
            let grid = if grid_keys {
                let nodes = o.grid_nodes.unwrap_or(default.count());
                let half = o.grid_half_width_thz.unwrap_or(0.5 * default.span());
                FrequencyGrid::centered(nu0, half, nodes)?
            } else {
                default
            };
            Ok(Pulse {
                model: PulseModel::Gaussian(p),
                sampled: gaussian_spectrum(&p, &grid),
                reference_thz: nu0,
            })
        }
        (None, false) => Err(CliError::Usage(
            "a pulse source is required: --tau-fs with --nu0-thz, or --spectrum-file".into(),
        )),
    }
}

struct Delay {
    t_fs: f64,
    arms_fs: Option<(f64, f64)>,
}

impl Delay {
    fn config(&self, gamma: f64) -> Result<InterferometerConfig, CliError> {
        Ok(match self.arms_fs {
            Some((t1, t2)) => InterferometerConfig::new(t1, t2, gamma)?,
            None => InterferometerConfig::with_delay(self.t_fs, gamma)?,
        })
    }
}

fn resolve_delay(o: &Options) -> Result<Delay, CliError> {
    let arms = o.arm1_mm.is_some() || o.arm2_mm.is_some();
    let given = [o.delay_fs.is_some(), o.delay_as.is_some(), arms]
        .iter()
        .filter(|&&b| b)
        .count();
    if given > 1 {
        return Err(CliError::Conflict(
            "give exactly one of --delay-fs, --delay-as or --arm1-mm/--arm2-mm".into(),
        ));
    }
    if let Some(t) = o.delay_fs {
        return Ok(Delay {
            t_fs: t,
            arms_fs: None,
        });
    }
    if let Some(t) = o.delay_as {
        return Ok(Delay {
            t_fs: t * 1e-3,
            arms_fs: None,
        });
    }
    match (o.arm1_mm, o.arm2_mm) {
        (Some(d1), Some(d2)) => {
            let (t1, t2) = delay_from_arm_lengths(d1, d2)?;
            Ok(Delay {
                t_fs: t1 - t2,
                arms_fs: Some((t1, t2)),
            })
        }
        (None, None) => Err(CliError::Usage(
            "a delay is required: --delay-fs, --delay-as or --arm1-mm with --arm2-mm".into(),
        )),
        _ => Err(CliError::Usage(
            "--arm1-mm and --arm2-mm must be given together".into(),
        )),
    }
}

enum Angles {
    Single(f64),
    Range(f64, f64, usize),
}

impl Angles {
    fn values(&self) -> Vec<f64> {
        match *self {
            Angles::Single(g) => vec![g],
            Angles::Range(lo, hi, n) => {
                let step = (hi - lo) / (n - 1) as f64;
                (0..n)
                    .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
                    .collect()
            }
        }
    }
}

fn resolve_angles(o: &Options, default_range: bool) -> Result<Angles, CliError> {
    let range = o.gamma_min_rad.is_some() || o.gamma_max_rad.is_some() || o.gamma_steps.is_some();
    if let Some(g) = o.gamma_rad {
        if range {
            return Err(CliError::Conflict(
                "--gamma-rad cannot be combined with a --gamma-*-rad range".into(),
            ));
        }
        if !g.is_finite() {
            return Err(CliError::Usage("--gamma-rad must be finite".into()));
        }
        return Ok(Angles::Single(g));
    }
    if !range && !default_range {
        return Err(CliError::Usage(
            "an angle is required: --gamma-rad or a --gamma-min-rad/--gamma-max-rad range".into(),
        ));
    }
    let lo = o.gamma_min_rad.unwrap_or(-PI);
    let hi = o.gamma_max_rad.unwrap_or(PI);
    let n = o.gamma_steps.unwrap_or(DEFAULT_GAMMA_STEPS);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CliError::Usage(
            "angle range must be finite and increasing".into(),
        ));
    }
    if n < 2 {
        return Err(CliError::Usage("--gamma-steps must be at least 2".into()));
    }
    Ok(Angles::Range(lo, hi, n))
}

fn instrument(o: &Options, reference_thz: f64) -> Result<InstrumentModel, CliError> {
    let scans = o.scans.unwrap_or(1);
    Ok(match o.resolution_nm {
        Some(r) => InstrumentModel::from_wavelength_resolution(
            r,
            units::frequency_to_wavelength(reference_thz),
            scans,
        )?,
        None => InstrumentModel::new(0.0, scans)?,
    })
}

fn grid_json(g: &FrequencyGrid) -> Value {
    json!({"start_thz": num(g.start()), "step_thz": num(g.step()), "count": g.count()})
}

fn derived(pulse: &Pulse, delay: Option<&Delay>) -> Value {
    let mut d = json!({
        "model": pulse.model.tag().as_str(),
        "reference_frequency_thz": num(pulse.reference_thz),
        "grid": grid_json(pulse.sampled.grid()),
    });
    if let Some(delay) = delay {
        d["delay_fs"] = num(delay.t_fs);
        if let Some((t1, t2)) = delay.arms_fs {
            d["delay_1_fs"] = num(t1);
            d["delay_2_fs"] = num(t2);
        }
        match &pulse.model {
            PulseModel::Gaussian(p) => {
                d["gamma_factor"] = num(gamma_factor(delay.t_fs, p.fwhm_fs()))
            }
            PulseModel::Tabulated(s) => {
                let (rho, best) = FringeMoments::new(s, delay.t_fs).contrast();
                d["fringe_contrast"] = num(rho);
                d["minimum_loss_gamma_rad"] = num(best);
            }
        }
    }
    d
}

fn observables_json(o: &weakshift_core::Observables) -> Value {
    json!({"delta_f_thz": num(o.delta_f_thz), "loss_db": num(o.loss_db)})
}

fn working_point_json(wp: &WorkingPoint, threshold_db: f64) -> Value {
    json!({
        "gamma_rad": num(wp.gamma),
        "detuning_rad": num(wp.detuning),
        "delta_f_thz": num(wp.shift_thz),
        "loss_db": num(wp.loss_db),
        "regime": Regime::from_loss(wp.loss_db, threshold_db).as_str(),
    })
}

/// Output of a finished command.
pub struct Finished {
    pub report: RunReport,
    pub written: Vec<PathBuf>,
}

pub fn run(config: RunConfig) -> Result<Finished, CliError> {
    let mut warnings = Vec::new();
    let mut outputs = Outputs::new();
    let o = &config.options;
    let (derived, results, charts) = match config.command {
        Command::Simulate => simulate(o, &mut warnings, &mut outputs)?,
        Command::Sweep => sweep(o, &mut warnings, &mut outputs)?,
        Command::Fit => fit(o, &mut warnings, &mut outputs)?,
        Command::Montecarlo => montecarlo(o, &mut warnings, &mut outputs)?,
        Command::Regimes => regimes(o, &mut warnings, &mut outputs)?,
    };
    if o.svg {
        outputs.add("plot.svg", svg::render(&charts).into_bytes());
    }
    let report_name = format!("{}.json", config.command.as_str());
    let mut names = outputs.names();
    names.push(report_name.clone());
    let report = RunReport {
        command: config.command.as_str(),
        config: config.clone(),
        derived,
        results,
        warnings,
        outputs: names,
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    outputs.add(&report_name, json);
    let dir = o.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let written = outputs.commit(&dir)?;
    Ok(Finished { report, written })
}

type CommandOutput = (Value, Value, Vec<LineChart>);

fn spectra_chart(input: &Spectrum, outputs: &[(f64, Spectrum)]) -> LineChart {
    let series = |name: String, s: &Spectrum| {
        Series::new(
            name,
            s.grid().nodes().zip(s.values().iter().copied()).collect(),
        )
    };
    let mut chart = LineChart::new("Spectral density", "frequency (THz)", "density")
        .with_series(series("input".into(), input));
    for (g, s) in outputs.iter().take(5) {
        chart = chart.with_series(series(format!("Γ = {g:.4} rad"), s));
    }
    chart
}

fn simulate(
    o: &Options,
    warnings: &mut Vec<String>,
    out: &mut Outputs,
) -> Result<CommandOutput, CliError> {
    let pulse = resolve_pulse(o, warnings)?;
    let delay = resolve_delay(o)?;
    let angles = resolve_angles(o, false)?;
    let inst = instrument(o, pulse.reference_thz)?;
    let measured_in = convolve_instrument(&pulse.sampled, &inst);

    let mut spectra = Vec::new();
    let mut points = Vec::new();
    for g in angles.values() {
        let s_out = convolve_instrument(&output_spectrum(&pulse.sampled, &delay.config(g)?), &inst);
        let mut point = json!({
            "gamma_rad": num(g),
            "detuning_rad": num(detuning(pulse.reference_thz, delay.t_fs, g)),
        });
        match observables_between(&measured_in, &s_out, DEFAULT_FLOOR) {
            Ok(obs) => point["numeric"] = observables_json(&obs),
            Err(Error::EnergyBelowFloor { loss_db, .. }) => {
                warnings.push(format!(
                    "Γ = {g}: output energy below floor, shift undefined"
                ));
                point["numeric"] = json!({"delta_f_thz": Value::Null, "loss_db": num(loss_db)});
            }
            Err(e) => return Err(e.into()),
        }
        if let PulseModel::Gaussian(p) = &pulse.model {
            point["closed_form"] = match observables_gaussian(p, delay.t_fs, g, DEFAULT_FLOOR) {
                Ok(obs) => observables_json(&obs),
                Err(_) => Value::Null,
            };
        }
        points.push(point);
        spectra.push((g, s_out));
    }

    out.add(
        "spectra.csv",
        csv_bytes(|b| io::write_spectra_table(b, &measured_in, &spectra))?,
    );
    if let [(_, only)] = spectra.as_slice() {
        out.add(
            "spectrum_out.csv",
            csv_bytes(|b| io::write_spectrum(b, only))?,
        );
    }
    let charts = vec![spectra_chart(&measured_in, &spectra)];
    Ok((
        derived(&pulse, Some(&delay)),
        json!({ "points": points }),
        charts,
    ))
}

fn sweep_charts(rows: &[SweepRow], extra: Option<&[SweepRow]>) -> Vec<LineChart> {
    let pts = |rows: &[SweepRow], f: fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|r| (r.gamma_rad, f(r).unwrap_or(f64::NAN)))
            .collect()
    };
    let mut shift = LineChart::new("Centroid shift", "Γ (rad)", "Δf (THz)")
        .with_series(Series::new("model", pts(rows, |r| r.delta_f_thz)));
    let mut loss = LineChart::new("Insertion loss", "Γ (rad)", "loss (dB)")
        .with_series(Series::new("model", pts(rows, |r| r.loss_db)));
    if let Some(data) = extra {
        shift = shift.with_series(Series::new("data", pts(data, |r| r.delta_f_thz)));
        loss = loss.with_series(Series::new("data", pts(data, |r| r.loss_db)));
    }
    vec![shift, loss]
}

fn point_json(r: &SweepRow) -> Value {
    json!({"gamma_rad": num(r.gamma_rad), "delta_f_thz": opt_num(r.delta_f_thz), "loss_db": opt_num(r.loss_db)})
}

fn sweep(
    o: &Options,
    warnings: &mut Vec<String>,
    out: &mut Outputs,
) -> Result<CommandOutput, CliError> {
    let pulse = resolve_pulse(o, warnings)?;
    let delay = resolve_delay(o)?;
    let Angles::Range(lo, hi, n) = resolve_angles(o, true)? else {
        return Err(CliError::Usage(
            "sweep needs an angle range, not --gamma-rad".into(),
        ));
    };
    let threshold = o.threshold_db.unwrap_or(DEFAULT_LOW_LOSS_THRESHOLD_DB);
    let result = gamma_sweep(&pulse.model, delay.t_fs, (lo, hi), n)?;
    let rows = io::sweep_rows(&result, threshold);
    if result.singular_count() > 0 {
        warnings.push(format!(
            "{} angles with output energy below floor",
            result.singular_count()
        ));
    }
    let max_shift = rows
        .iter()
        .filter(|r| r.delta_f_thz.is_some())
        .max_by(|a, b| {
            a.delta_f_thz
                .unwrap()
                .abs()
                .total_cmp(&b.delta_f_thz.unwrap().abs())
        });
    let min_loss = rows
        .iter()
        .min_by(|a, b| a.loss_db.unwrap().total_cmp(&b.loss_db.unwrap()));
    let results = json!({
        "points": rows.len(),
        "singular_points": result.singular_count(),
        "high_loss_points": rows.iter().filter(|r| r.flags.iter().any(|f| f == "high-loss")).count(),
        "threshold_db": num(threshold),
        "zero_crossings_rad": result.zero_crossings().into_iter().map(num).collect::<Vec<_>>(),
        "max_abs_shift": max_shift.map(point_json),
        "min_loss": min_loss.map(point_json),
    });
    out.add("sweep.csv", csv_bytes(|b| io::write_sweep(b, &rows))?);
    let mut charts = sweep_charts(&rows, None);
    if o.spectra {
        let spectra = result
            .gammas
            .iter()
            .map(|&g| Ok((g, output_spectrum(&pulse.sampled, &delay.config(g)?))))
            .collect::<Result<Vec<_>, CliError>>()?;
        out.add(
            "spectra.csv",
            csv_bytes(|b| io::write_spectra_table(b, &pulse.sampled, &spectra))?,
        );
        charts.push(spectra_chart(&pulse.sampled, &spectra));
    }
    Ok((derived(&pulse, Some(&delay)), results, charts))
}

fn fit(
    o: &Options,
    warnings: &mut Vec<String>,
    out: &mut Outputs,
) -> Result<CommandOutput, CliError> {
    let pulse = resolve_pulse(o, warnings)?;
    let Some(path) = &o.data_file else {
        return Err(CliError::Usage("fit needs --data-file".into()));
    };
    let (Some(t_min), Some(t_max)) = (o.t_min_fs, o.t_max_fs) else {
        return Err(CliError::Usage(
            "fit needs a delay bracket: --t-min-fs and --t-max-fs".into(),
        ));
    };
    if o.delay_fs.is_some() || o.delay_as.is_some() || o.arm1_mm.is_some() || o.arm2_mm.is_some() {
        warnings.push("delay options are ignored by fit".into());
    }
    let data = io::read_fit_data_file(path)?;
    let jitter = o.jitter_rad.unwrap_or(0.0);
    let mut problem = FitProblem::new(pulse.model.clone(), data.gammas.clone(), (t_min, t_max))
        .with_gamma_offset(o.fit_gamma_offset)
        .with_gamma_jitter(jitter);
    if data.has_shifts() {
        problem = problem.with_shifts(data.shifts.clone());
    }
    if data.has_losses() {
        problem = problem.with_losses(data.losses.clone());
    }
    if let Some(n) = o.fit_grid_nodes {
        problem = problem.with_grid_nodes(n);
    }
    let mut result = match fit_delay(&problem) {
        Ok(r) => r,
        Err(Error::InvalidFitProblem(msg)) => {
            return Err(CliError::Data(format!("{}: {msg}", path.display())))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(samples) = o.samples {
        let noise = NoiseModel::new(
            jitter,
            InstrumentModel::ideal(),
            o.seed.unwrap_or(0),
            samples,
        )?;
        if jitter == 0.0 {
            warnings.push("bootstrap without --jitter-rad has zero spread".into());
        }
        result.uncertainty = Some(fit_uncertainty(&problem, &result, &noise)?);
    }
    if !result.converged {
        warnings.push(format!(
            "refinement did not converge in {} iterations",
            result.iterations
        ));
    }
    if result.grid_minima.len() > 1 {
        warnings.push(format!(
            "{} other minima within 5% of the best residual norm",
            result.grid_minima.len() - 1
        ));
    }
    if result.singular_points > 0 {
        warnings.push(format!(
            "{} data angles are singular in the fitted model",
            result.singular_points
        ));
    }

    let eval = pulse.model.at_delay(result.t_hat);
    let curve: Vec<SweepRow> = data
        .gammas
        .iter()
        .map(|&g| {
            let (shift, loss, flags) =
                match eval.observables_jittered(g + result.gamma_offset_hat, jitter, DEFAULT_FLOOR)
                {
                    Ok(obs) => (Some(obs.delta_f_thz), Some(obs.loss_db), vec![]),
                    Err(_) => (None, None, vec!["singular".to_string()]),
                };
            SweepRow {
                gamma_rad: g,
                delta_f_thz: shift,
                loss_db: loss,
                flags,
            }
        })
        .collect();
    out.add("fit_curve.csv", csv_bytes(|b| io::write_sweep(b, &curve))?);
    let data_rows: Vec<SweepRow> = data
        .gammas
        .iter()
        .zip(&data.shifts)
        .zip(&data.losses)
        .map(|((&g, &s), &l)| SweepRow {
            gamma_rad: g,
            delta_f_thz: s,
            loss_db: l,
            flags: vec![],
        })
        .collect();
    let charts = sweep_charts(&curve, Some(&data_rows));

    let results = json!({
        "t_hat_fs": num(result.t_hat),
        "gamma_offset_hat_rad": num(result.gamma_offset_hat),
        "residual_norm": num(result.residual_norm),
        "per_channel_rms": {
            "delta_f_thz": opt_num(result.per_channel_rms.shift_thz),
            "loss_db": opt_num(result.per_channel_rms.loss_db),
        },
        "uncertainty_fs": result.uncertainty.map(|u| json!({"mean": num(u.mean), "std": num(u.std), "samples": u.sample_count})),
        "iterations": result.iterations,
        "converged": result.converged,
        "singular_points": result.singular_points,
        "minima": result.grid_minima.iter().map(|m| json!({
            "delay_fs": num(m.delay_fs), "gamma_offset_rad": num(m.gamma_offset), "norm": num(m.norm)
        })).collect::<Vec<_>>(),
        "data_points": data.gammas.len(),
    });
    Ok((derived(&pulse, None), results, charts))
}

fn montecarlo(
    o: &Options,
    warnings: &mut Vec<String>,
    out: &mut Outputs,
) -> Result<CommandOutput, CliError> {
    let pulse = resolve_pulse(o, warnings)?;
    let delay = resolve_delay(o)?;
    if delay.arms_fs.is_some() {
        warnings.push("arm lengths reduced to their delay difference".into());
    }
    let angles = resolve_angles(o, false)?;
    let inst = instrument(o, pulse.reference_thz)?;
    let noise = NoiseModel::new(
        o.jitter_rad.unwrap_or(0.0),
        inst,
        o.seed.unwrap_or(0),
        o.samples.unwrap_or(DEFAULT_MONTE_CARLO_SAMPLES),
    )?;
    let model = match &pulse.model {
        PulseModel::Gaussian(_) if o.grid_nodes.is_some() || o.grid_half_width_thz.is_some() => {
            PulseModel::Tabulated(pulse.sampled.clone())
        }
        m => m.clone(),
    };
    let sim = MeasurementSimulator::new(&model, delay.t_fs, &noise)?;

    let mut sample_rows = Vec::new();
    let mut mean_rows = Vec::new();
    let mut points = Vec::new();
    for g in angles.values() {
        let samples = parallel::sample_observables(&sim, g, o.threads);
        for (k, s) in samples.iter().enumerate() {
            let (shift, loss, singular) = match s {
                Ok(obs) => (Some(obs.delta_f_thz), Some(obs.loss_db), false),
                Err(Error::EnergyBelowFloor { loss_db, .. }) => (None, Some(*loss_db), true),
                Err(e) => return Err(e.clone().into()),
            };
            let mut flags = vec![format!("sample={k}")];
            if singular {
                flags.push("singular".to_string());
            }
            sample_rows.push(SweepRow {
                gamma_rad: g,
                delta_f_thz: shift,
                loss_db: loss,
                flags,
            });
        }
        match summarize(samples) {
            Ok(summary) => {
                if summary.excluded > 0 {
                    warnings.push(format!(
                        "Γ = {g}: {} singular samples excluded",
                        summary.excluded
                    ));
                }
                mean_rows.push(SweepRow {
                    gamma_rad: g,
                    delta_f_thz: Some(summary.shift.mean),
                    loss_db: Some(summary.loss.mean),
                    flags: vec![],
                });
                points.push(json!({
                    "gamma_rad": num(g),
                    "delta_f_thz": {"mean": num(summary.shift.mean), "std": num(summary.shift.std)},
                    "loss_db": {"mean": num(summary.loss.mean), "std": num(summary.loss.std)},
                    "samples": summary.shift.sample_count,
                    "excluded": summary.excluded,
                }));
            }
            Err(Error::AllSamplesSingular { samples }) => {
                warnings.push(format!("Γ = {g}: all {samples} samples singular"));
                mean_rows.push(SweepRow {
                    gamma_rad: g,
                    delta_f_thz: None,
                    loss_db: None,
                    flags: vec!["singular".to_string()],
                });
                points.push(json!({"gamma_rad": num(g), "delta_f_thz": Value::Null, "loss_db": Value::Null, "samples": 0, "excluded": samples}));
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.add(
        "samples.csv",
        csv_bytes(|b| io::write_sweep(b, &sample_rows))?,
    );
    out.add("sweep.csv", csv_bytes(|b| io::write_sweep(b, &mean_rows))?);
    let charts = sweep_charts(&mean_rows, None);
    let mut d = derived(&pulse, Some(&delay));
    d["instrument_fwhm_thz"] = num(inst.resolution_fwhm_thz());
    d["scans_to_average"] = json!(inst.scans_to_average());
    d["samples"] = json!(noise.samples());
    d["seed"] = json!(noise.seed());
    Ok((d, json!({ "points": points }), charts))
}

fn regimes(
    o: &Options,
    warnings: &mut Vec<String>,
    out: &mut Outputs,
) -> Result<CommandOutput, CliError> {
    let pulse = resolve_pulse(o, warnings)?;
    let delay = resolve_delay(o)?;
    let budget = o.budget_db.unwrap_or(DEFAULT_BUDGET_DB);
    let threshold = o.threshold_db.unwrap_or(DEFAULT_LOW_LOSS_THRESHOLD_DB);
    let t = delay.t_fs;

    let (low, high, global, at_budget) = match &pulse.model {
        PulseModel::Gaussian(p) => {
            let (low, high) = zero_shift_points(p, t);
            (
                low,
                high,
                global_max_shift(p, t),
                max_shift_at_loss_budget(p, t, budget),
            )
        }
        PulseModel::Tabulated(s) => {
            let m = FringeMoments::new(s, t);
            let (_, best) = m.contrast();
            let point = |gamma: f64, theta: f64| -> WorkingPoint {
                let gamma = weakshift_core::forward::wrap_angle(gamma);
                let (shift, loss) = match m.observables(gamma, DEFAULT_FLOOR) {
                    Ok(obs) => (obs.delta_f_thz, obs.loss_db),
                    Err(Error::EnergyBelowFloor { loss_db, .. }) => (f64::NAN, loss_db),
                    Err(_) => (f64::NAN, f64::NAN),
                };
                WorkingPoint {
                    gamma,
                    detuning: theta,
                    shift_thz: shift,
                    loss_db: loss,
                    regime: Regime::from_loss(loss, threshold),
                }
            };
            (
                point(best, 0.0),
                point(best + PI, PI),
                max_shift_at_loss_budget_tabulated(s, t, f64::INFINITY)?,
                max_shift_at_loss_budget_tabulated(s, t, budget),
            )
        }
    };
    let budget_json = match at_budget {
        Ok(wp) => working_point_json(&wp, threshold),
        Err(Error::InfeasibleBudget { minimum_db, .. }) => {
            warnings.push(format!(
                "budget {budget} dB is below the minimum loss {minimum_db} dB"
            ));
            Value::Null
        }
        Err(e) => return Err(e.into()),
    };
    let results = json!({
        "budget_db": num(budget),
        "threshold_db": num(threshold),
        "zero_shift_low_loss": working_point_json(&low, threshold),
        "zero_shift_high_loss": working_point_json(&high, threshold),
        "global_max_shift": working_point_json(&global, threshold),
        "max_shift_at_budget": budget_json,
    });

    let trade = gamma_sweep(&pulse.model, t, (-PI, PI), 1441)?;
    let curve: Vec<(f64, f64)> = trade
        .losses
        .iter()
        .zip(&trade.shifts)
        .map(|(&l, s)| (l, s.map_or(f64::NAN, f64::abs)))
        .collect();
    let mark =
        |name: &str, wp: &WorkingPoint| Series::new(name, vec![(wp.loss_db, wp.shift_thz.abs())]);
    let mut chart = LineChart::new("Shift/loss trade-off", "loss (dB)", "|Δf| (THz)")
        .with_series(Series::new("Γ sweep", curve))
        .with_series(mark("global max", &global));
    if let Ok(wp) = at_budget {
        chart = chart.with_series(mark("budget", &wp));
    }
    let rows = io::sweep_rows(&trade, threshold);
    out.add("sweep.csv", csv_bytes(|b| io::write_sweep(b, &rows))?);
    Ok((derived(&pulse, Some(&delay)), results, vec![chart]))
}
