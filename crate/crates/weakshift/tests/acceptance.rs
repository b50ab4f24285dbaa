//! Numerical acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::cell::Cell;
use std::f64::consts::{PI, TAU};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use weakshift_core::forward::{
    delta_f_gaussian_at_detuning, detuning, gamma_factor, loss_gaussian_at_detuning,
    observables_gaussian, observables_numeric, output_field, output_spectrum,
    post_selection_for_detuning, ComplexSpectrum, InterferometerConfig, DEFAULT_FLOOR,
};
use weakshift_core::regimes::global_max_shift;
use weakshift_core::spectra::{
    gaussian_spectrum, FrequencyGrid, GaussianPulse, InstrumentModel, Spectrum,
};
use weakshift_core::units::{frequency_to_wavelength, wavelength_to_frequency};
use weakshift_core::{
    fit_delay, max_shift_at_loss_budget, synthesize_sweep, FitProblem, NoiseModel, PulseModel,
};

const NU0: f64 = 193.44;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn seconds(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn gammas(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| -PI + TAU * k as f64 / (n - 1) as f64)
        .collect()
}

fn closed_form_agreement() -> Outcome {
    let start = Instant::now();
    let mut worst_shift = 0.0f64;
    let mut worst_loss = 0.0f64;
    let mut checked = 0;
    let mut failures = 0;
    for tau in [10.0, 100.0, 320.0] {
        let p = GaussianPulse::new(NU0, tau).unwrap();
        let s = gaussian_spectrum(&p, &p.default_grid().unwrap());
        for t in [0.01, 22.0, 53.0] {
            let g = gamma_factor(t, tau);
            for gamma in gammas(361) {
                let theta = detuning(NU0, t, gamma);
                if 1.0 + g * theta.cos() < 1e-3 {
                    continue;
                }
                let cfg = InterferometerConfig::with_delay(t, gamma).unwrap();
                let num = observables_numeric(&s, &cfg, DEFAULT_FLOOR).unwrap();
                let cf = observables_gaussian(&p, t, gamma, DEFAULT_FLOOR).unwrap();
                let es = (num.delta_f_thz - cf.delta_f_thz).abs() / cf.delta_f_thz.abs();
                let el = (num.loss_db - cf.loss_db).abs() / cf.loss_db.abs();
                checked += 1;
                // an exactly vanishing closed-form value leaves no relative scale
                let es = if cf.delta_f_thz == 0.0 {
                    num.delta_f_thz.abs()
                } else {
                    es
                };
                let el = if cf.loss_db == 0.0 {
                    num.loss_db.abs()
                } else {
                    el
                };
                if !(es <= 1e-6 && el <= 1e-6) {
                    failures += 1;
                }
                worst_shift = worst_shift.max(es);
                worst_loss = worst_loss.max(el);
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: failures == 0 && checked > 0 && elapsed < Duration::from_secs(5),
        detail: format!(
            "{checked} points, {failures} outside 1e-6; max rel err shift {worst_shift:.2e}, loss {worst_loss:.2e}; {}",
            seconds(elapsed)
        ),
    }
}

fn attosecond_regression() -> Outcome {
    let start = Instant::now();
    let p = GaussianPulse::new(NU0, 10.0).unwrap();
    let t = 0.01;
    let top = global_max_shift(&p, t);
    let budget = max_shift_at_loss_budget(&p, t, 12.0).unwrap();
    let elapsed = start.elapsed();
    // the same working points through numerical quadrature
    let s = gaussian_spectrum(&p, &p.default_grid().unwrap());
    let num_top = observables_numeric(
        &s,
        &InterferometerConfig::with_delay(t, top.gamma).unwrap(),
        DEFAULT_FLOOR,
    )
    .unwrap();
    let num_budget = observables_numeric(
        &s,
        &InterferometerConfig::with_delay(t, budget.gamma).unwrap(),
        DEFAULT_FLOOR,
    )
    .unwrap();
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs();

    let top_shift = top.shift_thz.abs();
    let budget_ghz = budget.shift_thz.abs() * 1e3;
    let pass = (15.0..=25.0).contains(&top_shift)
        && (58.0..=66.0).contains(&top.loss_db)
        && (68.0..=105.0).contains(&budget_ghz)
        && budget.loss_db <= 12.0 + 1e-9
        && agree(num_top.delta_f_thz, top.shift_thz)
        && agree(num_budget.delta_f_thz, budget.shift_thz)
        && elapsed < Duration::from_secs(1);
    Outcome {
        pass,
        detail: format!(
            "max |Δf| {top_shift:.3} THz at {:.2} dB; {budget_ghz:.2} GHz at {:.2} dB budget point; numeric {:.3} THz / {:.2} GHz; {}",
            top.loss_db,
            budget.loss_db,
            num_top.delta_f_thz.abs(),
            num_budget.delta_f_thz.abs() * 1e3,
            seconds(elapsed)
        ),
    }
}

fn local_maxima(v: &[f64]) -> usize {
    v.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count()
}

fn limit_points() -> Outcome {
    let mut worst_zero = 0.0f64;
    for (tau, t) in [(320.0, 53.0), (320.0, 22.0), (10.0, 0.01), (100.0, 22.0)] {
        let p = GaussianPulse::new(NU0, tau).unwrap();
        let s = gaussian_spectrum(&p, &p.default_grid().unwrap());
        for theta in [0.0, PI] {
            let cf = delta_f_gaussian_at_detuning(&p, t, theta, DEFAULT_FLOOR).unwrap();
            let gamma = post_selection_for_detuning(NU0, t, theta);
            let num = observables_numeric(
                &s,
                &InterferometerConfig::with_delay(t, gamma).unwrap(),
                DEFAULT_FLOOR,
            )
            .unwrap();
            worst_zero = worst_zero.max(cf.abs()).max(num.delta_f_thz.abs());
        }
    }

    let p = GaussianPulse::new(NU0, 320.0).unwrap();
    let t = 53.0;
    let min_loss = loss_gaussian_at_detuning(&p, t, 0.0);

    let s = gaussian_spectrum(&p, &p.default_grid().unwrap());
    let dark =
        InterferometerConfig::with_delay(t, post_selection_for_detuning(NU0, t, PI)).unwrap();
    let out = output_spectrum(&s, &dark);
    let centre = out.values()[out.grid().nearest_index(NU0)];
    let dip = centre / out.peak();
    let peaks = local_maxima(out.values());

    let pass = worst_zero < 1e-9 && (min_loss - 0.041).abs() <= 0.002 && dip <= 1e-3 && peaks == 2;
    Outcome {
        pass,
        detail: format!(
            "max |Δf| at θ=0,π {worst_zero:.1e} THz; min loss {min_loss:.4} dB; S_out(ν0)/max {dip:.1e}; {peaks} local maxima"
        ),
    }
}

fn round_trip_rate(t0: f64, jitter_aware: bool) -> (usize, f64) {
    let pulse = GaussianPulse::new(NU0, 320.0).unwrap();
    let model = PulseModel::Gaussian(pulse);
    let angles: Vec<f64> = (0..30).map(|k| -PI + TAU * k as f64 / 30.0).collect();
    let instrument = InstrumentModel::new(0.0025, 5).unwrap();
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let noise = NoiseModel::new(0.05, instrument, seed, 1).unwrap();
        let (shifts, losses) = synthesize_sweep(&model, t0, &angles, &noise).unwrap();
        let mut problem = FitProblem::new(model.clone(), angles.clone(), (1.0, 100.0))
            .with_shifts(shifts)
            .with_losses(losses);
        if jitter_aware {
            problem = problem.with_gamma_jitter(0.05);
        }
        let err = match fit_delay(&problem) {
            Ok(fit) => (fit.t_hat - t0).abs(),
            Err(_) => f64::INFINITY,
        };
        if err <= 2.0 {
            hits += 1;
        } else {
            worst = worst.max(err);
        }
    }
    (hits, worst)
}

fn estimator_round_trip() -> Outcome {
    let start = Instant::now();
    let pulse = GaussianPulse::new(NU0, 320.0).unwrap();
    let model = PulseModel::Gaussian(pulse);
    let angles: Vec<f64> = (0..30).map(|k| -PI + TAU * k as f64 / 30.0).collect();

    let mut noiseless_err = 0.0f64;
    for t0 in [22.0, 53.0] {
        let mut shifts = Vec::new();
        let mut losses = Vec::new();
        for &g in &angles {
            let o = observables_gaussian(&pulse, t0, g, DEFAULT_FLOOR).ok();
            shifts.push(o.map(|o| o.delta_f_thz));
            losses.push(o.map(|o| o.loss_db));
        }
        let problem = FitProblem::new(model.clone(), angles.clone(), (1.0, 100.0))
            .with_shifts(shifts)
            .with_losses(losses);
        let err = fit_delay(&problem)
            .map(|f| (f.t_hat - t0).abs())
            .unwrap_or(f64::INFINITY);
        noiseless_err = noiseless_err.max(err);
    }

    let (hits22, worst22) = round_trip_rate(22.0, true);
    let (hits53, worst53) = round_trip_rate(53.0, true);
    let elapsed = start.elapsed();
    let (blind22, _) = round_trip_rate(22.0, false);
    let (blind53, _) = round_trip_rate(53.0, false);

    let pass =
        hits22 >= 95 && hits53 >= 95 && noiseless_err <= 1e-3 && elapsed < Duration::from_secs(60);
    let worst = |w: f64| {
        if w > 0.0 {
            format!(" (worst miss {w:.2} fs)")
        } else {
            String::new()
        }
    };
    Outcome {
        pass,
        detail: format!(
            "within ±2 fs: {hits22}/100 at 22 fs{}, {hits53}/100 at 53 fs{}; jitter-blind fit {blind22}/100, {blind53}/100; noiseless error {noiseless_err:.1e} fs; {}",
            worst(worst22),
            worst(worst53),
            seconds(elapsed)
        ),
    }
}

fn field_intensity_identity() -> Outcome {
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (
        -500.0f64..500.0,
        -500.0f64..500.0,
        -20.0f64..20.0,
        100.0f64..400.0,
        0.001f64..0.1,
        prop::collection::vec(0.01f64..10.0, 8..600),
    );
    let worst = Cell::new(0.0f64);
    let result = runner.run(&strategy, |(t1, t2, gamma, start, step, values)| {
        let grid = FrequencyGrid::new(start, step, values.len()).unwrap();
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let s = Spectrum::new(grid, values).unwrap();
        let cfg = InterferometerConfig::new(t1, t2, gamma).unwrap();
        let a = output_field(&ComplexSpectrum::from_density(&s), &cfg).density();
        let b = output_spectrum(&s, &cfg);
        for (x, y) in a.values().iter().zip(b.values()) {
            let e = (x - y).abs() / peak.max(f64::MIN_POSITIVE);
            worst.set(worst.get().max(e));
            prop_assert!(e <= 1e-12, "{x} vs {y}");
        }
        Ok(())
    });
    Outcome {
        pass: result.is_ok(),
        detail: match result {
            Ok(()) => format!(
                "1000 random cases; max deviation {:.1e} of peak",
                worst.get()
            ),
            Err(e) => format!("{e}"),
        },
    }
}

fn cli_outputs(args: &[&str]) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_weakshift"))
        .args(args)
        .args(["--out-dir", dir.path().to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert!(status.success(), "{args:?}");
    let mut files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e != "json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let pulse = GaussianPulse::new(NU0, 320.0).unwrap();
    let model = PulseModel::Gaussian(pulse);
    let noise = NoiseModel::new(0.1, InstrumentModel::new(0.0025, 3).unwrap(), 42, 24).unwrap();
    let serial = weakshift_core::monte_carlo_observables(&model, 53.0, 0.4, &noise).unwrap();
    let library_same = [None, Some(1), Some(2), Some(4)]
        .into_iter()
        .all(|threads| {
            let r =
                weakshift::parallel::monte_carlo_observables(&model, 53.0, 0.4, &noise, threads)
                    .unwrap();
            r.shift.mean.to_bits() == serial.shift.mean.to_bits()
                && r.shift.std.to_bits() == serial.shift.std.to_bits()
                && r.loss.mean.to_bits() == serial.loss.mean.to_bits()
                && r.loss.std.to_bits() == serial.loss.std.to_bits()
        });
    let angles = gammas(30);
    let sweep_same = synthesize_sweep(&model, 22.0, &angles, &noise).unwrap()
        == synthesize_sweep(&model, 22.0, &angles, &noise).unwrap();

    let mc = [
        "montecarlo",
        "--tau-fs",
        "320",
        "--nu0-thz",
        "193.44",
        "--delay-fs",
        "53",
        "--gamma-min-rad",
        "-1",
        "--gamma-max-rad",
        "1",
        "--gamma-steps",
        "5",
        "--jitter-rad",
        "0.05",
        "--resolution-nm",
        "0.02",
        "--scans",
        "5",
        "--samples",
        "20",
        "--seed",
        "7",
    ];
    let reference = cli_outputs(&[&mc[..], &["--threads", "1"]].concat());
    let cli_same = [&["--threads", "1"][..], &["--threads", "4"], &[]]
        .iter()
        .all(|extra| cli_outputs(&[&mc[..], extra].concat()) == reference);
    let sweep = [
        "sweep",
        "--tau-fs",
        "320",
        "--nu0-thz",
        "193.44",
        "--delay-fs",
        "53",
        "--svg",
    ];
    let sweep_cli_same = cli_outputs(&sweep) == cli_outputs(&sweep);

    Outcome {
        pass: library_same && sweep_same && cli_same && sweep_cli_same,
        detail: format!(
            "library serial vs 1/2/4 threads: {}; synthetic sweep rerun: {}; CLI montecarlo across threads: {}; CLI sweep rerun: {}",
            same(library_same),
            same(sweep_same),
            same(cli_same),
            same(sweep_cli_same)
        ),
    }
}

fn same(b: bool) -> &'static str {
    if b {
        "identical"
    } else {
        "DIFFERENT"
    }
}

fn unit_conversions() -> Outcome {
    let kernel_ghz = InstrumentModel::from_wavelength_resolution(0.02, 1549.0, 1)
        .unwrap()
        .resolution_fwhm_thz()
        * 1e3;
    let nu = wavelength_to_frequency(1549.0);
    let back = frequency_to_wavelength(nu);
    let lam = frequency_to_wavelength(193.54);
    let forth = wavelength_to_frequency(lam);
    let e1 = (back - 1549.0).abs() / 1549.0;
    let e2 = (forth - 193.54).abs() / 193.54;
    let pass = (kernel_ghz - 2.50).abs() <= 0.01
        && (nu - 193.54).abs() < 0.005
        && e1 <= 1e-12
        && e2 <= 1e-12;
    Outcome {
        pass,
        detail: format!(
            "0.02 nm at 1549 nm = {kernel_ghz:.4} GHz; 1549 nm = {nu:.4} THz; round-trip errors {e1:.1e}, {e2:.1e}"
        ),
    }
}

fn main() -> ExitCode {
    let checks: [Check; 7] = [
        ("closed form vs numeric", closed_form_agreement),
        ("attosecond delay regression", attosecond_regression),
        ("zero-shift and limit points", limit_points),
        ("delay estimator round trip", estimator_round_trip),
        ("field/intensity identity", field_intensity_identity),
        ("determinism", determinism),
        ("unit conversions", unit_conversions),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "acceptance {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
