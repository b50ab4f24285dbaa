//! CSV readers and writers.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value parses back to the same `f64`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use weakshift_core::spectra::LoadedSpectrum;
use weakshift_core::{load_spectrum, Spectrum, SweepResult};

use crate::error::CliError;

pub const SPECTRUM_HEADER: [&str; 2] = ["frequency_thz", "density"];
pub const FIT_DATA_HEADER: [&str; 3] = ["gamma_rad", "delta_f_thz", "loss_db"];
pub const SWEEP_HEADER: [&str; 4] = ["gamma_rad", "delta_f_thz", "loss_db", "flags"];

fn data_error(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{path}: {msg}"))
}

fn parse_number(path: &str, row: usize, cell: &str) -> Result<f64, CliError> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| data_error(path, format!("row {row}: `{cell}` is not a number")))
}

fn check_header(
    path: &str,
    reader: &mut csv::Reader<impl Read>,
    expected: &[&str],
    optional: &[&str],
) -> Result<(), CliError> {
    let header = reader.headers().map_err(|e| data_error(path, e))?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let ok = names.len() >= expected.len()
        && names.len() <= expected.len() + optional.len()
        && names
            .iter()
            .zip(expected.iter().chain(optional))
            .all(|(a, b)| a == b);
    if !ok {
        return Err(data_error(
            path,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                names.join(",")
            ),
        ));
    }
    Ok(())
}

/// Spectrum from CSV text with header `frequency_thz,density`.
pub fn read_spectrum(source: impl Read, name: &str) -> Result<LoadedSpectrum, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    check_header(name, &mut reader, &SPECTRUM_HEADER, &[])?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_error(name, e))?;
        if record.len() != 2 {
            return Err(data_error(
                name,
                format!("row {}: expected 2 fields", i + 1),
            ));
        }
        rows.push((
            parse_number(name, i + 1, &record[0])?,
            parse_number(name, i + 1, &record[1])?,
        ));
    }
    load_spectrum(&rows).map_err(|e| data_error(name, e))
}

pub fn read_spectrum_file(path: &Path) -> Result<LoadedSpectrum, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_spectrum(file, &path.display().to_string())
}

pub fn write_spectrum(out: impl Write, s: &Spectrum) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPECTRUM_HEADER)?;
    for (nu, v) in s.grid().nodes().zip(s.values()) {
        w.write_record([nu.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Measured `Γ` sweep; empty cells are missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub gammas: Vec<f64>,
    pub shifts: Vec<Option<f64>>,
    pub losses: Vec<Option<f64>>,
}

impl FitData {
    pub fn has_shifts(&self) -> bool {
        self.shifts.iter().any(Option::is_some)
    }

    pub fn has_losses(&self) -> bool {
        self.losses.iter().any(Option::is_some)
    }
}

/// Reads `gamma_rad,delta_f_thz,loss_db`, optionally followed by a `flags`
/// column (so sweep output reads back directly).
pub fn read_fit_data(source: impl Read, name: &str) -> Result<FitData, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    check_header(name, &mut reader, &FIT_DATA_HEADER, &["flags"])?;
    let mut data = FitData {
        gammas: Vec::new(),
        shifts: Vec::new(),
        losses: Vec::new(),
    };
    let optional = |row: usize, cell: &str| -> Result<Option<f64>, CliError> {
        if cell.is_empty() {
            Ok(None)
        } else {
            parse_number(name, row, cell).map(Some)
        }
    };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_error(name, e))?;
        let row = i + 1;
        if record[0].is_empty() {
            return Err(data_error(name, format!("row {row}: missing gamma_rad")));
        }
        data.gammas.push(parse_number(name, row, &record[0])?);
        data.shifts.push(optional(row, &record[1])?);
        data.losses.push(optional(row, &record[2])?);
    }
    if data.gammas.is_empty() {
        return Err(data_error(name, "no data rows"));
    }
    Ok(data)
}

pub fn read_fit_data_file(path: &Path) -> Result<FitData, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_fit_data(file, &path.display().to_string())
}

/// One sweep row. `flags` holds `;`-separated markers such as `singular`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma_rad: f64,
    pub delta_f_thz: Option<f64>,
    pub loss_db: Option<f64>,
    pub flags: Vec<String>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_sweep(out: impl Write, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.gamma_rad.to_string(),
            cell(r.delta_f_thz),
            cell(r.loss_db),
            r.flags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a sweep result, flagging singular points and the high-loss regime.
pub fn sweep_rows(sweep: &SweepResult, threshold_db: f64) -> Vec<SweepRow> {
    sweep
        .gammas
        .iter()
        .zip(&sweep.shifts)
        .zip(&sweep.losses)
        .map(|((&g, &shift), &loss)| {
            let mut flags = Vec::new();
            if shift.is_none() {
                flags.push("singular".to_string());
            }
            if loss > threshold_db {
                flags.push("high-loss".to_string());
            }
            SweepRow {
                gamma_rad: g,
                delta_f_thz: shift,
                loss_db: Some(loss),
                flags,
            }
        })
        .collect()
}

/// Column name for the output spectrum at angle `gamma`.
pub fn spectra_column(gamma: f64) -> String {
    format!("gamma_rad={gamma}")
}

/// Table with one frequency column, the input density and one output
/// density per angle.
pub fn write_spectra_table(
    out: impl Write,
    input: &Spectrum,
    outputs: &[(f64, Spectrum)],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["frequency_thz".to_string(), "input".to_string()];
    header.extend(outputs.iter().map(|(g, _)| spectra_column(*g)));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, nu) in input.grid().nodes().enumerate() {
        record.clear();
        record.push(nu.to_string());
        record.push(input.values()[i].to_string());
        record.extend(outputs.iter().map(|(_, s)| s.values()[i].to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed spectra table: frequencies and named density columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraTable {
    pub frequencies: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

pub fn read_spectra_table(source: impl Read, name: &str) -> Result<SpectraTable, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| data_error(name, e))?.clone();
    if header.len() < 2 || &header[0] != "frequency_thz" {
        return Err(data_error(name, "expected a `frequency_thz` first column"));
    }
    let mut table = SpectraTable {
        frequencies: Vec::new(),
        columns: header
            .iter()
            .skip(1)
            .map(|h| (h.to_string(), Vec::new()))
            .collect(),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_error(name, e))?;
        table
            .frequencies
            .push(parse_number(name, i + 1, &record[0])?);
        for (col, cell) in table.columns.iter_mut().zip(record.iter().skip(1)) {
            col.1.push(parse_number(name, i + 1, cell)?);
        }
    }
    Ok(table)
}
