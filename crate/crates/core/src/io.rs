//! CSV and JSON file formats.
//!
//! * paths: `t,x0,…,x{d-1}`
//! * vector observations: `t,y0,…,y{p-1}`; factors: `t,z0,…,z{q-1}`
//! * spikes: `trial_<k>.csv` with one row per bin and one 0/1 column per neuron,
//!   plus a JSON manifest listing `N`, `R`, `bin_width` and the file names
//! * δ-sweep tables: `delta,rel_error,wall_clock_s,speedup[,cor3_bound]`
//!
//! Floats are written in shortest round-trip form, so reading back is exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::SpikeTrains;
use crate::parallel::SweepRow;
use crate::path::PathVector;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Writes rows `t, v_0, …` under the header `t,{prefix}0,…`.
pub fn write_series<W: Write>(out: W, prefix: &str, rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..width).map(|i| format!("{prefix}{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Shape(format!("row {t} has length {}, expected {width}", row.len())));
        }
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a series written by [`write_series`]; the header must use `prefix`
/// and the `t` column must count up from zero.
pub fn read_series<R: Read>(input: R, prefix: &str) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::Parse("header must start with t and name at least one column".into()));
    }
    for (i, h) in header.iter().skip(1).enumerate() {
        if h != format!("{prefix}{i}") {
            return Err(Error::Parse(format!("expected column {prefix}{i}, found {h}")));
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let t: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {line}: bad time index {:?}", &rec[0])))?;
        if t != line {
            return Err(Error::Parse(format!("row {line}: time index {t} out of sequence")));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {line}: bad number {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("row {line}: non-finite value")));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(rows)
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(File::create(path)?)
}

pub fn write_path_csv(path: impl AsRef<Path>, x: &PathVector) -> Result<()> {
    let rows: Vec<Vec<f64>> = x.blocks().map(<[f64]>::to_vec).collect();
    write_series(create(path.as_ref())?, "x", &rows)
}

pub fn read_path_csv(path: impl AsRef<Path>) -> Result<PathVector> {
    PathVector::from_blocks(&read_series(File::open(path)?, "x")?)
}

pub fn write_observations_csv(path: impl AsRef<Path>, ys: &[Vec<f64>]) -> Result<()> {
    write_series(create(path.as_ref())?, "y", ys)
}

pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    read_series(File::open(path)?, "y")
}

pub fn write_factors_csv(path: impl AsRef<Path>, zs: &[Vec<f64>]) -> Result<()> {
    write_series(create(path.as_ref())?, "z", zs)
}

pub fn read_factors_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    read_series(File::open(path)?, "z")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeManifest {
    #[serde(rename = "N")]
    pub neurons: usize,
    #[serde(rename = "R")]
    pub trials: usize,
    #[serde(default)]
    pub bin_width: Option<f64>,
    /// Trial files, relative to the manifest's directory.
    pub files: Vec<String>,
}

/// Writes `trial_<k>.csv` for each trial and `manifest.json` into `dir`; returns the manifest path.
pub fn write_spikes(dir: impl AsRef<Path>, spikes: &SpikeTrains) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(spikes.trials());
    for k in 0..spikes.trials() {
        let name = format!("trial_{k}.csv");
        let mut w = csv::Writer::from_writer(create(&dir.join(&name))?);
        w.write_record((0..spikes.neurons()).map(|i| format!("n{i}"))).map_err(csv_err)?;
        for row in spikes.trial_matrix(k) {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        files.push(name);
    }
    let manifest = SpikeManifest {
        neurons: spikes.neurons(),
        trials: spikes.trials(),
        bin_width: spikes.bin_width(),
        files,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Reads spike trials through a manifest; firing rates are the empirical means.
pub fn read_spikes(manifest_path: impl AsRef<Path>) -> Result<SpikeTrains> {
    let manifest_path = manifest_path.as_ref();
    let manifest: SpikeManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    if manifest.files.len() != manifest.trials {
        return Err(Error::Parse(format!(
            "manifest lists {} files for R = {}",
            manifest.files.len(),
            manifest.trials
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut trials = Vec::with_capacity(manifest.trials);
    for name in &manifest.files {
        let mut r = csv::Reader::from_reader(File::open(base.join(name))?);
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| match s.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Parse(format!("{name} row {line}: spike entry {other:?} is not 0 or 1"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            if row.len() != manifest.neurons {
                return Err(Error::Parse(format!(
                    "{name} row {line}: {} columns for N = {}",
                    row.len(),
                    manifest.neurons
                )));
            }
            rows.push(row);
        }
        trials.push(rows);
    }
    SpikeTrains::from_trials(&trials, manifest.bin_width)
}

/// Sweep table; `bounds`, when given, adds a `cor3_bound` column.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow], bounds: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["delta", "rel_error", "wall_clock_s", "speedup"];
    if bounds.is_some() {
        header.push("cor3_bound");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![
            r.delta.to_string(),
            r.rel_error.to_string(),
            r.wall_clock_s.to_string(),
            r.speedup.to_string(),
        ];
        if let Some(b) = bounds {
            rec.push(b[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
