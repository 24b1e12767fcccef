// SPDX-License-Identifier: Apache-2.0

//! Byte-stable output files.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same `f64`, so reruns and platforms agree byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::CovarianceState;
use crate::transport::{excitation_current, occupation};

use super::CliError;

/// Shortest round-trip decimal; scientific notation outside `[1e−4, 1e15)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// `format_float`, or an empty field for `None`.
pub fn format_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// File-name tag for a coarse-graining time, e.g. `dt0.01`.
pub fn delta_t_tag(dt: f64) -> String {
    format!("dt{}", format_float(dt))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Create the output directory.
pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Write a text file.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Write a CSV file with a header and string rows.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let to_io = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    w.flush().map_err(io_err(path))
}

/// `dir/name`.
pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Header of the trajectory CSV: time, the independent entries of `C₁`
/// (Hermitian) and `C₂` (symmetric), the displacement, then occupations and
/// bond currents.
pub fn trajectory_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for block in ["c1", "c2"] {
        for (i, j) in UPPER {
            h.push(format!("{block}_{}{}_re", i + 1, j + 1));
            h.push(format!("{block}_{}{}_im", i + 1, j + 1));
        }
    }
    for i in 1..=3 {
        h.push(format!("d{i}_re"));
        h.push(format!("d{i}_im"));
    }
    h.extend(["n1", "n2", "n3", "j12", "j23"].map(String::from));
    h
}

/// One trajectory row (site basis).
pub fn trajectory_row(s: &CovarianceState) -> Vec<String> {
    let mut r = vec![format_float(s.t)];
    for block in [s.c1(), s.c2()] {
        for (i, j) in UPPER {
            r.push(format_float(block[(i, j)].re));
            r.push(format_float(block[(i, j)].im));
        }
    }
    for i in 0..3 {
        r.push(format_float(s.d[i].re));
        r.push(format_float(s.d[i].im));
    }
    for i in 0..3 {
        r.push(format_float(occupation(s, i)));
    }
    r.push(format_float(excitation_current(s, 0, 1)));
    r.push(format_float(excitation_current(s, 1, 2)));
    r
}
