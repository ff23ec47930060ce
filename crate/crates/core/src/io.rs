//! File formats: matrix and profile CSV, PGM heatmaps, atomic writes.
//!
//! Numbers are written with Rust's shortest round-trip `f64` formatting, so a
//! matrix survives CSV -> parse -> CSV unchanged.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::correlate::ModeMatrix;
use crate::error::{Error, Result};
use crate::oracle::{Normalization, SignalProfile};

/// Writes `bytes` to a temporary file next to `path`, then renames it over.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// `g2.csv` -> `g2.stderr.csv`.
pub fn companion_path(matrix_csv: &Path, tag: &str) -> PathBuf {
    let stem = matrix_csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    matrix_csv.with_file_name(format!("{stem}.{tag}.csv"))
}

pub fn format_matrix_csv(m: &ModeMatrix) -> String {
    let mut out = String::from("l_t\\l_r");
    for lr in m.modes() {
        let _ = write!(out, ",{lr}");
    }
    out.push('\n');
    for lt in m.modes() {
        let _ = write!(out, "{lt}");
        for lr in m.modes() {
            let _ = write!(out, ",{}", m.at(lt, lr));
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> std::result::Result<ModeMatrix, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty matrix file")?;
    let cols: Vec<i64> = header
        .split(',')
        .skip(1)
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|e| format!("bad header entry `{t}`: {e}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if cols.is_empty() || cols.len() % 2 == 0 {
        return Err(format!(
            "header must list 2 l_max + 1 modes, found {}",
            cols.len()
        ));
    }
    let l_max = cols.len() / 2;
    let expected: Vec<i64> = (-(l_max as i64)..=l_max as i64).collect();
    if cols != expected {
        return Err(format!(
            "header modes must run from -{l_max} to {l_max} in order"
        ));
    }
    let mut m = ModeMatrix::zeros(l_max);
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() + 1 {
            return Err(format!(
                "row {i}: expected {} fields, got {}",
                cols.len() + 1,
                fields.len()
            ));
        }
        let lt: i64 = fields[0]
            .parse()
            .map_err(|e| format!("row {i}: bad l_t `{}`: {e}", fields[0]))?;
        if lt != expected.get(i).copied().unwrap_or(i64::MAX) {
            return Err(format!("row {i}: l_t = {lt} out of order"));
        }
        for (j, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|e| format!("row {i}, column {j}: `{f}`: {e}"))?;
            m.data[i * cols.len() + j] = v;
        }
        rows += 1;
    }
    if rows != cols.len() {
        return Err(format!("expected {} rows, got {rows}", cols.len()));
    }
    Ok(m)
}

pub fn read_matrix_csv(path: &Path) -> Result<ModeMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_matrix_csv(path: &Path, m: &ModeMatrix) -> Result<()> {
    atomic_write(path, format_matrix_csv(m).as_bytes())
}

pub fn format_profile_csv(p: &SignalProfile) -> String {
    let mut out = String::from("dl,value\n");
    for (dl, v) in p.shifts().zip(&p.values) {
        let _ = writeln!(out, "{dl},{v}");
    }
    out
}

pub fn parse_profile_csv(text: &str) -> std::result::Result<SignalProfile, String> {
    let mut points = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(format!("line {}: expected `dl,value`", i + 1));
        }
        match (fields[0].parse::<i64>(), fields[1].parse::<f64>()) {
            (Ok(dl), Ok(v)) => points.push((dl, v)),
            _ if i == 0 => continue,
            _ => return Err(format!("line {}: cannot parse `{line}`", i + 1)),
        }
    }
    let dl_max = points.last().map(|p| p.0).unwrap_or(-1);
    if dl_max < 0 || points.len() as i64 != 2 * dl_max + 1 {
        return Err("profile must cover -dl_max..=dl_max".into());
    }
    if points.iter().zip(-dl_max..).any(|(p, dl)| p.0 != dl) {
        return Err("profile shifts must be consecutive and ascending".into());
    }
    Ok(SignalProfile {
        dl_max: dl_max as usize,
        values: points.into_iter().map(|p| p.1).collect(),
        normalization: Normalization::Raw,
    })
}

pub fn read_profile_csv(path: &Path) -> Result<SignalProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profile_csv(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

/// 8-bit binary PGM, one pixel per entry. Rows run from the largest `l_t`
/// down, columns from the smallest `l_r` up; values scale linearly from the
/// matrix minimum (0) to maximum (255). A constant matrix maps to all zeros.
pub fn render_pgm(m: &ModeMatrix) -> Vec<u8> {
    let (min, max) = m
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let dim = m.dim();
    let mut out = format!("P5\n# min={min} max={max}\n{dim} {dim}\n255\n").into_bytes();
    let range = max - min;
    for lt in m.modes().rev() {
        for lr in m.modes() {
            let px = if range > 0.0 && range.is_finite() {
                ((m.at(lt, lr) - min) / range * 255.0)
                    .round()
                    .clamp(0.0, 255.0) as u8
            } else {
                0
            };
            out.push(px);
        }
    }
    out
}

pub fn render_heatmap(matrix_csv: &Path, image: &Path) -> Result<()> {
    let m = read_matrix_csv(matrix_csv)?;
    atomic_write(image, &render_pgm(&m))
}
