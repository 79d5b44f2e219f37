//! Readers and writers for the CLI file formats: features (headerless CSV),
//! predictions (one value per line), index pairs ("i,j"), and diffusion
//! configs ("key = value"). All parses are strict; the first malformed line
//! aborts with its line number. Writes go through a temp file plus rename so
//! readers never observe partial output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::joint::{BridgeSolver, DiffusionConfig};

/// Failure while reading or writing one of the CLI files.
#[derive(Debug)]
pub enum FileError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileError::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            FileError::Parse {
                path,
                line,
                message,
            } => write!(f, "{}:{}: {}", path.display(), line, message),
        }
    }
}

impl std::error::Error for FileError {}

pub type FileResult<T> = std::result::Result<T, FileError>;

fn read_to_string(path: &Path) -> FileResult<String> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FileError {
    FileError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> FileResult<f64> {
    let v = f64::from_str(field.trim())
        .map_err(|_| parse_err(path, line, format!("invalid real number {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: usize, field: &str) -> FileResult<usize> {
    usize::from_str(field.trim())
        .map_err(|_| parse_err(path, line, format!("invalid index {field:?}")))
}

/// Headerless comma-separated matrix; every row must have the same width.
pub fn read_features(path: &Path) -> FileResult<DMatrix<f64>> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = raw
            .split(',')
            .map(|field| parse_f64(path, lineno, field))
            .collect::<FileResult<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {w} columns, found {}", row.len()),
                ));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "empty feature file"));
    }
    let (n, d) = (rows.len(), width.unwrap());
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// One decimal real per line.
pub fn read_predictions(path: &Path) -> FileResult<Vec<f64>> {
    let text = read_to_string(path)?;
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        values.push(parse_f64(path, idx + 1, raw)?);
    }
    if values.is_empty() {
        return Err(parse_err(path, 1, "empty prediction file"));
    }
    Ok(values)
}

/// Lines "i,j" of unsigned indices; used for both rank pairs and couplings.
pub fn read_index_pairs(path: &Path) -> FileResult<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split(',');
        let a = fields
            .next()
            .ok_or_else(|| parse_err(path, lineno, "expected \"i,j\""))?;
        let b = fields
            .next()
            .ok_or_else(|| parse_err(path, lineno, "expected \"i,j\""))?;
        if fields.next().is_some() {
            return Err(parse_err(path, lineno, "expected exactly two indices"));
        }
        pairs.push((
            parse_usize(path, lineno, a)?,
            parse_usize(path, lineno, b)?,
        ));
    }
    Ok(pairs)
}

/// "key = value" lines over the given base config; unknown keys abort.
pub fn read_config(path: &Path, base: &DiffusionConfig) -> FileResult<DiffusionConfig> {
    let text = read_to_string(path)?;
    let mut cfg = base.clone();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| parse_err(path, lineno, "expected \"key = value\""))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "sigma2" => cfg.sigma2 = parse_f64(path, lineno, value)?,
            "delta" => cfg.delta = parse_f64(path, lineno, value)?,
            "delta_b" => cfg.delta_b = parse_f64(path, lineno, value)?,
            "sigma_f2" => cfg.sigma_f2 = parse_f64(path, lineno, value)?,
            "sigma_k2" => cfg.sigma_k2 = parse_f64(path, lineno, value)?,
            "n_neighbors" => cfg.n_neighbors = parse_usize(path, lineno, value)?,
            "sparsity_cap" => cfg.sparsity_cap = parse_usize(path, lineno, value)?,
            "t1" => cfg.t1 = parse_usize(path, lineno, value)?,
            "t2" => cfg.t2 = parse_usize(path, lineno, value)?,
            "improvement_eps" => cfg.improvement_eps = parse_f64(path, lineno, value)?,
            "bridge_solver" => {
                cfg.bridge_solver = match value {
                    "auto" => BridgeSolver::Auto,
                    "implicit" => BridgeSolver::Implicit,
                    "explicit" => BridgeSolver::Explicit,
                    other => {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("unknown bridge_solver {other:?}"),
                        ));
                    }
                }
            }
            other => {
                return Err(parse_err(path, lineno, format!("unknown key {other:?}")));
            }
        }
    }
    Ok(cfg)
}

/// Writes bytes via a sibling temp file and an atomic rename.
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> FileResult<()> {
    let io_err = |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// One value per line, shortest round-trippable decimal form.
pub fn write_predictions(path: &Path, values: &[f64]) -> FileResult<()> {
    let mut out = String::new();
    for v in values {
        out.push_str(&crate::report::format_f64(*v));
        out.push('\n');
    }
    write_bytes_atomic(path, out.as_bytes())
}

/// Headerless comma-separated matrix, shortest round-trippable decimals.
pub fn write_features(path: &Path, features: &DMatrix<f64>) -> FileResult<()> {
    let mut out = String::new();
    for i in 0..features.nrows() {
        for j in 0..features.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&crate::report::format_f64(features[(i, j)]));
        }
        out.push('\n');
    }
    write_bytes_atomic(path, out.as_bytes())
}

/// Lines "i,j".
pub fn write_index_pairs(path: &Path, pairs: &[(usize, usize)]) -> FileResult<()> {
    let mut out = String::new();
    for &(i, j) in pairs {
        out.push_str(&format!("{i},{j}\n"));
    }
    write_bytes_atomic(path, out.as_bytes())
}
