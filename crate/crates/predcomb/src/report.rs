//! Pairwise task-metric matrices and their CSV / PGM renderings.

use nalgebra::DMatrix;

/// A square matrix of pairwise manifold metrics, diagonal 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrixReport {
    pub values: DMatrix<f64>,
}

impl MetricMatrixReport {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Comma-separated rows, 17 significant digits (round-trippable f64).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format_f64(self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5, maxval 255): pixel = round_half_away_from_zero((rho+1)/2 * 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let (h, w) = (self.values.nrows(), self.values.ncols());
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        for i in 0..h {
            for j in 0..w {
                bytes.push(metric_to_pixel(self.values[(i, j)]));
            }
        }
        bytes
    }

    /// Mean |rho| over the given row/column index set, diagonal excluded.
    pub fn mean_abs_within(&self, idx: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for &i in idx {
            for &j in idx {
                if i != j {
                    total += self.values[(i, j)].abs();
                    count += 1;
                }
            }
        }
        total / count.max(1) as f64
    }

    /// Mean |rho| between two disjoint index sets.
    pub fn mean_abs_between(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for &i in a {
            for &j in b {
                total += self.values[(i, j)].abs();
                count += 1;
            }
        }
        total / count.max(1) as f64
    }
}

/// Maps rho in [-1,1] to a grayscale byte, rounding half away from zero.
pub fn metric_to_pixel(rho: f64) -> u8 {
    let v = (rho.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0;
    let rounded = if v >= 0.0 { (v + 0.5).floor() } else { (v - 0.5).ceil() };
    rounded.clamp(0.0, 255.0) as u8
}

/// Shortest decimal representation that round-trips a f64 (17 significant
/// digits at most; Rust's Display for f64 already emits the shortest form).
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}
