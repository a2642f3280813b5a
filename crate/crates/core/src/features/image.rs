use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, FeatureError> {
        if data.len() != rows * cols {
            return Err(FeatureError::Shape(format!("{} values for a {rows}×{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// CNN input side: 24 for the fast model, 64 for the slow one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum InputSide {
    Fast,
    Slow,
}

impl InputSide {
    pub fn get(self) -> usize {
        match self {
            InputSide::Fast => 24,
            InputSide::Slow => 64,
        }
    }
}

impl TryFrom<usize> for InputSide {
    type Error = FeatureError;

    fn try_from(side: usize) -> Result<Self, Self::Error> {
        match side {
            24 => Ok(InputSide::Fast),
            64 => Ok(InputSide::Slow),
            other => Err(FeatureError::Shape(format!("input side must be 24 or 64, got {other}"))),
        }
    }
}

impl From<InputSide> for usize {
    fn from(side: InputSide) -> usize {
        side.get()
    }
}

/// Square image with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    side: usize,
    values: Vec<f32>,
}

impl FeatureImage {
    pub fn new(side: usize, values: Vec<f32>) -> Result<Self, FeatureError> {
        if side == 0 || values.len() != side * side {
            return Err(FeatureError::Shape(format!("{} values for a {side}×{side} image", values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(FeatureError::Numeric("image values must be finite and within [0, 1]".into()));
        }
        Ok(Self { side, values })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.side + c]
    }

    /// Plain-text PGM (P2) dump, 8-bit gray.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.side, self.side);
        for row in self.values.chunks(self.side) {
            let line: Vec<String> = row.iter().map(|v| ((v * 255.0).round() as u8).to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Corner-aligned bilinear resize: output corners sample input corners exactly.
pub fn resize_bilinear(src: &Matrix, rows: usize, cols: usize) -> Result<Matrix, FeatureError> {
    if src.rows() == 0 || src.cols() == 0 || rows == 0 || cols == 0 {
        return Err(FeatureError::Shape("resize needs non-empty source and target".into()));
    }
    let coord = |i: usize, out_n: usize, in_n: usize| -> (usize, usize, f64) {
        if out_n == 1 || in_n == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (in_n - 1) as f64 / (out_n - 1) as f64;
        let lo = (pos.floor() as usize).min(in_n - 1);
        let hi = (lo + 1).min(in_n - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let (r0, r1, fr) = coord(r, rows, src.rows());
        for c in 0..cols {
            let (c0, c1, fc) = coord(c, cols, src.cols());
            let top = src.get(r0, c0) * (1.0 - fc) + src.get(r0, c1) * fc;
            let bottom = src.get(r1, c0) * (1.0 - fc) + src.get(r1, c1) * fc;
            out.set(r, c, top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(out)
}

/// Min-max scale into `[0, 1]`; a constant image maps to 0.5 everywhere.
pub fn normalize(m: &Matrix) -> Result<FeatureImage, FeatureError> {
    if m.rows() != m.cols() {
        return Err(FeatureError::Shape(format!("image must be square, got {}×{}", m.rows(), m.cols())));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::Numeric("non-finite value before normalization".into()));
    }
    let (lo, hi) = m.as_slice().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let values = if span > 0.0 {
        m.as_slice().iter().map(|&v| (((v - lo) / span) as f32).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; m.as_slice().len()]
    };
    FeatureImage::new(m.rows(), values)
}
