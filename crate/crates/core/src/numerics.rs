//! Reference attention numerics, symmetric quantization and operation counters.
//!
//! Everything in here is the oracle side of the crate: the tiled and sparse
//! engines elsewhere are checked against [`dense_attention`].

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(shape("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> RealMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        RealMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> RealMatrix {
        RealMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Dense row-major integer matrix, used for the wide accumulators of the predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_real(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Symmetric integer quantization of a matrix: `real = int * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantTensor {
    rows: usize,
    cols: usize,
    data: Vec<i32>,
    bitwidth: u32,
    scale: f64,
}

impl QuantTensor {
    pub fn new(rows: usize, cols: usize, data: Vec<i32>, bitwidth: u32, scale: f64) -> Result<Self> {
        check_bitwidth(bitwidth)?;
        if rows * cols != data.len() {
            return Err(shape(format!(
                "{rows}x{cols} tensor needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("scale must be positive and finite, got {scale}")));
        }
        let limit = max_code(bitwidth);
        if let Some(v) = data.iter().find(|v| v.abs() > limit) {
            return Err(invalid(format!("{v} does not fit a {bitwidth}-bit symmetric code")));
        }
        Ok(Self {
            rows,
            cols,
            data,
            bitwidth,
            scale,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.data[i * self.cols + j]
    }

    pub fn bitwidth(&self) -> u32 {
        self.bitwidth
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dequantize(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f64 * self.scale).collect(),
        }
    }
}

/// Largest magnitude representable by a `bits`-wide symmetric code.
pub fn max_code(bits: u32) -> i32 {
    (1 << (bits - 1)) - 1
}

fn check_bitwidth(bits: u32) -> Result<()> {
    if !(2..=16).contains(&bits) {
        return Err(invalid(format!("bitwidth must be in [2, 16], got {bits}")));
    }
    Ok(())
}

/// Scalar operation tallies, merged field-wise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounters {
    #[serde(rename = "n_add")]
    pub add: u64,
    #[serde(rename = "n_mul")]
    pub mul: u64,
    #[serde(rename = "n_cmp")]
    pub cmp: u64,
    #[serde(rename = "n_div")]
    pub div: u64,
    #[serde(rename = "n_exp")]
    pub exp: u64,
    #[serde(rename = "n_shift")]
    pub shift: u64,
}

impl OpCounters {
    pub const ZERO: OpCounters = OpCounters {
        add: 0,
        mul: 0,
        cmp: 0,
        div: 0,
        exp: 0,
        shift: 0,
    };

    pub fn merge(self, other: OpCounters) -> OpCounters {
        OpCounters {
            add: self.add + other.add,
            mul: self.mul + other.mul,
            cmp: self.cmp + other.cmp,
            div: self.div + other.div,
            exp: self.exp + other.exp,
            shift: self.shift + other.shift,
        }
    }

    /// Every field multiplied by `n`.
    pub fn scaled(self, n: u64) -> OpCounters {
        OpCounters {
            add: self.add * n,
            mul: self.mul * n,
            cmp: self.cmp * n,
            div: self.div * n,
            exp: self.exp * n,
            shift: self.shift * n,
        }
    }

    /// Field-wise `self - other`, saturating at zero.
    pub fn saturating_sub(self, other: OpCounters) -> OpCounters {
        OpCounters {
            add: self.add.saturating_sub(other.add),
            mul: self.mul.saturating_sub(other.mul),
            cmp: self.cmp.saturating_sub(other.cmp),
            div: self.div.saturating_sub(other.div),
            exp: self.exp.saturating_sub(other.exp),
            shift: self.shift.saturating_sub(other.shift),
        }
    }
}

impl Add for OpCounters {
    type Output = OpCounters;

    fn add(self, rhs: OpCounters) -> OpCounters {
        self.merge(rhs)
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: OpCounters) {
        *self = self.merge(rhs);
    }
}

impl std::iter::Sum for OpCounters {
    fn sum<I: Iterator<Item = OpCounters>>(iter: I) -> OpCounters {
        iter.fold(OpCounters::ZERO, OpCounters::merge)
    }
}

pub fn counters_merge(a: OpCounters, b: OpCounters) -> OpCounters {
    a.merge(b)
}

/// Attention problem dimensions. Tile counts are derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    /// Sequence length.
    #[serde(rename = "S")]
    pub seq_len: usize,
    /// Head dimension.
    #[serde(rename = "d_h")]
    pub head_dim: usize,
    #[serde(rename = "N_h", default = "one")]
    pub heads: usize,
    /// Queries processed in parallel.
    #[serde(rename = "T")]
    pub queries: usize,
    #[serde(rename = "B_r", default = "default_block")]
    pub block_rows: usize,
    #[serde(rename = "B_c", default = "default_block")]
    pub block_cols: usize,
}

fn one() -> usize {
    1
}

fn default_block() -> usize {
    16
}

impl AttentionConfig {
    pub fn new(seq_len: usize, head_dim: usize, queries: usize, block_cols: usize) -> Self {
        Self {
            seq_len,
            head_dim,
            heads: 1,
            queries,
            block_rows: 16,
            block_cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("S", self.seq_len),
            ("d_h", self.head_dim),
            ("N_h", self.heads),
            ("T", self.queries),
            ("B_r", self.block_rows),
            ("B_c", self.block_cols),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Hidden size `d_h * N_h`.
    pub fn hidden(&self) -> usize {
        self.head_dim * self.heads
    }

    pub fn col_tiles(&self) -> usize {
        self.seq_len.div_ceil(self.block_cols)
    }

    pub fn row_tiles(&self) -> usize {
        self.queries.div_ceil(self.block_rows)
    }
}

/// Numerically stable softmax over one row.
pub fn softmax_row(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(invalid("softmax of an empty row"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("softmax input must be finite"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `softmax(scale * Q K^T) V`, materialising every score row.
pub fn dense_attention(q: &RealMatrix, k: &RealMatrix, v: &RealMatrix, scale: f64) -> Result<RealMatrix> {
    if q.cols != k.cols {
        return Err(shape(format!("Q has {} columns but K has {}", q.cols, k.cols)));
    }
    if k.rows != v.rows {
        return Err(shape(format!("K has {} rows but V has {}", k.rows, v.rows)));
    }
    if k.rows == 0 {
        return Err(invalid("attention over an empty key set"));
    }
    let mut out = RealMatrix::zeros(q.rows, v.cols);
    for i in 0..q.rows {
        let qi = q.row(i);
        let scores: Vec<f64> = (0..k.rows).map(|j| scale * dot(qi, k.row(j))).collect();
        let weights = softmax_row(&scores)?;
        let oi = out.row_mut(i);
        for (j, w) in weights.iter().enumerate() {
            for (o, &vv) in oi.iter_mut().zip(v.row(j)) {
                *o += w * vv;
            }
        }
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric per-tensor quantization with round-half-away-from-zero.
///
/// An all-zero input gets scale 1 so that dequantization stays well defined.
pub fn quantize(m: &RealMatrix, bits: u32) -> Result<QuantTensor> {
    if !(4..=16).contains(&bits) {
        return Err(invalid(format!("quantization bitwidth must be in [4, 16], got {bits}")));
    }
    let top = max_code(bits);
    let max_abs = m.max_abs();
    let scale = if max_abs == 0.0 { 1.0 } else { max_abs / top as f64 };
    let data = m
        .data
        .iter()
        // f64::round rounds half away from zero.
        .map(|&v| ((v / scale).round() as i32).clamp(-top, top))
        .collect();
    QuantTensor::new(m.rows, m.cols, data, bits, scale)
}
