//! Leading-zero log-domain codes and the multiplier-free attention predictor.
//!
//! A nonzero `W`-bit integer is written `sign * M * 2^(W - lz)` with the
//! mantissa `M` in `[0.5, 1)`. The differential scheme approximates only one
//! operand's mantissa as 1, so a product becomes a single barrel shift of the
//! other operand. The symmetric scheme (both mantissas dropped) is kept as the
//! comparison baseline.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::numerics::{max_code, IntMatrix, OpCounters, QuantTensor};

/// Default predictor bitwidth.
pub const DEFAULT_BITWIDTH: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

/// Sign, leading-zero count and zero flag of one `W`-bit integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LzCode {
    pub sign: Sign,
    pub lz: u8,
    pub is_zero: bool,
}

impl LzCode {
    pub fn zero(bits: u32) -> LzCode {
        LzCode {
            sign: Sign::Pos,
            lz: bits as u8,
            is_zero: true,
        }
    }

    /// Power-of-two magnitude `2^(W - lz)` the code stands for (0 for zero).
    pub fn magnitude(&self, bits: u32) -> i64 {
        if self.is_zero {
            0
        } else {
            1 << (bits - self.lz as u32)
        }
    }

    /// Signed power-of-two value of the code.
    pub fn value(&self, bits: u32) -> i64 {
        match self.sign {
            Sign::Pos => self.magnitude(bits),
            Sign::Neg => -self.magnitude(bits),
        }
    }
}

fn bit_length(v: u64) -> u32 {
    u64::BITS - v.leading_zeros()
}

/// Encodes `v` as sign plus leading-zero count within a `bits`-wide word.
pub fn lz_encode(v: i64, bits: u32) -> Result<LzCode> {
    if !(2..=16).contains(&bits) {
        return Err(invalid(format!("bitwidth must be in [2, 16], got {bits}")));
    }
    let limit = max_code(bits) as i64;
    if v.abs() > limit {
        return Err(invalid(format!("{v} is outside the {bits}-bit range +/-{limit}")));
    }
    if v == 0 {
        return Ok(LzCode::zero(bits));
    }
    Ok(LzCode {
        sign: if v < 0 { Sign::Neg } else { Sign::Pos },
        lz: (bits - bit_length(v.unsigned_abs())) as u8,
        is_zero: false,
    })
}

/// Mantissa `|v| / 2^(W - lz)` of a nonzero value; lies in `[0.5, 1)`.
pub fn mantissa(v: i64, bits: u32) -> Result<f64> {
    let code = lz_encode(v, bits)?;
    if code.is_zero {
        return Err(invalid("zero has no mantissa"));
    }
    Ok(v.unsigned_abs() as f64 / code.magnitude(bits) as f64)
}

/// Shift-only estimate of `x * y` given the leading-zero code of `y`.
///
/// The sign is applied before shifting: a negative code negates `x` first and
/// then shifts the negated operand. `x` is a wide accumulator value and is not
/// range-checked against `bits`.
pub fn dlzs_mul(x: i64, y: LzCode, bits: u32, counters: &mut OpCounters) -> i64 {
    if y.is_zero || x == 0 {
        return 0;
    }
    let operand = match y.sign {
        Sign::Pos => x,
        Sign::Neg => {
            counters.add += 1;
            -x
        }
    };
    counters.shift += 1;
    operand << (bits - y.lz as u32)
}

/// Mean of `2^(W - lz) / |v|` over the nonzero entries: how much a shift-only
/// product overstates magnitudes on average for this operand. 1 for all-zero input.
pub fn mean_inflation(t: &QuantTensor) -> f64 {
    let (sum, n) = t
        .data()
        .iter()
        .filter(|&&v| v != 0)
        .fold((0.0, 0usize), |(s, n), &v| {
            let mag = v.unsigned_abs() as f64;
            let pow = (1u64 << (32 - v.unsigned_abs().leading_zeros())) as f64;
            (s + pow / mag, n + 1)
        });
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// Symmetric estimate: both operands replaced by their power-of-two codes.
pub fn slzs_mul(x: LzCode, y: LzCode, bits: u32) -> i64 {
    if x.is_zero || y.is_zero {
        return 0;
    }
    let mag = 1i64 << (2 * bits - x.lz as u32 - y.lz as u32);
    if x.sign == y.sign {
        mag
    } else {
        -mag
    }
}

/// Matrix of leading-zero codes sharing one bitwidth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LzMatrix {
    rows: usize,
    cols: usize,
    bits: u32,
    codes: Vec<LzCode>,
}

impl LzMatrix {
    pub fn encode(t: &QuantTensor) -> LzMatrix {
        let bits = t.bitwidth();
        let codes = t
            .data()
            .iter()
            // Quantized values are in range by construction.
            .map(|&v| lz_encode(v as i64, bits).expect("quantized value within bitwidth"))
            .collect();
        LzMatrix {
            rows: t.rows(),
            cols: t.cols(),
            bits,
            codes,
        }
    }

    pub fn from_codes(rows: usize, cols: usize, bits: u32, codes: Vec<LzCode>) -> Result<LzMatrix> {
        if rows * cols != codes.len() {
            return Err(shape(format!("{rows}x{cols} code matrix needs {} codes", rows * cols)));
        }
        for c in &codes {
            let ok = if c.is_zero {
                c.lz as u32 == bits
            } else {
                (1..=bits).contains(&(c.lz as u32))
            };
            if !ok {
                return Err(invalid(format!("code {c:?} is invalid for {bits}-bit values")));
            }
        }
        Ok(LzMatrix {
            rows,
            cols,
            bits,
            codes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bitwidth(&self) -> u32 {
        self.bits
    }

    pub fn codes(&self) -> &[LzCode] {
        &self.codes
    }

    pub fn get(&self, i: usize, j: usize) -> LzCode {
        self.codes[i * self.cols + j]
    }
}

/// Key prediction: `K^[s, d] = sum_h dlzs_mul(X[s, h], LZ(W_k)[h, d])`.
pub fn predict_khat(x: &QuantTensor, wk: &LzMatrix) -> Result<(IntMatrix, OpCounters)> {
    if x.cols() != wk.rows() {
        return Err(shape(format!(
            "X is {}x{} but W_k codes are {}x{}",
            x.rows(),
            x.cols(),
            wk.rows(),
            wk.cols()
        )));
    }
    if x.bitwidth() != wk.bitwidth() {
        return Err(invalid(format!(
            "X uses {} bits but W_k codes use {}",
            x.bitwidth(),
            wk.bitwidth()
        )));
    }
    let bits = wk.bitwidth();
    let mut counters = OpCounters::ZERO;
    let mut khat = IntMatrix::zeros(x.rows(), wk.cols());
    for s in 0..x.rows() {
        let xs = x.row(s);
        for d in 0..wk.cols() {
            let mut acc = 0i64;
            for (h, &xv) in xs.iter().enumerate() {
                acc += dlzs_mul(xv as i64, wk.get(h, d), bits, &mut counters);
            }
            counters.add += xs.len().saturating_sub(1) as u64;
            khat.set(s, d, acc);
        }
    }
    Ok((khat, counters))
}

/// Attention prediction: `A^[t, s] = sum_d dlzs_mul(K^[s, d], LZ(Q[t, d]))`.
///
/// `Q` is encoded on the fly. No `1/sqrt(d_h)` factor is applied; the output
/// only feeds per-row ranking.
pub fn predict_attention(q: &QuantTensor, khat: &IntMatrix) -> Result<(IntMatrix, OpCounters)> {
    if q.cols() != khat.cols() {
        return Err(shape(format!(
            "Q is {}x{} but K^ is {}x{}",
            q.rows(),
            q.cols(),
            khat.rows(),
            khat.cols()
        )));
    }
    let bits = q.bitwidth();
    let mut counters = OpCounters::ZERO;
    let mut ahat = IntMatrix::zeros(q.rows(), khat.rows());
    for t in 0..q.rows() {
        let codes: Vec<LzCode> = q
            .row(t)
            .iter()
            .map(|&v| lz_encode(v as i64, bits))
            .collect::<Result<_>>()?;
        for s in 0..khat.rows() {
            let mut acc = 0i64;
            for (d, code) in codes.iter().enumerate() {
                acc += dlzs_mul(khat.get(s, d), *code, bits, &mut counters);
            }
            counters.add += codes.len().saturating_sub(1) as u64;
            ahat.set(t, s, acc);
        }
    }
    Ok((ahat, counters))
}

/// Symmetric-scheme predictor over already-quantized operands, for hit-rate comparisons.
pub fn predict_attention_slzs(q: &QuantTensor, k: &QuantTensor) -> Result<IntMatrix> {
    if q.cols() != k.cols() || q.bitwidth() != k.bitwidth() {
        return Err(shape("Q and K must share width and bitwidth"));
    }
    let bits = q.bitwidth();
    let qc = LzMatrix::encode(q);
    let kc = LzMatrix::encode(k);
    let mut out = IntMatrix::zeros(q.rows(), k.rows());
    for t in 0..q.rows() {
        for s in 0..k.rows() {
            let acc = (0..q.cols()).map(|d| slzs_mul(qc.get(t, d), kc.get(s, d), bits)).sum();
            out.set(t, s, acc);
        }
    }
    Ok(out)
}
