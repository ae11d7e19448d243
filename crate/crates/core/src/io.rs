//! File formats: matrix CSV and JSON envelopes, leading-zero code JSON and
//! selection summaries.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dlzs::{LzCode, LzMatrix, Sign};
use crate::error::{shape, Result};
use crate::numerics::{QuantTensor, RealMatrix};
use crate::sads::TopKSelection;

/// `{rows, cols, data, bitwidth?, scale?}` with row-major `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEnvelope {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bitwidth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl MatrixEnvelope {
    pub fn from_real(m: &RealMatrix) -> Self {
        MatrixEnvelope {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().to_vec(),
            bitwidth: None,
            scale: None,
        }
    }

    pub fn from_quant(t: &QuantTensor) -> Self {
        MatrixEnvelope {
            rows: t.rows(),
            cols: t.cols(),
            data: t.data().iter().map(|&v| v as f64).collect(),
            bitwidth: Some(t.bitwidth()),
            scale: Some(t.scale()),
        }
    }

    pub fn to_real(&self) -> Result<RealMatrix> {
        RealMatrix::new(self.rows, self.cols, self.data.clone())
    }

    /// Requires `bitwidth` and `scale` and integral data.
    pub fn to_quant(&self) -> Result<QuantTensor> {
        let (Some(bits), Some(scale)) = (self.bitwidth, self.scale) else {
            return Err(crate::error::invalid("quantized envelope needs bitwidth and scale"));
        };
        if self.data.iter().any(|v| v.fract() != 0.0) {
            return Err(crate::error::invalid("quantized data must be integral"));
        }
        let data = self.data.iter().map(|&v| v as i32).collect();
        QuantTensor::new(self.rows, self.cols, data, bits, scale)
    }
}

pub fn read_matrix_json<R: Read>(r: R) -> Result<RealMatrix> {
    let env: MatrixEnvelope = serde_json::from_reader(r)?;
    env.to_real()
}

pub fn write_matrix_json<W: Write>(w: W, m: &RealMatrix) -> Result<()> {
    serde_json::to_writer(w, &MatrixEnvelope::from_real(m))?;
    Ok(())
}

/// Headerless numeric CSV, one matrix row per line.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<RealMatrix> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| crate::error::invalid(format!("bad number {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    RealMatrix::from_rows(&rows)
}

pub fn write_matrix_csv<W: Write>(w: W, m: &RealMatrix) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.rows() {
        wr.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeRecord {
    s: Sign,
    lz: u8,
    z: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LzEnvelope {
    rows: usize,
    cols: usize,
    bitwidth: u32,
    codes: Vec<CodeRecord>,
}

pub fn lz_to_json(m: &LzMatrix) -> Result<String> {
    let env = LzEnvelope {
        rows: m.rows(),
        cols: m.cols(),
        bitwidth: m.bitwidth(),
        codes: m
            .codes()
            .iter()
            .map(|c| CodeRecord {
                s: c.sign,
                lz: c.lz,
                z: c.is_zero,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn lz_from_json(s: &str) -> Result<LzMatrix> {
    let env: LzEnvelope = serde_json::from_str(s)?;
    if env.codes.len() != env.rows * env.cols {
        return Err(shape(format!(
            "{} codes for a {}x{} matrix",
            env.codes.len(),
            env.rows,
            env.cols
        )));
    }
    let codes = env
        .codes
        .into_iter()
        .map(|c| LzCode {
            sign: c.s,
            lz: c.lz,
            is_zero: c.z,
        })
        .collect();
    LzMatrix::from_codes(env.rows, env.cols, env.bitwidth, codes)
}

/// One row of the selection summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub row: usize,
    pub hits: usize,
    pub comparisons: u64,
    pub rho: f64,
}

pub fn selection_summary(sel: &TopKSelection) -> Vec<SelectionSummary> {
    sel.rows
        .iter()
        .enumerate()
        .map(|(row, r)| SelectionSummary {
            row,
            hits: r.len(),
            comparisons: r.comparisons,
            rho: r.rho,
        })
        .collect()
}

pub fn write_selection_csv<W: Write>(w: W, sel: &TopKSelection) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in selection_summary(sel) {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Full selection (indices and estimated scores per row) as JSON.
pub fn selection_to_json(sel: &TopKSelection) -> Result<String> {
    Ok(serde_json::to_string(sel)?)
}
