//! Single-node predict → select → attend pipeline.
//!
//! This is also the reference the mesh simulator is compared against.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dlzs::{mean_inflation, predict_attention, predict_khat, LzMatrix};
use crate::error::{invalid, Result};
use crate::numerics::{dot, quantize, IntMatrix, OpCounters, RealMatrix};
use crate::sads::{exact_topk, hit_rate, SadsParams, TopKSelection};
use crate::sufa::{attend_rows, AttentionMode, StreamStats};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    pub sads: SadsParams,
    /// Predictor bitwidth.
    #[serde(rename = "W", default = "default_bits")]
    pub bitwidth: u32,
    pub mode: AttentionMode,
    #[serde(rename = "B_c")]
    pub block_cols: usize,
}

fn default_bits() -> u32 {
    crate::dlzs::DEFAULT_BITWIDTH
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.sads.validate()?;
        if !(4..=16).contains(&self.bitwidth) {
            return Err(invalid(format!("W must be in [4, 16], got {}", self.bitwidth)));
        }
        if self.block_cols == 0 {
            return Err(invalid("B_c must be positive"));
        }
        Ok(())
    }
}

/// Operation counters per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounters {
    pub predict: OpCounters,
    pub select: OpCounters,
    pub kv_generation: OpCounters,
    pub attend: OpCounters,
}

impl StageCounters {
    pub fn total(&self) -> OpCounters {
        self.predict + self.select + self.kv_generation + self.attend
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub output: RealMatrix,
    /// Predicted scores in logit units (dequantized, scaled by `1/sqrt(d_h)`).
    pub estimated_scores: RealMatrix,
    pub raw_prediction: IntMatrix,
    pub selection: TopKSelection,
    /// Exact `Q K^T / sqrt(d_h)`.
    pub true_scores: RealMatrix,
    pub keys: RealMatrix,
    pub values: RealMatrix,
    pub hit_rates: Vec<f64>,
    pub counters: StageCounters,
    pub stats: StreamStats,
    /// Distinct key/value rows that had to be generated.
    pub generated_kv_rows: usize,
}

impl PipelineRun {
    pub fn mean_hit_rate(&self) -> f64 {
        if self.hit_rates.is_empty() {
            return 1.0;
        }
        self.hit_rates.iter().sum::<f64>() / self.hit_rates.len() as f64
    }
}

/// Shift-only score estimate in logit units, corrected for the mean
/// overstatement of the shift-only products.
pub fn estimate_scores(w: &Workload, bits: u32) -> Result<(IntMatrix, RealMatrix, OpCounters)> {
    let xq = quantize(&w.x, bits)?;
    let wkq = quantize(&w.wk, bits)?;
    let qq = quantize(&w.q, bits)?;
    let codes = LzMatrix::encode(&wkq);
    let (khat, c1) = predict_khat(&xq, &codes)?;
    let (ahat, c2) = predict_attention(&qq, &khat)?;
    // The shift-only products overstate magnitudes in both phases; divide the
    // mean overstatement back out so the radius is in true logit units.
    let bias = mean_inflation(&wkq) * mean_inflation(&qq);
    let unit = xq.scale() * wkq.scale() * qq.scale() / (w.q.cols() as f64).sqrt() / bias;
    let est = RealMatrix::new(
        ahat.rows(),
        ahat.cols(),
        ahat.data().iter().map(|&v| v as f64 * unit).collect(),
    )?;
    Ok((ahat, est, c1 + c2))
}

pub fn run_pipeline(w: &Workload, p: &PipelineParams) -> Result<PipelineRun> {
    p.validate()?;
    let scale = 1.0 / (w.q.cols() as f64).sqrt();
    let (raw, est, predict) = estimate_scores(w, p.bitwidth)?;
    let selection = TopKSelection::select(&est, &p.sads)?;

    let keys = w.x.matmul(&w.wk)?;
    let values = w.x.matmul(&w.wv)?;
    let needed: BTreeSet<usize> = selection.rows.iter().flat_map(|r| r.indices()).collect();
    let per_row = (w.x.cols() * w.wk.cols()) as u64;
    let kv_generation = OpCounters {
        mul: 2 * per_row * needed.len() as u64,
        add: 2 * per_row * needed.len() as u64,
        ..OpCounters::ZERO
    };

    let batch = attend_rows(&w.q, &selection.rows, &keys, &values, scale, p.mode, p.block_cols)?;
    if batch.output.data().iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::Numeric("non-finite attention output".into()));
    }

    let mut true_scores = RealMatrix::zeros(w.q.rows(), keys.rows());
    for t in 0..w.q.rows() {
        for s in 0..keys.rows() {
            true_scores.row_mut(t)[s] = scale * dot(w.q.row(t), keys.row(s));
        }
    }
    let quota = p.sads.total_quota(keys.rows());
    let hit_rates = selection
        .rows
        .iter()
        .enumerate()
        .map(|(t, r)| hit_rate(&r.indices(), &exact_topk(true_scores.row(t), quota)))
        .collect();

    Ok(PipelineRun {
        output: batch.output,
        estimated_scores: est,
        raw_prediction: raw,
        counters: StageCounters {
            predict,
            select: selection.counters(),
            kv_generation,
            attend: batch.counters,
        },
        selection,
        true_scores,
        keys,
        values,
        hit_rates,
        stats: batch.stats,
        generated_kv_rows: needed.len(),
    })
}
