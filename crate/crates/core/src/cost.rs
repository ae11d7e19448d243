//! Equivalent-add complexity, tiling overhead curves and the segment-size search.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{OpCounters, RealMatrix};
use crate::pipeline::estimate_scores;
use crate::sads::{sads_select, SadsParams, Scored, TopKRow};
use crate::sufa::{absorb_stream, attend_fa2, attend_sufa_asc, attend_sufa_desc, attend_vanilla, build_tiles};
use crate::sufa::{AttentionMode, SoftmaxAccumulator, TileOrder, TileStream};
use crate::workload::{self, RowProfile};

/// Per-operation weights, in additions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub alpha_add: f64,
    pub beta_mul: f64,
    pub gamma_cmp: f64,
    pub delta_div: f64,
    pub epsilon_exp: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            alpha_add: 1.0,
            beta_mul: 3.0,
            gamma_cmp: 1.0,
            delta_div: 8.0,
            epsilon_exp: 25.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_add,
            self.beta_mul,
            self.gamma_cmp,
            self.delta_div,
            self.epsilon_exp,
        ];
        if all.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("cost weights must be positive and finite"));
        }
        Ok(())
    }
}

/// Weighted operation total. Shifts are priced like additions.
pub fn normalized_complexity(c: &OpCounters, w: &CostWeights) -> f64 {
    w.alpha_add * (c.add + c.shift) as f64
        + w.beta_mul * c.mul as f64
        + w.gamma_cmp * c.cmp as f64
        + w.delta_div * c.div as f64
        + w.epsilon_exp * c.exp as f64
}

/// Extra operations of online-softmax tiling over a single-softmax pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadPoint {
    pub seq_len: usize,
    pub block_cols: usize,
    pub col_tiles: usize,
    /// Query rows covered (all heads).
    pub rows: u64,
    /// Measured from instrumented runs.
    pub extra: OpCounters,
    /// `rows * (T_c - 1) * per-transition cost`.
    pub closed_form: OpCounters,
    pub extra_equiv_adds: f64,
}

/// Operations one tile transition adds to an online-softmax pass.
pub fn transition_cost(head_dim: usize) -> OpCounters {
    OpCounters {
        add: 1,
        mul: head_dim as u64 + 1,
        cmp: 1,
        exp: 1,
        ..OpCounters::ZERO
    }
}

/// Runs instrumented online-softmax and single-softmax passes over dense
/// self-attention (`S` query rows per head) and tabulates the difference.
///
/// Both passes have data-independent counts, so one head is instrumented and
/// the result multiplied by `heads`.
pub fn fa_overhead_curve(
    seq_lens: &[usize],
    block_cols: usize,
    head_dim: usize,
    heads: usize,
    weights: &CostWeights,
    seed: u64,
) -> Result<Vec<OverheadPoint>> {
    if block_cols == 0 || head_dim == 0 || heads == 0 {
        return Err(invalid("B_c, d_h and heads must be positive"));
    }
    let mut rng = workload::rng(seed);
    let profile = RowProfile::gaussian(1.0);
    let mut out = Vec::with_capacity(seq_lens.len());
    for &s in seq_lens {
        if s == 0 || s % block_cols != 0 {
            return Err(invalid(format!("S = {s} is not a positive multiple of B_c = {block_cols}")));
        }
        let q = profile.sample_matrix(s, head_dim, &mut rng);
        let k = profile.sample_matrix(s, head_dim, &mut rng);
        let v = profile.sample_matrix(s, head_dim, &mut rng);
        let sel: Vec<Scored> = (0..s).map(|index| Scored { index, score: 0.0 }).collect();
        let stream = build_tiles(&sel, &k, &v, block_cols, TileOrder::Given)?;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut fa2 = OpCounters::ZERO;
        let mut vanilla = OpCounters::ZERO;
        for i in 0..s {
            fa2 += attend_fa2(q.row(i), &stream, scale).counters;
            vanilla += attend_vanilla(q.row(i), &sel, &k, &v, scale)?.counters;
        }
        let extra = fa2.saturating_sub(vanilla).scaled(heads as u64);
        let col_tiles = s / block_cols;
        let rows = (s * heads) as u64;
        out.push(OverheadPoint {
            seq_len: s,
            block_cols,
            col_tiles,
            rows,
            extra,
            closed_form: transition_cost(head_dim).scaled(rows * (col_tiles as u64 - 1)),
            extra_equiv_adds: normalized_complexity(&extra, weights),
        });
    }
    Ok(out)
}

/// `(S, B_c, T_c, metric, value)` rows for CSV output.
pub fn overhead_rows(points: &[OverheadPoint]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for p in points {
        for (metric, value) in [
            ("extra_exp", p.extra.exp as f64),
            ("extra_cmp", p.extra.cmp as f64),
            ("extra_mul", p.extra.mul as f64),
            ("extra_add", p.extra.add as f64),
            ("extra_equiv_adds", p.extra_equiv_adds),
        ] {
            rows.push(CurveRow {
                seq_len: p.seq_len,
                block_cols: p.block_cols,
                col_tiles: p.col_tiles,
                metric: metric.to_string(),
                value,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    #[serde(rename = "S")]
    pub seq_len: usize,
    #[serde(rename = "B_c")]
    pub block_cols: usize,
    #[serde(rename = "T_c")]
    pub col_tiles: usize,
    pub metric: String,
    pub value: f64,
}

pub fn write_curve_csv<W: std::io::Write>(w: W, rows: &[CurveRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Comparisons a full selection sort needs to extract `k S` columns: `S^2 k`.
pub fn sort_baseline(seq_len: usize, ratio: f64) -> f64 {
    let s = seq_len as f64;
    s * s * ratio
}

/// Predicted comparisons per row: max search plus `S^2 k rho / n` extraction.
pub fn sads_complexity_model(seq_len: usize, ratio: f64, segments: usize, rho: f64) -> f64 {
    let s = seq_len as f64;
    (s - segments as f64) + s * s * ratio * rho / segments as f64
}

/// Measured selection comparisons against the model, averaged over rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SadsPoint {
    #[serde(rename = "S")]
    pub seq_len: usize,
    #[serde(rename = "k")]
    pub ratio: f64,
    #[serde(rename = "n")]
    pub segments: usize,
    pub rows: usize,
    pub rho: f64,
    pub measured: f64,
    pub model: f64,
    pub baseline: f64,
}

impl SadsPoint {
    pub fn measured_ratio(&self) -> f64 {
        self.measured / self.baseline
    }

    /// `|measured - model| / model`.
    pub fn model_error(&self) -> f64 {
        (self.measured - self.model).abs() / self.model
    }
}

/// Runs segmented selection over `rows` rows drawn from `profile` for each
/// segment count and compares the comparison count with the model at the
/// measured feasible fraction.
pub fn sads_sweep(
    seq_len: usize,
    ratio: f64,
    segments: &[usize],
    radius: f64,
    profile: &RowProfile,
    rows: usize,
    seed: u64,
) -> Result<Vec<SadsPoint>> {
    profile.validate()?;
    if rows == 0 {
        return Err(invalid("sweep needs at least one row"));
    }
    let mut rng = workload::rng(seed);
    let data = profile.sample_matrix(rows, seq_len, &mut rng);
    segments
        .iter()
        .map(|&n| {
            let params = SadsParams::new(n, ratio, radius);
            let (mut cmp, mut rho) = (0.0, 0.0);
            for i in 0..rows {
                let sel = sads_select(data.row(i), &params)?;
                cmp += sel.comparisons as f64;
                rho += sel.rho;
            }
            let rho = rho / rows as f64;
            Ok(SadsPoint {
                seq_len,
                ratio,
                segments: n,
                rows,
                rho,
                measured: cmp / rows as f64,
                model: sads_complexity_model(seq_len, ratio, n, rho),
                baseline: sort_baseline(seq_len, ratio),
            })
        })
        .collect()
}

/// Multiplication and exponential counts of the three tiled modes on a
/// stream whose estimated order is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderGap {
    pub seq_len: usize,
    pub head_dim: usize,
    pub block_cols: usize,
    pub retained: usize,
    pub col_tiles: usize,
    pub rows: usize,
    pub desc: OpCounters,
    pub asc: OpCounters,
    pub fa2: OpCounters,
    pub guard_events: u64,
}

impl OrderGap {
    pub fn asc_minus_desc_mul(&self) -> u64 {
        self.asc.mul - self.desc.mul
    }

    pub fn fa2_minus_desc_mul(&self) -> u64 {
        self.fa2.mul - self.desc.mul
    }

    pub fn fa2_minus_desc_exp(&self) -> u64 {
        self.fa2.exp - self.desc.exp
    }

    /// `rows * (T_c - 1) * (d_h + 1)`.
    pub fn predicted_mul_gap(&self) -> u64 {
        (self.rows * self.col_tiles.saturating_sub(1) * (self.head_dim + 1)) as u64
    }
}

/// Runs desc/asc/fa2 over `rows` random queries whose selections are the exact
/// top `ratio * S` columns, so estimates never mislead the descending pass.
pub fn order_gap(
    seq_len: usize,
    head_dim: usize,
    block_cols: usize,
    ratio: f64,
    rows: usize,
    seed: u64,
) -> Result<OrderGap> {
    let mut rng = workload::rng(seed);
    let profile = RowProfile::gaussian(1.0);
    let q = profile.sample_matrix(rows, head_dim, &mut rng);
    let k = profile.sample_matrix(seq_len, head_dim, &mut rng);
    let v = profile.sample_matrix(seq_len, head_dim, &mut rng);
    let scale = 1.0 / (head_dim as f64).sqrt();
    let params = SadsParams::exact(ratio);
    let mut desc = OpCounters::ZERO;
    let mut asc = OpCounters::ZERO;
    let mut fa2 = OpCounters::ZERO;
    let mut guard_events = 0;
    let mut retained = 0;
    let mut col_tiles = 0;
    for i in 0..rows {
        let true_row: Vec<f64> = (0..seq_len)
            .map(|j| scale * crate::numerics::dot(q.row(i), k.row(j)))
            .collect();
        let sel = sads_select(&true_row, &params)?;
        retained = sel.len();
        let d_stream = build_tiles(&sel.entries, &k, &v, block_cols, TileOrder::Descending)?;
        let a_stream = build_tiles(&sel.entries, &k, &v, block_cols, TileOrder::Ascending)?;
        col_tiles = d_stream.len();
        let d = attend_sufa_desc(q.row(i), &d_stream, scale);
        guard_events += d.stats.guard_events;
        desc += d.counters;
        asc += attend_sufa_asc(q.row(i), &a_stream, scale).counters;
        fa2 += attend_fa2(q.row(i), &d_stream, scale).counters;
    }
    Ok(OrderGap {
        seq_len,
        head_dim,
        block_cols,
        retained,
        col_tiles,
        rows,
        desc,
        asc,
        fa2,
        guard_events,
    })
}

/// One point of the segment/tile search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DseCandidate {
    #[serde(rename = "n")]
    pub segments: usize,
    #[serde(rename = "B_c")]
    pub block_cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DseConfig {
    pub candidates: Vec<DseCandidate>,
    /// Weight of the top-k sorting cost.
    pub dse_alpha: f64,
    /// Weight of the exponential cost of the attention stage.
    pub dse_beta: f64,
    #[serde(rename = "S")]
    pub seq_len: usize,
    #[serde(rename = "d_h")]
    pub head_dim: usize,
    /// Query rows evaluated.
    #[serde(rename = "T")]
    pub queries: usize,
    #[serde(rename = "k")]
    pub ratio: f64,
    #[serde(rename = "r", default = "default_radius", with = "crate::sads::radius_serde")]
    pub radius: f64,
    #[serde(default)]
    pub profile: RowProfile,
    #[serde(default = "default_query_gain")]
    pub query_gain: f64,
    #[serde(default)]
    pub weights: CostWeights,
}

fn default_radius() -> f64 {
    crate::sads::DEFAULT_RADIUS
}

fn default_query_gain() -> f64 {
    1.0
}

impl DseConfig {
    /// Defaults for the large decoder workload class.
    pub fn with_candidates(candidates: Vec<DseCandidate>, seq_len: usize, ratio: f64) -> Self {
        DseConfig {
            candidates,
            dse_alpha: 0.58,
            dse_beta: 0.63,
            seq_len,
            head_dim: 64,
            queries: 16,
            ratio,
            radius: default_radius(),
            profile: RowProfile::default(),
            query_gain: default_query_gain(),
            weights: CostWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DseRow {
    pub candidate: DseCandidate,
    /// Equivalent adds of the attention stage, exponentials excluded.
    pub c_formal: f64,
    /// Equivalent adds of segment selection plus the segment merge.
    pub c_sort: f64,
    /// Equivalent adds spent on exponentials in the attention stage.
    pub c_exp: f64,
    pub objective: f64,
    pub guard_events: u64,
    pub mean_hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseResult {
    pub best: DseCandidate,
    pub table: Vec<DseRow>,
}

/// Segment-aligned tiles: each segment's winners are tiled on their own and
/// the segments are streamed in sequence order, as they would be when the
/// attention stage consumes selections segment by segment.
pub fn segment_stream(
    sel: &TopKRow,
    k: &RealMatrix,
    v: &RealMatrix,
    block_cols: usize,
) -> Result<TileStream> {
    let mut tiles = Vec::new();
    for seg in &sel.segments {
        let mine: Vec<Scored> = sel
            .entries
            .iter()
            .filter(|e| (seg.start..seg.end).contains(&e.index))
            .copied()
            .collect();
        tiles.extend(build_tiles(&mine, k, v, block_cols, TileOrder::Descending)?.tiles);
    }
    Ok(TileStream {
        tiles,
        value_dim: v.cols(),
    })
}

/// Evaluates `J = C_formal + alpha * C_sort + beta * C_exp` for every candidate
/// on one seeded workload and returns the minimiser (smaller `n`, then smaller
/// `B_c`, on ties).
pub fn dse_search(cfg: &DseConfig, seed: u64) -> Result<DseResult> {
    if cfg.candidates.is_empty() {
        return Err(invalid("DSE needs at least one candidate"));
    }
    if cfg.dse_alpha < 0.0 || cfg.dse_beta < 0.0 {
        return Err(invalid("DSE weights must be non-negative"));
    }
    cfg.weights.validate()?;
    let attn = crate::numerics::AttentionConfig::new(cfg.seq_len, cfg.head_dim, cfg.queries, 16);
    let w = workload::generate(&attn, &cfg.profile, cfg.query_gain, seed)?;
    let (_, est, _) = estimate_scores(&w, crate::dlzs::DEFAULT_BITWIDTH)?;
    let keys = w.x.matmul(&w.wk)?;
    let values = w.x.matmul(&w.wv)?;
    let scale = 1.0 / (cfg.head_dim as f64).sqrt();

    let mut candidates = cfg.candidates.clone();
    candidates.sort();
    candidates.dedup();
    let mut table = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if cand.block_cols == 0 {
            return Err(invalid("B_c must be positive"));
        }
        let params = SadsParams::new(cand.segments, cfg.ratio, cfg.radius);
        let mut sort = OpCounters::ZERO;
        let mut attend = OpCounters::ZERO;
        let mut guard_events = 0;
        let mut hits = 0.0;
        for t in 0..cfg.queries {
            let sel = sads_select(est.row(t), &params)?;
            sort += sel.counters;
            sort.cmp += sel.merge_comparisons;
            let stream = segment_stream(&sel, &keys, &values, cand.block_cols)?;
            let mut acc = SoftmaxAccumulator::empty(values.cols());
            let stats = absorb_stream(&mut acc, w.q.row(t), &stream, scale, AttentionMode::SufaDesc, &mut attend);
            acc.finalize(&mut attend);
            guard_events += stats.guard_events;
            let true_row: Vec<f64> = (0..keys.rows())
                .map(|j| scale * crate::numerics::dot(w.q.row(t), keys.row(j)))
                .collect();
            hits += crate::sads::hit_rate(
                &sel.indices(),
                &crate::sads::exact_topk(&true_row, params.total_quota(keys.rows())),
            );
        }
        let exp_only = OpCounters {
            exp: attend.exp,
            ..OpCounters::ZERO
        };
        let c_exp = normalized_complexity(&exp_only, &cfg.weights);
        let c_formal = normalized_complexity(&attend, &cfg.weights) - c_exp;
        let c_sort = normalized_complexity(&sort, &cfg.weights);
        table.push(DseRow {
            candidate: cand,
            c_formal,
            c_sort,
            c_exp,
            objective: c_formal + cfg.dse_alpha * c_sort + cfg.dse_beta * c_exp,
            guard_events,
            mean_hit_rate: hits / cfg.queries.max(1) as f64,
        });
    }
    let best = table
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.candidate.cmp(&b.candidate)))
        .expect("non-empty table")
        .candidate;
    Ok(DseResult { best, table })
}
