//! Segmented top-k selection with radius pruning around each segment maximum.
//!
//! A row is cut into `n` contiguous segments. Each segment finds its maximum
//! `A`, discards every element further than `r` below it, and extracts its
//! quota from the survivors by repeated selection. The per-segment winners are
//! merged into one list sorted by descending estimated score, which is the
//! order the sorted-update attention engine consumes.
//!
//! Comparison accounting: the max search costs `len - 1` comparisons, and every
//! extraction pass scans the full surviving set once (one comparison per
//! survivor). The radius test is a subtraction plus a sign check and is tallied
//! as an add.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::OpCounters;

/// Default sphere radius in score units.
pub const DEFAULT_RADIUS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SadsParams {
    /// Number of contiguous sub-segments.
    #[serde(rename = "n")]
    pub segments: usize,
    /// Retained fraction of the row, in `(0, 1]`.
    #[serde(rename = "k")]
    pub ratio: f64,
    /// Pruning radius; `f64::INFINITY` disables pruning.
    #[serde(rename = "r", default = "default_radius", with = "radius_serde")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

/// JSON has no infinity, so an unbounded radius is written as `null`.
pub mod radius_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_finite() {
            s.serialize_f64(*r)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl SadsParams {
    pub fn new(segments: usize, ratio: f64, radius: f64) -> Self {
        Self {
            segments,
            ratio,
            radius,
        }
    }

    /// Single segment, no pruning: plain top-k.
    pub fn exact(ratio: f64) -> Self {
        Self::new(1, ratio, f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(invalid(format!("k must be in (0, 1], got {}", self.ratio)));
        }
        if self.radius.is_nan() || self.radius <= 0.0 {
            return Err(invalid(format!("r must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    /// Total number of retained columns for a row of length `len`.
    pub fn total_quota(&self, len: usize) -> usize {
        (self.ratio * len as f64).round() as usize
    }
}

/// One retained column and its estimated score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub index: usize,
    pub score: f64,
}

/// Descending by score, lowest index first on ties.
pub fn by_score_desc(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.index.cmp(&b.index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSelection {
    /// Selected entries with segment-local indices, descending.
    pub selected: Vec<Scored>,
    pub comparisons: u64,
    /// Size of the feasible set inside the radius.
    pub feasible: usize,
    /// Segment maximum, `None` for an empty segment.
    pub max: Option<f64>,
}

/// Top-`m` of one segment restricted to the sphere `max - x <= r`.
///
/// When the sphere holds fewer than `m` elements, all of them are returned.
pub fn segment_topk(seg: &[f64], m: usize, r: f64) -> SegmentSelection {
    let mut counters = OpCounters::ZERO;
    segment_topk_counted(seg, m, r, &mut counters)
}

fn segment_topk_counted(seg: &[f64], m: usize, r: f64, counters: &mut OpCounters) -> SegmentSelection {
    if m == 0 || seg.is_empty() {
        return SegmentSelection {
            selected: Vec::new(),
            comparisons: 0,
            feasible: 0,
            max: seg.iter().copied().reduce(f64::max),
        };
    }
    let mut comparisons = (seg.len() - 1) as u64;
    let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    counters.add += seg.len() as u64;
    let feasible: Vec<usize> = (0..seg.len()).filter(|&i| max - seg[i] <= r).collect();

    let take = m.min(feasible.len());
    let mut taken = vec![false; feasible.len()];
    let mut selected = Vec::with_capacity(take);
    for _ in 0..take {
        comparisons += feasible.len() as u64;
        let mut best: Option<usize> = None;
        for (slot, &i) in feasible.iter().enumerate() {
            if taken[slot] {
                continue;
            }
            // Strict > keeps the lowest index among ties.
            if best.is_none_or(|b| seg[i] > seg[feasible[b]]) {
                best = Some(slot);
            }
        }
        let slot = best.expect("take <= feasible.len()");
        taken[slot] = true;
        selected.push(Scored {
            index: feasible[slot],
            score: seg[feasible[slot]],
        });
    }
    counters.cmp += comparisons;
    SegmentSelection {
        selected,
        comparisons,
        feasible: feasible.len(),
        max: Some(max),
    }
}

/// Selection result for one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    /// Retained columns, descending by estimated score.
    pub entries: Vec<Scored>,
    /// Comparisons spent in segment max search and extraction.
    pub comparisons: u64,
    /// Comparisons a tournament merge of the sorted segment lists needs.
    pub merge_comparisons: u64,
    /// Measured fraction of the row that survived radius pruning.
    pub rho: f64,
    /// Columns requested but unavailable because the sphere was too small.
    pub shortfall: usize,
    pub counters: OpCounters,
    /// Per segment: (start column, end column, maximum, quota).
    #[serde(skip)]
    pub segments: Vec<SegmentInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentInfo {
    pub start: usize,
    pub end: usize,
    pub max: f64,
    pub quota: usize,
}

impl TopKRow {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A selection that keeps every column of `row`, descending.
    pub fn dense(row: &[f64]) -> TopKRow {
        let mut entries: Vec<Scored> = row
            .iter()
            .enumerate()
            .map(|(index, &score)| Scored { index, score })
            .collect();
        entries.sort_by(by_score_desc);
        TopKRow {
            entries,
            comparisons: 0,
            merge_comparisons: 0,
            rho: 1.0,
            shortfall: 0,
            counters: OpCounters::ZERO,
            segments: Vec::new(),
        }
    }
}

/// Contiguous segment bounds; the last segment absorbs the remainder.
pub fn segment_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    let base = len / n;
    (0..n)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == n { len } else { start + base };
            (start, end)
        })
        .collect()
}

/// Per-segment quotas: `round(k S)` split as evenly as possible, so each
/// segment gets `floor` or `ceil` of `k S / n` and the total is exact.
pub fn segment_quotas(len: usize, p: &SadsParams) -> Result<Vec<usize>> {
    let per = p.ratio * len as f64 / p.segments as f64;
    if per < 1.0 {
        return Err(invalid(format!(
            "k*S/n = {per:.3} < 1; increase k or reduce n"
        )));
    }
    let total = p.total_quota(len);
    let n = p.segments;
    Ok((0..n).map(|i| (i + 1) * total / n - i * total / n).collect())
}

/// Segmented, radius-pruned top-k of one estimated-score row.
pub fn sads_select(row: &[f64], p: &SadsParams) -> Result<TopKRow> {
    p.validate()?;
    if row.is_empty() {
        return Err(invalid("empty row"));
    }
    if p.segments > row.len() {
        return Err(invalid(format!("n = {} exceeds row length {}", p.segments, row.len())));
    }
    let quotas = segment_quotas(row.len(), p)?;
    let mut counters = OpCounters::ZERO;
    let mut entries = Vec::with_capacity(p.total_quota(row.len()));
    let mut comparisons = 0;
    let mut feasible = 0;
    let mut shortfall = 0;
    let mut segments = Vec::with_capacity(p.segments);
    for ((start, end), quota) in segment_bounds(row.len(), p.segments).into_iter().zip(quotas) {
        let seg = &row[start..end];
        let quota = quota.min(seg.len());
        let sel = segment_topk_counted(seg, quota, p.radius, &mut counters);
        comparisons += sel.comparisons;
        feasible += sel.feasible;
        shortfall += quota - sel.selected.len();
        segments.push(SegmentInfo {
            start,
            end,
            max: sel.max.unwrap_or(f64::NEG_INFINITY),
            quota,
        });
        entries.extend(sel.selected.into_iter().map(|s| Scored {
            index: s.index + start,
            score: s.score,
        }));
    }
    entries.sort_by(by_score_desc);
    let merge_comparisons = entries.len() as u64 * (p.segments as f64).log2().ceil() as u64;
    if shortfall > 0 {
        log::debug!("sads: sphere held {shortfall} fewer columns than the quota");
    }
    Ok(TopKRow {
        entries,
        comparisons,
        merge_comparisons,
        rho: feasible as f64 / row.len() as f64,
        shortfall,
        counters,
        segments,
    })
}

/// Exact top-`m` indices, descending, lowest index first on ties.
pub fn exact_topk(row: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// `|selected ∩ oracle| / |oracle|`.
pub fn hit_rate(selected: &[usize], oracle: &[usize]) -> f64 {
    if oracle.is_empty() {
        return 1.0;
    }
    let set: std::collections::BTreeSet<usize> = selected.iter().copied().collect();
    let hits = oracle.iter().filter(|i| set.contains(i)).count();
    hits as f64 / oracle.len() as f64
}

/// Selection-sort baseline: `m` passes over the full row.
pub fn full_selection_comparisons(len: usize, m: usize) -> u64 {
    (len * m) as u64
}

/// Per-row selections for a score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKSelection {
    pub rows: Vec<TopKRow>,
}

impl TopKSelection {
    pub fn select(scores: &crate::numerics::RealMatrix, p: &SadsParams) -> Result<TopKSelection> {
        let rows = (0..scores.rows())
            .map(|i| sads_select(scores.row(i), p))
            .collect::<Result<_>>()?;
        Ok(TopKSelection { rows })
    }

    pub fn dense(scores: &crate::numerics::RealMatrix) -> TopKSelection {
        TopKSelection {
            rows: (0..scores.rows()).map(|i| TopKRow::dense(scores.row(i))).collect(),
        }
    }

    pub fn counters(&self) -> OpCounters {
        self.rows.iter().map(|r| r.counters).sum()
    }

    pub fn comparisons(&self) -> u64 {
        self.rows.iter().map(|r| r.comparisons).sum()
    }

    pub fn mean_rho(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.rho).sum::<f64>() / self.rows.len() as f64
    }
}
