//! Tiled attention over a retained column set with four update policies.
//!
//! * `Vanilla`: gather every retained column, one softmax, one pass over V.
//! * `Fa2`: classic online softmax. Every tile after the first compares its row
//!   max with the running max and rescales `l` and `o`.
//! * `SufaDesc`: tiles arrive in descending estimated-max order, so the max of
//!   the first tile is taken as final. Later tiles skip the max search and the
//!   rescale. If a later score does exceed the running max (an estimation
//!   error) the tile falls back to a single rescale step and a guard event is
//!   recorded.
//! * `SufaAsc`: tiles arrive in ascending order; the running max moves at every
//!   step, which costs the same rescale as `Fa2`.
//!
//! Counting conventions (per query row):
//! * score: `d_h + 1` muls (dot product plus scaling) and `d_h - 1` adds;
//! * a max reduction over a tile charges one comparison per element, and the
//!   merge with the running max charges one more;
//! * `exp(s - m)`: one add and one exp per element; the sign test that detects
//!   a guard reuses that subtraction and is free;
//! * rescale: one add, one exp, `d_h + 1` muls;
//! * final normalisation: `d_h` divisions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::numerics::{dot, OpCounters, RealMatrix};
use crate::sads::{by_score_desc, Scored, TopKRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Vanilla,
    Fa2,
    SufaDesc,
    SufaAsc,
}

impl AttentionMode {
    pub const ALL: [AttentionMode; 4] = [
        AttentionMode::Vanilla,
        AttentionMode::Fa2,
        AttentionMode::SufaDesc,
        AttentionMode::SufaAsc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttentionMode::Vanilla => "vanilla",
            AttentionMode::Fa2 => "fa2",
            AttentionMode::SufaDesc => "sufa_desc",
            AttentionMode::SufaAsc => "sufa_asc",
        }
    }

    /// Tile order each tiled mode expects.
    pub fn tile_order(&self) -> TileOrder {
        match self {
            AttentionMode::SufaAsc => TileOrder::Ascending,
            _ => TileOrder::Descending,
        }
    }
}

impl std::str::FromStr for AttentionMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        AttentionMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown attention mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileOrder {
    Descending,
    Ascending,
    /// Keep the selection's order as given.
    Given,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub columns: Vec<usize>,
    pub est_scores: Vec<f64>,
    pub keys: RealMatrix,
    pub values: RealMatrix,
    pub est_max: f64,
}

impl Tile {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Immutable sequence of gathered tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TileStream {
    pub tiles: Vec<Tile>,
    pub value_dim: usize,
}

impl TileStream {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn columns(&self) -> usize {
        self.tiles.iter().map(Tile::len).sum()
    }
}

/// Orders the retained columns and groups them into tiles of at most `block_cols`.
pub fn build_tiles(
    sel: &[Scored],
    k: &RealMatrix,
    v: &RealMatrix,
    block_cols: usize,
    order: TileOrder,
) -> Result<TileStream> {
    if block_cols == 0 {
        return Err(invalid("B_c must be positive"));
    }
    if k.rows() != v.rows() {
        return Err(shape(format!("K has {} rows but V has {}", k.rows(), v.rows())));
    }
    if let Some(bad) = sel.iter().find(|s| s.index >= k.rows()) {
        return Err(shape(format!("column {} out of range for {} keys", bad.index, k.rows())));
    }
    let mut ordered = sel.to_vec();
    match order {
        TileOrder::Descending => ordered.sort_by(by_score_desc),
        TileOrder::Ascending => {
            ordered.sort_by(by_score_desc);
            ordered.reverse();
        }
        TileOrder::Given => {}
    }
    let tiles = ordered
        .chunks(block_cols)
        .map(|chunk| {
            let columns: Vec<usize> = chunk.iter().map(|s| s.index).collect();
            let est_scores: Vec<f64> = chunk.iter().map(|s| s.score).collect();
            Tile {
                keys: k.gather_rows(&columns),
                values: v.gather_rows(&columns),
                est_max: est_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                columns,
                est_scores,
            }
        })
        .collect();
    Ok(TileStream {
        tiles,
        value_dim: v.cols(),
    })
}

/// Running online-softmax state for one query row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxAccumulator {
    /// Running max; `-inf` before the first tile.
    pub m: f64,
    pub l: f64,
    pub o: Vec<f64>,
    pub guard_events: u64,
}

impl SoftmaxAccumulator {
    pub fn empty(dim: usize) -> Self {
        Self {
            m: f64::NEG_INFINITY,
            l: 0.0,
            o: vec![0.0; dim],
            guard_events: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.m == f64::NEG_INFINITY
    }

    /// Combines two partial states over disjoint column sets.
    pub fn merge(&self, other: &SoftmaxAccumulator) -> SoftmaxAccumulator {
        if other.is_empty() {
            let mut out = self.clone();
            out.guard_events += other.guard_events;
            return out;
        }
        if self.is_empty() {
            let mut out = other.clone();
            out.guard_events += self.guard_events;
            return out;
        }
        let m = self.m.max(other.m);
        let a = (self.m - m).exp();
        let b = (other.m - m).exp();
        SoftmaxAccumulator {
            m,
            l: self.l * a + other.l * b,
            o: self.o.iter().zip(&other.o).map(|(x, y)| x * a + y * b).collect(),
            guard_events: self.guard_events + other.guard_events,
        }
    }

    /// Counted cost of [`SoftmaxAccumulator::merge`] when both sides are live.
    pub fn merge_cost(dim: usize) -> OpCounters {
        OpCounters {
            cmp: 1,
            add: 2 + 1 + dim as u64,
            exp: 2,
            mul: 2 * (dim as u64 + 1),
            ..OpCounters::ZERO
        }
    }

    /// `o / l`, or zeros when nothing was absorbed.
    pub fn finalize(&self, counters: &mut OpCounters) -> Vec<f64> {
        if self.is_empty() {
            return vec![0.0; self.o.len()];
        }
        counters.div += self.o.len() as u64;
        self.o.iter().map(|v| v / self.l).collect()
    }
}

/// Cost and guard statistics of a tiled pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub tiles: u64,
    pub guard_events: u64,
    /// Comparisons spent merging tile maxima into the running max.
    pub max_merge_cmp: u64,
}

impl std::ops::AddAssign for StreamStats {
    fn add_assign(&mut self, rhs: StreamStats) {
        self.tiles += rhs.tiles;
        self.guard_events += rhs.guard_events;
        self.max_merge_cmp += rhs.max_merge_cmp;
    }
}

fn tile_scores(q: &[f64], tile: &Tile, scale: f64, c: &mut OpCounters) -> Vec<f64> {
    let d = q.len() as u64;
    let n = tile.len() as u64;
    c.mul += n * (d + 1);
    c.add += n * d.saturating_sub(1);
    (0..tile.len()).map(|j| scale * dot(q, tile.keys.row(j))).collect()
}

fn row_max(s: &[f64], c: &mut OpCounters) -> f64 {
    c.cmp += s.len() as u64;
    s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn rescale(acc: &mut SoftmaxAccumulator, m_new: f64, c: &mut OpCounters) {
    c.add += 1;
    c.exp += 1;
    c.mul += 1 + acc.o.len() as u64;
    let alpha = (acc.m - m_new).exp();
    acc.l *= alpha;
    for o in &mut acc.o {
        *o *= alpha;
    }
    acc.m = m_new;
}

fn accumulate(acc: &mut SoftmaxAccumulator, diffs: &[f64], tile: &Tile, c: &mut OpCounters) {
    let n = diffs.len() as u64;
    let dv = acc.o.len() as u64;
    c.exp += n;
    c.add += n;
    c.mul += n * dv;
    c.add += n * dv;
    for (j, &d) in diffs.iter().enumerate() {
        debug_assert!(d <= 0.0, "exp argument {d} above zero");
        let p = d.exp();
        acc.l += p;
        for (o, &v) in acc.o.iter_mut().zip(tile.values.row(j)) {
            *o += p * v;
        }
    }
}

fn absorb_rescaling(
    acc: &mut SoftmaxAccumulator,
    q: &[f64],
    tile: &Tile,
    scale: f64,
    c: &mut OpCounters,
    stats: &mut StreamStats,
) {
    let s = tile_scores(q, tile, scale, c);
    let tmax = row_max(&s, c);
    if acc.is_empty() {
        acc.m = tmax;
    } else {
        c.cmp += 1;
        stats.max_merge_cmp += 1;
        let m_new = acc.m.max(tmax);
        rescale(acc, m_new, c);
    }
    c.add += s.len() as u64;
    let diffs: Vec<f64> = s.iter().map(|x| x - acc.m).collect();
    accumulate(acc, &diffs, tile, c);
}

fn absorb_fixed_max(
    acc: &mut SoftmaxAccumulator,
    q: &[f64],
    tile: &Tile,
    scale: f64,
    c: &mut OpCounters,
    stats: &mut StreamStats,
) {
    let s = tile_scores(q, tile, scale, c);
    if acc.is_empty() {
        acc.m = row_max(&s, c);
    }
    c.add += s.len() as u64;
    let mut diffs: Vec<f64> = s.iter().map(|x| x - acc.m).collect();
    if diffs.iter().any(|&d| d > 0.0) {
        // The estimated order hid a larger score: rescale once and continue.
        acc.guard_events += 1;
        stats.guard_events += 1;
        let tmax = row_max(&s, c);
        c.cmp += 1;
        stats.max_merge_cmp += 1;
        rescale(acc, acc.m.max(tmax), c);
        c.add += s.len() as u64;
        diffs = s.iter().map(|x| x - acc.m).collect();
    }
    accumulate(acc, &diffs, tile, c);
}

/// Folds a tile stream into `acc` under the given tiled mode.
///
/// `acc` may already carry state from earlier streams (as it does when a query
/// chunk travels between compute units).
pub fn absorb_stream(
    acc: &mut SoftmaxAccumulator,
    q: &[f64],
    stream: &TileStream,
    scale: f64,
    mode: AttentionMode,
    counters: &mut OpCounters,
) -> StreamStats {
    let mut stats = StreamStats::default();
    for tile in stream.tiles.iter().filter(|t| !t.is_empty()) {
        stats.tiles += 1;
        match mode {
            AttentionMode::SufaDesc => absorb_fixed_max(acc, q, tile, scale, counters, &mut stats),
            _ => absorb_rescaling(acc, q, tile, scale, counters, &mut stats),
        }
    }
    stats
}

/// Output of one query row.
#[derive(Debug, Clone, PartialEq)]
pub struct AttendOutput {
    pub output: Vec<f64>,
    pub counters: OpCounters,
    pub stats: StreamStats,
}

fn attend_tiled(q: &[f64], tiles: &TileStream, scale: f64, mode: AttentionMode) -> AttendOutput {
    let mut counters = OpCounters::ZERO;
    let mut acc = SoftmaxAccumulator::empty(tiles.value_dim);
    let stats = absorb_stream(&mut acc, q, tiles, scale, mode, &mut counters);
    if tiles.is_empty() {
        log::warn!("attention over an empty selection; returning zeros");
    }
    let output = acc.finalize(&mut counters);
    AttendOutput {
        output,
        counters,
        stats,
    }
}

/// Classic online softmax over the stream, in stream order.
pub fn attend_fa2(q: &[f64], tiles: &TileStream, scale: f64) -> AttendOutput {
    attend_tiled(q, tiles, scale, AttentionMode::Fa2)
}

/// Sorted update for descending streams, with the rescale guard.
pub fn attend_sufa_desc(q: &[f64], tiles: &TileStream, scale: f64) -> AttendOutput {
    attend_tiled(q, tiles, scale, AttentionMode::SufaDesc)
}

/// Sorted update for ascending streams; rescales at every step.
pub fn attend_sufa_asc(q: &[f64], tiles: &TileStream, scale: f64) -> AttendOutput {
    attend_tiled(q, tiles, scale, AttentionMode::SufaAsc)
}

/// Gather plus a single softmax over the retained set.
pub fn attend_vanilla(q: &[f64], sel: &[Scored], k: &RealMatrix, v: &RealMatrix, scale: f64) -> Result<AttendOutput> {
    if q.len() != k.cols() {
        return Err(shape(format!("query has {} dims but K has {}", q.len(), k.cols())));
    }
    let mut counters = OpCounters::ZERO;
    if sel.is_empty() {
        log::warn!("attention over an empty selection; returning zeros");
        return Ok(AttendOutput {
            output: vec![0.0; v.cols()],
            counters,
            stats: StreamStats::default(),
        });
    }
    let cols: Vec<usize> = sel.iter().map(|s| s.index).collect();
    let tile = Tile {
        keys: k.gather_rows(&cols),
        values: v.gather_rows(&cols),
        est_scores: sel.iter().map(|s| s.score).collect(),
        est_max: f64::NAN,
        columns: cols,
    };
    let s = tile_scores(q, &tile, scale, &mut counters);
    let m = row_max(&s, &mut counters);
    counters.add += s.len() as u64;
    let diffs: Vec<f64> = s.iter().map(|x| x - m).collect();
    let mut acc = SoftmaxAccumulator::empty(v.cols());
    acc.m = m;
    accumulate(&mut acc, &diffs, &tile, &mut counters);
    let output = acc.finalize(&mut counters);
    Ok(AttendOutput {
        output,
        counters,
        stats: StreamStats::default(),
    })
}

/// Attends one query row over a selection under any mode.
pub fn attend_row(
    q: &[f64],
    sel: &TopKRow,
    k: &RealMatrix,
    v: &RealMatrix,
    scale: f64,
    mode: AttentionMode,
    block_cols: usize,
) -> Result<AttendOutput> {
    match mode {
        AttentionMode::Vanilla => attend_vanilla(q, &sel.entries, k, v, scale),
        _ => {
            if q.len() != k.cols() {
                return Err(shape(format!("query has {} dims but K has {}", q.len(), k.cols())));
            }
            let stream = build_tiles(&sel.entries, k, v, block_cols, mode.tile_order())?;
            Ok(attend_tiled(q, &stream, scale, mode))
        }
    }
}

/// Batch result over every query row.
#[derive(Debug, Clone, PartialEq)]
pub struct AttendBatch {
    pub output: RealMatrix,
    pub counters: OpCounters,
    pub stats: StreamStats,
}

pub fn attend_rows(
    q: &RealMatrix,
    selection: &[TopKRow],
    k: &RealMatrix,
    v: &RealMatrix,
    scale: f64,
    mode: AttentionMode,
    block_cols: usize,
) -> Result<AttendBatch> {
    if selection.len() != q.rows() {
        return Err(shape(format!(
            "{} selection rows for {} queries",
            selection.len(),
            q.rows()
        )));
    }
    let mut out = RealMatrix::zeros(q.rows(), v.cols());
    let mut counters = OpCounters::ZERO;
    let mut stats = StreamStats::default();
    for (i, sel) in selection.iter().enumerate() {
        let r = attend_row(q.row(i), sel, k, v, scale, mode, block_cols)?;
        out.row_mut(i).copy_from_slice(&r.output);
        counters += r.counters;
        stats += r.stats;
    }
    Ok(AttendBatch {
        output: out,
        counters,
        stats,
    })
}

/// One line of the counter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterRecord {
    pub mode: String,
    #[serde(rename = "S")]
    pub seq_len: usize,
    pub d_h: usize,
    #[serde(rename = "B_c")]
    pub block_cols: usize,
    #[serde(rename = "T_c")]
    pub col_tiles: usize,
    pub n_add: u64,
    pub n_mul: u64,
    pub n_cmp: u64,
    pub n_div: u64,
    pub n_exp: u64,
    pub n_shift: u64,
    pub guard_events: u64,
}

impl CounterRecord {
    pub fn new(
        mode: AttentionMode,
        seq_len: usize,
        head_dim: usize,
        block_cols: usize,
        col_tiles: usize,
        c: OpCounters,
        guard_events: u64,
    ) -> Self {
        Self {
            mode: mode.name().to_string(),
            seq_len,
            d_h: head_dim,
            block_cols,
            col_tiles,
            n_add: c.add,
            n_mul: c.mul,
            n_cmp: c.cmp,
            n_div: c.div,
            n_exp: c.exp,
            n_shift: c.shift,
            guard_events,
        }
    }
}

/// Writes counter records as CSV with a header row.
pub fn write_counter_csv<W: std::io::Write>(w: W, records: &[CounterRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(scores: &[f64]) -> Vec<Scored> {
        scores
            .iter()
            .enumerate()
            .map(|(index, &score)| Scored { index, score })
            .collect()
    }

    /// Keys chosen so that `q . k_j = target_j` with `q = [1, 0]`.
    fn fixture(targets: &[f64]) -> (Vec<f64>, RealMatrix, RealMatrix) {
        let k = RealMatrix::from_rows(&targets.iter().map(|&t| vec![t, 0.5]).collect::<Vec<_>>()).unwrap();
        let v = RealMatrix::from_rows(
            &(0..targets.len())
                .map(|j| vec![j as f64, (j * j) as f64 - 1.0])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        (vec![1.0, 0.0], k, v)
    }

    fn reference(q: &[f64], k: &RealMatrix, v: &RealMatrix, cols: &[usize]) -> Vec<f64> {
        let s: Vec<f64> = cols.iter().map(|&c| dot(q, k.row(c))).collect();
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = w.iter().sum();
        (0..v.cols())
            .map(|d| cols.iter().zip(&w).map(|(&c, wi)| wi * v.get(c, d)).sum::<f64>() / z)
            .collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn tiles_group_by_score() {
        let (_, k, v) = fixture(&[2.0, 1.0, 0.5, 0.1]);
        let sel = scored(&[0.1, 2.0, 1.0, 0.5]);
        let desc = build_tiles(&sel, &k, &v, 2, TileOrder::Descending).unwrap();
        assert_eq!(desc.len(), 2);
        assert_eq!(desc.tiles[0].columns, vec![1, 2]);
        let one = build_tiles(&sel, &k, &v, 8, TileOrder::Descending).unwrap();
        assert_eq!(one.len(), 1);
        let asc = build_tiles(&sel, &k, &v, 1, TileOrder::Ascending).unwrap();
        let d1 = build_tiles(&sel, &k, &v, 1, TileOrder::Descending).unwrap();
        let a: Vec<usize> = asc.tiles.iter().flat_map(|t| t.columns.clone()).collect();
        let mut d: Vec<usize> = d1.tiles.iter().flat_map(|t| t.columns.clone()).collect();
        d.reverse();
        assert_eq!(a, d);
        assert!(build_tiles(&[], &k, &v, 2, TileOrder::Descending).unwrap().is_empty());
        assert!(build_tiles(&sel, &k, &v, 0, TileOrder::Descending).is_err());
    }

    #[test]
    fn fa2_single_tile_matches_vanilla() {
        let (q, k, v) = fixture(&[2.0, 1.0, 0.5, 0.1]);
        let sel = scored(&[2.0, 1.0, 0.5, 0.1]);
        let stream = build_tiles(&sel, &k, &v, 4, TileOrder::Descending).unwrap();
        let fa = attend_fa2(&q, &stream, 1.0);
        let va = attend_vanilla(&q, &sel, &k, &v, 1.0).unwrap();
        assert!(close(&fa.output, &va.output, 1e-15));
        assert_eq!(fa.counters, va.counters);
    }

    #[test]
    fn two_tiles_match_reference() {
        let (q, k, v) = fixture(&[2.0, 1.0, 0.5, 0.1]);
        let sel = scored(&[2.0, 1.0, 0.5, 0.1]);
        let want = reference(&q, &k, &v, &[0, 1, 2, 3]);
        let stream = build_tiles(&sel, &k, &v, 2, TileOrder::Descending).unwrap();
        assert!(close(&attend_fa2(&q, &stream, 1.0).output, &want, 1e-12));
        assert!(close(&attend_sufa_desc(&q, &stream, 1.0).output, &want, 1e-12));
        let asc = build_tiles(&sel, &k, &v, 2, TileOrder::Ascending).unwrap();
        assert!(close(&attend_sufa_asc(&q, &asc, 1.0).output, &want, 1e-12));
    }

    #[test]
    fn desc_without_estimation_error_needs_no_guard() {
        let (q, k, v) = fixture(&[2.0, 1.0, 0.5, 0.1, -1.0, -3.0]);
        let sel = scored(&[2.0, 1.0, 0.5, 0.1, -1.0, -3.0]);
        let stream = build_tiles(&sel, &k, &v, 2, TileOrder::Descending).unwrap();
        let desc = attend_sufa_desc(&q, &stream, 1.0);
        let fa2 = attend_fa2(&q, &stream, 1.0);
        assert_eq!(desc.stats.guard_events, 0);
        assert_eq!(desc.stats.max_merge_cmp, 0);
        assert_eq!(fa2.stats.max_merge_cmp, 2);
        let dh = 2;
        assert_eq!(fa2.counters.mul - desc.counters.mul, 2 * (dh + 1));
        assert_eq!(fa2.counters.exp - desc.counters.exp, 2);
    }

    #[test]
    fn guard_fires_when_estimate_hides_the_max() {
        // True scores: column 3 is the largest, but its estimate ranks it last.
        let (q, k, v) = fixture(&[1.0, 0.5, 0.2, 4.0]);
        let sel = scored(&[1.0, 0.5, 0.2, -1.0]);
        let stream = build_tiles(&sel, &k, &v, 2, TileOrder::Descending).unwrap();
        let desc = attend_sufa_desc(&q, &stream, 1.0);
        assert_eq!(desc.stats.guard_events, 1);
        let want = reference(&q, &k, &v, &[0, 1, 2, 3]);
        assert!(close(&desc.output, &want, 1e-12));
    }

    #[test]
    fn asc_single_tile_counts_like_desc() {
        let (q, k, v) = fixture(&[0.3, 0.2]);
        let sel = scored(&[0.3, 0.2]);
        let d = attend_sufa_desc(&q, &build_tiles(&sel, &k, &v, 4, TileOrder::Descending).unwrap(), 1.0);
        let a = attend_sufa_asc(&q, &build_tiles(&sel, &k, &v, 4, TileOrder::Ascending).unwrap(), 1.0);
        assert_eq!(d.counters, a.counters);
    }

    #[test]
    fn vanilla_edge_cases() {
        let (q, k, v) = fixture(&[0.3, 0.2, 0.9]);
        let one = attend_vanilla(&q, &[Scored { index: 2, score: 0.0 }], &k, &v, 1.0).unwrap();
        assert_eq!(one.output, v.row(2).to_vec());
        let none = attend_vanilla(&q, &[], &k, &v, 1.0).unwrap();
        assert_eq!(none.output, vec![0.0, 0.0]);
        let empty = attend_fa2(&q, &build_tiles(&[], &k, &v, 2, TileOrder::Descending).unwrap(), 1.0);
        assert_eq!(empty.output, vec![0.0, 0.0]);
        assert!(attend_vanilla(&[1.0], &[], &k, &v, 1.0).is_err());
    }

    #[test]
    fn accumulator_merge_is_symmetric() {
        let (q, k, v) = fixture(&[0.3, 2.2, -0.4, 1.0]);
        let part = |cols: &[usize]| {
            let sel: Vec<Scored> = cols.iter().map(|&c| Scored { index: c, score: 0.0 }).collect();
            let stream = build_tiles(&sel, &k, &v, 8, TileOrder::Given).unwrap();
            let mut acc = SoftmaxAccumulator::empty(2);
            absorb_stream(&mut acc, &q, &stream, 1.0, AttentionMode::Fa2, &mut OpCounters::default());
            acc
        };
        let (a, b) = (part(&[0, 1]), part(&[2, 3]));
        let ab = a.merge(&b).finalize(&mut OpCounters::default());
        let ba = b.merge(&a).finalize(&mut OpCounters::default());
        let want = reference(&q, &k, &v, &[0, 1, 2, 3]);
        assert!(close(&ab, &want, 1e-14));
        assert!(close(&ba, &want, 1e-14));
        let e = SoftmaxAccumulator::empty(2);
        assert_eq!(a.merge(&e), a);
        assert_eq!(e.merge(&a), a);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in AttentionMode::ALL {
            assert_eq!(m.name().parse::<AttentionMode>().unwrap(), m);
        }
        assert!("fa3".parse::<AttentionMode>().is_err());
    }

    #[test]
    fn counter_csv_header() {
        let mut buf = Vec::new();
        let rec = CounterRecord::new(AttentionMode::Fa2, 64, 8, 16, 4, OpCounters::ZERO, 0);
        write_counter_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mode,S,d_h,B_c,T_c,n_add,n_mul,n_cmp,n_div,n_exp,n_shift,guard_events\n"));
    }
}
