//! Distributed attention on the mesh, and the KV-rotating ring baseline.
//!
//! Queries are cut into `rows * cols` chunks and tokens into `cols`
//! partitions; the CUs of mesh column `c` hold the keys and values of
//! partition `c`. In DRAttention each mesh row runs the ring schedule over its
//! `cols` query chunks, and every compute step folds the local partition into
//! the chunk's softmax accumulator. The baseline keeps queries in place and
//! rotates the partitions instead.
//!
//! Selection happens once, up front, on the whole sequence; the mesh only
//! distributes the attention stage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mrca::{mrca_schedule, MrcaSchedule};
use super::{MeshConfig, ELEMENT_BYTES};
use crate::cost::{normalized_complexity, CostWeights};
use crate::error::{invalid, Error, Result};
use crate::numerics::{OpCounters, RealMatrix};
use crate::pipeline::{estimate_scores, PipelineParams};
use crate::sads::{Scored, TopKRow, TopKSelection};
use crate::sufa::{absorb_stream, build_tiles, AttentionMode, SoftmaxAccumulator};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Replicate,
    Compute,
    Merge,
}

/// One trace line. CU and chunk ids are global and 0-based (`row * cols + col`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: usize,
    pub kind: EventKind,
    pub src: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dest: Option<usize>,
    pub chunk: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Load,
    Ring,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: usize,
    pub phase: Phase,
    pub compute_time: f64,
    pub comm_time: f64,
    pub step_time: f64,
    pub link_bytes: u64,
    pub work: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mesh: MeshConfig,
    pub steps: Vec<StepReport>,
    pub total_latency: f64,
    /// Query chunks on the ring, accumulators included.
    pub q_ring_bytes: u64,
    /// Accumulator share of `q_ring_bytes`.
    pub accumulator_bytes: u64,
    pub kv_ring_bytes: u64,
    /// Accumulators sent home for the final merge.
    pub merge_bytes: u64,
    pub dram_bytes: u64,
    pub energy: f64,
    /// Equivalent additions.
    pub total_work: f64,
    /// Equivalent additions per second.
    pub throughput: f64,
    /// Query payload of one ring message, accumulator excluded.
    pub q_payload_bytes: u64,
    /// Key plus value payload of one baseline ring message.
    pub kv_payload_bytes: u64,
}

impl SimReport {
    pub fn link_bytes(&self) -> u64 {
        self.q_ring_bytes + self.kv_ring_bytes + self.merge_bytes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshRun {
    /// Attention output for the original (unpadded) query rows.
    pub output: RealMatrix,
    /// Attention-stage counters summed over all CUs.
    pub counters: OpCounters,
    pub report: SimReport,
    pub trace: Vec<TraceEvent>,
}

/// Everything both dataflows share: padded operands and per-partition
/// selections.
struct Prepared {
    q: RealMatrix,
    keys: RealMatrix,
    values: RealMatrix,
    /// `parts[i][c]`: retained entries of query row `i` inside partition `c`.
    parts: Vec<Vec<Vec<Scored>>>,
    scale: f64,
    queries: usize,
    chunk_rows: usize,
    mode: AttentionMode,
    block_cols: usize,
    load: StepReport,
    dram_bytes: u64,
    kv_work: f64,
    q_payload: u64,
    kv_payload: u64,
    acc_payload: u64,
}

fn pad_rows(m: &RealMatrix, rows: usize) -> RealMatrix {
    if m.rows() == rows {
        return m.clone();
    }
    let mut out = RealMatrix::zeros(rows, m.cols());
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(m.row(i));
    }
    out
}

fn padded_len(len: usize, unit: usize, pad: bool, what: &str) -> Result<usize> {
    if len % unit == 0 {
        return Ok(len);
    }
    if !pad {
        return Err(invalid(format!("{what} = {len} is not divisible by {unit}; enable padding")));
    }
    Ok(len.div_ceil(unit) * unit)
}

fn prepare(mesh: &MeshConfig, w: &Workload, p: &PipelineParams, pad: bool) -> Result<Prepared> {
    mesh.validate()?;
    p.validate()?;
    if p.mode == AttentionMode::Vanilla {
        return Err(invalid("the mesh runs tiled attention; vanilla mode is single-node only"));
    }
    let (r, c) = (mesh.rows, mesh.cols);
    let queries = w.q.rows();
    let seq = w.x.rows();
    let d = w.q.cols();
    let h = w.x.cols();
    let t_pad = padded_len(queries, r * c, pad, "query count")?;
    let s_pad = padded_len(seq, c, pad, "sequence length")?;

    let (_, est, _) = estimate_scores(w, p.bitwidth)?;
    let selection = TopKSelection::select(&est, &p.sads)?;
    let keys = pad_rows(&w.x.matmul(&w.wk)?, s_pad);
    let values = pad_rows(&w.x.matmul(&w.wv)?, s_pad);
    let q = pad_rows(&w.q, t_pad);

    let part_len = s_pad / c;
    let empty = TopKRow::dense(&[]);
    let parts: Vec<Vec<Vec<Scored>>> = (0..t_pad)
        .map(|i| {
            let row = selection.rows.get(i).unwrap_or(&empty);
            (0..c)
                .map(|pc| {
                    row.entries
                        .iter()
                        .filter(|e| e.index / part_len == pc)
                        .copied()
                        .collect()
                })
                .collect()
        })
        .collect();

    // Keys and values are generated on demand for tokens some query retained.
    let weights = CostWeights::default();
    let per_token = OpCounters {
        mul: 2 * (h * d) as u64,
        add: 2 * (h * d) as u64,
        ..OpCounters::ZERO
    };
    let mut needed = vec![false; s_pad];
    for row in &selection.rows {
        for e in &row.entries {
            needed[e.index] = true;
        }
    }
    let col_work: Vec<f64> = (0..c)
        .map(|pc| {
            let n = needed[pc * part_len..(pc + 1) * part_len].iter().filter(|&&b| b).count();
            normalized_complexity(&per_token.scaled(n as u64), &weights)
        })
        .collect();
    let kv_work: f64 = col_work.iter().sum();
    let kv_time = col_work.iter().copied().fold(0.0, f64::max) / r as f64 / mesh.cu_throughput;

    let dram_bytes = (s_pad * h + 2 * h * d + t_pad * d) as u64 * ELEMENT_BYTES;
    let dram_time = mesh.dram_latency + dram_bytes as f64 / mesh.dram_bandwidth;
    let load = StepReport {
        t: 0,
        phase: Phase::Load,
        compute_time: kv_time,
        comm_time: dram_time,
        step_time: dram_time + kv_time,
        link_bytes: 0,
        work: kv_work,
        energy: (dram_bytes * 8) as f64 * mesh.dram_energy + kv_work * mesh.cu_energy,
    };

    let chunk_rows = t_pad / (r * c);
    Ok(Prepared {
        scale: 1.0 / (d as f64).sqrt(),
        queries,
        chunk_rows,
        mode: p.mode,
        block_cols: p.block_cols,
        load,
        dram_bytes,
        kv_work,
        q_payload: (chunk_rows * d) as u64 * ELEMENT_BYTES,
        kv_payload: 2 * (part_len * d) as u64 * ELEMENT_BYTES,
        acc_payload: (chunk_rows * (d + 2)) as u64 * ELEMENT_BYTES,
        q,
        keys,
        values,
        parts,
    })
}

impl Prepared {
    fn empty_accs(&self) -> Vec<SoftmaxAccumulator> {
        vec![SoftmaxAccumulator::empty(self.values.cols()); self.chunk_rows]
    }

    /// Folds partition `part` into the accumulators of global chunk `chunk`.
    fn absorb(&self, chunk: usize, part: usize, accs: &mut [SoftmaxAccumulator]) -> Result<OpCounters> {
        let mut c = OpCounters::ZERO;
        for (k, acc) in accs.iter_mut().enumerate() {
            let i = chunk * self.chunk_rows + k;
            let stream = build_tiles(
                &self.parts[i][part],
                &self.keys,
                &self.values,
                self.block_cols,
                self.mode.tile_order(),
            )?;
            absorb_stream(acc, self.q.row(i), &stream, self.scale, self.mode, &mut c);
        }
        Ok(c)
    }

    fn finalize(&self, chunk: usize, accs: &[SoftmaxAccumulator], out: &mut RealMatrix, c: &mut OpCounters) {
        for (k, acc) in accs.iter().enumerate() {
            let i = chunk * self.chunk_rows + k;
            let o = acc.finalize(c);
            if i < self.queries {
                out.row_mut(i).copy_from_slice(&o);
            }
        }
    }
}

fn merge_into(dst: &mut [SoftmaxAccumulator], src: &[SoftmaxAccumulator], c: &mut OpCounters) {
    for (a, b) in dst.iter_mut().zip(src) {
        if !a.is_empty() && !b.is_empty() {
            *c += SoftmaxAccumulator::merge_cost(a.o.len());
        }
        *a = a.merge(b);
    }
}

struct Copy {
    accs: Vec<SoftmaxAccumulator>,
    /// Carries partial results (as opposed to a bare query chunk).
    carries: bool,
}

/// Per-step bookkeeping shared by both dataflows.
struct Ledger<'m> {
    mesh: &'m MeshConfig,
    weights: CostWeights,
    steps: Vec<StepReport>,
    trace: Vec<TraceEvent>,
    counters: OpCounters,
}

impl<'m> Ledger<'m> {
    fn new(mesh: &'m MeshConfig, load: StepReport) -> Self {
        Ledger {
            mesh,
            weights: CostWeights::default(),
            steps: vec![load],
            trace: Vec::new(),
            counters: OpCounters::ZERO,
        }
    }

    fn work(&self, c: &OpCounters) -> f64 {
        normalized_complexity(c, &self.weights)
    }

    /// `cu_work` per CU, and `(bytes, hops)` per message.
    fn close_step(&mut self, t: usize, phase: Phase, cu_work: &[f64], messages: &[(u64, usize)]) {
        let work: f64 = cu_work.iter().sum();
        let compute_time = cu_work.iter().copied().fold(0.0, f64::max) / self.mesh.cu_throughput;
        let comm_time = messages
            .iter()
            .map(|&(b, h)| self.mesh.transfer_time(b, h))
            .fold(0.0, f64::max);
        let link_energy: f64 = messages.iter().map(|&(b, h)| self.mesh.link_energy_of(b, h)).sum();
        self.steps.push(StepReport {
            t,
            phase,
            compute_time,
            comm_time,
            step_time: compute_time.max(comm_time),
            link_bytes: messages.iter().map(|m| m.0).sum(),
            work,
            energy: link_energy + work * self.mesh.cu_energy,
        });
    }

    fn finish(self, prep: &Prepared, q_ring: u64, acc: u64, kv_ring: u64, merge: u64) -> (SimReport, Vec<TraceEvent>, OpCounters) {
        let total_latency: f64 = self.steps.iter().map(|s| s.step_time).sum();
        let total_work: f64 = self.steps.iter().map(|s| s.work).sum();
        debug_assert!((self.steps[0].work - prep.kv_work).abs() <= 1e-9 * prep.kv_work.max(1.0));
        let report = SimReport {
            mesh: *self.mesh,
            energy: self.steps.iter().map(|s| s.energy).sum(),
            throughput: if total_latency > 0.0 { total_work / total_latency } else { 0.0 },
            steps: self.steps,
            total_latency,
            q_ring_bytes: q_ring,
            accumulator_bytes: acc,
            kv_ring_bytes: kv_ring,
            merge_bytes: merge,
            dram_bytes: prep.dram_bytes,
            total_work,
            q_payload_bytes: prep.q_payload,
            kv_payload_bytes: prep.kv_payload,
        };
        (report, self.trace, self.counters)
    }
}

/// Distributed attention with query chunks circulating under the ring schedule.
pub fn run_drattention(mesh: &MeshConfig, w: &Workload, p: &PipelineParams, pad: bool) -> Result<MeshRun> {
    let prep = prepare(mesh, w, p, pad)?;
    let sched = mrca_schedule(mesh.cols)?;
    run_with_schedule(mesh, &prep, &sched)
}

fn run_with_schedule(mesh: &MeshConfig, prep: &Prepared, sched: &MrcaSchedule) -> Result<MeshRun> {
    let (rows, cols) = (mesh.rows, mesh.cols);
    let n = sched.n;
    let plan = match &sched.compute {
        Some(p) => p.clone(),
        None => super::mrca::assign_compute(sched)?,
    };
    let holdings = MrcaSchedule {
        compute: Some(plan.clone()),
        ..sched.clone()
    }
    .holdings()
    .expect("plan present");

    let mut ledger = Ledger::new(mesh, prep.load);
    let (mut q_ring, mut acc_bytes, mut merge_bytes) = (0u64, 0u64, 0u64);
    let gid = |r: usize, one_based: usize| r * cols + one_based - 1;

    // copies[r][(cu, chunk)], both 1-based within the ring.
    let mut copies: Vec<BTreeMap<(usize, usize), Copy>> = (0..rows)
        .map(|_| {
            (1..=n)
                .map(|j| {
                    let copy = Copy {
                        accs: prep.empty_accs(),
                        carries: false,
                    };
                    ((j, j), copy)
                })
                .collect()
        })
        .collect();
    let mut residuals: Vec<Vec<(usize, usize, Vec<SoftmaxAccumulator>)>> = vec![Vec::new(); rows];

    for (ti, step) in sched.steps.iter().enumerate() {
        let t = ti + 1;
        let mut cu_work = vec![0.0; rows * cols];
        let mut messages = Vec::new();
        for r in 0..rows {
            for j in 1..=n {
                let c = plan.chunk(j, t);
                let copy = copies[r]
                    .get_mut(&(j, c))
                    .ok_or(Error::ScheduleInfeasible { cu: j, step: t })?;
                let ops = prep.absorb(gid(r, c), j - 1, &mut copy.accs)?;
                copy.carries = true;
                cu_work[gid(r, j)] += ledger.work(&ops);
                ledger.counters += ops;
                ledger.trace.push(TraceEvent {
                    t,
                    kind: EventKind::Compute,
                    src: gid(r, j),
                    dest: None,
                    chunk: gid(r, c),
                    bytes: None,
                });
            }

            let mut arrivals: Vec<(usize, usize, Copy)> = Vec::new();
            let mut sent: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for s in &step.sends {
                let key = (s.src, s.chunk);
                let Some(local) = copies[r].get(&key) else {
                    continue;
                };
                let first = *sent.entry(key).and_modify(|k| *k += 1).or_insert(0) == 0;
                // Exactly one successor inherits the partial result: the local
                // copy when replicating, otherwise the first outgoing copy.
                let inherit = first && !step.replicate && local.carries;
                let copy = if inherit {
                    Copy {
                        accs: local.accs.clone(),
                        carries: true,
                    }
                } else {
                    Copy {
                        accs: prep.empty_accs(),
                        carries: false,
                    }
                };
                let bytes = prep.q_payload + if inherit { prep.acc_payload } else { 0 };
                q_ring += bytes;
                if inherit {
                    acc_bytes += prep.acc_payload;
                }
                messages.push((bytes, 1));
                ledger.trace.push(TraceEvent {
                    t,
                    kind: if step.replicate { EventKind::Replicate } else { EventKind::Send },
                    src: gid(r, s.src),
                    dest: Some(gid(r, s.dest)),
                    chunk: gid(r, s.chunk),
                    bytes: Some(bytes),
                });
                arrivals.push((s.dest, s.chunk, copy));
            }
            if !step.replicate {
                for key in sent.keys() {
                    copies[r].remove(key);
                }
            }
            for (dest, chunk, copy) in arrivals {
                match copies[r].get_mut(&(dest, chunk)) {
                    Some(existing) => {
                        if copy.carries {
                            let mut ops = OpCounters::ZERO;
                            merge_into(&mut existing.accs, &copy.accs, &mut ops);
                            existing.carries = true;
                            cu_work[gid(r, dest)] += ledger.work(&ops);
                            ledger.counters += ops;
                            ledger.trace.push(TraceEvent {
                                t,
                                kind: EventKind::Merge,
                                src: gid(r, dest),
                                dest: Some(gid(r, dest)),
                                chunk: gid(r, chunk),
                                bytes: None,
                            });
                        }
                    }
                    None => {
                        copies[r].insert((dest, chunk), copy);
                    }
                }
            }

            // Evict what the CU no longer needs; partial results stay behind
            // as residuals for the final merge.
            if t < n {
                let keep = &holdings[t];
                let drop: Vec<(usize, usize)> = copies[r]
                    .keys()
                    .filter(|(cu, chunk)| !keep[cu - 1].contains(chunk))
                    .copied()
                    .collect();
                for key in drop {
                    let copy = copies[r].remove(&key).expect("present");
                    if copy.carries {
                        residuals[r].push((key.0, key.1, copy.accs));
                    }
                }
            }
        }
        ledger.close_step(t, Phase::Ring, &cu_work, &messages);
    }

    // Every surviving partial result goes home and is merged there.
    let mut output = RealMatrix::zeros(prep.queries, prep.values.cols());
    let mut cu_work = vec![0.0; rows * cols];
    let mut messages = Vec::new();
    for r in 0..rows {
        let mut parts: BTreeMap<usize, Vec<(usize, Vec<SoftmaxAccumulator>)>> = BTreeMap::new();
        for ((cu, chunk), copy) in std::mem::take(&mut copies[r]) {
            if copy.carries {
                parts.entry(chunk).or_default().push((cu, copy.accs));
            }
        }
        for (cu, chunk, accs) in std::mem::take(&mut residuals[r]) {
            parts.entry(chunk).or_default().push((cu, accs));
        }
        for home in 1..=n {
            let mut sources = parts.remove(&home).unwrap_or_default();
            sources.sort_by_key(|s| s.0);
            let mut ops = OpCounters::ZERO;
            let mut total = prep.empty_accs();
            for (cu, accs) in &sources {
                if *cu != home {
                    let hops = cu.abs_diff(home);
                    merge_bytes += prep.acc_payload;
                    messages.push((prep.acc_payload, hops));
                    ledger.trace.push(TraceEvent {
                        t: n + 1,
                        kind: EventKind::Merge,
                        src: gid(r, *cu),
                        dest: Some(gid(r, home)),
                        chunk: gid(r, home),
                        bytes: Some(prep.acc_payload),
                    });
                }
                merge_into(&mut total, accs, &mut ops);
            }
            prep.finalize(gid(r, home), &total, &mut output, &mut ops);
            cu_work[gid(r, home)] += ledger.work(&ops);
            ledger.counters += ops;
        }
    }
    ledger.close_step(n + 1, Phase::Merge, &cu_work, &messages);

    let (report, trace, counters) = ledger.finish(prep, q_ring, acc_bytes, 0, merge_bytes);
    check_finite(&output)?;
    Ok(MeshRun {
        output,
        counters,
        report,
        trace,
    })
}

/// Baseline: queries stay put and key/value partitions rotate around each mesh
/// row; the wrap-around message crosses `cols - 1` links.
pub fn run_ring_baseline(mesh: &MeshConfig, w: &Workload, p: &PipelineParams, pad: bool) -> Result<MeshRun> {
    let prep = prepare(mesh, w, p, pad)?;
    let (rows, cols) = (mesh.rows, mesh.cols);
    let mut ledger = Ledger::new(mesh, prep.load);
    let mut kv_ring = 0u64;
    let mut accs: Vec<Vec<SoftmaxAccumulator>> = (0..rows * cols).map(|_| prep.empty_accs()).collect();
    let mut output = RealMatrix::zeros(prep.queries, prep.values.cols());

    for t in 1..=cols {
        let mut cu_work = vec![0.0; rows * cols];
        let mut messages = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let g = r * cols + c;
                let part = (c + t - 1) % cols;
                let mut ops = prep.absorb(g, part, &mut accs[g])?;
                if t == cols {
                    prep.finalize(g, &accs[g], &mut output, &mut ops);
                }
                cu_work[g] += ledger.work(&ops);
                ledger.counters += ops;
                ledger.trace.push(TraceEvent {
                    t,
                    kind: EventKind::Compute,
                    src: g,
                    dest: None,
                    chunk: g,
                    bytes: None,
                });
            }
            if t < cols {
                for c in 0..cols {
                    let dest = (c + cols - 1) % cols;
                    let hops = c.abs_diff(dest);
                    kv_ring += prep.kv_payload;
                    messages.push((prep.kv_payload, hops));
                    ledger.trace.push(TraceEvent {
                        t,
                        kind: EventKind::Send,
                        src: r * cols + c,
                        dest: Some(r * cols + dest),
                        chunk: (c + t - 1) % cols,
                        bytes: Some(prep.kv_payload),
                    });
                }
            }
        }
        ledger.close_step(t, Phase::Ring, &cu_work, &messages);
    }
    let (report, trace, counters) = ledger.finish(&prep, 0, 0, kv_ring, 0);
    check_finite(&output)?;
    Ok(MeshRun {
        output,
        counters,
        report,
        trace,
    })
}

fn check_finite(m: &RealMatrix) -> Result<()> {
    if m.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite attention output on the mesh".into()))
    }
}

/// JSON lines, one event per line.
pub fn write_trace<W: std::io::Write>(mut w: W, trace: &[TraceEvent]) -> Result<()> {
    for e in trace {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
