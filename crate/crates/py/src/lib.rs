//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use crossattn_core::cost::{self, CostWeights};
use crossattn_core::dlzs::{self, Sign};
use crossattn_core::mesh::{self, mrca, MeshConfig};
use crossattn_core::pipeline::{self, PipelineParams};
use crossattn_core::sads::{self, SadsParams};
use crossattn_core::sufa::{self, AttentionMode};
use crossattn_core::workload::{self, RowProfile};
use crossattn_core::{AttentionConfig, OpCounters, RealMatrix};

fn err(e: crossattn_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<RealMatrix> {
    RealMatrix::from_rows(&rows).map_err(err)
}

fn mode(name: &str) -> PyResult<AttentionMode> {
    AttentionMode::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown mode {name:?}")))
}

fn radius(r: Option<f64>) -> f64 {
    r.unwrap_or(f64::INFINITY)
}

/// Operation tallies.
#[pyclass(name = "OpCounters", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct PyCounters {
    add: u64,
    mul: u64,
    cmp: u64,
    div: u64,
    exp: u64,
    shift: u64,
}

impl From<OpCounters> for PyCounters {
    fn from(c: OpCounters) -> Self {
        PyCounters {
            add: c.add,
            mul: c.mul,
            cmp: c.cmp,
            div: c.div,
            exp: c.exp,
            shift: c.shift,
        }
    }
}

#[pymethods]
impl PyCounters {
    #[new]
    #[pyo3(signature = (add=0, mul=0, cmp=0, div=0, exp=0, shift=0))]
    fn new(add: u64, mul: u64, cmp: u64, div: u64, exp: u64, shift: u64) -> Self {
        PyCounters {
            add,
            mul,
            cmp,
            div,
            exp,
            shift,
        }
    }

    /// Equivalent additions under the default weights.
    fn equivalent_adds(&self) -> f64 {
        cost::normalized_complexity(&self.core(), &CostWeights::default())
    }

    fn __repr__(&self) -> String {
        format!(
            "OpCounters(add={}, mul={}, cmp={}, div={}, exp={}, shift={})",
            self.add, self.mul, self.cmp, self.div, self.exp, self.shift
        )
    }
}

impl PyCounters {
    fn core(&self) -> OpCounters {
        OpCounters {
            add: self.add,
            mul: self.mul,
            cmp: self.cmp,
            div: self.div,
            exp: self.exp,
            shift: self.shift,
        }
    }
}

/// Leading-zero code of one integer.
#[pyclass(name = "LzCode", frozen, get_all, skip_from_py_object)]
struct PyLzCode {
    negative: bool,
    lz: u8,
    is_zero: bool,
}

#[pyclass(name = "Selection", frozen, get_all, skip_from_py_object)]
struct PySelection {
    indices: Vec<usize>,
    scores: Vec<f64>,
    comparisons: u64,
    rho: f64,
    shortfall: usize,
}

#[pyclass(name = "PipelineResult", frozen, get_all, skip_from_py_object)]
struct PyPipelineResult {
    output: Vec<Vec<f64>>,
    selected: Vec<Vec<usize>>,
    hit_rates: Vec<f64>,
    mean_hit_rate: f64,
    counters: PyCounters,
    guard_events: u64,
}

#[pyclass(name = "MeshResult", frozen, get_all, skip_from_py_object)]
struct PyMeshResult {
    output: Vec<Vec<f64>>,
    total_latency: f64,
    throughput: f64,
    energy: f64,
    link_bytes: u64,
    q_payload_bytes: u64,
    kv_payload_bytes: u64,
    counters: PyCounters,
}

#[pyclass(name = "ScheduleReport", frozen, get_all, skip_from_py_object)]
struct PyScheduleReport {
    n: usize,
    passed: bool,
    /// (property, passed, counterexample)
    checks: Vec<(String, bool, Option<String>)>,
    /// Chunk computed by each CU at each step, when a plan exists.
    compute: Option<Vec<Vec<usize>>>,
}

#[pyfunction]
#[pyo3(signature = (m, bits=8))]
fn quantize(m: Vec<Vec<f64>>, bits: u32) -> PyResult<(Vec<Vec<i32>>, f64)> {
    let q = crossattn_core::quantize(&matrix(m)?, bits).map_err(err)?;
    let rows = (0..q.rows()).map(|i| q.row(i).to_vec()).collect();
    Ok((rows, q.scale()))
}

#[pyfunction]
#[pyo3(signature = (v, bits=8))]
fn lz_encode(v: i64, bits: u32) -> PyResult<PyLzCode> {
    let c = dlzs::lz_encode(v, bits).map_err(err)?;
    Ok(PyLzCode {
        negative: c.sign == Sign::Neg,
        lz: c.lz,
        is_zero: c.is_zero,
    })
}

/// Shift-only product of `x` with the power-of-two code of `y`.
#[pyfunction]
#[pyo3(signature = (x, y, bits=8))]
fn dlzs_mul(x: i64, y: i64, bits: u32) -> PyResult<i64> {
    let code = dlzs::lz_encode(y, bits).map_err(err)?;
    Ok(dlzs::dlzs_mul(x, code, bits, &mut OpCounters::default()))
}

#[pyfunction]
#[pyo3(signature = (x, y, bits=8))]
fn slzs_mul(x: i64, y: i64, bits: u32) -> PyResult<i64> {
    let cx = dlzs::lz_encode(x, bits).map_err(err)?;
    let cy = dlzs::lz_encode(y, bits).map_err(err)?;
    Ok(dlzs::slzs_mul(cx, cy, bits))
}

/// Shift-only estimate of `q (x wk)^T` from quantized operands.
#[pyfunction]
#[pyo3(signature = (x, wk, q, bits=8))]
fn predict_scores(x: Vec<Vec<f64>>, wk: Vec<Vec<f64>>, q: Vec<Vec<f64>>, bits: u32) -> PyResult<Vec<Vec<i64>>> {
    let xq = crossattn_core::quantize(&matrix(x)?, bits).map_err(err)?;
    let wq = crossattn_core::quantize(&matrix(wk)?, bits).map_err(err)?;
    let qq = crossattn_core::quantize(&matrix(q)?, bits).map_err(err)?;
    let (khat, _) = dlzs::predict_khat(&xq, &dlzs::LzMatrix::encode(&wq)).map_err(err)?;
    let (s, _) = dlzs::predict_attention(&qq, &khat).map_err(err)?;
    Ok((0..s.rows()).map(|i| s.row(i).to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (row, k, n=1, r=Some(sads::DEFAULT_RADIUS)))]
fn sads_select(row: Vec<f64>, k: f64, n: usize, r: Option<f64>) -> PyResult<PySelection> {
    let sel = sads::sads_select(&row, &SadsParams::new(n, k, radius(r))).map_err(err)?;
    Ok(PySelection {
        indices: sel.indices(),
        scores: sel.entries.iter().map(|e| e.score).collect(),
        comparisons: sel.comparisons,
        rho: sel.rho,
        shortfall: sel.shortfall,
    })
}

#[pyfunction]
fn exact_topk(row: Vec<f64>, m: usize) -> Vec<usize> {
    sads::exact_topk(&row, m)
}

/// Attends one query over the top `k` columns of `scores` (true scores when omitted).
#[pyfunction]
#[pyo3(signature = (q, keys, values, k=1.0, mode="sufa_desc", block_cols=16, scores=None))]
#[allow(clippy::too_many_arguments)]
fn attend(
    q: Vec<f64>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    k: f64,
    mode: &str,
    block_cols: usize,
    scores: Option<Vec<f64>>,
) -> PyResult<(Vec<f64>, PyCounters)> {
    let km = matrix(keys)?;
    let vm = matrix(values)?;
    let scale = 1.0 / (q.len() as f64).sqrt();
    let est = match scores {
        Some(s) => s,
        None => (0..km.rows())
            .map(|j| scale * q.iter().zip(km.row(j)).map(|(a, b)| a * b).sum::<f64>())
            .collect(),
    };
    let sel = sads::sads_select(&est, &SadsParams::exact(k)).map_err(err)?;
    let out = sufa::attend_row(&q, &sel, &km, &vm, scale, self::mode(mode)?, block_cols).map_err(err)?;
    Ok((out.output, out.counters.into()))
}

#[allow(clippy::too_many_arguments)]
fn setup(
    s: usize,
    d_h: usize,
    t: usize,
    k: f64,
    n: usize,
    r: Option<f64>,
    mode: &str,
    block_cols: usize,
    seed: u64,
) -> PyResult<(workload::Workload, PipelineParams)> {
    let w = workload::generate(
        &AttentionConfig::new(s, d_h, t, block_cols),
        &RowProfile::default(),
        1.0,
        seed,
    )
    .map_err(err)?;
    let p = PipelineParams {
        sads: SadsParams::new(n, k, radius(r)),
        bitwidth: dlzs::DEFAULT_BITWIDTH,
        mode: self::mode(mode)?,
        block_cols,
    };
    p.validate().map_err(err)?;
    Ok((w, p))
}

/// Predict, select and attend on a seeded synthetic workload.
#[pyfunction]
#[pyo3(signature = (s, d_h, t, k, n, r=Some(sads::DEFAULT_RADIUS), mode="sufa_desc", block_cols=16, seed=42))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    s: usize,
    d_h: usize,
    t: usize,
    k: f64,
    n: usize,
    r: Option<f64>,
    mode: &str,
    block_cols: usize,
    seed: u64,
) -> PyResult<PyPipelineResult> {
    let (w, p) = setup(s, d_h, t, k, n, r, mode, block_cols, seed)?;
    let run = pipeline::run_pipeline(&w, &p).map_err(err)?;
    Ok(PyPipelineResult {
        output: run.output.to_rows(),
        selected: run.selection.rows.iter().map(|r| r.indices()).collect(),
        mean_hit_rate: run.mean_hit_rate(),
        hit_rates: run.hit_rates,
        counters: run.counters.total().into(),
        guard_events: run.stats.guard_events,
    })
}

/// `(src, dest, chunk, kind)`.
type Send = (usize, usize, usize, String);

/// Sends of every step.
#[pyfunction]
fn mrca_schedule(n: usize) -> PyResult<Vec<Vec<Send>>> {
    let s = mrca::mrca_schedule(n).map_err(err)?;
    Ok(s.steps
        .iter()
        .map(|st| {
            st.sends
                .iter()
                .map(|e| (e.src, e.dest, e.chunk, format!("{:?}", e.kind)))
                .collect()
        })
        .collect())
}

#[pyfunction]
fn validate_mrca(n: usize) -> PyResult<PyScheduleReport> {
    let s = mrca::mrca_schedule(n).map_err(err)?;
    let rep = mrca::validate_schedule(&s);
    Ok(PyScheduleReport {
        n,
        passed: rep.passed(),
        checks: rep
            .checks
            .iter()
            .map(|c| (c.property.clone(), c.passed, c.counterexample.clone()))
            .collect(),
        compute: s.compute.map(|c| c.plan),
    })
}

/// Distributed attention on a `rows x cols` mesh; `baseline` selects the KV ring.
#[pyfunction]
#[pyo3(signature = (rows, cols, s, d_h, t, k, n, r=Some(sads::DEFAULT_RADIUS), mode="sufa_desc", block_cols=16, seed=42, baseline=false, pad=false))]
#[allow(clippy::too_many_arguments)]
fn run_drattention(
    rows: usize,
    cols: usize,
    s: usize,
    d_h: usize,
    t: usize,
    k: f64,
    n: usize,
    r: Option<f64>,
    mode: &str,
    block_cols: usize,
    seed: u64,
    baseline: bool,
    pad: bool,
) -> PyResult<PyMeshResult> {
    let (w, p) = setup(s, d_h, t, k, n, r, mode, block_cols, seed)?;
    let m = MeshConfig::grid(rows, cols);
    let run = if baseline {
        mesh::run_ring_baseline(&m, &w, &p, pad)
    } else {
        mesh::run_drattention(&m, &w, &p, pad)
    }
    .map_err(err)?;
    Ok(PyMeshResult {
        output: run.output.to_rows(),
        total_latency: run.report.total_latency,
        throughput: run.report.throughput,
        energy: run.report.energy,
        link_bytes: run.report.link_bytes(),
        q_payload_bytes: run.report.q_payload_bytes,
        kv_payload_bytes: run.report.kv_payload_bytes,
        counters: run.counters.into(),
    })
}

/// Weighted operation total; default weights (1, 3, 1, 8, 25).
#[pyfunction]
#[pyo3(signature = (counters, weights=None))]
fn normalized_complexity(counters: PyCounters, weights: Option<(f64, f64, f64, f64, f64)>) -> PyResult<f64> {
    let w = match weights {
        Some((a, b, c, d, e)) => CostWeights {
            alpha_add: a,
            beta_mul: b,
            gamma_cmp: c,
            delta_div: d,
            epsilon_exp: e,
        },
        None => CostWeights::default(),
    };
    w.validate().map_err(err)?;
    Ok(cost::normalized_complexity(&counters.core(), &w))
}

#[pymodule]
fn crossattn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCounters>()?;
    m.add_class::<PyLzCode>()?;
    m.add_class::<PySelection>()?;
    m.add_class::<PyPipelineResult>()?;
    m.add_class::<PyMeshResult>()?;
    m.add_class::<PyScheduleReport>()?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(lz_encode, m)?)?;
    m.add_function(wrap_pyfunction!(dlzs_mul, m)?)?;
    m.add_function(wrap_pyfunction!(slzs_mul, m)?)?;
    m.add_function(wrap_pyfunction!(predict_scores, m)?)?;
    m.add_function(wrap_pyfunction!(sads_select, m)?)?;
    m.add_function(wrap_pyfunction!(exact_topk, m)?)?;
    m.add_function(wrap_pyfunction!(attend, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(mrca_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(validate_mrca, m)?)?;
    m.add_function(wrap_pyfunction!(run_drattention, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_complexity, m)?)?;
    Ok(())
}
