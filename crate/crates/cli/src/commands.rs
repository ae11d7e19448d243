use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crossattn_core::cost::{
    dse_search, fa_overhead_curve, normalized_complexity, order_gap, overhead_rows, sads_sweep, CostWeights,
    DseConfig, DseRow,
};
use crossattn_core::dlzs::LzMatrix;
use crossattn_core::io::{
    lz_to_json, read_matrix_csv, read_matrix_json, selection_summary, write_matrix_csv, MatrixEnvelope,
};
use crossattn_core::mesh::mrca::{mrca_schedule, validate_schedule};
use crossattn_core::mesh::sim::write_trace;
use crossattn_core::mesh::{run_drattention, run_ring_baseline, SimReport};
use crossattn_core::pipeline::{run_pipeline, PipelineParams, StageCounters};
use crossattn_core::workload::{self, generate, RowProfile};
use crossattn_core::{quantize, OpCounters, RealMatrix};

use crate::config::{self, CurvesConfig, EncodeConfig, MeshCmdConfig, MrcaConfig, WorkloadConfig};
use crate::{Common, Failure, Format};

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a C,
    results: R,
}

fn report<'a, C: Serialize, R: Serialize>(command: &'static str, c: &Common, config: &'a C, results: R) -> Report<'a, C, R> {
    Report {
        tool: "crossattn",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: c.seed,
        config,
        results,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Outcome {
    let mut wr = csv_writer(path)?;
    for r in rows {
        wr.serialize(r).map_err(|e| Failure::Run(format!("csv error: {e}")))?;
    }
    wr.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, Failure> {
    csv::Writer::from_path(path).map_err(|e| Failure::Run(format!("csv error: {e}")))
}

/// Writes `rows` as `<stem>.csv` or `<stem>.json` depending on the format.
fn write_table<T: Serialize>(c: &Common, stem: &str, rows: &[T]) -> Outcome {
    match c.format {
        Format::Csv => write_csv(&c.out.join(format!("{stem}.csv")), rows),
        Format::Json => write_json(&c.out.join(format!("{stem}.json")), &rows),
    }
}

fn prepare_out(c: &Common) -> Outcome {
    fs::create_dir_all(&c.out)?;
    Ok(())
}

fn config_check(r: crossattn_core::Result<()>) -> Outcome {
    r.map_err(|e| Failure::Config(format!("config error: {e}")))
}

fn validate_workload(w: &WorkloadConfig) -> Result<PipelineParams, Failure> {
    config_check(w.attention().validate())?;
    config_check(w.profile.validate())?;
    config_check(w.weights.validate())?;
    if !(w.query_gain > 0.0 && w.query_gain.is_finite()) {
        return Err(Failure::Config("config error: query_gain must be positive".into()));
    }
    let p = PipelineParams {
        sads: w.sads(),
        bitwidth: w.W,
        mode: w.mode,
        block_cols: w.B_c,
    };
    config_check(p.validate())?;
    Ok(p)
}

#[derive(Serialize)]
struct Equivalent {
    predict: f64,
    select: f64,
    kv_generation: f64,
    attend: f64,
    total: f64,
}

impl Equivalent {
    fn of(s: &StageCounters, w: &CostWeights) -> Self {
        Equivalent {
            predict: normalized_complexity(&s.predict, w),
            select: normalized_complexity(&s.select, w),
            kv_generation: normalized_complexity(&s.kv_generation, w),
            attend: normalized_complexity(&s.attend, w),
            total: normalized_complexity(&s.total(), w),
        }
    }
}

#[derive(Serialize)]
struct PipelineResults {
    mean_hit_rate: f64,
    hit_rates: Vec<f64>,
    mean_rho: f64,
    selection_comparisons: u64,
    shortfall: usize,
    guard_events: u64,
    generated_kv_rows: usize,
    counters: StageCounters,
    total_counters: OpCounters,
    equivalent_adds: Equivalent,
}

pub fn pipeline(c: &Common) -> Outcome {
    let cfg = config::load(c.config.as_deref(), WorkloadConfig::demo)?;
    let params = validate_workload(&cfg)?;
    prepare_out(c)?;
    let w = generate(&cfg.attention(), &cfg.profile, cfg.query_gain, c.seed)?;
    let run = run_pipeline(&w, &params)?;
    log::info!("pipeline: mean hit rate {:.4}", run.mean_hit_rate());

    let results = PipelineResults {
        mean_hit_rate: run.mean_hit_rate(),
        hit_rates: run.hit_rates.clone(),
        mean_rho: run.selection.mean_rho(),
        selection_comparisons: run.selection.comparisons(),
        shortfall: run.selection.rows.iter().map(|r| r.shortfall).sum(),
        guard_events: run.stats.guard_events,
        generated_kv_rows: run.generated_kv_rows,
        counters: run.counters,
        total_counters: run.counters.total(),
        equivalent_adds: Equivalent::of(&run.counters, &cfg.weights),
    };
    write_json(&c.out.join("report.json"), &report("pipeline", c, &cfg, results))?;
    match c.format {
        Format::Csv => {
            let mut f = BufWriter::new(File::create(c.out.join("output.csv"))?);
            write_matrix_csv(&mut f, &run.output)?;
            write_csv(&c.out.join("selection.csv"), &selection_summary(&run.selection))?;
        }
        Format::Json => {
            write_json(&c.out.join("output.json"), &MatrixEnvelope::from_real(&run.output))?;
            write_json(&c.out.join("selection.json"), &run.selection)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct OrderRow {
    S: usize,
    d_h: usize,
    B_c: usize,
    T_c: usize,
    retained: usize,
    rows: usize,
    mul_desc: u64,
    mul_asc: u64,
    mul_fa2: u64,
    exp_desc: u64,
    exp_asc: u64,
    exp_fa2: u64,
    asc_minus_desc_mul: u64,
    predicted_mul_gap: u64,
    guard_events: u64,
}

#[derive(Serialize)]
struct DseOut<'a> {
    #[serde(flatten)]
    row: &'a DseRow,
    argmin: bool,
}

#[derive(Serialize)]
struct CurvesResults {
    overhead_points: usize,
    sads_points: usize,
    order_cases: usize,
    dse_best: crossattn_core::cost::DseCandidate,
}

pub fn curves(c: &Common) -> Outcome {
    let cfg = config::load(c.config.as_deref(), CurvesConfig::demo)?;
    config_check(cfg.weights.validate())?;
    prepare_out(c)?;

    let o = &cfg.overhead;
    let points = fa_overhead_curve(&o.S_list, o.B_c, o.d_h, o.N_h, &cfg.weights, c.seed)?;
    write_table(c, "overhead", &overhead_rows(&points))?;

    let s = &cfg.sads;
    let sads = sads_sweep(s.S, s.k, &s.n_list, s.r, &RowProfile::gaussian(s.std), s.rows, c.seed)?;
    write_table(c, "sads_complexity", &sads)?;

    let mut order = Vec::new();
    for case in &cfg.order {
        let g = order_gap(case.S, case.d_h, case.B_c, case.k, case.rows, c.seed)?;
        order.push(OrderRow {
            S: g.seq_len,
            d_h: g.head_dim,
            B_c: g.block_cols,
            T_c: g.col_tiles,
            retained: g.retained,
            rows: g.rows,
            mul_desc: g.desc.mul,
            mul_asc: g.asc.mul,
            mul_fa2: g.fa2.mul,
            exp_desc: g.desc.exp,
            exp_asc: g.asc.exp,
            exp_fa2: g.fa2.exp,
            asc_minus_desc_mul: g.asc_minus_desc_mul(),
            predicted_mul_gap: g.predicted_mul_gap(),
            guard_events: g.guard_events,
        });
    }
    write_table(c, "order_gap", &order)?;

    let d = &cfg.dse;
    let mut dse_cfg = DseConfig::with_candidates(d.candidates(), d.S, d.k);
    dse_cfg.head_dim = d.d_h;
    dse_cfg.queries = d.T;
    dse_cfg.radius = d.r;
    dse_cfg.dse_alpha = d.dse_alpha;
    dse_cfg.dse_beta = d.dse_beta;
    dse_cfg.weights = cfg.weights;
    if dse_cfg.candidates.is_empty() {
        return Err(Failure::Config("config error: DSE needs at least one candidate".into()));
    }
    let dse = dse_search(&dse_cfg, c.seed)?;
    let table: Vec<DseOut> = dse
        .table
        .iter()
        .map(|row| DseOut {
            row,
            argmin: row.candidate == dse.best,
        })
        .collect();
    write_json(&c.out.join("dse.json"), &serde_json::json!({ "best": dse.best, "table": table }))?;

    let results = CurvesResults {
        overhead_points: points.len(),
        sads_points: sads.len(),
        order_cases: order.len(),
        dse_best: dse.best,
    };
    write_json(&c.out.join("report.json"), &report("curves", c, &cfg, results))
}

#[derive(Serialize)]
struct MeshResults {
    validation_passed: bool,
    drattention: SimReport,
    ring_baseline: SimReport,
    drattention_gain: f64,
    q_to_kv_payload: f64,
    max_abs_diff_drattention: f64,
    max_abs_diff_ring: f64,
}

fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn mesh(c: &Common) -> Outcome {
    let cfg = config::load(c.config.as_deref(), MeshCmdConfig::demo)?;
    let params = validate_workload(&cfg.workload)?;
    config_check(cfg.mesh.validate())?;
    if cfg.N_list.contains(&0) {
        return Err(Failure::Config("config error: ring lengths must be positive".into()));
    }
    prepare_out(c)?;

    let mut validation = Vec::new();
    for &n in &cfg.N_list {
        validation.push(validate_schedule(&mrca_schedule(n)?));
    }
    let validation_passed = validation.iter().all(|r| r.passed());
    write_json(&c.out.join("validation.json"), &validation)?;

    let w = generate(&cfg.workload.attention(), &cfg.workload.profile, cfg.workload.query_gain, c.seed)?;
    let single = run_pipeline(&w, &params)?;
    let dr = run_drattention(&cfg.mesh, &w, &params, cfg.pad)?;
    let ring = run_ring_baseline(&cfg.mesh, &w, &params, cfg.pad)?;
    for (name, run) in [("drattention", &dr), ("ring", &ring)] {
        let mut f = BufWriter::new(File::create(c.out.join(format!("{name}_trace.jsonl")))?);
        write_trace(&mut f, &run.trace)?;
        f.flush()?;
        write_table(c, &format!("{name}_steps"), &run.report.steps)?;
    }
    let diff_dr = max_abs_diff(&dr.output, &single.output);
    let diff_ring = max_abs_diff(&ring.output, &single.output);
    let results = MeshResults {
        validation_passed,
        drattention_gain: dr.report.throughput / ring.report.throughput,
        q_to_kv_payload: dr.report.q_payload_bytes as f64 / dr.report.kv_payload_bytes as f64,
        max_abs_diff_drattention: diff_dr,
        max_abs_diff_ring: diff_ring,
        drattention: dr.report,
        ring_baseline: ring.report,
    };
    write_json(&c.out.join("report.json"), &report("mesh", c, &cfg, results))?;
    if !validation_passed {
        return Err(Failure::Run("ring schedule validation failed; see validation.json".into()));
    }
    if diff_dr > 1e-10 || diff_ring > 1e-10 {
        return Err(Failure::Run(format!(
            "mesh outputs deviate from the single-node pipeline ({diff_dr:e}, {diff_ring:e})"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EncodeResults {
    rows: usize,
    cols: usize,
    bitwidth: u32,
    scale: f64,
    zeros: usize,
    /// Count of codes per leading-zero value `0..=W`.
    lz_histogram: Vec<usize>,
}

#[derive(Serialize)]
struct CodeRow {
    row: usize,
    col: usize,
    s: String,
    lz: u8,
    z: bool,
}

pub fn encode_weights(c: &Common) -> Outcome {
    let cfg = config::load(c.config.as_deref(), EncodeConfig::demo)?;
    if !(4..=16).contains(&cfg.W) {
        return Err(Failure::Config(format!("config error: W must be in [4, 16], got {}", cfg.W)));
    }
    let matrix = match (&cfg.input, cfg.H, cfg.d_h) {
        (Some(path), _, _) => {
            let f = File::open(path).map_err(|e| Failure::Config(format!("cannot read {path}: {e}")))?;
            if path.ends_with(".json") {
                read_matrix_json(f)?
            } else {
                read_matrix_csv(f)?
            }
        }
        (None, Some(h), Some(d)) if h > 0 && d > 0 => {
            let mut rng = workload::rng(c.seed);
            RowProfile::gaussian(1.0 / (h as f64).sqrt()).sample_matrix(h, d, &mut rng)
        }
        _ => {
            return Err(Failure::Config(
                "config error: give either `input` or positive `H` and `d_h`".into(),
            ))
        }
    };
    prepare_out(c)?;
    let q = quantize(&matrix, cfg.W)?;
    let codes = LzMatrix::encode(&q);
    fs::write(c.out.join("wk_codes.json"), lz_to_json(&codes)? + "\n")?;
    write_json(&c.out.join("wk_quant.json"), &MatrixEnvelope::from_quant(&q))?;
    if c.format == Format::Csv {
        let rows: Vec<CodeRow> = (0..codes.rows())
            .flat_map(|i| (0..codes.cols()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let code = codes.get(i, j);
                CodeRow {
                    row: i,
                    col: j,
                    s: serde_json::to_value(code.sign)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    lz: code.lz,
                    z: code.is_zero,
                }
            })
            .collect();
        write_csv(&c.out.join("wk_codes.csv"), &rows)?;
    }
    let mut lz_histogram = vec![0; cfg.W as usize + 1];
    for code in codes.codes() {
        lz_histogram[code.lz as usize] += 1;
    }
    let results = EncodeResults {
        rows: codes.rows(),
        cols: codes.cols(),
        bitwidth: cfg.W,
        scale: q.scale(),
        zeros: codes.codes().iter().filter(|c| c.is_zero).count(),
        lz_histogram,
    };
    write_json(&c.out.join("report.json"), &report("encode-weights", c, &cfg, results))
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct CheckRow {
    N: usize,
    property: String,
    passed: bool,
    counterexample: String,
}

pub fn validate_mrca(c: &Common) -> Outcome {
    let cfg = config::load(c.config.as_deref(), MrcaConfig::demo)?;
    if cfg.N_list.is_empty() || cfg.N_list.contains(&0) {
        return Err(Failure::Config("config error: N_list must hold positive ring lengths".into()));
    }
    prepare_out(c)?;
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut all_pass = true;
    for &n in &cfg.N_list {
        let sched = mrca_schedule(n)?;
        let rep = validate_schedule(&sched);
        all_pass &= rep.passed();
        for chk in &rep.checks {
            rows.push(CheckRow {
                N: n,
                property: chk.property.clone(),
                passed: chk.passed,
                counterexample: chk.counterexample.clone().unwrap_or_default(),
            });
        }
        entries.push(serde_json::json!({ "N": n, "passed": rep.passed(), "report": rep, "schedule": sched }));
    }
    write_table(c, "mrca_checks", &rows)?;
    write_json(&c.out.join("mrca.json"), &entries)?;
    write_json(
        &c.out.join("report.json"),
        &report("validate-mrca", c, &cfg, serde_json::json!({ "all_passed": all_pass })),
    )?;
    if !all_pass {
        return Err(Failure::Run("at least one ring schedule failed validation".into()));
    }
    Ok(())
}
