use proptest::prelude::*;

use crossattn_core::cost::{dse_search, fa_overhead_curve, normalized_complexity, CostWeights, DseCandidate, DseConfig};
use crossattn_core::dlzs::{dlzs_mul, lz_encode, slzs_mul};
use crossattn_core::mesh::mrca::{mrca_schedule, validate_schedule};
use crossattn_core::mesh::{run_drattention, run_ring_baseline, MeshConfig};
use crossattn_core::numerics::max_code;
use crossattn_core::pipeline::{run_pipeline, PipelineParams};
use crossattn_core::sads::{exact_topk, sads_select, SadsParams, Scored};
use crossattn_core::sufa::{absorb_stream, attend_row, build_tiles, AttentionMode, SoftmaxAccumulator, TileOrder};
use crossattn_core::workload::{generate, rng, RowProfile};
use crossattn_core::{AttentionConfig, OpCounters, RealMatrix};

fn counters() -> impl Strategy<Value = OpCounters> {
    (0..1_000_000u64, 0..1_000_000u64, 0..1_000_000u64, 0..1_000_000u64, 0..1_000_000u64, 0..1_000_000u64)
        .prop_map(|(add, mul, cmp, div, exp, shift)| OpCounters {
            add,
            mul,
            cmp,
            div,
            exp,
            shift,
        })
}

fn matrix(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    RowProfile::gaussian(1.0).sample_matrix(rows, cols, &mut rng(seed))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().fold(f64::MIN_POSITIVE, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn partial(q: &[f64], cols: &[usize], k: &RealMatrix, v: &RealMatrix, scale: f64) -> SoftmaxAccumulator {
    let sel: Vec<Scored> = cols.iter().map(|&index| Scored { index, score: 0.0 }).collect();
    let stream = build_tiles(&sel, k, v, 4, TileOrder::Given).unwrap();
    let mut acc = SoftmaxAccumulator::empty(v.cols());
    absorb_stream(&mut acc, q, &stream, scale, AttentionMode::Fa2, &mut OpCounters::default());
    acc
}

proptest! {
    #[test]
    fn complexity_is_linear(a in counters(), b in counters(), n in 0..100u64) {
        let w = CostWeights::default();
        let sum = normalized_complexity(&(a + b), &w);
        prop_assert_eq!(sum, normalized_complexity(&a, &w) + normalized_complexity(&b, &w));
        prop_assert_eq!(normalized_complexity(&a.scaled(n), &w), n as f64 * normalized_complexity(&a, &w));
    }

    #[test]
    fn merge_is_associative_and_commutative(seed in any::<u64>(), s in 6..80usize, d in 1..16usize) {
        let q = matrix(1, d, seed);
        let k = matrix(s, d, seed ^ 1);
        let v = matrix(s, d, seed ^ 2);
        let scale = 1.0 / (d as f64).sqrt();
        let cut1 = s / 3;
        let cut2 = 2 * s / 3;
        let cols: Vec<usize> = (0..s).collect();
        let a = partial(q.row(0), &cols[..cut1], &k, &v, scale);
        let b = partial(q.row(0), &cols[cut1..cut2], &k, &v, scale);
        let c = partial(q.row(0), &cols[cut2..], &k, &v, scale);
        let whole = partial(q.row(0), &cols, &k, &v, scale).finalize(&mut OpCounters::default());
        let left = a.merge(&b).merge(&c).finalize(&mut OpCounters::default());
        let right = a.merge(&b.merge(&c)).finalize(&mut OpCounters::default());
        let swapped = c.merge(&a).merge(&b).finalize(&mut OpCounters::default());
        prop_assert!(close(&left, &whole, 1e-12));
        prop_assert!(close(&right, &whole, 1e-12));
        prop_assert!(close(&swapped, &whole, 1e-12));
    }

    #[test]
    fn tiled_modes_match_vanilla(
        seed in any::<u64>(),
        s in 8..200usize,
        d in 1..32usize,
        ratio in prop::sample::select(vec![0.25, 0.5, 1.0]),
        block in 1..20usize,
        reversed in any::<bool>(),
    ) {
        let q = matrix(1, d, seed);
        let k = matrix(s, d, seed ^ 1);
        let v = matrix(s, d, seed ^ 2);
        let scale = 1.0 / (d as f64).sqrt();
        let est: Vec<f64> = (0..s)
            .map(|j| {
                let x = scale * q.row(0).iter().zip(k.row(j)).map(|(a, b)| a * b).sum::<f64>();
                if reversed { -x } else { x }
            })
            .collect();
        let sel = sads_select(&est, &SadsParams::exact(ratio)).unwrap();
        let base = attend_row(q.row(0), &sel, &k, &v, scale, AttentionMode::Vanilla, block).unwrap().output;
        for mode in [AttentionMode::Fa2, AttentionMode::SufaDesc, AttentionMode::SufaAsc] {
            let out = attend_row(q.row(0), &sel, &k, &v, scale, mode, block).unwrap().output;
            prop_assert!(close(&out, &base, 1e-10), "{} differs", mode.name());
        }
    }

    #[test]
    fn shift_product_bounds(bits in 4..=16u32, xf in -1.0..1.0f64, yf in -1.0..1.0f64) {
        let lim = max_code(bits) as f64;
        let x = (xf * lim).round() as i64;
        let y = (yf * lim).round() as i64;
        prop_assume!(x != 0 && y != 0);
        let exact = (x * y) as f64;
        let d = dlzs_mul(x, lz_encode(y, bits).unwrap(), bits, &mut OpCounters::default()) as f64 / exact;
        let s = slzs_mul(lz_encode(x, bits).unwrap(), lz_encode(y, bits).unwrap(), bits) as f64 / exact;
        prop_assert!(d > 1.0 && d <= 2.0);
        prop_assert!(s > 1.0 && s <= 4.0);
    }

    #[test]
    fn single_segment_is_exact_topk(row in prop::collection::vec(-8i32..8, 4..300), ratio in 0.25..=1.0f64) {
        let row: Vec<f64> = row.into_iter().map(f64::from).collect();
        let p = SadsParams::exact(ratio);
        let sel = sads_select(&row, &p).unwrap();
        prop_assert_eq!(sel.indices(), exact_topk(&row, p.total_quota(row.len())));
        prop_assert_eq!(sel.rho, 1.0);
    }

    #[test]
    fn pruning_keeps_selection_inside_the_sphere(
        seed in any::<u64>(),
        len in 64..600usize,
        n in 1..8usize,
        ratio in prop::sample::select(vec![0.1, 0.25, 0.5]),
        r in 0.5..8.0f64,
        std in 0.5..5.0f64,
    ) {
        prop_assume!(ratio * len as f64 / n as f64 >= 1.0);
        let row = RowProfile::gaussian(std).sample_row(len, &mut rng(seed));
        let p = SadsParams::new(n, ratio, r);
        let sel = sads_select(&row, &p).unwrap();
        prop_assert_eq!(sel.len() + sel.shortfall, p.total_quota(len));
        for seg in &sel.segments {
            let feasible = row[seg.start..seg.end].iter().filter(|&&x| seg.max - x <= r).count();
            let picked = sel.entries.iter().filter(|e| (seg.start..seg.end).contains(&e.index)).count();
            prop_assert!(picked <= seg.quota.min(feasible));
            prop_assert_eq!(picked, seg.quota.min(feasible));
        }
        let inside = sel.entries.iter().all(|e| {
            let seg = sel.segments.iter().find(|s| (s.start..s.end).contains(&e.index)).unwrap();
            seg.max - e.score <= r
        });
        prop_assert!(inside);
    }

    #[test]
    fn overhead_vanishes_only_for_one_tile(block in 1..12usize, tiles in 1..6usize, d in 1..12usize) {
        let s = block * tiles;
        let p = fa_overhead_curve(&[s], block, d, 1, &CostWeights::default(), 3).unwrap();
        prop_assert_eq!(p[0].extra, p[0].closed_form);
        prop_assert_eq!(p[0].extra == OpCounters::default(), tiles == 1);
    }

    #[test]
    fn odd_ring_schedules_validate(half in 0..8usize) {
        let n = 2 * half + 1;
        let rep = validate_schedule(&mrca_schedule(n).unwrap());
        prop_assert!(rep.passed(), "N={}: {:?}", n, rep.checks);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dse_ignores_candidate_order(seed in 0..1000u64, perm in Just(()).prop_perturb(|_, mut r| {
        let mut idx: Vec<usize> = (0..4).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, r.random_range(0..=i));
        }
        idx
    })) {
        let base = [1, 2, 4, 8].map(|segments| DseCandidate { segments, block_cols: 8 });
        let mut cfg = DseConfig::with_candidates(base.to_vec(), 128, 0.25);
        cfg.head_dim = 8;
        cfg.queries = 4;
        let a = dse_search(&cfg, seed).unwrap();
        cfg.candidates = perm.iter().map(|&i| base[i]).collect();
        let b = dse_search(&cfg, seed).unwrap();
        prop_assert_eq!(a.best, b.best);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let cfg = AttentionConfig::new(60, 8, 9, 4);
        let w = generate(&cfg, &RowProfile::default(), 1.0, seed).unwrap();
        let p = PipelineParams {
            sads: SadsParams::new(2, 0.25, 5.0),
            bitwidth: 8,
            mode: AttentionMode::SufaDesc,
            block_cols: 4,
        };
        let a = run_pipeline(&w, &p).unwrap();
        let b = run_pipeline(&w, &p).unwrap();
        prop_assert_eq!(&a.output, &b.output);
        prop_assert_eq!(a.counters, b.counters);
        let mesh = MeshConfig::grid(3, 3);
        let m1 = run_drattention(&mesh, &w, &p, false).unwrap();
        let m2 = run_drattention(&mesh, &w, &p, false).unwrap();
        prop_assert_eq!(m1.trace, m2.trace);
        prop_assert_eq!(m1.output, m2.output);
    }

    #[test]
    fn trace_bytes_match_link_totals(seed in any::<u64>(), rows in 1..4usize, cols in 1..4usize) {
        let mesh = MeshConfig::grid(rows, cols);
        let cfg = AttentionConfig::new(12 * cols, 8, 2 * rows * cols, 4);
        let w = generate(&cfg, &RowProfile::default(), 1.0, seed).unwrap();
        let p = PipelineParams {
            sads: SadsParams::new(1, 0.5, f64::INFINITY),
            bitwidth: 8,
            mode: AttentionMode::Fa2,
            block_cols: 4,
        };
        for run in [run_drattention(&mesh, &w, &p, false).unwrap(), run_ring_baseline(&mesh, &w, &p, false).unwrap()] {
            let traced: u64 = run.trace.iter().filter_map(|e| e.bytes).sum();
            prop_assert_eq!(traced, run.report.link_bytes());
        }
    }
}
