//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false` so the lines are
//! always visible under `cargo test`.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use demoselect_core::harness::coincidence_analysis;
use demoselect_core::metrics::{binary_iou, mean_iou, mse_scaled, BinaryMask, PixelImage};
use demoselect_core::oracle::{
    aggregate_heldout_score, Aggregator, Evaluator, ExternalConfig, ExternalEvaluator, LandscapeParams,
    OneShotMatrix, Planted, SubsetTable, SyntheticLandscape,
};
use demoselect_core::rng::SeededRng;
use demoselect_core::select::{select_exhaustive, select_greedy, select_top_k, SelectOptions};
use demoselect_core::subsets::enumerate_subsets;
use demoselect_core::{ids, DemoSet, SampleId};

const BIN: &str = env!("CARGO_BIN_EXE_demoselect");

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn landscape(n_demos: usize, n_queries: usize, seed: u64, lambda: f64, sigma: f64) -> SyntheticLandscape {
    landscape_agg(n_demos, n_queries, seed, lambda, sigma, Aggregator::Sum)
}

fn landscape_agg(n_demos: usize, n_queries: usize, seed: u64, lambda: f64, sigma: f64, agg: Aggregator) -> SyntheticLandscape {
    SyntheticLandscape::new(LandscapeParams {
        n_demos,
        n_queries,
        seed,
        aggregator: agg,
        interaction_scale: lambda,
        noise_scale: sigma,
        planted: None,
    })
    .expect("valid landscape")
}

/// Candidates are the demo block, the fixed holdout is the query block.
fn split(n_demos: usize, n_queries: usize) -> (Vec<SampleId>, Vec<SampleId>) {
    let c = ids(0..n_demos as u64);
    let h = ids(n_demos as u64..(n_demos + n_queries) as u64);
    (c, h)
}

fn modular_optimality() -> Verdict {
    let start = Instant::now();
    let (c, h) = split(8, 16);
    for seed in 0..100 {
        let l = landscape(8, 16, seed, 0.0, 0.0);
        let g = select_greedy(&l, &c, &h, &SelectOptions::fixed()).map_err(|e| e.to_string())?;
        let e = select_exhaustive(&l, &c, &h, None, &SelectOptions::fixed()).map_err(|e| e.to_string())?;
        let (gu, eu) = (g.validation_utility.unwrap(), e.validation_utility.unwrap());
        ensure(gu.bit_eq(&eu), || format!("seed {seed}: greedy {} vs exhaustive {}", gu.value(), eu.value()))?;
        // every base entry is positive, so the full set is optimal under sum
        let base = l.base_matrix();
        let direct = h
            .iter()
            .map(|q| (0..8).map(|i| base.get(i, q.get() as usize)).sum::<f64>())
            .sum::<f64>()
            / h.len() as f64;
        ensure((eu.value() - direct).abs() <= 1e-12, || {
            format!("seed {seed}: exhaustive {} vs direct full-set sum {direct}", eu.value())
        })?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("100 seeds bit-equal in {:.2?}", t))
}

fn dominance_chain() -> Verdict {
    let start = Instant::now();
    let (c, h) = split(8, 16);
    let mut sizes = Vec::new();
    for (seed, agg) in (0..100).flat_map(|s| [(s, Aggregator::Sum), (s, Aggregator::Mean)]) {
        let l = landscape_agg(8, 16, seed, 0.5, 0.1, agg);
        let o = SelectOptions::fixed();
        let g = select_greedy(&l, &c, &h, &o).map_err(|e| e.to_string())?;
        sizes.push(g.chosen.len());
        let e = select_exhaustive(&l, &c, &h, None, &o).map_err(|e| e.to_string())?;
        let mut best_single = f64::NEG_INFINITY;
        for &x in &c {
            let u = aggregate_heldout_score(&l, &DemoSet::singleton(x), &h).map_err(|e| e.to_string())?;
            best_single = best_single.max(u.value());
        }
        let (gu, eu) = (g.validation_utility.unwrap().value(), e.validation_utility.unwrap().value());
        ensure(eu >= gu && gu >= best_single, || {
            format!("seed {seed} {agg:?}: exhaustive {eu}, greedy {gu}, best singleton {best_single}")
        })?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))?;
    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    Ok(format!("100 seeds x sum/mean in {t:.2?}, greedy set sizes {lo}..={hi}"))
}

fn first_pick_coincidence() -> Verdict {
    let (c, h) = split(8, 16);
    let mut checked = 0;
    for seed in 0..100 {
        let l = landscape(8, 16, seed, 0.5, 0.1);
        for (o, holdout) in [(SelectOptions::fixed(), &h[..]), (SelectOptions::loocv(), &[][..])] {
            let g = select_greedy(&l, &c, holdout, &o).map_err(|e| e.to_string())?;
            let t = select_top_k(&l, &c, holdout, 1, &o).map_err(|e| e.to_string())?;
            let top = t.chosen.members()[0];
            ensure(g.first_accepted() == Some(top), || {
                format!("seed {seed} {:?}: greedy first {:?}, top-1 {top}", o.holdout, g.first_accepted())
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (seed, mode) pairs agree"))
}

fn greedy_monotone() -> Verdict {
    let (c, h) = split(8, 16);
    let mut steps = 0;
    for (seed, agg) in (0..100).flat_map(|s| [(s, Aggregator::Sum), (s, Aggregator::Mean)]) {
        let l = landscape_agg(8, 16, seed, 0.5, 0.1, agg);
        let g = select_greedy(&l, &c, &h, &SelectOptions::fixed()).map_err(|e| e.to_string())?;
        let acc = g.accepted_utilities();
        ensure(acc.windows(2).all(|w| w[1] >= w[0]), || format!("seed {seed} {agg:?}: {acc:?}"))?;
        steps += acc.len();
    }
    Ok(format!("200 traces, {steps} accepted steps, non-decreasing"))
}

fn call_audit() -> Verdict {
    let mut lines = Vec::new();
    for n in [4usize, 6, 8] {
        let (c, h) = split(n, 10);
        let (nn, mut worst_greedy) = (n as u64, 0);
        for seed in 0..20 {
            let l = landscape(n, 10, seed, 0.5, 0.1);
            let o = SelectOptions::fixed();
            for k in 1..=n {
                let t = select_top_k(&l, &c, &h, k, &o).map_err(|e| e.to_string())?;
                ensure(t.set_evaluations == nn, || format!("N'={n} k={k}: topk {}", t.set_evaluations))?;
            }
            let g = select_greedy(&l, &c, &h, &o).map_err(|e| e.to_string())?;
            ensure(g.set_evaluations <= nn * (nn + 1) / 2, || format!("N'={n}: greedy {}", g.set_evaluations))?;
            worst_greedy = worst_greedy.max(g.set_evaluations);
            let before = l.calls();
            let e = select_exhaustive(&l, &c, &h, None, &o).map_err(|e| e.to_string())?;
            let expected = (1u64 << n) - 1;
            ensure(e.set_evaluations == expected, || format!("N'={n}: exhaustive {}", e.set_evaluations))?;
            // the landscape's own counter confirms the reported audit unit
            ensure(l.calls() - before == expected * h.len() as u64, || {
                format!("N'={n}: exhaustive made {} calls", l.calls() - before)
            })?;
        }
        lines.push(format!("N'={n}: topk {n}, greedy <= {worst_greedy}/{}, exhaustive {}", n * (n + 1) / 2, (1u64 << n) - 1));
    }
    Ok(lines.join("; "))
}

fn metric_examples() -> Verdict {
    let tol = 1e-12;
    let mask = |on: &[(usize, usize)]| BinaryMask::from_pixels(2, 2, on).unwrap();
    let (pred, truth) = (mask(&[(0, 0), (0, 1)]), mask(&[(0, 1), (1, 1)]));
    let iou = binary_iou(&pred, &truth).map_err(|e| e.to_string())?;
    ensure((iou - 1.0 / 3.0).abs() <= tol, || format!("iou {iou}"))?;

    let (same, a, b) = (mask(&[(1, 0)]), mask(&[(0, 0)]), mask(&[(1, 1)]));
    let m = mean_iou([(&pred, &truth), (&same, &same), (&a, &b)]).map_err(|e| e.to_string())?;
    ensure((m - 4.0 / 9.0).abs() <= tol, || format!("mean iou {m}"))?;

    let p = PixelImage::new(2, 1, 1, vec![0.5, 0.0]).unwrap();
    let t = PixelImage::new(2, 1, 1, vec![0.0, 0.0]).unwrap();
    let mse = mse_scaled(&p, &t).map_err(|e| e.to_string())?;
    ensure((mse - 12.5).abs() <= tol, || format!("mse {mse}"))?;

    let empty = BinaryMask::empty(3, 3).unwrap();
    let both = binary_iou(&empty, &empty).map_err(|e| e.to_string())?;
    ensure((both - 1.0).abs() <= tol, || format!("both-empty {both}"))?;
    Ok(format!("iou {iou}, mean {m}, mse {mse}, both-empty {both}"))
}

fn planted_coincidence() -> Verdict {
    let (n, m, gamma) = (6usize, 200usize, 0.3);
    let expected = gamma + (1.0 - gamma) / n as f64;
    let (c, tests) = split(n, m);
    let singles: Vec<DemoSet> = c.iter().map(|&x| DemoSet::singleton(x)).collect();
    let mut fractions = Vec::new();
    for seed in 0..20u64 {
        let planted = (seed % n as u64) as usize;
        let l = SyntheticLandscape::new(LandscapeParams {
            n_demos: n,
            n_queries: m,
            seed,
            aggregator: Aggregator::Sum,
            interaction_scale: 0.0,
            noise_scale: 0.0,
            planted: Some(Planted {
                demo_index: planted,
                gamma,
                high_value: 0.9,
            }),
        })
        .map_err(|e| e.to_string())?;
        let co = coincidence_analysis(&l, &singles, &tests).map_err(|e| e.to_string())?;
        ensure(co.task_best == singles[planted], || {
            format!("seed {seed}: task best {} but planted {planted}", co.task_best)
        })?;
        // direct argmax scan of the base matrix, first index on ties
        let base = l.base_matrix();
        let hits = tests
            .iter()
            .filter(|q| {
                let col = q.get() as usize;
                let best = (1..n).fold(0, |b, i| if base.get(i, col) > base.get(b, col) { i } else { b });
                best == planted
            })
            .count();
        let scanned = hits as f64 / m as f64;
        ensure(scanned == co.fraction, || format!("seed {seed}: analysis {} vs scan {scanned}", co.fraction))?;
        fractions.push(co.fraction);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    ensure((mean - expected).abs() <= 0.06, || format!("mean fraction {mean:.4}, expected {expected:.4} ± 0.06"))?;
    Ok(format!("task best planted on 20/20 seeds, mean fraction {mean:.4} (target {expected:.4} ± 0.06)"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "oracle": {
            "backend": "synthetic",
            "params": {
                "n_demos": 12, "n_queries": 10, "seed": 4, "aggregator": "sum",
                "interaction_scale": 0.5, "noise_scale": 0.1
            }
        },
        "pool_size": 12,
        "n_prime": 6,
        "seeds": [0, 1, 2, 3],
        "strategies": [
            {"kind": "topk", "k": 1},
            {"kind": "topk", "k": 3, "holdout": "loocv"},
            {"kind": "greedy"},
            {"kind": "greedy", "holdout": "loocv", "fair_loocv": true},
            {"kind": "random"},
            {"kind": "exhaustive"},
            {"kind": "oracle"}
        ],
        "test_queries": {"start": 12, "end": 22}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn compare_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_config(dir.path());
    let mut reports = Vec::new();
    for (run, jobs) in [("a", None), ("b", None), ("c", Some("1"))] {
        let out = dir.path().join(run);
        let mut cmd = Command::new(BIN);
        if let Some(j) = jobs {
            cmd.args(["--jobs", j]);
        }
        let status = cmd
            .args(["compare", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "two identical runs differ".into())?;
    ensure(reports[0] == reports[2], || "single-threaded run differs".into())?;
    Ok(format!("report.json byte-identical across 3 runs ({} bytes)", reports[0].len()))
}

/// Evaluates `pairs` twice in opposite orders and compares bit patterns.
fn replay(oracle: &dyn Evaluator, pairs: &[(DemoSet, SampleId)]) -> Result<Vec<u64>, String> {
    let eval = |p: &(DemoSet, SampleId)| oracle.evaluate(&p.0, p.1).map(|u| u.value().to_bits()).map_err(|e| e.to_string());
    let first: Vec<u64> = pairs.iter().map(eval).collect::<Result<_, _>>()?;
    let mut second: Vec<u64> = pairs.iter().rev().map(eval).collect::<Result<_, _>>()?;
    second.reverse();
    match first.iter().zip(&second).position(|(a, b)| a != b) {
        Some(i) => Err(format!("pair {i} ({}, {}) changed on replay", pairs[i].0, pairs[i].1)),
        None => Ok(first),
    }
}

fn random_set(rng: &mut SeededRng, demos: &[SampleId], max: usize) -> DemoSet {
    let mut pool = demos.to_vec();
    let k = 1 + rng.bounded(max as u64) as usize;
    rng.partial_shuffle(&mut pool, k);
    pool[..k].iter().copied().collect()
}

fn purity_replay() -> Verdict {
    const PAIRS: usize = 1000;
    let mut rng = SeededRng::new(2024);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut done = Vec::new();

    let synth = landscape(16, 40, 7, 0.5, 0.1);
    let demos = ids(0..16);
    let pairs: Vec<_> = (0..PAIRS)
        .map(|_| {
            let s = random_set(&mut rng, &demos, 4);
            let q = SampleId(16 + rng.bounded(40));
            (s, q)
        })
        .collect();
    replay(&synth, &pairs).map_err(|e| format!("synthetic: {e}"))?;
    done.push("synthetic");

    // matrix and external backends answer from the same file
    let small = landscape(6, 10, 11, 0.0, 0.0);
    let (md, mq) = split(6, 10);
    let values: Vec<f64> = md
        .iter()
        .flat_map(|&d| mq.iter().map(move |&q| (d, q)))
        .map(|(d, q)| small.evaluate(&DemoSet::singleton(d), q).unwrap().value())
        .collect();
    let matrix_path = dir.path().join("matrix.csv");
    OneShotMatrix::new(md.clone(), mq.clone(), values)
        .and_then(|m| m.write(&matrix_path))
        .map_err(|e| e.to_string())?;
    let matrix = OneShotMatrix::load(&matrix_path).map_err(|e| e.to_string())?;
    let singles: Vec<_> = (0..PAIRS)
        .map(|_| (DemoSet::singleton(md[rng.bounded(6) as usize]), mq[rng.bounded(10) as usize]))
        .collect();
    let matrix_bits = replay(&matrix, &singles).map_err(|e| format!("matrix: {e}"))?;
    done.push("matrix");

    let table_path = dir.path().join("table.jsonl");
    let mut entries = Vec::new();
    for set in enumerate_subsets(&md, Some(3)).map_err(|e| e.to_string())? {
        for &q in &mq {
            entries.push(((set.clone(), q), small.evaluate(&set, q).unwrap()));
        }
    }
    SubsetTable::from_entries(entries)
        .and_then(|t| t.write(&table_path))
        .map_err(|e| e.to_string())?;
    let table = SubsetTable::load(&table_path).map_err(|e| e.to_string())?;
    let table_pairs: Vec<_> = (0..PAIRS)
        .map(|_| (random_set(&mut rng, &md, 3), mq[rng.bounded(10) as usize]))
        .collect();
    replay(&table, &table_pairs).map_err(|e| format!("table: {e}"))?;
    done.push("table");

    let cfg = ExternalConfig::new(vec![
        BIN.into(),
        "serve-mock".into(),
        "--matrix".into(),
        matrix_path.display().to_string(),
    ]);
    let ext = ExternalEvaluator::spawn(&cfg).map_err(|e| e.to_string())?;
    let ext_bits = replay(&ext, &singles).map_err(|e| format!("external: {e}"))?;
    ensure(ext_bits == matrix_bits, || "external replies differ from the in-process matrix".into())?;
    let multi: Vec<_> = (0..PAIRS)
        .map(|_| (random_set(&mut rng, &md, 4), mq[rng.bounded(10) as usize]))
        .collect();
    replay(&ext, &multi).map_err(|e| format!("external: {e}"))?;
    let t = Instant::now();
    ext.shutdown().map_err(|e| e.to_string())?;
    ensure(t.elapsed() < Duration::from_secs(5), || format!("shutdown took {:?}", t.elapsed()))?;
    done.push("external");

    Ok(format!("{PAIRS} pairs bit-identical on {}", done.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("modular-optimality", modular_optimality),
        ("dominance-chain", dominance_chain),
        ("first-pick-coincidence", first_pick_coincidence),
        ("greedy-trace-monotone", greedy_monotone),
        ("call-audit", call_audit),
        ("metric-examples", metric_examples),
        ("planted-coincidence", planted_coincidence),
        ("compare-determinism", compare_determinism),
        ("purity-replay", purity_replay),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut results = BTreeMap::new();
    for (name, f) in criteria {
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match &verdict {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => println!("FAIL {name}: {detail}"),
        }
        results.insert(name, verdict.is_ok());
    }
    let passed = results.values().filter(|&&ok| ok).count();
    println!("\n{passed}/{} acceptance criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
