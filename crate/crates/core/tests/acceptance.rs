//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wavesev::bench::{self, BenchConfig};
use wavesev::eval::{self, binary_metrics, ova_metrics, ConfusionMatrix, EvalReport};
use wavesev::features::{self, gradient, spectral, time, FeatureConfig};
use wavesev::pipeline::{self, PipelineConfig};
use wavesev::svm::{self, KernelSpec, TrainConfig};
use wavesev::synth::{self as synth_mod, oracle};
use wavesev::{io, Execution, Modality, Window};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let offset = rng.random_range(-2.0..2.0);
    let scale = 10f64.powf(rng.random_range(-1.0..2.0));
    let f = rng.random_range(0.001..0.5);
    let a = rng.random_range(0.0..3.0);
    (0..len)
        .map(|i| {
            let n: f64 = StandardNormal.sample(rng);
            scale * (offset + a * (2.0 * PI * f * i as f64).sin() + n)
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = FeatureConfig::default();
    let mut worst: f64 = 0.0;
    let n = 200;
    for w in 0..n {
        let len = if w % 4 == 0 { 1024 } else { rng.random_range(64..=oracle::MAX_LEN) };
        let win = Window::new(random_signal(&mut rng, len), 100.0, Modality::Ppg, "p", None).map_err(e)?;
        let fast = features::extract(&win, &cfg).map_err(e)?;
        let slow = oracle::oracle_features(&win, &cfg).map_err(e)?;
        check(fast.layout() == slow.layout(), || format!("layout differs at L={len}"))?;
        for (k, (a, b)) in fast.values().iter().zip(slow.values()).enumerate() {
            let rel = if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
            check(rel <= 1e-9, || format!("window {w} (L={len}) column {k}: {a} vs {b}, rel {rel:e}"))?;
            worst = worst.max(rel);
        }
    }
    let elapsed = t0.elapsed();
    check(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("{n} windows, worst relative error {worst:.2e}, {:.1} s", elapsed.as_secs_f64()))
}

fn gradient_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let n = 10_000;
    for w in 0..n {
        let len = rng.random_range(16..=2048);
        let t = rng.random_range(1..=(len / 2).min(8));
        // Unit-scale windows, as after z-scoring; an absolute 1e-12 bound
        // is below one ulp of the pooled sums once amplitudes reach ~100.
        let mut x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        if w % 10 == 0 {
            // Plateaus exercise zero gradients.
            x.iter_mut().for_each(|v| *v = (4.0 * *v).round() / 4.0);
        }
        let pools = gradient::gradient_pooling(&x, t).map_err(e)?;
        let ranges = gradient::chunk_ranges(len, t).map_err(e)?;
        for (p, r) in pools.iter().zip(&ranges) {
            let n_grad = (r.len() - 1) as f64;
            check(p.h_pos + p.h_neg == n_grad, || {
                format!("window {w} chunk {r:?}: h+ + h- = {} != {n_grad}", p.h_pos + p.h_neg)
            })?;
            let want = x[r.end - 1] - x[r.start];
            let err = (p.s_pos + p.s_neg - want).abs();
            check(err <= 1e-12, || format!("window {w} chunk {r:?}: s+ + s- off by {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("{n} windows, counts exact, worst sum error {worst:.2e}"))
}

fn partition_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for len in [50usize, 1_500, 76_800] {
        let x = random_signal(&mut rng, len);
        let sp = spectral::spectrum_of(&x, 100.0);
        let m = sp.magnitudes();
        for nb in [1usize, 4, 200] {
            let ranges = spectral::band_ranges(len, nb);
            check(ranges.len() == nb, || format!("L={len} N_b={nb}: {} bands", ranges.len()))?;
            let mut next = 0;
            for r in &ranges {
                check(r.start == next, || format!("L={len} N_b={nb}: gap or overlap at {r:?}"))?;
                next = r.end;
            }
            check(next == m.len(), || format!("L={len} N_b={nb}: covers {next} of {}", m.len()))?;
            let bands = spectral::whole_freq_features(&sp, nb);
            let total: f64 = m.iter().sum();
            let sum: f64 = bands.iter().sum();
            let rel = (sum - total).abs() / total;
            check(rel <= 1e-12, || format!("L={len} N_b={nb}: band total off by {rel:e}"))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("bins partition exactly for all 9 cases, worst float sum difference {worst:.1e} relative"))
}

fn kurtosis_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (k, flag) = time::kurtosis(&x);
    check((2.9..=3.1).contains(&k) && !flag, || format!("normal kurtosis {k}, flag {flag}"))?;
    let (kc, fc) = time::kurtosis(&[4.2; 1000]);
    check(kc == 0.0 && fc, || format!("constant gives {kc}, flag {fc}"))?;
    Ok(format!("normal k = {k:.4}; constant k = 0 with degenerate flag"))
}

fn audit_binary(x: &[Vec<f64>], y: &[f64], cfg: &TrainConfig, kernel: &KernelSpec) -> Result<(svm::BinaryModel, usize), String> {
    let m = svm::train_binary(x, y, cfg, kernel).map_err(e)?;
    let a = m.kkt_audit(x, y, &vec![cfg.c; y.len()], kernel, 1e-3);
    check(a.passed(), || format!("KKT audit failed: {a:?}"))?;
    let errors = x
        .iter()
        .zip(y)
        .filter(|(r, &t)| m.decision(r, kernel).signum() != t)
        .count();
    Ok((m, errors))
}

fn svm_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = TrainConfig::default();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (cx, cy, label) in [(-3.0, -3.0, -1.0), (3.0, 3.0, 1.0)] {
        for _ in 0..50 {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            x.push(vec![cx + 0.5 * a, cy + 0.5 * b]);
            y.push(label);
        }
    }
    let (_, blob_err) = audit_binary(&x, &y, &cfg, &KernelSpec::linear())?;
    check(blob_err == 0, || format!("linear blobs: {blob_err} training errors"))?;

    let xor = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let yx = vec![1.0, 1.0, -1.0, -1.0];
    let (_, g_err) = audit_binary(&xor, &yx, &cfg, &KernelSpec::gaussian(1.0))?;
    check(g_err == 0, || format!("gaussian XOR: {g_err} errors"))?;
    let (_, l_err) = audit_binary(&xor, &yx, &cfg, &KernelSpec::linear())?;
    check(l_err > 0, || "linear XOR separated".into())?;

    // A 3-class OVA model, audited through the model-level API.
    let mut x3 = Vec::new();
    let mut l3 = Vec::new();
    for (k, c) in [(-4.0, 0.0), (4.0, 0.0), (0.0, 5.0)].iter().enumerate() {
        for _ in 0..30 {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            x3.push(vec![c.0 + a, c.1 + b]);
            l3.push(format!("c{k}"));
        }
    }
    let model = svm::train_ova(&x3, &l3, &cfg, &KernelSpec::gaussian_scale(), Execution::default()).map_err(e)?;
    let audits = model.kkt_audit(&x3, &l3, 1e-3);
    check(audits.iter().all(|a| a.passed()), || format!("OVA audit failed: {audits:?}"))?;
    Ok(format!(
        "blobs 0 errors; XOR gaussian 0, linear {l_err}; {} models audited at 1e-3",
        3 + audits.len()
    ))
}

fn e2e_config(window_s: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: 2017,
        ..PipelineConfig::default()
    };
    cfg.segment.duration_s = window_s;
    cfg
}

struct Study {
    n_samples: usize,
    report: EvalReport,
    dims: usize,
}

fn run_study(manifest: &io::DatasetManifest, window_s: f64) -> Result<Study, String> {
    let cfg = e2e_config(window_s);
    let ex = pipeline::extract_dataset(manifest, &cfg, Execution::default()).map_err(e)?;
    let report = eval::repeated_split_eval(&ex.vectors, &cfg.eval, cfg.seed, &cfg.train, &cfg.kernel, Execution::default())
        .map_err(e)?;
    Ok(Study {
        n_samples: ex.vectors.len(),
        dims: ex.layout.total_dim(),
        report,
    })
}

fn audit_repeats(r: &EvalReport) -> Result<(), String> {
    let bad = r.per_repeat.iter().filter(|p| !p.kkt_passed).count();
    check(bad == 0, || format!("{bad} repeats failed the KKT audit"))
}

fn e2e_study(s: &Study, elapsed: Duration) -> Outcome {
    let acc = s.report.aggregate.mean.accuracy;
    let sd = s.report.aggregate.std.accuracy;
    check(e2e_config(300.0).train.tolerance == 1e-3, || "train tolerance is not 1e-3".into())?;
    check(s.dims == 416, || format!("{} feature dims", s.dims))?;
    check(s.report.repeats == 100, || format!("{} repeats", s.report.repeats))?;
    audit_repeats(&s.report)?;
    check(acc >= 0.95, || format!("mean accuracy {:.2}%", 100.0 * acc))?;
    check(sd <= 0.05, || format!("accuracy std {:.2} points", 100.0 * sd))?;
    check(elapsed <= Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} windows x {} dims, 100 splits: accuracy {:.2}% +/- {:.2}, {:.1} s",
        s.n_samples,
        s.dims,
        100.0 * acc,
        100.0 * sd,
        elapsed.as_secs_f64()
    ))
}

fn window_sweep(manifest: &io::DatasetManifest, five: &Study) -> Outcome {
    let one = run_study(manifest, 60.0)?;
    audit_repeats(&one.report)?;
    let ratio = one.n_samples as f64 / five.n_samples as f64;
    check(ratio >= 4.0, || format!("1-min windows: {} vs {}", one.n_samples, five.n_samples))?;
    let (a5, a1) = (five.report.aggregate.mean.accuracy, one.report.aggregate.mean.accuracy);
    check((a5 - a1).abs() <= 0.10, || format!("accuracy 5-min {a5:.4} vs 1-min {a1:.4}"))?;
    Ok(format!(
        "5-min: {} windows {:.2}%; 1-min: {} windows {:.2}% (x{ratio:.1})",
        five.n_samples,
        100.0 * a5,
        one.n_samples,
        100.0 * a1
    ))
}

fn benchmark_shape() -> Outcome {
    let report = bench::run(&BenchConfig::default(), &FeatureConfig::default()).map_err(e)?;
    check(report.rows.len() == 11, || format!("{} rows", report.rows.len()))?;
    for r in &report.rows {
        check(r.timing.median_ms <= 50.0, || format!("{} median {:.3} ms", r.feature, r.timing.median_ms))?;
    }
    let full = report.full_extraction.median_ms;
    check(full <= 250.0, || format!("full extraction {full:.3} ms"))?;
    let mut slopes = Vec::new();
    for s in &report.sweep {
        let ok = if s.group == "Frequency" {
            (0.95..=1.25).contains(&s.slope)
        } else {
            (s.slope - 1.0).abs() <= 0.15
        };
        check(ok, || format!("{} slope {:.3}", s.feature, s.slope))?;
        slopes.push(format!("{} {:.2}", s.feature, s.slope));
    }
    check(report.sweep.len() == 11, || "sweep missing".into())?;
    let sum: f64 = report.rows.iter().map(|r| r.timing.median_ms).sum();
    Ok(format!(
        "{} samples: rows sum {sum:.3} ms, full extraction {full:.3} ms; slopes: {}",
        report.signal_len,
        slopes.join(", ")
    ))
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let mut f1_checked = 0;
    for i in 0..n {
        let hi = if i % 2 == 0 { 20 } else { 100_000 };
        let c: [u64; 4] = std::array::from_fn(|_| rng.random_range(0..hi));
        let [tp, tn, fp, fneg] = c;
        if tp + tn + fp + fneg == 0 {
            continue;
        }
        let m = binary_metrics(tp, tn, fp, fneg).map_err(e)?.metrics;
        let acc = (tp + tn) as f64 / (tp + tn + fp + fneg) as f64;
        check(m.accuracy == acc, || format!("{c:?}: accuracy {} vs {acc}", m.accuracy))?;
        let (p, r) = (m.precision, m.recall);
        if p > 0.0 && r > 0.0 {
            check(p.min(r) <= m.f1 && m.f1 <= (p * r).sqrt(), || format!("{c:?}: F1 {} outside [{}, {}]", m.f1, p.min(r), (p * r).sqrt()))?;
            f1_checked += 1;
        }

        let cm = ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], vec![vec![tp, fneg], vec![fp, tn]]).map_err(e)?;
        let ova = ova_metrics(&cm).map_err(e)?.metrics.to_array();
        let mirror = binary_metrics(tn, tp, fneg, fp).map_err(e)?.metrics.to_array();
        let want: Vec<f64> = m.to_array().iter().zip(mirror).map(|(a, b)| (a + b) / 2.0).collect();
        check(ova[..] == want[..], || format!("{c:?}: OVA {ova:?} vs mirrored mean {want:?}"))?;
    }
    Ok(format!("{n} matrices, F1 bounds checked on {f1_checked}, accuracy and 2-class OVA exact"))
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut v = Vec::new();
    for entry in fs::read_dir(dir).map_err(e)? {
        let entry = entry.map_err(e)?;
        v.push((entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).map_err(e)?));
    }
    v.sort();
    Ok(v)
}

fn same_dirs(a: &Path, b: &Path, what: &str) -> Result<usize, String> {
    let (x, y) = (dir_bytes(a)?, dir_bytes(b)?);
    check(x.len() == y.len(), || format!("{what}: file counts differ"))?;
    for ((na, ca), (nb, cb)) in x.iter().zip(&y) {
        check(na == nb && ca == cb, || format!("{what}: {na} differs"))?;
    }
    Ok(x.len())
}

fn determinism(root: &Path) -> Outcome {
    let mut cfg = PipelineConfig {
        seed: 99,
        ..PipelineConfig::default()
    };
    cfg.synth.duration_s = 600.0;
    cfg.synth.n_patients_per_class = 3;
    cfg.segment.duration_s = 60.0;
    cfg.eval.repeats = 10;
    let seq = Execution::Sequential;
    let par = Execution::default();
    let d = |s: &str| root.join(s);
    let mut files = 0;

    pipeline::cmd_synth(&cfg, &d("synth-a"), par).map_err(e)?;
    pipeline::cmd_synth(&cfg, &d("synth-b"), seq).map_err(e)?;
    files += same_dirs(&d("synth-a"), &d("synth-b"), "synth")?;

    let manifest = d("synth-a").join(synth_mod::MANIFEST_FILE);
    pipeline::cmd_extract(&manifest, &cfg, &d("extract-a"), par).map_err(e)?;
    pipeline::cmd_extract(&manifest, &cfg, &d("extract-b"), seq).map_err(e)?;
    files += same_dirs(&d("extract-a"), &d("extract-b"), "extract")?;

    let features = d("extract-a").join(pipeline::FEATURES_FILE);
    pipeline::cmd_train(&features, &cfg, &d("train-a"), par).map_err(e)?;
    pipeline::cmd_train(&features, &cfg, &d("train-b"), seq).map_err(e)?;
    files += same_dirs(&d("train-a"), &d("train-b"), "train")?;

    pipeline::cmd_evaluate(&features, &cfg, &d("eval-a"), par).map_err(e)?;
    pipeline::cmd_evaluate(&features, &cfg, &d("eval-b"), seq).map_err(e)?;
    files += same_dirs(&d("eval-a"), &d("eval-b"), "evaluate")?;

    let report = EvalReport::from_json(&fs::read_to_string(d("eval-a").join(pipeline::REPORT_FILE)).map_err(e)?).map_err(e)?;
    audit_repeats(&report)?;
    Ok(format!(
        "synth, extract, train, evaluate twice each (parallel vs sequential): {files} files byte-identical"
    ))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let corpus = tmp.path().join("corpus");
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "oracle equivalence", oracle_equivalence()),
        (2, "gradient identities", gradient_identities()),
        (3, "partition property", partition_property()),
        (4, "kurtosis sanity", kurtosis_sanity()),
        (5, "svm correctness", svm_correctness()),
    ];

    // Criteria 6 and 7 share one corpus; the timing covers synthesis too.
    let t0 = Instant::now();
    let study = pipeline::cmd_synth(&e2e_config(300.0), &corpus, Execution::default())
        .and_then(|_| io::load_manifest(&corpus.join(synth_mod::MANIFEST_FILE)))
        .map_err(e)
        .and_then(|m| run_study(&m, 300.0).map(|s| (m, s)));
    match study {
        Ok((m, five)) => {
            results.push((6, "end-to-end synthetic study", e2e_study(&five, t0.elapsed())));
            results.push((7, "window-duration sweep", window_sweep(&m, &five)));
        }
        Err(err) => {
            results.push((6, "end-to-end synthetic study", Err(err.clone())));
            results.push((7, "window-duration sweep", Err(format!("corpus unavailable: {err}"))));
        }
    }
    results.push((8, "benchmark shape", benchmark_shape()));
    results.push((9, "metric identities", metric_identities()));
    results.push((10, "determinism", determinism(tmp.path())));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
