//! Sequential versus parallel execution of the batch stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use wavesev::eval::{self, EvalConfig};
use wavesev::features::{self, FeatureConfig};
use wavesev::svm::{KernelSpec, TrainConfig};
use wavesev::synth::{self, SynthConfig};
use wavesev::{Execution, Window};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn corpus() -> SynthConfig {
    SynthConfig {
        duration_s: 600.0,
        n_patients_per_class: 4,
        seed: 5,
        ..SynthConfig::default()
    }
}

fn windows() -> Vec<Window> {
    let recs = synth::generate_recordings(&corpus(), Execution::Sequential).unwrap();
    let mut out = Vec::new();
    for r in &recs {
        let w = &r.waveform;
        let len = (60.0 * w.fs()) as usize;
        for chunk in w.samples().chunks_exact(len) {
            out.push(Window::new(chunk.to_vec(), w.fs(), w.modality(), w.patient_id(), Some(r.record.label.clone())).unwrap());
        }
    }
    out
}

fn extraction(c: &mut Criterion) {
    let wins = windows();
    let cfg = FeatureConfig::default();
    let mut g = c.benchmark_group("extract_batch");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, wins.len()), &wins, |b, w| {
            b.iter(|| features::extract_batch(black_box(w), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let cfg = corpus();
    let mut g = c.benchmark_group("generate_recordings");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| synth::generate_recordings(black_box(&cfg), exec).unwrap()));
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let vectors = features::extract_batch(&windows(), &FeatureConfig::default(), Execution::Parallel)
        .unwrap()
        .vectors;
    let ec = EvalConfig {
        repeats: 20,
        ..EvalConfig::default()
    };
    let tc = TrainConfig::default();
    let kernel = KernelSpec::gaussian_scale();
    let mut g = c.benchmark_group("repeated_split_eval");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| eval::repeated_split_eval(black_box(&vectors), &ec, 1, &tc, &kernel, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, extraction, synthesis, evaluation);
criterion_main!(benches);
