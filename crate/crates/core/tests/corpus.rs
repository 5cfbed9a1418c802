use wavesev::eval::{self, SplitMode};
use wavesev::io::{self, DataFormat};
use wavesev::pipeline::{self, PipelineConfig};
use wavesev::svm::{self, SvmModel};
use wavesev::synth::{self, Companion};
use wavesev::{Execution, Modality};

fn small_config(format: DataFormat) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: 21,
        ..PipelineConfig::default()
    };
    cfg.synth.duration_s = 360.0;
    cfg.synth.n_patients_per_class = 3;
    cfg.synth.format = format;
    cfg.segment.duration_s = 60.0;
    cfg.eval.repeats = 5;
    cfg
}

#[test]
fn disk_corpus_trains_and_predicts() {
    for format in [DataFormat::Csv, DataFormat::RawF64le] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(format);
        pipeline::cmd_synth(&cfg, dir.path(), Execution::default()).unwrap();
        let m = io::load_manifest(&dir.path().join(synth::MANIFEST_FILE)).unwrap();
        assert_eq!(m.records.len(), 6);
        assert!(m.records.iter().all(|r| r.path.extension().unwrap() == format.extension()));

        let ex = pipeline::extract_dataset(&m, &cfg, Execution::default()).unwrap();
        assert_eq!(ex.vectors.len(), 6 * 6);
        assert_eq!(ex.layout.total_dim(), 416);

        let feat = dir.path().join("features.csv");
        io::save_features(&ex.vectors, &ex.layout, &feat).unwrap();
        let (back, layout) = io::load_features(&feat).unwrap();
        assert_eq!(*layout, *ex.layout);
        for (a, b) in back.iter().zip(&ex.vectors) {
            assert_eq!(a.values(), b.values());
            assert_eq!(a.patient_id, b.patient_id);
            assert_eq!(a.label, b.label);
        }

        let model = pipeline::train_model(&back, &cfg, Execution::default()).unwrap();
        let reloaded = SvmModel::from_json(&model.to_json().unwrap()).unwrap();
        let rows: Vec<Vec<f64>> = back.iter().map(|v| v.values().to_vec()).collect();
        let a = svm::predict_labels(&model, &rows).unwrap();
        assert_eq!(a, svm::predict_labels(&reloaded, &rows).unwrap());
        let truth: Vec<&str> = back.iter().map(|v| v.label.as_deref().unwrap()).collect();
        assert_eq!(a.iter().zip(&truth).filter(|(p, t)| p == t).count(), rows.len());
    }
}

#[test]
fn companions_fuse_by_window() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(DataFormat::RawF64le);
    cfg.synth.companions = vec![Companion { modality: Modality::Ppg, fs: 100.0 }];
    pipeline::cmd_synth(&cfg, dir.path(), Execution::default()).unwrap();
    let m = io::load_manifest(&dir.path().join(synth::MANIFEST_FILE)).unwrap();
    assert_eq!(m.records.len(), 12);

    let ex = pipeline::extract_dataset(&m, &cfg, Execution::default()).unwrap();
    assert_eq!(ex.modalities, vec![Modality::Ecg, Modality::Ppg]);
    assert_eq!(ex.layout.total_dim(), 2 * 416);
    assert_eq!(ex.vectors.len(), 6 * 6);

    cfg.modalities = vec![Modality::Ppg];
    let ppg = pipeline::extract_dataset(&m, &cfg, Execution::default()).unwrap();
    assert_eq!(ppg.layout.total_dim(), 416);
    assert_eq!(ppg.vectors.len(), ex.vectors.len());
}

#[test]
fn patient_split_keeps_patients_apart() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(DataFormat::RawF64le);
    cfg.eval.split_mode = SplitMode::Patient;
    pipeline::cmd_synth(&cfg, dir.path(), Execution::default()).unwrap();
    let m = io::load_manifest(&dir.path().join(synth::MANIFEST_FILE)).unwrap();
    let ex = pipeline::extract_dataset(&m, &cfg, Execution::default()).unwrap();
    let labels: Vec<String> = ex.vectors.iter().map(|v| v.label.clone().unwrap()).collect();
    let patients: Vec<String> = ex.vectors.iter().map(|v| v.patient_id.clone()).collect();
    for seed in 0..20 {
        let s = eval::stratified_split(&labels, &patients, SplitMode::Patient, cfg.eval.train_frac, seed).unwrap();
        for &i in &s.test {
            assert!(s.train.iter().all(|&j| patients[j] != patients[i]));
        }
    }
    let r = eval::repeated_split_eval(&ex.vectors, &cfg.eval, cfg.seed, &cfg.train, &cfg.kernel, Execution::default()).unwrap();
    assert_eq!(r.split_mode, SplitMode::Patient);
    assert!(r.per_repeat.iter().all(|p| p.kkt_passed));
}
