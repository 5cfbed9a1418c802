//! Configuration file and the commands behind the CLI.
//!
//! Every command stages its outputs next to their destination and renames
//! them into place only when the whole command has succeeded, and writes a
//! `run_meta.json` recording the resolved configuration, its digest, the seed,
//! input digests and the interpretation choices in effect.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{self, BenchConfig, BenchReport};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, SplitMode};
use crate::features::{fuse, Extractor, FeatureConfig, FeatureGroup};
use crate::io::{self, DatasetManifest, OutputSet};
use crate::par::Execution;
use crate::preprocess::{preprocess, FilterConfig};
use crate::segment::{segment, SegmentConfig};
use crate::svm::{self, KernelSpec, SvmModel, TrainConfig};
use crate::synth::{self, SynthConfig};
use crate::types::{FeatureLayout, FeatureVector, Modality, SeverityLabel};

pub const FEATURES_FILE: &str = "features.csv";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const BENCH_TABLE_FILE: &str = "benchmark.txt";
pub const BENCH_JSON_FILE: &str = "benchmark.json";
pub const RUN_META_FILE: &str = "run_meta.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Modalities to use, in fusion order. Empty: every modality in the
    /// manifest, in the order ecg, ppg, ip, other.
    pub modalities: Vec<Modality>,
    pub filter: FilterConfig,
    pub segment: SegmentConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub kernel: KernelSpec,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    pub benchmark: BenchConfig,
}

/// Values given on the command line; they replace the file's values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub split_mode: Option<SplitMode>,
    pub window_s: Option<f64>,
    pub groups: Option<BTreeSet<FeatureGroup>>,
}

pub fn parse_groups(s: &str) -> Result<BTreeSet<FeatureGroup>> {
    let groups = s
        .split(',')
        .filter(|g| !g.trim().is_empty())
        .map(str::parse)
        .collect::<Result<BTreeSet<_>>>()?;
    if groups.is_empty() {
        return Err(Error::Config("--groups needs at least one group".into()));
    }
    Ok(groups)
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            Error::Config(e.to_string().split_whitespace().collect::<Vec<_>>().join(" "))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.split_mode {
            self.eval.split_mode = m;
        }
        if let Some(w) = o.window_s {
            self.segment.duration_s = w;
        }
        if let Some(g) = &o.groups {
            self.features.include_groups = g.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.segment.validate_params()?;
        self.features.validate()?;
        self.train.validate()?;
        self.kernel.validate()?;
        self.eval.validate()?;
        self.synth.validate()?;
        self.benchmark.validate()?;
        let distinct: BTreeSet<_> = self.modalities.iter().collect();
        if distinct.len() != self.modalities.len() {
            return Err(Error::Config("modalities lists a modality twice".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}

/// Fixed interpretation choices, recorded in every run's metadata.
pub const INTERPRETATIONS: &[&str] = &[
    "preprocess: smoothing skipped only when lp_cutoff_hz > fs/2",
    "preprocess: high-pass is a 2nd-order Butterworth run forward and backward with odd reflection padding of ceil(fs/cutoff) samples",
    "preprocess: gaussian sigma_s = 0.1325 / lp_cutoff_hz, kernel truncated at 4 sigma, even reflection at the edges",
    "features: std is the population std",
    "features: kurtosis is non-excess; constant windows give 0 with a flag",
    "features: zero crossings need a strict sign change",
    "features: zero gradients count as positive; s_neg is the signed sum",
    "features: gradients do not straddle chunk boundaries; the first L mod T chunks are one sample longer",
    "features: one-sided spectrum without taper; lowfreq includes DC",
    "features: wholefreq bins are [ceil(s_i), ceil(s_f)) with the last closed at L/2+1",
    "svm: z-score normalisation fitted on training rows; constant features map to 0",
    "svm: gamma 'scale' = 1/(d * mean feature variance) of the normalised training rows",
    "svm: repeats differ by resampled split and reseeded working-pair order",
    "svm: two classes train one model and mirror it",
    "svm: ties go to the earlier class in sorted order",
    "eval: macro average over one-vs-rest classes; zero denominators give 0 with a flag",
    "eval: std over repeats uses n - 1",
    "eval: stratified split per class with round(train_frac * n) training units, at least one per side",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

fn digest_input(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    pub parallel_feature: bool,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub interpretations: Vec<String>,
    /// Command-specific facts (counts, per-modality decisions).
    pub notes: BTreeMap<String, String>,
    pub config: PipelineConfig,
}

impl RunMeta {
    fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config_digest: cfg.digest(),
            parallel_feature: cfg!(feature = "parallel"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            interpretations: INTERPRETATIONS.iter().map(|s| s.to_string()).collect(),
            notes: BTreeMap::new(),
            config: cfg.clone(),
        }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.into(), value.to_string());
    }

    /// Stage `run_meta.json` listing every file already staged in `out`.
    fn stage(mut self, dir: &Path, out: &mut OutputSet) -> Result<()> {
        self.outputs = out
            .paths()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect();
        self.outputs.push(RUN_META_FILE.into());
        let json = serde_json::to_string_pretty(&self).map_err(|e| Error::Serialization(e.to_string()))?;
        out.write(&dir.join(RUN_META_FILE), format!("{json}\n").as_bytes())
    }
}

/// Files written and a one-paragraph summary for the terminal.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub message: String,
}

fn finish(out: OutputSet, message: String) -> Result<CommandOutput> {
    let files = out.paths().map(Path::to_path_buf).collect();
    out.commit()?;
    Ok(CommandOutput { files, message })
}

pub fn cmd_synth(cfg: &PipelineConfig, out_dir: &Path, exec: Execution) -> Result<CommandOutput> {
    cfg.validate()?;
    let mut out = OutputSet::new();
    let m = synth::generate_into(&cfg.synth_config(), out_dir, exec, &mut out)?;
    let mut meta = RunMeta::new("synth", cfg);
    meta.note("records", m.records.len());
    meta.stage(out_dir, &mut out)?;
    finish(
        out,
        format!(
            "wrote {} recordings and {}",
            m.records.len(),
            out_dir.join(synth::MANIFEST_FILE).display()
        ),
    )
}

/// Vectors extracted from a dataset plus bookkeeping for the run metadata.
#[derive(Debug)]
pub struct Extraction {
    pub vectors: Vec<FeatureVector>,
    pub layout: Arc<FeatureLayout>,
    pub modalities: Vec<Modality>,
    pub skipped_windows: usize,
    pub smoothing_skipped: BTreeMap<Modality, bool>,
}

/// Preprocess, segment and extract every record of the selected modalities;
/// with more than one modality, the k-th windows of each patient's
/// recordings are fused.
pub fn extract_dataset(m: &DatasetManifest, cfg: &PipelineConfig, exec: Execution) -> Result<Extraction> {
    cfg.validate()?;
    let present: BTreeSet<Modality> = m.records.iter().map(|r| r.modality).collect();
    let modalities: Vec<Modality> = if cfg.modalities.is_empty() {
        present.iter().copied().collect()
    } else {
        cfg.modalities.clone()
    };
    if let Some(missing) = modalities.iter().find(|md| !present.contains(md)) {
        return Err(Error::Data(format!("manifest has no {missing} records")));
    }
    let records: Vec<_> = m.records.iter().filter(|r| modalities.contains(&r.modality)).collect();

    let extractor = Extractor::new(cfg.features.clone())?;
    let per_record = exec.map(&records, |r| -> Result<(Vec<Option<FeatureVector>>, bool, usize)> {
        let w = io::load_waveform(m, r)?;
        let pre = preprocess(&w, &cfg.filter)?;
        let label = SeverityLabel::new(m.label_of(r))?;
        let windows = segment(&pre.waveform, &cfg.segment, Some(&label))?;
        let mut skipped = 0;
        let vectors = windows
            .iter()
            .map(|win| match extractor.extract(win) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("{} {} window at {} s skipped: {e}", r.patient_id, r.modality, win.start_s());
                    skipped += 1;
                    None
                }
            })
            .collect();
        Ok((vectors, pre.smoothing_skipped, skipped))
    });
    let mut results = Vec::with_capacity(records.len());
    let mut smoothing_skipped = BTreeMap::new();
    let mut skipped_windows = 0;
    for (r, res) in records.iter().zip(per_record) {
        let (v, skip, n) = res?;
        smoothing_skipped.insert(r.modality, skip);
        skipped_windows += n;
        results.push(v);
    }

    let mut vectors = Vec::new();
    if modalities.len() == 1 {
        vectors.extend(results.into_iter().flatten().flatten());
    } else {
        let mut by_patient: BTreeMap<&str, BTreeMap<Modality, usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if by_patient.entry(&r.patient_id).or_default().insert(r.modality, i).is_some() {
                return Err(Error::Data(format!(
                    "patient '{}' has several {} records; fusion needs one per modality",
                    r.patient_id, r.modality
                )));
            }
        }
        for (patient, recs) in by_patient {
            if recs.len() != modalities.len() {
                log::warn!("patient '{patient}' lacks some of the fused modalities; skipped");
                continue;
            }
            let idx: Vec<usize> = modalities.iter().map(|md| recs[md]).collect();
            let n = idx.iter().map(|&i| results[i].len()).min().unwrap_or(0);
            #[allow(clippy::needless_range_loop)]
            for k in 0..n {
                let parts: Option<Vec<(Modality, &FeatureVector)>> = modalities
                    .iter()
                    .zip(&idx)
                    .map(|(&md, &i)| results[i][k].as_ref().map(|v| (md, v)))
                    .collect();
                if let Some(parts) = parts {
                    vectors.push(fuse(&parts)?);
                }
            }
        }
    }
    if vectors.is_empty() {
        return Err(Error::Data("no windows extracted".into()));
    }
    crate::features::sort_vectors(&mut vectors);
    let layout = Arc::clone(vectors[0].layout());
    Ok(Extraction {
        vectors,
        layout,
        modalities,
        skipped_windows,
        smoothing_skipped,
    })
}

pub fn cmd_extract(manifest: &Path, cfg: &PipelineConfig, out_dir: &Path, exec: Execution) -> Result<CommandOutput> {
    cfg.validate()?;
    let m = io::load_manifest(manifest)?;
    let ex = extract_dataset(&m, cfg, exec)?;
    let mut out = OutputSet::new();
    out.write(&out_dir.join(FEATURES_FILE), io::features_to_string(&ex.vectors, &ex.layout)?.as_bytes())?;
    let mut meta = RunMeta::new("extract", cfg);
    meta.inputs.push(digest_input(manifest)?);
    meta.note("vectors", ex.vectors.len());
    meta.note("dimension", ex.layout.total_dim());
    meta.note("skipped_windows", ex.skipped_windows);
    meta.note(
        "modalities",
        ex.modalities.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
    );
    for (md, skip) in &ex.smoothing_skipped {
        meta.note(&format!("smoothing_skipped.{md}"), skip);
    }
    meta.stage(out_dir, &mut out)?;
    let counts = eval::class_counts(ex.vectors.iter().filter_map(|v| v.label.as_ref()));
    finish(
        out,
        format!(
            "extracted {} vectors of dimension {} ({}), {} windows skipped",
            ex.vectors.len(),
            ex.layout.total_dim(),
            counts.iter().map(|(c, n)| format!("{c}: {n}")).collect::<Vec<_>>().join(", "),
            ex.skipped_windows
        ),
    )
}

fn labelled(vectors: &[FeatureVector]) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let labels = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.label
                .clone()
                .ok_or_else(|| Error::Data(format!("feature row {} has no label", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((vectors.iter().map(|v| v.values().to_vec()).collect(), labels))
}

pub fn train_model(vectors: &[FeatureVector], cfg: &PipelineConfig, exec: Execution) -> Result<SvmModel> {
    let (x, labels) = labelled(vectors)?;
    let tc = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    svm::train_ova(&x, &labels, &tc, &cfg.kernel, exec)
}

pub fn cmd_train(features: &Path, cfg: &PipelineConfig, out_dir: &Path, exec: Execution) -> Result<CommandOutput> {
    cfg.validate()?;
    let (vectors, _) = io::load_features(features)?;
    if vectors.is_empty() {
        return Err(Error::Data(format!("{}: no feature rows", features.display())));
    }
    let model = train_model(&vectors, cfg, exec)?;
    let (x, labels) = labelled(&vectors)?;
    let audits = model.kkt_audit(&x, &labels, cfg.train.tolerance);
    let kkt_ok = audits.iter().all(svm::KktAudit::passed);

    let mut out = OutputSet::new();
    out.write(&out_dir.join(MODEL_FILE), model.to_json()?.as_bytes())?;
    let mut meta = RunMeta::new("train", cfg);
    meta.inputs.push(digest_input(features)?);
    meta.note("samples", vectors.len());
    meta.note("classes", model.classes.join(","));
    meta.note("kkt_audit_passed", kkt_ok);
    meta.note("converged", model.binary_models.iter().all(|b| b.converged));
    meta.note(
        "support_vectors",
        model
            .binary_models
            .iter()
            .map(|b| b.support_vectors.len().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    meta.stage(out_dir, &mut out)?;
    let train_pred = svm::predict_labels(&model, &x)?;
    let errors = train_pred.iter().zip(&labels).filter(|(p, t)| p != t).count();
    finish(
        out,
        format!(
            "trained {} one-vs-rest model(s) on {} samples; {} training errors; KKT audit {}",
            model.classes.len(),
            vectors.len(),
            errors,
            if kkt_ok { "passed" } else { "FAILED" }
        ),
    )
}

pub fn cmd_evaluate(features: &Path, cfg: &PipelineConfig, out_dir: &Path, exec: Execution) -> Result<CommandOutput> {
    cfg.validate()?;
    let (vectors, _) = io::load_features(features)?;
    let mut report = eval::repeated_split_eval(&vectors, &cfg.eval, cfg.seed, &cfg.train, &cfg.kernel, exec)?;
    report.config_digest = cfg.digest();

    let mut out = OutputSet::new();
    out.write(&out_dir.join(REPORT_FILE), report.to_json()?.as_bytes())?;
    out.write(&out_dir.join(CONFUSION_FILE), report.confusion_csv().as_bytes())?;
    out.write(&out_dir.join(SUMMARY_FILE), report.summary().as_bytes())?;
    let mut meta = RunMeta::new("evaluate", cfg);
    meta.inputs.push(digest_input(features)?);
    meta.note("split_mode", report.split_mode);
    meta.note(
        "kkt_audit_failures",
        report.per_repeat.iter().filter(|r| !r.kkt_passed).count(),
    );
    meta.note(
        "flagged_repeats",
        report.per_repeat.iter().filter(|r| r.flags.any()).count(),
    );
    meta.stage(out_dir, &mut out)?;
    finish(out, report.summary())
}

/// Timing table and scaling sweep. `sweep_lengths` replaces the configured
/// sweep when given. Outputs are written only when `out_dir` is given.
pub fn cmd_benchmark(
    cfg: &PipelineConfig,
    sweep_lengths: Option<Vec<usize>>,
    out_dir: Option<&Path>,
) -> Result<(BenchReport, CommandOutput)> {
    cfg.validate()?;
    let mut bc = cfg.benchmark.clone();
    if let Some(s) = sweep_lengths {
        bc.sweep_lengths = s;
    }
    let report = bench::run(&bc, &cfg.features)?;
    let table = report.table();
    let mut out = OutputSet::new();
    if let Some(dir) = out_dir {
        out.write(&dir.join(BENCH_TABLE_FILE), table.as_bytes())?;
        out.write(&dir.join(BENCH_JSON_FILE), report.to_json()?.as_bytes())?;
        let mut meta = RunMeta::new("benchmark", cfg);
        meta.note("timings_deterministic", false);
        meta.stage(dir, &mut out)?;
    }
    let output = finish(out, table)?;
    Ok((report, output))
}
