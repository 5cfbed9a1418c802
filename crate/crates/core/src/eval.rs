//! Confusion matrices, the five classification metrics and the repeated
//! stratified holdout harness.
//!
//! Metrics are fractions in `[0, 1]`; the report renders them as percentages.
//! A metric whose denominator is zero is reported as 0 and flagged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::svm::{self, KernelSpec, TrainConfig};
use crate::types::FeatureVector;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Data(format!("confusion matrix must be {k}x{k}")));
        }
        Ok(Self { classes, counts })
    }

    pub fn from_predictions(classes: Vec<String>, truth: &[String], predicted: &[String]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let mut cm = Self::new(classes);
        for (t, p) in truth.iter().zip(predicted) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Data(format!("label '{label}' is not a known class")))
    }

    pub fn add(&mut self, truth: &str, predicted: &str) -> Result<()> {
        let (t, p) = (self.index(truth)?, self.index(predicted)?);
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Collapse to class `k` versus the rest.
    pub fn one_vs_rest(&self, k: usize) -> BinaryCounts {
        let total = self.total();
        let tp = self.counts[k][k];
        let row: u64 = self.counts[k].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[k]).sum();
        BinaryCounts {
            tp,
            fneg: row - tp,
            fp: col - tp,
            tn: total + tp - row - col,
        }
    }

    /// Each row scaled to sum to 100 (rows without samples stay 0).
    pub fn row_percent(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let n: u64 = r.iter().sum();
                r.iter()
                    .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fneg: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["accuracy", "precision", "recall", "specificity", "f1"];

    pub fn to_array(self) -> [f64; 5] {
        [self.accuracy, self.precision, self.recall, self.specificity, self.f1]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            accuracy: a[0],
            precision: a[1],
            recall: a[2],
            specificity: a[3],
            f1: a[4],
        }
    }
}

/// Which metrics hit a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricFlags {
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub specificity_undefined: bool,
}

impl MetricFlags {
    pub fn any(self) -> bool {
        self.precision_undefined || self.recall_undefined || self.specificity_undefined
    }

    fn union(self, o: Self) -> Self {
        Self {
            precision_undefined: self.precision_undefined || o.precision_undefined,
            recall_undefined: self.recall_undefined || o.recall_undefined,
            specificity_undefined: self.specificity_undefined || o.specificity_undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricResult {
    pub metrics: Metrics,
    pub flags: MetricFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn binary_metrics(tp: u64, tn: u64, fp: u64, fneg: u64) -> Result<MetricResult> {
    let total = tp + tn + fp + fneg;
    if total == 0 {
        return Err(Error::Data("all confusion counts are zero".into()));
    }
    let (precision, p_flag) = ratio(tp, tp + fp);
    let (recall, r_flag) = ratio(tp, tp + fneg);
    let (specificity, s_flag) = ratio(tn, tn + fp);
    // 2PR/(P+R) written over counts: one rounding, and 0 when P+R = 0.
    let (f1, _) = ratio(2 * tp, 2 * tp + fp + fneg);
    Ok(MetricResult {
        metrics: Metrics {
            accuracy: (tp + tn) as f64 / total as f64,
            precision,
            recall,
            specificity,
            f1,
        },
        flags: MetricFlags {
            precision_undefined: p_flag,
            recall_undefined: r_flag,
            specificity_undefined: s_flag,
        },
    })
}

/// Unweighted mean over classes of the class-versus-rest metrics.
pub fn ova_metrics(cm: &ConfusionMatrix) -> Result<MetricResult> {
    let k = cm.classes.len();
    if k < 2 {
        return Err(Error::Data(format!("need at least 2 classes, got {k}")));
    }
    let mut sum = [0.0; 5];
    let mut flags = MetricFlags::default();
    for c in 0..k {
        let b = cm.one_vs_rest(c);
        let r = binary_metrics(b.tp, b.tn, b.fp, b.fneg)?;
        for (s, v) in sum.iter_mut().zip(r.metrics.to_array()) {
            *s += v;
        }
        flags = flags.union(r.flags);
    }
    Ok(MetricResult {
        metrics: Metrics::from_array(sum.map(|s| s / k as f64)),
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Windows are split independently; a patient may appear on both sides.
    #[default]
    Sample,
    /// All windows of a patient land on the same side.
    Patient,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Sample => "sample",
            SplitMode::Patient => "patient",
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sample" => Ok(SplitMode::Sample),
            "patient" => Ok(SplitMode::Patient),
            other => Err(Error::Config(format!(
                "unknown split mode '{other}' (expected sample or patient)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub train_frac: f64,
    pub repeats: usize,
    pub split_mode: SplitMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            repeats: 100,
            split_mode: SplitMode::Sample,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config(format!(
                "train_frac must be in (0, 1), got {}",
                self.train_frac
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

/// Indices of the training and test rows of one repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn train_count(n: usize, frac: f64) -> usize {
    ((frac * n as f64).round() as usize).clamp(1, n - 1)
}

/// Groups rows for splitting: by class, and within a class by split unit
/// (single rows, or patients).
struct SplitPlan {
    /// Per class (sorted), the units; each unit is a list of row indices.
    units: Vec<(String, Vec<Vec<usize>>)>,
}

impl SplitPlan {
    fn new(labels: &[String], patients: &[String], mode: SplitMode) -> Result<Self> {
        let mut by_class: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
        for (i, (l, p)) in labels.iter().zip(patients).enumerate() {
            by_class.entry(l).or_default().entry(p).or_default().push(i);
        }
        if by_class.len() < 2 {
            return Err(Error::Training(format!(
                "need at least 2 classes, found {}",
                by_class.len()
            )));
        }
        if mode == SplitMode::Patient {
            let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
            for (class, pats) in &by_class {
                for p in pats.keys() {
                    if let Some(other) = owner.insert(p, class) {
                        return Err(Error::Data(format!(
                            "patient '{p}' has windows labelled '{other}' and '{class}'; patient split needs one label per patient"
                        )));
                    }
                }
            }
        }
        let mut units = Vec::new();
        for (class, pats) in by_class {
            let class_units: Vec<Vec<usize>> = match mode {
                SplitMode::Sample => {
                    let mut rows: Vec<usize> = pats.into_values().flatten().collect();
                    rows.sort_unstable();
                    if rows.len() < 2 {
                        return Err(Error::Training(format!(
                            "class '{class}' has {} sample(s); at least 2 are needed to split",
                            rows.len()
                        )));
                    }
                    rows.into_iter().map(|r| vec![r]).collect()
                }
                SplitMode::Patient => {
                    if pats.len() < 2 {
                        return Err(Error::Training(format!(
                            "class '{class}' has {} patient(s); patient split needs at least 2",
                            pats.len()
                        )));
                    }
                    pats.into_values().collect()
                }
            };
            units.push((class.to_owned(), class_units));
        }
        Ok(Self { units })
    }

    fn classes(&self) -> Vec<String> {
        self.units.iter().map(|(c, _)| c.clone()).collect()
    }

    fn draw(&self, frac: f64, seed: u64) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (_, units) in &self.units {
            let mut order: Vec<usize> = (0..units.len()).collect();
            order.shuffle(&mut rng);
            let n_train = train_count(units.len(), frac);
            for (pos, &u) in order.iter().enumerate() {
                let side = if pos < n_train { &mut train } else { &mut test };
                side.extend_from_slice(&units[u]);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        Split { train, test }
    }
}

/// The stratified split used for repeat `seed`.
pub fn stratified_split(
    labels: &[String],
    patients: &[String],
    mode: SplitMode,
    train_frac: f64,
    seed: u64,
) -> Result<Split> {
    Ok(SplitPlan::new(labels, patients, mode)?.draw(train_frac, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub flags: MetricFlags,
    /// Every per-class SMO run reached the stopping tolerance.
    pub converged: bool,
    /// Every per-class model passed the KKT audit on its training rows.
    pub kkt_passed: bool,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Metrics,
    /// Sample standard deviation (n − 1); 0 for a single repeat.
    pub std: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub config_digest: String,
    pub split_mode: SplitMode,
    pub train_frac: f64,
    pub repeats: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub classes: Vec<String>,
    pub per_repeat: Vec<RepeatResult>,
    pub aggregate: Aggregate,
    /// Row-normalised confusion (percent), averaged over repeats.
    pub confusion_percent: Vec<Vec<f64>>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: EvalReport =
            serde_json::from_str(s).map_err(|e| Error::Serialization(format!("report: {e}")))?;
        if r.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported report format version {}",
                r.format_version
            )));
        }
        Ok(r)
    }

    /// `true\predicted` header row, then one row per true class, in percent.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion_percent) {
            s.push_str(c);
            for v in row {
                let _ = write!(s, ",{v:.4}");
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable mean ± std table in percent.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} repeats, {} split, {} samples, classes [{}]\n",
            self.repeats,
            self.split_mode,
            self.n_samples,
            self.classes.join(", ")
        );
        let mean = self.aggregate.mean.to_array();
        let std = self.aggregate.std.to_array();
        for (i, name) in Metrics::NAMES.iter().enumerate() {
            let _ = writeln!(s, "{name:<12} {:>7.2} ± {:.2} %", 100.0 * mean[i], 100.0 * std[i]);
        }
        s
    }
}

fn aggregate(results: &[RepeatResult]) -> Aggregate {
    let n = results.len() as f64;
    let mut mean = [0.0; 5];
    for r in results {
        for (m, v) in mean.iter_mut().zip(r.metrics.to_array()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = [0.0; 5];
    if results.len() > 1 {
        for r in results {
            for ((s, v), m) in std.iter_mut().zip(r.metrics.to_array()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
    }
    Aggregate {
        mean: Metrics::from_array(mean),
        std: Metrics::from_array(std),
    }
}

fn mean_percent(results: &[RepeatResult], k: usize) -> Vec<Vec<f64>> {
    let mut acc = vec![vec![0.0; k]; k];
    for r in results {
        for (a, row) in acc.iter_mut().zip(r.confusion.row_percent()) {
            for (x, v) in a.iter_mut().zip(row) {
                *x += v;
            }
        }
    }
    let n = results.len() as f64;
    acc.iter_mut().flatten().for_each(|x| *x /= n);
    acc
}

/// Repeated stratified holdout. Repeat `r` uses seed `seed + r` for both its
/// split and the SMO visiting order; normalisation is fitted on the training
/// rows of each repeat.
pub fn repeated_split_eval(
    vectors: &[FeatureVector],
    cfg: &EvalConfig,
    seed: u64,
    train_cfg: &TrainConfig,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<EvalReport> {
    cfg.validate()?;
    train_cfg.validate()?;
    kernel.validate()?;
    let labels: Vec<String> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.label
                .clone()
                .ok_or_else(|| Error::Data(format!("feature vector {i} has no label")))
        })
        .collect::<Result<_>>()?;
    let patients: Vec<String> = vectors.iter().map(|v| v.patient_id.clone()).collect();
    if let Some(v) = vectors.iter().find(|v| v.dim() != vectors[0].dim()) {
        return Err(Error::Dimension {
            expected: vectors[0].dim(),
            got: v.dim(),
        });
    }
    let plan = SplitPlan::new(&labels, &patients, cfg.split_mode)?;
    let classes = plan.classes();
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values().to_vec()).collect();

    let run = |r: usize| -> Result<RepeatResult> {
        let rseed = seed.wrapping_add(r as u64);
        let split = plan.draw(cfg.train_frac, rseed);
        let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<String>) {
            (
                idx.iter().map(|&i| rows[i].clone()).collect(),
                idx.iter().map(|&i| labels[i].clone()).collect(),
            )
        };
        let (xtr, ytr) = pick(&split.train);
        let (xte, yte) = pick(&split.test);
        let tc = TrainConfig {
            seed: rseed,
            ..train_cfg.clone()
        };
        let model = svm::train_ova_with_classes(&xtr, &ytr, &classes, &tc, kernel, exec)?;
        let pred = svm::predict_labels(&model, &xte)?;
        let cm = ConfusionMatrix::from_predictions(classes.clone(), &yte, &pred)?;
        let m = ova_metrics(&cm)?;
        let kkt_passed = model
            .kkt_audit(&xtr, &ytr, train_cfg.tolerance)
            .iter()
            .all(svm::KktAudit::passed);
        Ok(RepeatResult {
            repeat: r,
            n_train: split.train.len(),
            n_test: split.test.len(),
            metrics: m.metrics,
            flags: m.flags,
            converged: model.binary_models.iter().all(|b| b.converged),
            kkt_passed,
            confusion: cm,
        })
    };
    let per_repeat = exec
        .map_range(cfg.repeats, run)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        config_digest: String::new(),
        split_mode: cfg.split_mode,
        train_frac: cfg.train_frac,
        repeats: cfg.repeats,
        seed,
        n_samples: vectors.len(),
        aggregate: aggregate(&per_repeat),
        confusion_percent: mean_percent(&per_repeat, classes.len()),
        classes,
        per_repeat,
    })
}

/// Class frequencies, sorted by class.
pub fn class_counts<'a>(labels: impl IntoIterator<Item = &'a String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l.clone()).or_insert(0) += 1;
    }
    m
}

/// Distinct patients per class.
pub fn patients_per_class(vectors: &[FeatureVector]) -> BTreeMap<String, BTreeSet<String>> {
    let mut m: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for v in vectors {
        if let Some(l) = &v.label {
            m.entry(l.clone()).or_default().insert(v.patient_id.clone());
        }
    }
    m
}
