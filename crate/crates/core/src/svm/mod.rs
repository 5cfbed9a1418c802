//! Kernel SVM trained by SMO, with one-vs-all reduction for multiclass labels.
//!
//! Features are z-scored with statistics fitted on the training rows; the
//! statistics travel with the model so [`predict`] takes raw vectors.

pub mod kernel;
mod smo;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;

pub use kernel::{kernel_eval, KernelKind, KernelSpec};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub c: f64,
    /// Stop once the maximal KKT violation gap is below this.
    pub tolerance: f64,
    /// Upper bound on SMO pair updates.
    pub max_passes: usize,
    pub seed: u64,
    /// Scale C per class by `n / (2·n_class)`.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-3,
            max_passes: 100_000,
            seed: 0,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be > 0".into()));
        }
        Ok(())
    }

    fn upper_bounds(&self, y: &[f64]) -> Vec<f64> {
        if !self.class_weighting {
            return vec![self.c; y.len()];
        }
        let n = y.len() as f64;
        let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
        let neg = n - pos;
        y.iter()
            .map(|&v| {
                let count = if v > 0.0 { pos } else { neg };
                self.c * n / (2.0 * count)
            })
            .collect()
    }
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population std; constant features store 1 so they map to 0.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || d == 0 {
            return Err(Error::Training("no training rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// Signed coefficients `αᵢ·yᵢ`.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    /// Row of each support vector in the training set.
    pub support_indices: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl BinaryModel {
    /// `Σ αᵢyᵢ K(svᵢ, x) + b` on an already normalised row.
    pub fn decision(&self, x: &[f64], kernel: &KernelSpec) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, c)| c * kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// The same separator with classes swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            dual_coeffs: self.dual_coeffs.iter().map(|c| -c).collect(),
            bias: -self.bias,
            ..self.clone()
        }
    }

    /// Check the box, equality and KKT conditions on the training rows.
    pub fn kkt_audit(
        &self,
        x: &[Vec<f64>],
        y: &[f64],
        upper: &[f64],
        kernel: &KernelSpec,
        tol: f64,
    ) -> KktAudit {
        let mut alpha = vec![0.0; x.len()];
        for (&i, c) in self.support_indices.iter().zip(&self.dual_coeffs) {
            alpha[i] = c * y[i];
        }
        let mut audit = KktAudit {
            equality_residual: self.dual_coeffs.iter().sum::<f64>().abs(),
            ..KktAudit::default()
        };
        for i in 0..x.len() {
            let margin = y[i] * self.decision(&x[i], kernel);
            let a = alpha[i];
            let excess = if a < 0.0 || a > upper[i] {
                audit.box_violations += 1;
                continue;
            } else if a == 0.0 {
                (1.0 - tol) - margin
            } else if a >= upper[i] {
                margin - (1.0 + tol)
            } else {
                (margin - 1.0).abs() - tol
            };
            audit.worst_excess = audit.worst_excess.max(excess);
            if excess > 0.0 {
                audit.kkt_violations += 1;
            }
        }
        audit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktAudit {
    pub kkt_violations: usize,
    pub box_violations: usize,
    /// `|Σ αᵢyᵢ|`.
    pub equality_residual: f64,
    /// Largest amount by which a condition overshoots its tolerance band
    /// (negative when all hold with room to spare).
    pub worst_excess: f64,
}

impl KktAudit {
    pub fn passed(&self) -> bool {
        self.kkt_violations == 0 && self.box_violations == 0 && self.equality_residual <= 1e-6
    }
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let d = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Training("no training rows".into()))?;
    for (i, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: r.len(),
            });
        }
        if let Some(f) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite feature {f} in training row {i}"
            )));
        }
    }
    Ok(d)
}

/// Train one ±1 problem on already normalised rows.
pub fn train_binary(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &TrainConfig,
    kernel: &KernelSpec,
) -> Result<BinaryModel> {
    cfg.validate()?;
    check_rows(x)?;
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training(format!("label {} at row {i} is not ±1", y[i])));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Training(
            "binary training needs at least one example of each sign".into(),
        ));
    }
    let kernel = kernel.resolve(x)?;

    // The seed fixes the visiting order, which only decides ties in pair selection.
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let upper = cfg.upper_bounds(&ys);

    let sol = smo::solve(&smo::Problem {
        x: &xs,
        y: &ys,
        upper: &upper,
        kernel,
        tolerance: cfg.tolerance,
        max_iter: cfg.max_passes,
    });
    if !sol.converged {
        log::warn!(
            "SMO stopped after {} updates without reaching tolerance {}",
            sol.iterations,
            cfg.tolerance
        );
    }

    let mut svs: Vec<(usize, usize)> = order
        .iter()
        .enumerate()
        .filter(|(k, _)| sol.alpha[*k] > 0.0)
        .map(|(k, &orig)| (orig, k))
        .collect();
    svs.sort_unstable();
    Ok(BinaryModel {
        support_vectors: svs.iter().map(|&(orig, _)| x[orig].clone()).collect(),
        dual_coeffs: svs.iter().map(|&(_, k)| sol.alpha[k] * ys[k]).collect(),
        bias: -sol.rho,
        support_indices: svs.iter().map(|&(orig, _)| orig).collect(),
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    /// Resolved kernel (gamma filled in).
    pub kernel: KernelSpec,
    pub norm_stats: NormStats,
    pub classes: Vec<String>,
    /// One per class: that class positive, the rest negative.
    pub binary_models: Vec<BinaryModel>,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub decision_values: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.norm_stats.dim()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SvmModel =
            serde_json::from_str(s).map_err(|e| Error::Serialization(format!("model: {e}")))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        if m.classes.len() != m.binary_models.len() || m.classes.len() < 2 {
            return Err(Error::Serialization("model class list is inconsistent".into()));
        }
        Ok(m)
    }

    /// KKT audit of every per-class model against its training data.
    pub fn kkt_audit(&self, x_raw: &[Vec<f64>], labels: &[String], tol: f64) -> Vec<KktAudit> {
        let x: Vec<Vec<f64>> = x_raw.iter().map(|r| self.norm_stats.apply(r)).collect();
        self.classes
            .iter()
            .zip(&self.binary_models)
            .map(|(class, m)| {
                let y = one_vs_rest(labels, class);
                let upper = self.train_config.upper_bounds(&y);
                m.kkt_audit(&x, &y, &upper, &self.kernel, tol)
            })
            .collect()
    }
}

fn one_vs_rest(labels: &[String], positive: &str) -> Vec<f64> {
    labels
        .iter()
        .map(|l| if l == positive { 1.0 } else { -1.0 })
        .collect()
}

/// Train one-vs-all over the sorted set of labels present.
pub fn train_ova(
    x_raw: &[Vec<f64>],
    labels: &[String],
    cfg: &TrainConfig,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<SvmModel> {
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    train_ova_with_classes(x_raw, labels, &classes, cfg, kernel, exec)
}

/// Train one-vs-all with an explicit class order (also the tie-break order).
pub fn train_ova_with_classes(
    x_raw: &[Vec<f64>],
    labels: &[String],
    classes: &[String],
    cfg: &TrainConfig,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<SvmModel> {
    cfg.validate()?;
    check_rows(x_raw)?;
    if x_raw.len() != labels.len() {
        return Err(Error::Dimension {
            expected: x_raw.len(),
            got: labels.len(),
        });
    }
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "need at least 2 classes, got {}",
            classes.len()
        )));
    }
    for c in classes {
        if !labels.contains(c) {
            return Err(Error::Training(format!("class '{c}' has no training examples")));
        }
    }
    if let Some(l) = labels.iter().find(|l| !classes.contains(l)) {
        return Err(Error::Training(format!("label '{l}' is not among the model classes")));
    }

    let norm_stats = NormStats::fit(x_raw)?;
    let x: Vec<Vec<f64>> = x_raw.iter().map(|r| norm_stats.apply(r)).collect();
    let kernel = kernel.resolve(&x)?;

    let train_class = |k: usize| {
        let y = one_vs_rest(labels, &classes[k]);
        let cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        train_binary(&x, &y, &cfg, &kernel)
    };
    let binary_models = if classes.len() == 2 {
        // Both one-vs-rest problems are the same dual up to sign.
        let first = train_class(0)?;
        let second = first.mirrored();
        vec![first, second]
    } else {
        exec.map_range(classes.len(), train_class)
            .into_iter()
            .collect::<Result<Vec<_>>>()?
    };

    Ok(SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        kernel,
        norm_stats,
        classes: classes.to_vec(),
        binary_models,
        train_config: cfg.clone(),
    })
}

/// Highest decision value wins; ties go to the earlier class.
pub fn predict(m: &SvmModel, x: &[f64]) -> Result<Prediction> {
    if x.len() != m.dim() {
        return Err(Error::Dimension {
            expected: m.dim(),
            got: x.len(),
        });
    }
    let z = m.norm_stats.apply(x);
    let decision_values: Vec<f64> = m
        .binary_models
        .iter()
        .map(|b| b.decision(&z, &m.kernel))
        .collect();
    let mut best = 0;
    for (k, v) in decision_values.iter().enumerate().skip(1) {
        if *v > decision_values[best] {
            best = k;
        }
    }
    Ok(Prediction {
        label: m.classes[best].clone(),
        decision_values,
    })
}

pub fn predict_labels(m: &SvmModel, rows: &[Vec<f64>]) -> Result<Vec<String>> {
    rows.iter().map(|r| predict(m, r).map(|p| p.label)).collect()
}
