use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Gaussian width; `None` means "scale", `1 / (d · mean feature variance)`
    /// resolved on the training data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian_scale()
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: None,
        }
    }

    pub fn gaussian(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            gamma: Some(gamma),
        }
    }

    pub fn gaussian_scale() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            gamma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("gamma must be finite and > 0, got {g}")));
            }
        }
        Ok(())
    }

    /// Fill in the "scale" gamma from (already normalised) training rows.
    pub fn resolve(&self, rows: &[Vec<f64>]) -> Result<Self> {
        self.validate()?;
        if self.kind == KernelKind::Linear || self.gamma.is_some() {
            return Ok(*self);
        }
        let d = rows.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::Training("cannot resolve gamma without features".into()));
        }
        let n = rows.len() as f64;
        let mut total_var = 0.0;
        for f in 0..d {
            let mean = rows.iter().map(|r| r[f]).sum::<f64>() / n;
            total_var += rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
        }
        let mean_var = total_var / d as f64;
        let gamma = if mean_var > 0.0 {
            1.0 / (d as f64 * mean_var)
        } else {
            1.0 / d as f64
        };
        Ok(Self::gaussian(gamma))
    }

    pub(crate) fn gamma_or_err(&self) -> Result<f64> {
        self.gamma
            .ok_or_else(|| Error::Config("gaussian kernel gamma has not been resolved".into()))
    }

    /// Kernel value without dimension checks; `gamma` must be resolved.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelKind::Gaussian => {
                let gamma = self.gamma.unwrap_or(1.0);
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// `a·b` for the linear kernel, `exp(-γ‖a-b‖²)` for the Gaussian one.
pub fn kernel_eval(a: &[f64], b: &[f64], k: &KernelSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if k.kind == KernelKind::Gaussian {
        k.gamma_or_err()?;
    }
    k.validate()?;
    Ok(k.eval_unchecked(a, b))
}
