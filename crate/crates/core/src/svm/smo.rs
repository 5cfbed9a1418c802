//! Sequential minimal optimisation for the C-SVC dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ αᵢ ≤ Cᵢ,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//! ```
//!
//! Working pairs are chosen with second-order (maximal gain) selection; the
//! loop stops once the maximal KKT violation gap drops below the tolerance.

use std::borrow::Cow;

use super::kernel::KernelSpec;

const TAU: f64 = 1e-12;
/// Above this many rows Q is computed row by row instead of cached whole.
const FULL_MATRIX_LIMIT: usize = 3000;

pub(crate) struct Problem<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub upper: &'a [f64],
    pub kernel: KernelSpec,
    pub tolerance: f64,
    pub max_iter: usize,
}

pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct QMatrix<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    kernel: KernelSpec,
    full: Option<Vec<f64>>,
}

impl<'a> QMatrix<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], kernel: KernelSpec) -> Self {
        let n = x.len();
        let mut q = Self {
            x,
            y,
            kernel,
            full: None,
        };
        if n <= FULL_MATRIX_LIMIT {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = q.entry(i, j);
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
            q.full = Some(m);
        }
        q
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.kernel.eval_unchecked(&self.x[i], &self.x[j])
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        let n = self.x.len();
        match &self.full {
            Some(m) => Cow::Borrowed(&m[i * n..(i + 1) * n]),
            None => Cow::Owned((0..n).map(|j| self.entry(i, j)).collect()),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match &self.full {
            Some(m) => m[i * self.x.len() + i],
            None => self.entry(i, i),
        }
    }
}

pub(crate) fn solve(p: &Problem<'_>) -> Solution {
    let n = p.x.len();
    let y = p.y;
    let c = p.upper;
    let q = QMatrix::new(p.x, y, p.kernel);
    let qd: Vec<f64> = (0..n).map(|i| q.diag(i)).collect();

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: &[f64], i: usize| a[i] >= c[i];
    let is_lower = |a: &[f64], i: usize| a[i] <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < p.max_iter {
        // i: maximal violator in I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !is_upper(&alpha, t) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    sel_i = Some(t);
                }
            } else if !is_lower(&alpha, t) && grad[t] >= gmax {
                gmax = grad[t];
                sel_i = Some(t);
            }
        }
        let Some(i) = sel_i else {
            converged = true;
            break;
        };
        let qi = q.row(i);

        // j: best second-order decrease among I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut sel_j = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            if y[t] > 0.0 {
                if !is_lower(&alpha, t) {
                    let diff = gmax + grad[t];
                    gmax2 = gmax2.max(grad[t]);
                    if diff > 0.0 {
                        let quad = qd[i] + qd[t] - 2.0 * y[i] * qi[t];
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            sel_j = Some(t);
                        }
                    }
                }
            } else if !is_upper(&alpha, t) {
                let diff = gmax - grad[t];
                gmax2 = gmax2.max(-grad[t]);
                if diff > 0.0 {
                    let quad = qd[i] + qd[t] + 2.0 * y[i] * qi[t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        sel_j = Some(t);
                    }
                }
            }
        }
        let Some(j) = sel_j.filter(|_| gmax + gmax2 >= p.tolerance) else {
            converged = true;
            break;
        };
        let qj = q.row(j);
        iterations += 1;

        let (ci, cj) = (c[i], c[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qi[j];
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qi[j];
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        alpha[i] = alpha[i].clamp(0.0, ci);
        alpha[j] = alpha[j].clamp(0.0, cj);

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    Solution {
        rho: rho(&alpha, &grad, y, c),
        alpha,
        iterations,
        converged,
    }
}

/// Offset: mean of `yᵢ∇ᵢ` over free vectors, else the midpoint of the
/// feasible interval.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for i in 0..alpha.len() {
        let yg = y[i] * grad[i];
        if alpha[i] >= c[i] {
            if y[i] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[i] <= 0.0 {
            if y[i] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
