//! Soft-margin SVM trained by sequential minimal optimization, combined
//! one-vs-one for more than two classes.
//!
//! The binary solver follows the maximal-violating-pair scheme with
//! second-order working-set selection: each step picks the first index
//! that most violates the KKT conditions and the partner giving the
//! largest guaranteed decrease of the dual, so training is fully
//! deterministic. It stops when the violation gap drops below the
//! configured tolerance, which bounds every functional-margin KKT
//! residual by the same tolerance.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::reduce::LabeledMatrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const TIE_BREAK_RULE: &str = "votes, then summed |decision value|, then class order";

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    /// Box constraint.
    pub c: f64,
    /// KKT tolerance on functional margins.
    pub tolerance: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Linear,
            c: 10.0,
            tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the binary dual
/// `max Σα - ½ Σ αᵢαⱼyᵢyⱼK(xᵢ,xⱼ)` s.t. `0 ≤ α ≤ C`, `Σ αᵢyᵢ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function offset: `f(x) = Σ αᵢyᵢK(xᵢ,x) + bias`.
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// SMO on a precomputed kernel matrix with labels in `{-1, +1}`.
pub fn solve_dual(kernel: ArrayView2<'_, f64>, y: &[f64], c: f64, tolerance: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    debug_assert_eq!(kernel.dim(), (n, n));
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[[i, j]];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i: maximal -y G over I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut sel_i = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 {
                !is_upper(alpha[t])
            } else {
                !is_lower(alpha[t])
            };
            if in_up && -y[t] * grad[t] > g_max {
                g_max = -y[t] * grad[t];
                sel_i = Some(t);
            }
        }
        // j: second-order selection over I_low
        let mut g_max2 = f64::NEG_INFINITY;
        let mut sel_j = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 {
                !is_lower(alpha[t])
            } else {
                !is_upper(alpha[t])
            };
            if !in_low {
                continue;
            }
            let yg = y[t] * grad[t];
            g_max2 = g_max2.max(yg);
            if let Some(i) = sel_i {
                let grad_diff = g_max + yg;
                if grad_diff > 0.0 {
                    let mut quad = kernel[[i, i]] + kernel[[t, t]] - 2.0 * kernel[[i, t]];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -grad_diff * grad_diff / quad;
                    if obj < best_obj {
                        best_obj = obj;
                        sel_j = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (sel_i, sel_j) else {
            converged = true;
            break;
        };
        if g_max + g_max2 < tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kernel[[i, i]] + kernel[[j, j]] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
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
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kernel[[i, i]] + kernel[[j, j]] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = dual_objective(kernel, y, &alpha);
    DualSolution {
        alpha,
        bias: -rho,
        objective,
        iterations,
        converged,
    }
}

pub fn dual_objective(kernel: ArrayView2<'_, f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Binary machine; a positive decision value means `classes.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub classes: (ClassLabel, ClassLabel),
    pub kernel: KernelSpec,
    #[serde(with = "crate::serde_matrix::rows")]
    pub support_vectors: Array2<f64>,
    /// `αᵢ yᵢ` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision_value(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.support_vectors
            .axis_iter(Axis(0))
            .zip(&self.coefficients)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        if self.support_vectors.nrows() == 0 {
            return vec![self.bias; x.nrows()];
        }
        let k = self.kernel.matrix(x, self.support_vectors.view());
        k.axis_iter(Axis(0))
            .map(|row| row.iter().zip(&self.coefficients).map(|(k, a)| k * a).sum::<f64>() + self.bias)
            .collect()
    }

    /// `f(x) >= 0` votes for the first class of the pair.
    pub fn vote(&self, decision: f64) -> ClassLabel {
        if decision >= 0.0 {
            self.classes.0
        } else {
            self.classes.1
        }
    }
}

/// Fit one binary machine. `x` must hold exactly two classes; the first in
/// class order is the positive side.
pub fn fit_binary_svm(x: &LabeledMatrix, config: &SvmConfig) -> Result<BinarySvm> {
    config.validate()?;
    let classes = x.classes();
    let [pos, neg] = classes[..] else {
        return Err(Error::InvalidInput(format!(
            "binary SVM needs exactly two classes, got {}",
            classes.len()
        )));
    };
    let y: Vec<f64> = x.labels().iter().map(|&l| if l == pos { 1.0 } else { -1.0 }).collect();
    let k = config.kernel.gram(x.values());
    let max_iter = config.max_passes.saturating_mul(x.n_samples().max(1));
    let sol = solve_dual(k.view(), &y, config.c, config.tolerance, max_iter);
    if !sol.converged {
        log::warn!(
            "SVM {pos}/{neg} stopped after {} iterations without meeting the KKT tolerance",
            sol.iterations
        );
    }
    let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    Ok(BinarySvm {
        classes: (pos, neg),
        kernel: config.kernel,
        support_vectors: x.values().select(Axis(0), &sv),
        coefficients: sv.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        bias: sol.bias,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub classes: Vec<ClassLabel>,
    pub input_dim: usize,
    pub tie_break: String,
    pub machines: Vec<BinarySvm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: ClassLabel,
    pub votes: Vec<(ClassLabel, usize)>,
    pub decision_values: Vec<((ClassLabel, ClassLabel), f64)>,
}

/// One-vs-one machines for every class pair present in `x`.
pub fn fit_multiclass(x: &LabeledMatrix, config: &SvmConfig) -> Result<SvmModel> {
    let index = x.class_index();
    if index.len() < 2 {
        return Err(Error::InvalidInput("SVM training needs at least two classes".into()));
    }
    let classes: Vec<ClassLabel> = index.keys().copied().collect();
    let mut pairs = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            pairs.push((a, b));
        }
    }
    let fit_pair = |&(a, b): &(usize, usize)| {
        let mut rows = index[&classes[a]].clone();
        rows.extend(&index[&classes[b]]);
        rows.sort_unstable();
        fit_binary_svm(&x.select(&rows), config)
    };
    #[cfg(feature = "parallel")]
    let machines = {
        use rayon::prelude::*;
        pairs.par_iter().map(fit_pair).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let machines = pairs.iter().map(fit_pair).collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        classes,
        input_dim: x.dim(),
        tie_break: TIE_BREAK_RULE.to_string(),
        machines,
    })
}

impl SvmModel {
    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: d,
            });
        }
        Ok(())
    }

    fn decide(&self, decisions: &[f64]) -> Prediction {
        let mut votes = vec![0usize; self.classes.len()];
        let mut strength = vec![0.0f64; self.classes.len()];
        let slot = |c: ClassLabel| self.classes.iter().position(|&k| k == c).expect("machine class");
        for (m, &d) in self.machines.iter().zip(decisions) {
            let winner = slot(m.vote(d));
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        let best = (0..self.classes.len())
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(strength[a].partial_cmp(&strength[b]).unwrap_or(Ordering::Equal))
                    // earlier classes win remaining ties
                    .then(b.cmp(&a))
            })
            .expect("at least two classes");
        Prediction {
            label: self.classes[best],
            votes: self.classes.iter().copied().zip(votes).collect(),
            decision_values: self
                .machines
                .iter()
                .map(|m| m.classes)
                .zip(decisions.iter().copied())
                .collect(),
        }
    }

    pub fn predict_detail(&self, x: ArrayView1<'_, f64>) -> Result<Prediction> {
        self.check_dim(x.len())?;
        let decisions: Vec<f64> = self.machines.iter().map(|m| m.decision_value(x)).collect();
        Ok(self.decide(&decisions))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<ClassLabel> {
        Ok(self.predict_detail(x)?.label)
    }

    /// Batch prediction; identical to calling [`SvmModel::predict`] per row.
    pub fn predict_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<ClassLabel>> {
        self.check_dim(x.ncols())?;
        let per_machine: Vec<Vec<f64>> = self.machines.iter().map(|m| m.decision_values(x)).collect();
        Ok((0..x.nrows())
            .map(|i| {
                let d: Vec<f64> = per_machine.iter().map(|v| v[i]).collect();
                self.decide(&d).label
            })
            .collect())
    }

    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: SvmModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported SVM model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}
