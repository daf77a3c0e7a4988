use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `k(x, y) = <x, y>`
    Linear,
    /// `k(x, y) = exp(-gamma * |x - y|^2)`
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            KernelSpec::Linear => a.dot(&b),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// `K[i, j] = k(a_i, b_j)` over the rows of `a` and `b`.
    pub fn matrix(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let dots = a.dot(&b.t());
        match *self {
            KernelSpec::Linear => dots,
            KernelSpec::Rbf { gamma } => {
                let na: Vec<f64> = a.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
                let nb: Vec<f64> = b.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
                let mut k = dots;
                for ((i, j), v) in k.indexed_iter_mut() {
                    let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
                    *v = (-gamma * d2).exp();
                }
                k
            }
        }
    }

    /// Symmetric kernel matrix of the rows of `x`. The RBF diagonal is
    /// exactly one.
    pub fn gram(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut k = self.matrix(x, x);
        let n = k.nrows();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (k[[i, j]] + k[[j, i]]);
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
            if let KernelSpec::Rbf { .. } = self {
                k[[i, i]] = 1.0;
            }
        }
        k
    }
}

/// RBF `gamma = 1 / (2 σ²)` with `σ` the median Euclidean distance over
/// all pairs of distinct rows (mean of the two middle values for an even
/// pair count).
pub fn median_distance_gamma(x: ArrayView2<'_, f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("the median distance needs at least 2 rows".into()));
    }
    let dots = x.dot(&x.t());
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            d2.push((dots[[i, i]] + dots[[j, j]] - 2.0 * dots[[i, j]]).max(0.0));
        }
    }
    d2.sort_by(f64::total_cmp);
    let m = d2.len();
    let sigma = if m % 2 == 1 {
        d2[m / 2].sqrt()
    } else {
        0.5 * (d2[m / 2 - 1].sqrt() + d2[m / 2].sqrt())
    };
    if !(sigma > 0.0) {
        return Err(Error::DegenerateData("median pairwise distance is zero".into()));
    }
    Ok(1.0 / (2.0 * sigma * sigma))
}
