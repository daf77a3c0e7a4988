//! Dense helpers shared by the reduction methods. Large products go through
//! `ndarray` (matrixmultiply); small symmetric eigenproblems through
//! `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const EIG_REL_TOL: f64 = 1e-9;

pub fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub fn to_array2(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Flip `v` so that its largest-magnitude entry (first one on ties) is
/// positive. Returns whether it flipped.
pub fn canonical_sign(v: &mut [f64]) -> bool {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
/// Eigenvectors are the columns of the returned matrix, sign-normalized
/// with [`canonical_sign`].
pub fn sym_eigen_desc(m: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if n == 0 {
        return (Vec::new(), Array2::zeros((0, 0)));
    }
    // symmetrize to remove rounding asymmetry from the products that built m
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        canonical_sign(&mut col);
        vectors.column_mut(k).assign(&Array1::from(col));
    }
    (values, vectors)
}

/// Number of eigenvalues (sorted non-increasing) above the relative
/// tolerance.
pub fn numerical_rank(values: &[f64]) -> usize {
    let max = values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    values.iter().take_while(|&&v| v > EIG_REL_TOL * max).count()
}

pub fn column_mean(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}

pub fn center_rows(x: ArrayView2<'_, f64>, center: &Array1<f64>) -> Array2<f64> {
    &x - &center.view().insert_axis(Axis(0))
}

/// Orthonormalize the columns of `a` in place: the Q factor of its thin QR
/// decomposition with a positive diagonal in R. Cholesky QR applied twice;
/// modified Gram-Schmidt when the columns are (numerically) dependent.
pub fn orthonormalize_columns(a: &mut Array2<f64>) {
    for _ in 0..2 {
        if !cholesky_qr_step(a) {
            gram_schmidt(a);
            return;
        }
    }
}

/// `a ← a R⁻¹` with `aᵀa = RᵀR`; false (and `a` untouched) when the Gram
/// matrix is too ill-conditioned for one step.
fn cholesky_qr_step(a: &mut Array2<f64>) -> bool {
    let k = a.ncols();
    if k == 0 {
        return true;
    }
    let gram = a.t().dot(&*a);
    let Some(chol) = nalgebra::Cholesky::new(to_dmatrix(gram.view())) else {
        return false;
    };
    let l = chol.l();
    let diag: Vec<f64> = (0..k).map(|i| l[(i, i)]).collect();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-6 * hi) {
        return false;
    }
    let mut l_inv = DMatrix::identity(k, k);
    if !l.solve_lower_triangular_mut(&mut l_inv) {
        return false;
    }
    *a = a.dot(&to_array2(&l_inv).t());
    true
}

/// Modified Gram-Schmidt, two passes; zero columns stay zero.
fn gram_schmidt(a: &mut Array2<f64>) {
    // columns as contiguous rows
    let mut q = a.t().as_standard_layout().into_owned();
    let k = q.nrows();
    for _ in 0..2 {
        for j in 0..k {
            let (done, mut rest) = q.view_mut().split_at(Axis(0), j);
            let mut col = rest.row_mut(0);
            for i in 0..j {
                let prev = done.row(i);
                let proj = prev.dot(&col);
                col.scaled_add(-proj, &prev);
            }
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
            }
        }
    }
    a.assign(&q.t());
}

/// Largest absolute deviation of `aᵀa` from the identity.
pub fn orthonormality_error(a: ArrayView2<'_, f64>) -> f64 {
    let g = a.t().dot(&a);
    let mut worst: f64 = 0.0;
    for ((i, j), v) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

/// Sine of the largest principal angle between the column spaces of two
/// orthonormal bases of equal rank: the spectral norm of `(I - AAᵀ) B`.
pub fn max_principal_angle_sin(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let residual = &b - &a.dot(&a.t().dot(&b));
    let svd = to_dmatrix(residual.view()).svd(false, false);
    svd.singular_values.iter().copied().fold(0.0, f64::max)
}
