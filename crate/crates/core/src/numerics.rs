//! Dense linear algebra used by the embedding and construction stages.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Top-`k` algebraic eigenpairs of a symmetric matrix, largest first.
///
/// Each eigenvector is signed so that its largest-magnitude entry is
/// positive (ties broken by lowest index).
pub fn sym_eig_topk(m: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("{}x{} is not square", n, m.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} out of range 1..={n}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigen input"));
    }
    let scale = m.amax();
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let eig = mat.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();

    // faer returns ascending eigenvalues.
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    for c in 0..k {
        let src = n - 1 - c;
        values.push(s.read(src));
        let mut pivot = 0;
        for i in 1..n {
            if u.read(i, src).abs() > u.read(pivot, src).abs() {
                pivot = i;
            }
        }
        let sign = if u.read(pivot, src) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, c)] = sign * u.read(i, src);
        }
    }
    Ok((values, vectors))
}

/// Ridge least squares `argmin ||X w - y||² + ridge ||w||²` with negative
/// components clamped to zero.
pub fn ols_nonneg(design: &DMatrix<f64>, target: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if design.nrows() != target.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, target has {}",
            design.nrows(),
            target.len()
        )));
    }
    if design.nrows() < design.ncols() {
        return Err(Error::Dimension(format!(
            "{} observations for {} coefficients",
            design.nrows(),
            design.ncols()
        )));
    }
    if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input"));
    }
    let gram = design.tr_mul(design);
    let rhs = design.tr_mul(target);
    ols_nonneg_gram(&gram, &rhs, ridge)
}

/// Same as [`ols_nonneg`], given the normal equations `XᵀX` and `Xᵀy`.
pub fn ols_nonneg_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let k = gram.nrows();
    if gram.ncols() != k || rhs.len() != k {
        return Err(Error::Dimension("normal equations are inconsistent".into()));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let mut a = gram.clone();
    for i in 0..k {
        a[(i, i)] += ridge;
    }
    let max_diag = (0..k).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    if max_diag == 0.0 {
        return Ok(DVector::zeros(k));
    }
    let chol = a.cholesky().ok_or(Error::RankDeficient)?;
    let l = chol.l_dirty();
    let min_pivot = (0..k).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-12 * max_diag {
        return Err(Error::RankDeficient);
    }
    let mut w = chol.solve(rhs);
    w.apply(|v| *v = v.max(0.0));
    Ok(w)
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F>(f: F, x: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite("finite-difference probe"));
            }
            grad[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Standard scores `(v - mean) / std` with population standard deviation.
///
/// Returns `None` when the values are (numerically) constant, since no entry
/// then stands out from the rest.
pub fn zscores(values: &[f64]) -> Option<Vec<f64>> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(std > 1e-12 * scale) || !std.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / std).collect())
}
