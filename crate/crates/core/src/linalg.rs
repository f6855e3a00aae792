use nalgebra::{Complex, DMatrix, DVector};

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns `(e, eigenvalues)` with eigenvalues sorted descending and `e`
/// holding the matching unit eigenvectors as ROWS, so that
/// `e * m * e^T = diag(eigenvalues)`. The first entry of each eigenvector
/// with magnitude above 1e-12 is made positive.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows();
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut e = DMatrix::zeros(n, n);
    let mut values = DVector::zeros(n);
    for (row, &col) in order.iter().enumerate() {
        values[row] = eig.eigenvalues[col];
        let v = eig.eigenvectors.column(col);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| x.signum());
        for k in 0..n {
            e[(row, k)] = sign * v[k];
        }
    }
    (e, values)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Numerical rank of a complex matrix via its singular values.
pub(crate) fn complex_rank(m: &DMatrix<Complex<f64>>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let scale = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * scale).count()
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_rows_diagonalize_and_sort_descending() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let (e, vals) = sorted_symmetric_eigen(&m);
        assert!(vals[0] >= vals[1]);
        let d = &e * &m * e.transpose();
        assert!(d[(0, 1)].abs() < 1e-12 && d[(1, 0)].abs() < 1e-12);
        assert!((d[(0, 0)] - vals[0]).abs() < 1e-12);
        let id = &e * e.transpose();
        assert!(max_abs_diff(&id, &DMatrix::identity(2, 2)) < 1e-12);
        for r in 0..2 {
            let first = e.row(r).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let r = psd_sqrt(&m);
        assert!(max_abs_diff(&(&r * &r), &m) < 1e-12);
    }
}
