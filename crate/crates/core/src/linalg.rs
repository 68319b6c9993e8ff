//! Complex matrix products routed through real GEMM.

use nalgebra::DMatrix;
use num_complex::Complex64;

fn split(a: &DMatrix<Complex64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

/// `A * B`.
pub fn mul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// `A * A^H`, exactly Hermitian.
pub fn gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = split(a);
    let re = &ar * ar.transpose() + &ai * ai.transpose();
    let im = &ai * ar.transpose() - &ar * ai.transpose();
    let n = re.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(0.5 * (re[(i, j)] + re[(j, i)]), 0.5 * (im[(i, j)] - im[(j, i)]))
    })
}

/// Squared Euclidean norm of each row.
pub fn row_energies(a: &DMatrix<Complex64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect()
}
