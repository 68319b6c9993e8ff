//! Transmit-correlated Rayleigh channels `H = H_iid * R^(1/2)` with an
//! exponential Toeplitz correlation `R[i][j] = nu^|i-j|`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::complex_normal;

/// Exponential Toeplitz transmit correlation for an `n`-antenna array.
///
/// The matrix, its Hermitian square root and its sorted spectrum are built
/// on first use and cached; the model is immutable and `Sync`.
#[derive(Debug)]
pub struct CorrelationModel {
    n_antennas: usize,
    nu: f64,
    matrix: OnceLock<DMatrix<f64>>,
    sqrt_matrix: OnceLock<DMatrix<f64>>,
    spectrum: OnceLock<Vec<f64>>,
}

/// `exp_toeplitz(n, nu)`: correlation model with entries `nu^|i-j|`.
pub fn exp_toeplitz(n: usize, nu: f64) -> Result<CorrelationModel> {
    CorrelationModel::new(n, nu)
}

impl CorrelationModel {
    pub fn new(n_antennas: usize, nu: f64) -> Result<Self> {
        if n_antennas == 0 {
            return Err(invalid("n_antennas", "need at least one antenna"));
        }
        check_nu(nu)?;
        Ok(Self {
            n_antennas,
            nu,
            matrix: OnceLock::new(),
            sqrt_matrix: OnceLock::new(),
            spectrum: OnceLock::new(),
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn is_uncorrelated(&self) -> bool {
        self.nu == 0.0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.nu.powi(i.abs_diff(j) as i32)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.matrix.get_or_init(|| {
            let n = self.n_antennas;
            // nu^0 = 1 even for nu = 0
            let powers: Vec<f64> = (0..n).map(|k| self.nu.powi(k as i32)).collect();
            DMatrix::from_fn(n, n, |i, j| powers[i.abs_diff(j)])
        })
    }

    /// Hermitian (symmetric) square root via eigendecomposition.
    pub fn sqrt_matrix(&self) -> &DMatrix<f64> {
        self.sqrt_matrix.get_or_init(|| {
            if self.is_uncorrelated() {
                return DMatrix::identity(self.n_antennas, self.n_antennas);
            }
            let eig = SymmetricEigen::new(self.matrix().clone());
            let v = &eig.eigenvectors;
            let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * roots[j]);
            let mut s = &scaled * v.transpose();
            // remove round-off asymmetry
            let st = s.transpose();
            s += st;
            s *= 0.5;
            s
        })
    }

    /// Eigenvalues in ascending order.
    pub fn spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            if self.is_uncorrelated() {
                return vec![1.0; self.n_antennas];
            }
            let mut ev: Vec<f64> = self.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev
        })
    }
}

/// Limiting eigenvalue density of the exponential Toeplitz family,
/// `(1 - nu^2) / (1 - 2 nu cos w + nu^2)`.
pub fn spectral_density(nu: f64, w: f64) -> Result<f64> {
    check_nu(nu)?;
    Ok((1.0 - nu * nu) / (1.0 - 2.0 * nu * w.cos() + nu * nu))
}

/// `(1/2pi) * integral_0^2pi g(f(w)) dw` by the periodic trapezoid rule,
/// the large-`N` limit of `(1/N) sum_n g(lambda_n)`.
pub fn spectral_average<G: Fn(f64) -> f64>(nu: f64, nodes: usize, g: G) -> Result<f64> {
    check_nu(nu)?;
    if nodes == 0 {
        return Err(invalid("nodes", "need at least one node"));
    }
    let h = 2.0 * PI / nodes as f64;
    let c = 1.0 - nu * nu;
    let d = 1.0 + nu * nu;
    let sum: f64 = (0..nodes).map(|k| g(c / (d - 2.0 * nu * (h * k as f64).cos()))).sum();
    Ok(sum / nodes as f64)
}

/// One channel draw together with its i.i.d. factor.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `M x N` correlated channel.
    pub h: DMatrix<Complex64>,
    /// `M x N` i.i.d. `CN(0, 1)` factor.
    pub h_iid: DMatrix<Complex64>,
    pub nu: f64,
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.h.ncols()
    }
}

/// Draw `H = H_iid R^(1/2)` for `m` single-antenna users.
pub fn sample_channel<R: Rng + ?Sized>(corr: &CorrelationModel, m: usize, rng: &mut R) -> Result<ChannelRealization> {
    if m == 0 {
        return Err(invalid("m", "need at least one user"));
    }
    let n = corr.n_antennas();
    // Column-major fill order is part of the reproducibility contract.
    let h_iid = DMatrix::from_fn(m, n, |_, _| complex_normal(rng, 1.0));
    let h = if corr.is_uncorrelated() {
        h_iid.clone()
    } else {
        mul_complex_real(&h_iid, corr.sqrt_matrix())
    };
    Ok(ChannelRealization {
        h,
        h_iid,
        nu: corr.nu(),
    })
}

/// `A * B` for complex `A` and real `B`, as two real products.
fn mul_complex_real(a: &DMatrix<Complex64>, b: &DMatrix<f64>) -> DMatrix<Complex64> {
    let re = a.map(|z| z.re) * b;
    let im = a.map(|z| z.im) * b;
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

fn check_nu(nu: f64) -> Result<()> {
    if (0.0..1.0).contains(&nu) {
        Ok(())
    } else {
        Err(invalid(
            "nu",
            format!("correlation coefficient must lie in [0, 1), got {nu}"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncorrelated_is_identity() {
        let c = exp_toeplitz(4, 0.0).unwrap();
        assert_eq!(c.matrix(), &DMatrix::<f64>::identity(4, 4));
        assert_eq!(c.sqrt_matrix(), &DMatrix::<f64>::identity(4, 4));
        assert_eq!(c.spectrum(), &[1.0; 4]);
    }

    #[test]
    fn two_by_two() {
        let c = exp_toeplitz(2, 0.5).unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let s = c.spectrum();
        assert!((s[0] - 0.5).abs() < 1e-14 && (s[1] - 1.5).abs() < 1e-14, "{s:?}");
    }

    #[test]
    fn rejects_invalid_nu() {
        assert!(exp_toeplitz(4, 1.0).is_err());
        assert!(exp_toeplitz(4, -0.1).is_err());
        assert!(exp_toeplitz(0, 0.5).is_err());
        assert!(spectral_density(1.0, 0.0).is_err());
    }

    #[test]
    fn trace_and_root() {
        let c = exp_toeplitz(64, 0.8).unwrap();
        assert_eq!(c.matrix().trace(), 64.0);
        let s = c.sqrt_matrix();
        let rec = s * s;
        let err = (&rec - c.matrix()).norm() / c.matrix().norm();
        assert!(err < 1e-10, "{err}");
        assert_eq!(s, &s.transpose());
    }

    #[test]
    fn density_values() {
        assert_eq!(spectral_density(0.0, 1.3).unwrap(), 1.0);
        assert!((spectral_density(0.5, 0.0).unwrap() - 3.0).abs() < 1e-14);
        let mean = spectral_average(0.5, 4096, |x| x).unwrap();
        assert!((mean - 1.0).abs() < 1e-12);
    }
}
