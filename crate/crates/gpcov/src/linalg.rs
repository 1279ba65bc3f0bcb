//! Dense symmetric positive-definite linear algebra for covariance matrices:
//! assembly, Cholesky factorization, log-determinant, solves, explicit
//! inverse and joint Gaussian sampling. Dense storage only; the experiments
//! use n in the hundreds.

use crate::kernel::{matern_corr, max_norm_dist, MaternSpec};
use crate::sampling::Design;
use crate::GpError;

/// Symmetric matrix in full row-major storage.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `A x` for a vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `sum_ij A_ij B_ij`, which equals `Tr(A B)` for symmetric `A`, `B`.
    pub fn entrywise_dot(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        dot(&self.data, &other.data)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matérn correlation matrix of a design (unit variance, no nugget). Cached
/// and rescaled by callers sweeping `sigma2` at fixed `ell`.
#[derive(Clone, Debug)]
pub struct CorrMatrix(SymMatrix);

impl CorrMatrix {
    pub fn build(nu: f64, ell: f64, design: &Design) -> Self {
        let n = design.n();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.set_sym(i, i, 1.0);
            for j in 0..i {
                let d = max_norm_dist(design.point(i), design.point(j));
                m.set_sym(i, j, matern_corr(nu, ell, d));
            }
        }
        CorrMatrix(m)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    /// Covariance matrix `sigma2 * C + delta * I`.
    pub fn assemble(&self, sigma2: f64, delta: f64) -> CovMatrix {
        let n = self.0.n();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..i {
                m.set_sym(i, j, sigma2 * self.0.get(i, j));
            }
            m.data[i * n + i] = sigma2 + delta;
        }
        CovMatrix {
            matrix: m,
            sigma2,
            delta,
        }
    }
}

/// Covariance matrix `R` with entries `K(X_i - X_j) + delta 1{i=j}`.
#[derive(Clone, Debug)]
pub struct CovMatrix {
    matrix: SymMatrix,
    sigma2: f64,
    delta: f64,
}

impl CovMatrix {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// The same matrix with `shift` subtracted from the diagonal. Used to
    /// check eigenvalue floors through Cholesky success.
    pub fn diag_shifted(&self, shift: f64) -> CovMatrix {
        let mut out = self.clone();
        let n = out.matrix.n;
        for i in 0..n {
            out.matrix.data[i * n + i] -= shift;
        }
        out
    }
}

/// Covariance matrix of a Matérn spec on a design. Each unordered pair is
/// evaluated once, so the result is symmetric to exact bit equality.
pub fn build_cov(spec: &MaternSpec, design: &Design) -> CovMatrix {
    CorrMatrix::build(spec.nu, spec.ell, design).assemble(spec.sigma2, spec.delta)
}

/// Lower-triangular Cholesky factor `L` with `R = L L^t`.
#[derive(Clone, Debug)]
pub struct CholFactor {
    n: usize,
    lower: Vec<f64>, // row-major, upper part zero
}

/// Cholesky factorization of a symmetric positive-definite matrix. Fails
/// with `NotPositiveDefinite` on the first nonpositive pivot, which signals
/// numerical breakdown; it cannot occur when the nugget keeps the smallest
/// eigenvalue above `C_INF`.
pub fn cholesky(r: &CovMatrix) -> Result<CholFactor, GpError> {
    cholesky_sym(&r.matrix)
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // negated pivot check rejects NaN
pub fn cholesky_sym(a: &SymMatrix) -> Result<CholFactor, GpError> {
    let n = a.n;
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) {
            return Err(GpError::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(CholFactor { n, lower: l })
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    /// `log det R = 2 sum_i log L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Solves `R x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, GpError> {
        if b.len() != self.n {
            return Err(GpError::DimensionMismatch(format!(
                "solve: matrix is {0}x{0}, rhs has length {1}",
                self.n,
                b.len()
            )));
        }
        let n = self.n;
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(x)
    }

    /// Explicit inverse `R^{-1}`, through the triangular inverse of `L`:
    /// `R^{-1} = L^{-t} L^{-1}`. One O(n^3) pass; the CV criterion needs the
    /// diagonal of the inverse and `R^{-1} y` together.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        let l = &self.lower;
        // inv(L), lower triangular, row-major
        let mut li = vec![0.0f64; n * n];
        for i in 0..n {
            li[i * n + i] = 1.0 / l[i * n + i];
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s -= l[i * n + k] * li[k * n + j];
                }
                li[i * n + j] = s / l[i * n + i];
            }
        }
        // R^{-1}_{ij} = sum_{k >= max(i,j)} inv(L)_{ki} inv(L)_{kj}
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += li[k * n + i] * li[k * n + j];
                }
                out.set_sym(i, j, s);
            }
        }
        out
    }

    /// `L z`: distributed `N(0, R)` when `z` is a vector of iid standard
    /// normals.
    pub fn sample_joint(&self, z: &[f64]) -> Result<Vec<f64>, GpError> {
        if z.len() != self.n {
            return Err(GpError::DimensionMismatch(format!(
                "sample_joint: factor is {0}x{0}, z has length {1}",
                self.n,
                z.len()
            )));
        }
        let n = self.n;
        Ok((0..n)
            .map(|i| dot(&self.lower[i * n..i * n + i + 1], &z[..i + 1]))
            .collect())
    }
}
