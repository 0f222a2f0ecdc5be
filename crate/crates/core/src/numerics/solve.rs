use alloc::vec::Vec;

use super::qr::HouseholderQr;
use super::svd::pinv;
use super::{ComplexMatrix, NumericsError, C64};

/// Least-squares solution of `A·X ≈ B` (Frobenius norm).
///
/// Full column rank goes through pivoted QR; rank-deficient inputs fall back
/// to the minimum-norm solution from the pseudo-inverse.
pub fn lstsq(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if a.rows() != b.rows() {
        return Err(NumericsError::InvalidArgument("lstsq: A and B need equal row counts"));
    }
    let (m, n) = a.shape();
    if n == 0 || b.cols() == 0 {
        return Ok(ComplexMatrix::zeros(n, b.cols()));
    }
    if m == 0 {
        return Ok(ComplexMatrix::zeros(n, b.cols()));
    }
    let f = HouseholderQr::factor(m, a.to_columns(), true);
    let tol = (m.max(n) as f64) * f64::EPSILON;
    let d0 = f.diag.first().copied().unwrap_or(0.0);
    let r = f.diag.iter().take_while(|&&d| d > tol * d0).count();
    if r == n && d0 > 0.0 {
        let mut x = ComplexMatrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let mut col = b.column(j);
            f.apply_qh(&mut col);
            let y = f.solve_upper(n, &col);
            for (k, &p) in f.perm.iter().enumerate() {
                x[(p, j)] = y[k];
            }
        }
        return Ok(x);
    }
    let p = pinv(a, tol.min(0.5))?;
    p.matmul(b)
}

/// LU factorization with partial pivoting for square systems.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &ComplexMatrix) -> Result<Self, NumericsError> {
        let n = m.rows();
        if n != m.cols() {
            return Err(NumericsError::InvalidArgument("LU needs a square matrix"));
        }
        let mut lu = m.as_slice().to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        let scale = m.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].norm();
            for i in k + 1..n {
                let v = lu[i * n + k].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * scale * (n as f64) || best == 0.0 {
                return Err(NumericsError::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / pivot;
                lu[i * n + k] = l;
                if l.re == 0.0 && l.im == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= l * u;
                }
            }
        }
        Ok(Self { n, lu, piv })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x: Vec<C64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Inverse of a square nonsingular matrix.
pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let lu = Lu::factor(m)?;
    let n = m.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = alloc::vec![C64::new(0.0, 0.0); n];
        e[j] = C64::new(1.0, 0.0);
        out.set_column(j, &lu.solve(&e));
    }
    Ok(out)
}
