use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{axpy, dotc};
use super::{ComplexMatrix, NumericsError, C64};

/// Householder QR with column pivoting: `M·P = Q·R`.
#[derive(Clone, Debug)]
pub struct PivotedQR {
    /// Unitary, `rows × rows`.
    pub q: ComplexMatrix,
    /// Upper trapezoidal, same shape as the input.
    pub r: ComplexMatrix,
    /// `perm[k]` is the input column placed at position `k`.
    pub perm: Vec<usize>,
    /// `|R[k,k]|` for `k < min(rows, cols)`, nonincreasing.
    pub diag_magnitudes: Vec<f64>,
}

impl PivotedQR {
    /// Number of leading diagonal entries with `|R[k,k]| >= tau·|R[0,0]|`.
    pub fn rank(&self, tau: f64) -> usize {
        numerical_rank(&self.diag_magnitudes, tau)
    }

    /// The input with columns reordered by `perm`.
    pub fn permuted(&self, m: &ComplexMatrix) -> ComplexMatrix {
        m.select_cols(&self.perm)
    }
}

pub(crate) fn numerical_rank(diag: &[f64], tau: f64) -> usize {
    match diag.first() {
        Some(&d0) if d0 > 0.0 => diag.iter().take_while(|&&d| d >= tau * d0).count(),
        _ => 0,
    }
}

/// Compact factorization kept as reflectors; the workhorse behind
/// [`qr_pivoted`], least squares and the affine projections of basis pursuit.
#[derive(Clone, Debug)]
pub(crate) struct HouseholderQr {
    rows: usize,
    /// Reflector `k` acts on rows `k..rows`; `vs[k]` has length `rows - k`.
    vs: Vec<Vec<C64>>,
    taus: Vec<f64>,
    /// Column-major R (each column truncated to `rows` entries).
    r_cols: Vec<Vec<C64>>,
    pub perm: Vec<usize>,
    pub diag: Vec<f64>,
}

impl HouseholderQr {
    /// Factorizes a column-major input. With `pivot == false` columns keep
    /// their order.
    pub fn factor(rows: usize, mut cols: Vec<Vec<C64>>, pivot: bool) -> Self {
        let ncols = cols.len();
        let steps = rows.min(ncols);
        let mut perm: Vec<usize> = (0..ncols).collect();
        let mut vs = Vec::with_capacity(steps);
        let mut taus = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);

        for k in 0..steps {
            if pivot {
                let mut best = k;
                let mut best_norm = -1.0;
                for j in k..ncols {
                    let nrm: f64 = cols[j][k..].iter().map(|z| z.norm_sqr()).sum();
                    if nrm > best_norm || (nrm == best_norm && perm[j] < perm[best]) {
                        best = j;
                        best_norm = nrm;
                    }
                }
                if best != k {
                    cols.swap(k, best);
                    perm.swap(k, best);
                }
            }

            let x = &cols[k][k..];
            let alpha = libm::sqrt(x.iter().map(|z| z.norm_sqr()).sum::<f64>());
            if alpha == 0.0 {
                vs.push(vec![C64::new(0.0, 0.0); rows - k]);
                taus.push(0.0);
                diag.push(0.0);
                continue;
            }
            let x0 = x[0];
            if x[1..].iter().all(|z| z.norm() == 0.0) {
                // already upper triangular in this column
                vs.push(vec![C64::new(0.0, 0.0); rows - k]);
                taus.push(0.0);
                diag.push(alpha);
                continue;
            }
            let phase = if x0.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            let beta = -phase * alpha;
            let mut v = x.to_vec();
            v[0] -= beta;
            let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let tau = 2.0 / vnorm2;

            cols[k][k] = beta;
            for z in cols[k][k + 1..].iter_mut() {
                *z = C64::new(0.0, 0.0);
            }
            for col in cols.iter_mut().skip(k + 1) {
                let tail = &mut col[k..];
                let w = dotc(&v, tail) * tau;
                axpy(-w, &v, tail);
            }
            diag.push(alpha);
            vs.push(v);
            taus.push(tau);
        }

        Self {
            rows,
            vs,
            taus,
            r_cols: cols,
            perm,
            diag,
        }
    }

    /// `x ← Qᴴ x`
    pub fn apply_qh(&self, x: &mut [C64]) {
        for (k, (v, &tau)) in self.vs.iter().zip(&self.taus).enumerate() {
            if tau == 0.0 {
                continue;
            }
            let tail = &mut x[k..];
            let w = dotc(v, tail) * tau;
            axpy(-w, v, tail);
        }
    }

    /// `x ← Q x`
    pub fn apply_q(&self, x: &mut [C64]) {
        for (k, (v, &tau)) in self.vs.iter().zip(&self.taus).enumerate().rev() {
            if tau == 0.0 {
                continue;
            }
            let tail = &mut x[k..];
            let w = dotc(v, tail) * tau;
            axpy(-w, v, tail);
        }
    }

    /// Columns `range` of the full unitary Q, each as a contiguous vector.
    pub fn q_columns(&self, range: core::ops::Range<usize>) -> Vec<Vec<C64>> {
        range
            .map(|j| {
                let mut e = vec![C64::new(0.0, 0.0); self.rows];
                e[j] = C64::new(1.0, 0.0);
                self.apply_q(&mut e);
                e
            })
            .collect()
    }

    /// `R[i, j]` (row `i`, pivoted column `j`).
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> C64 {
        self.r_cols[j][i]
    }

    pub fn r_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, self.r_cols.len(), |i, j| {
            if i <= j {
                self.r_cols[j][i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Solves `R[..r, ..r] y = rhs[..r]` by back substitution.
    pub fn solve_upper(&self, r: usize, rhs: &[C64]) -> Vec<C64> {
        let mut y = rhs[..r].to_vec();
        for i in (0..r).rev() {
            let mut s = y[i];
            for j in i + 1..r {
                s -= self.r(i, j) * y[j];
            }
            y[i] = s / self.r(i, i);
        }
        y
    }

    /// Solves `R[..r, ..r]ᴴ y = rhs[..r]` by forward substitution.
    pub fn solve_upper_adjoint(&self, r: usize, rhs: &[C64]) -> Vec<C64> {
        let mut y = rhs[..r].to_vec();
        for i in 0..r {
            let mut s = y[i];
            for j in 0..i {
                s -= self.r(j, i).conj() * y[j];
            }
            y[i] = s / self.r(i, i).conj();
        }
        y
    }
}

/// Rank-revealing QR with column pivoting. Pivot ties go to the lower
/// column index, so the factorization is a deterministic function of the input.
pub fn qr_pivoted(m: &ComplexMatrix) -> Result<PivotedQR, NumericsError> {
    if m.is_empty() {
        return Err(NumericsError::InvalidArgument("qr_pivoted needs a nonempty matrix"));
    }
    let f = HouseholderQr::factor(m.rows(), m.to_columns(), true);
    let q_cols = f.q_columns(0..m.rows());
    Ok(PivotedQR {
        q: ComplexMatrix::from_columns(m.rows(), &q_cols),
        r: f.r_matrix(),
        perm: f.perm.clone(),
        diag_magnitudes: f.diag.clone(),
    })
}
