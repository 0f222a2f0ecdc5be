use alloc::vec::Vec;

use super::matrix::dotc;
use super::{ComplexMatrix, NumericsError, C64};

/// Thin singular value decomposition `M = U·diag(σ)·Vᴴ`, σ sorted descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD. Deterministic and accurate to high
/// relative precision, which matters for the ill-conditioned voltage data
/// this crate works with.
pub fn svd(m: &ComplexMatrix) -> Result<Svd, NumericsError> {
    if m.is_empty() {
        return Err(NumericsError::InvalidArgument("svd needs a nonempty matrix"));
    }
    if m.rows() < m.cols() {
        let t = svd(&m.adjoint())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (rows, n) = m.shape();
    let mut a = m.to_columns();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = alloc::vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    let mut norms: Vec<f64> = a.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();

    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dotc(&a[p], &a[q]);
                let g = gamma.norm();
                if g <= eps * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let ph = phase.conj();
                rotate(&mut a, p, q, c, s, ph);
                rotate(&mut v, p, q, c, s, ph);
                norms[p] = a[p].iter().map(|z| z.norm_sqr()).sum();
                norms[q] = a[q].iter().map(|z| z.norm_sqr()).sum();
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|&x| libm::sqrt(x)).collect();
    order.sort_by(|&i, &j| sig[j].partial_cmp(&sig[i]).unwrap().then(i.cmp(&j)));

    let mut u_cols = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for &j in &order {
        let s = sig[j];
        let col = if s > 0.0 {
            a[j].iter().map(|z| z / s).collect()
        } else {
            alloc::vec![C64::new(0.0, 0.0); rows]
        };
        u_cols.push(col);
        v_cols.push(v[j].clone());
        sigma.push(s);
    }
    Ok(Svd {
        u: ComplexMatrix::from_columns(rows, &u_cols),
        sigma,
        v: ComplexMatrix::from_columns(n, &v_cols),
    })
}

/// Applies the plane rotation mixing columns `p` and `e^{-iφ}·q`.
fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, ph: C64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yq = *y * ph;
        let xp = *x;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Moore–Penrose pseudo-inverse. Singular values below `rcond·σ_max` are
/// treated as zero.
pub fn pinv(m: &ComplexMatrix, rcond: f64) -> Result<ComplexMatrix, NumericsError> {
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(NumericsError::InvalidArgument("rcond must lie in (0, 1)"));
    }
    if m.is_empty() {
        return Ok(ComplexMatrix::zeros(m.cols(), m.rows()));
    }
    let d = svd(m)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let (rows, cols) = m.shape();
    let mut out = ComplexMatrix::zeros(cols, rows);
    for (k, &s) in d.sigma.iter().enumerate() {
        if s <= rcond * smax || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let vi = d.v[(i, k)] * inv;
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vi * d.u[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::{random_matrix, random_rank_matrix};

    fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
        m.max_abs_diff(&m.adjoint()) <= tol
    }

    fn penrose(m: &ComplexMatrix, tol: f64) {
        let p = pinv(m, 1e-10).unwrap();
        let scale = m.max_abs().max(1.0) * p.max_abs().max(1.0);
        assert!((&(&(m * &p) * m) - m).max_abs() <= tol * scale);
        assert!((&(&(&p * m) * &p) - &p).max_abs() <= tol * scale);
        assert!(is_hermitian(&(m * &p), tol * scale));
        assert!(is_hermitian(&(&p * m), tol * scale));
    }

    #[test]
    fn singular_diagonal() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = pinv(&m, 1e-12).unwrap();
        assert!(p.max_abs_diff(&m) < 1e-15);
    }

    #[test]
    fn full_row_rank_right_inverse() {
        let m = random_matrix(2, 4, 21);
        let p = pinv(&m, 1e-12).unwrap();
        assert!((&m * &p).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-9);
    }

    #[test]
    fn pinv_is_an_involution() {
        let m = random_matrix(3, 3, 4);
        let pp = pinv(&pinv(&m, 1e-12).unwrap(), 1e-12).unwrap();
        assert!(pp.max_abs_diff(&m) < 1e-8);
    }

    #[test]
    fn penrose_identities_across_ranks() {
        for (rows, cols) in [(4usize, 6usize), (6, 3), (5, 5)] {
            for rank in 1..=rows.min(cols) {
                penrose(&random_rank_matrix(rows, cols, rank, (rows * 31 + rank) as u64), 1e-8);
            }
        }
    }

    #[test]
    fn reconstructs_input() {
        let m = random_matrix(7, 4, 9);
        let d = svd(&m).unwrap();
        let back = &(&d.u * &ComplexMatrix::diagonal(
            &d.sigma.iter().map(|&s| C64::new(s, 0.0)).collect::<Vec<_>>(),
        )) * &d.v.adjoint();
        assert!(back.max_abs_diff(&m) < 1e-12);
        for w in d.sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rejects_bad_rcond() {
        assert!(pinv(&ComplexMatrix::identity(2), 0.0).is_err());
        assert!(pinv(&ComplexMatrix::identity(2), 1.0).is_err());
    }
}
