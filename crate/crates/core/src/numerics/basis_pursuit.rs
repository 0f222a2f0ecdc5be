//! Weighted complex ℓ1 minimization under linear equality constraints.
//!
//! The objective is the sum of complex moduli `Σ|x_i|` (a group norm over
//! each entry's real and imaginary parts), not the separable `Σ|Re|+|Im|`.
//! Unknowns tied together by a [`SymmetryMap`] become one shared variable
//! whose ℓ1 weight is the number of entries it stands for, so a symmetric
//! matrix unknown is charged exactly like its full `vec(·)`.
//!
//! The solver is scaled-form ADMM with an exact projection onto the affine
//! constraint set. The projection comes from a pivoted QR of `Aᴴ`, which also
//! detects and drops linearly dependent constraint rows. Once the support of
//! the iterate settles, the solution is polished by least squares on that
//! support and accepted when a dual certificate bounds the optimality gap.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{axpy, dotc, norm2};
use super::qr::HouseholderQr;
use super::svd::{pinv, svd};
use super::{lstsq, ComplexMatrix, NumericsError, C64};

/// Disjoint pairs of unknown indices that must carry equal values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymmetryMap {
    pairs: Vec<(usize, usize)>,
}

impl SymmetryMap {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    /// Ties `(i,j)` to `(j,i)` for an `n×n` matrix whose column-major `vec`
    /// starts at unknown index `offset`.
    pub fn symmetric_block(n: usize, offset: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for j in 0..n {
            for i in j + 1..n {
                pairs.push((offset + j * n + i, offset + i * n + j));
            }
        }
        Self { pairs }
    }

    pub fn merge(mut self, other: SymmetryMap) -> Self {
        self.pairs.extend(other.pairs);
        self
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn validate(&self, n: usize) -> Result<(), NumericsError> {
        let mut seen = vec![false; n];
        for &(i, j) in &self.pairs {
            if i >= n || j >= n || i == j {
                return Err(NumericsError::InvalidArgument("symmetry pair out of range"));
            }
            if seen[i] || seen[j] {
                return Err(NumericsError::InvalidArgument("symmetry pairs must be disjoint"));
            }
            seen[i] = true;
            seen[j] = true;
        }
        Ok(())
    }
}

/// `min Σ|x_i|  s.t.  A·x = b`, optionally with tied unknowns.
#[derive(Clone, Debug)]
pub struct BasisPursuitProblem {
    pub a: ComplexMatrix,
    pub b: Vec<C64>,
    pub symmetry: Option<SymmetryMap>,
    /// Relative feasibility and optimality-gap tolerance.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl BasisPursuitProblem {
    pub fn new(a: ComplexMatrix, b: Vec<C64>) -> Self {
        Self {
            a,
            b,
            symmetry: None,
            tolerance: 1e-8,
            max_iters: 50_000,
        }
    }

    pub fn with_symmetry(mut self, map: SymmetryMap) -> Self {
        self.symmetry = Some(map);
        self
    }
}

/// ADMM knobs.
#[derive(Clone, Debug)]
pub struct AdmmSettings {
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    /// Try support polishing with a dual certificate while iterating.
    pub polish: bool,
    pub check_every: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            relaxation: 1.0,
            polish: true,
            check_every: 10,
        }
    }
}

/// Solution plus solver diagnostics.
#[derive(Clone, Debug)]
pub struct BasisPursuitReport {
    pub x: Vec<C64>,
    /// `Σ|x_i|` over the full (unreduced) unknown vector.
    pub l1_norm: f64,
    pub iterations: usize,
    /// `‖A·x − b‖∞ / max(‖b‖∞, tiny)`.
    pub relative_residual: f64,
    /// Relative optimality gap proven by a dual certificate, when one was found.
    pub certified_gap: Option<f64>,
    /// Constraint rows dropped as linearly dependent.
    pub dropped_rows: Vec<usize>,
    pub rank: usize,
}

/// Solves a basis pursuit problem with default ADMM settings.
pub fn basis_pursuit(p: &BasisPursuitProblem) -> Result<Vec<C64>, NumericsError> {
    basis_pursuit_with(p, &AdmmSettings::default()).map(|r| r.x)
}

/// Unknowns after merging tied pairs.
struct Reduced {
    var_of: Vec<usize>,
    weights: Vec<f64>,
    /// Rows of the reduced constraint matrix.
    rows: Vec<Vec<C64>>,
}

impl Reduced {
    fn build(p: &BasisPursuitProblem) -> Result<Self, NumericsError> {
        let n = p.a.cols();
        let mut var_of: Vec<usize> = (0..n).collect();
        if let Some(map) = &p.symmetry {
            map.validate(n)?;
            let mut partner = vec![usize::MAX; n];
            for &(i, j) in map.pairs() {
                partner[i] = j;
                partner[j] = i;
            }
            let mut next = 0;
            let mut assigned = vec![usize::MAX; n];
            for i in 0..n {
                if assigned[i] != usize::MAX {
                    continue;
                }
                assigned[i] = next;
                if partner[i] != usize::MAX {
                    assigned[partner[i]] = next;
                }
                next += 1;
            }
            var_of = assigned;
        }
        let nvars = var_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut weights = vec![0.0; nvars];
        for &v in &var_of {
            weights[v] += 1.0;
        }
        let rows = (0..p.a.rows())
            .map(|i| {
                let mut r = vec![C64::new(0.0, 0.0); nvars];
                for (j, a) in p.a.row(i).iter().enumerate() {
                    r[var_of[j]] += a;
                }
                r
            })
            .collect();
        Ok(Self {
            var_of,
            weights,
            rows,
        })
    }

    fn nvars(&self) -> usize {
        self.weights.len()
    }

    fn expand(&self, x: &[C64], scale: f64) -> Vec<C64> {
        self.var_of.iter().map(|&v| x[v] * scale).collect()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn weighted_l1(&self, x: &[C64]) -> f64 {
        x.iter().zip(&self.weights).map(|(z, w)| w * z.norm()).sum()
    }
}

/// Affine-set geometry shared by the equality-constrained solver.
struct Affine {
    /// Orthonormal basis of `range(Aᴴ)` (reduced unknown space).
    q_range: Vec<Vec<C64>>,
    /// Orthonormal basis of `null(A)`; used instead of `q_range` when smaller.
    q_null: Option<Vec<Vec<C64>>>,
    /// Minimum-norm feasible point (scaled).
    x0: Vec<C64>,
    /// Independent constraint rows in pivot order.
    selected: Vec<usize>,
}

impl Affine {
    fn project(&self, v: &[C64], out: &mut [C64]) {
        match &self.q_null {
            Some(nb) => {
                out.copy_from_slice(&self.x0);
                for q in nb {
                    let c = dotc(q, v);
                    axpy(c, q, out);
                }
            }
            None => {
                out.copy_from_slice(v);
                for q in &self.q_range {
                    let c = dotc(q, v);
                    axpy(-c, q, out);
                }
                for (o, x) in out.iter_mut().zip(&self.x0) {
                    *o += x;
                }
            }
        }
    }
}

fn relative_residual(red: &Reduced, x: &[C64], b: &[C64], bnorm: f64) -> f64 {
    red.apply(x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| (ax - bi).norm())
        .fold(0.0, f64::max)
        / bnorm.max(f64::MIN_POSITIVE)
}

#[inline]
fn soft_threshold(v: C64, kappa: f64) -> C64 {
    let m = v.norm();
    if m <= kappa {
        C64::new(0.0, 0.0)
    } else {
        v * ((m - kappa) / m)
    }
}

/// Equality-constrained weighted complex ℓ1 minimization.
pub fn basis_pursuit_with(
    p: &BasisPursuitProblem,
    settings: &AdmmSettings,
) -> Result<BasisPursuitReport, NumericsError> {
    if p.a.rows() != p.b.len() {
        return Err(NumericsError::InvalidArgument("A rows must match b length"));
    }
    if !(p.tolerance > 0.0) || !(settings.rho > 0.0) {
        return Err(NumericsError::InvalidArgument("tolerance and rho must be positive"));
    }
    if !(settings.relaxation > 0.0 && settings.relaxation < 2.0) {
        return Err(NumericsError::InvalidArgument("relaxation must lie in (0, 2)"));
    }
    if p.b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::InvalidArgument("b must be finite"));
    }
    let red = Reduced::build(p)?;
    let n = red.nvars();
    let m = p.a.rows();
    let bnorm = p.b.iter().map(|z| z.norm()).fold(0.0, f64::max);

    if bnorm == 0.0 || m == 0 || n == 0 {
        return Ok(BasisPursuitReport {
            x: vec![C64::new(0.0, 0.0); p.a.cols()],
            l1_norm: 0.0,
            iterations: 0,
            relative_residual: 0.0,
            certified_gap: Some(0.0),
            dropped_rows: Vec::new(),
            rank: 0,
        });
    }

    // QR of Aᴴ: columns are conjugated constraint rows.
    let cols: Vec<Vec<C64>> = red
        .rows
        .iter()
        .map(|r| r.iter().map(|z| z.conj()).collect())
        .collect();
    let f = HouseholderQr::factor(n, cols, true);
    let d0 = f.diag.first().copied().unwrap_or(0.0);
    let rank_tol = 10.0 * (n.max(m) as f64) * f64::EPSILON;
    let r = f.diag.iter().take_while(|&&d| d > rank_tol * d0).count();
    if r == 0 {
        return Err(NumericsError::Infeasible { residual: 1.0 });
    }
    let selected: Vec<usize> = f.perm[..r].to_vec();
    let mut dropped: Vec<usize> = f.perm[r..].to_vec();
    dropped.sort_unstable();

    let b_sel: Vec<C64> = selected.iter().map(|&i| p.b[i]).collect();
    let y = f.solve_upper_adjoint(r, &b_sel);
    let q_range = f.q_columns(0..r);
    let mut x0 = vec![C64::new(0.0, 0.0); n];
    for (q, yk) in q_range.iter().zip(&y) {
        axpy(*yk, q, &mut x0);
    }
    let feas = relative_residual(&red, &x0, &p.b, bnorm);
    if feas > p.tolerance {
        return Err(NumericsError::Infeasible { residual: feas });
    }

    let scale = x0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let b_scaled: Vec<C64> = p.b.iter().map(|z| z / scale).collect();
    let bnorm_scaled = bnorm / scale;
    for z in x0.iter_mut() {
        *z /= scale;
    }

    let finish = |x: &[C64], iterations: usize, gap: Option<f64>| {
        let full = red.expand(x, scale);
        BasisPursuitReport {
            l1_norm: full.iter().map(|z| z.norm()).sum(),
            relative_residual: relative_residual(&red, x, &b_scaled, bnorm_scaled),
            x: full,
            iterations,
            certified_gap: gap,
            dropped_rows: dropped.clone(),
            rank: r,
        }
    };

    if r == n {
        // single feasible point
        return Ok(finish(&x0, 0, Some(0.0)));
    }

    let q_null = if n - r < r {
        Some(f.q_columns(r..n))
    } else {
        None
    };
    let affine = Affine {
        q_range,
        q_null,
        x0,
        selected,
    };

    let rho = settings.rho;
    let alpha = settings.relaxation;
    let kappa: Vec<f64> = red.weights.iter().map(|w| w / rho).collect();
    let sqrt_n = libm::sqrt(n as f64);

    let mut x = affine.x0.clone();
    let mut z = affine.x0.clone();
    let mut u = vec![C64::new(0.0, 0.0); n];
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut z_old = z.clone();
    let mut last_support: Vec<usize> = Vec::new();
    let check_every = settings.check_every.max(1);

    for it in 1..=p.max_iters {
        for i in 0..n {
            v[i] = z[i] - u[i];
        }
        affine.project(&v, &mut x);
        z_old.copy_from_slice(&z);
        for i in 0..n {
            let xh = x[i] * alpha + z_old[i] * (1.0 - alpha);
            z[i] = soft_threshold(xh + u[i], kappa[i]);
            u[i] += xh - z[i];
        }

        if it % check_every != 0 && it != p.max_iters {
            continue;
        }
        let mut r_norm = 0.0;
        let mut s_norm = 0.0;
        for i in 0..n {
            r_norm += (x[i] - z[i]).norm_sqr();
            s_norm += (z[i] - z_old[i]).norm_sqr();
        }
        let r_norm = libm::sqrt(r_norm);
        let s_norm = rho * libm::sqrt(s_norm);
        let eps_pri = sqrt_n * settings.eps_abs + settings.eps_rel * norm2(&x).max(norm2(&z));
        let eps_dual = sqrt_n * settings.eps_abs + settings.eps_rel * rho * norm2(&u);
        let converged = r_norm <= eps_pri && s_norm <= eps_dual;

        let support: Vec<usize> = (0..n).filter(|&i| z[i].norm() > 0.0).collect();
        let stable = support == last_support;
        last_support = support;

        if settings.polish && (stable || converged) {
            if let Some((xp, gap)) =
                certify(&red, &affine, &last_support, &u, rho, &b_scaled, bnorm_scaled, p.tolerance)
            {
                if gap <= p.tolerance {
                    return Ok(finish(&xp, it, Some(gap)));
                }
                if converged {
                    let mut xf = vec![C64::new(0.0, 0.0); n];
                    affine.project(&z, &mut xf);
                    if red.weighted_l1(&xp) <= red.weighted_l1(&xf) {
                        return Ok(finish(&xp, it, Some(gap)));
                    }
                    return Ok(finish(&xf, it, None));
                }
            }
        }
        if converged {
            let mut xf = vec![C64::new(0.0, 0.0); n];
            affine.project(&z, &mut xf);
            return Ok(finish(&xf, it, None));
        }
    }

    let mut xf = vec![C64::new(0.0, 0.0); n];
    affine.project(&z, &mut xf);
    let resid = libm::sqrt(
        x.iter()
            .zip(&z)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>(),
    ) * scale;
    Err(NumericsError::NoConvergence {
        iterations: p.max_iters,
        residual: resid,
        last_iterate: red.expand(&xf, scale),
    })
}

/// Least-squares polish on `support` plus a dual certificate built from the
/// ADMM multiplier. Returns the polished point and its relative gap.
#[allow(clippy::too_many_arguments)]
fn certify(
    red: &Reduced,
    affine: &Affine,
    support: &[usize],
    u: &[C64],
    rho: f64,
    b: &[C64],
    bnorm: f64,
    tol: f64,
) -> Option<(Vec<C64>, f64)> {
    let r = affine.q_range.len();
    let n = red.nvars();
    if support.is_empty() || support.len() > r {
        return None;
    }
    let a_s = ComplexMatrix::from_fn(affine.selected.len(), support.len(), |i, j| {
        red.rows[affine.selected[i]][support[j]]
    });
    let b_sel = ComplexMatrix::column_vector(
        &affine.selected.iter().map(|&i| b[i]).collect::<Vec<_>>(),
    );
    let xs = lstsq(&a_s, &b_sel).ok()?;
    let mut xp = vec![C64::new(0.0, 0.0); n];
    for (k, &i) in support.iter().enumerate() {
        xp[i] = xs[(k, 0)];
    }
    if relative_residual(red, &xp, b, bnorm) > tol {
        return None;
    }
    if support.iter().any(|&i| xp[i].norm() == 0.0) {
        return None;
    }

    // dual candidate g = Q c, corrected so that g_S = w_S · sign(x_S)
    let mut c: Vec<C64> = affine
        .q_range
        .iter()
        .map(|q| dotc(q, u) * rho)
        .collect();
    let q_s = ComplexMatrix::from_fn(support.len(), r, |i, k| affine.q_range[k][support[i]]);
    let g_s = q_s.mul_vec(&c).ok()?;
    let delta: Vec<C64> = support
        .iter()
        .zip(&g_s)
        .map(|(&i, g)| xp[i] / xp[i].norm() * red.weights[i] - g)
        .collect();
    let dc = pinv(&q_s, 1e-12).ok()?.mul_vec(&delta).ok()?;
    for (ci, d) in c.iter_mut().zip(&dc) {
        *ci += d;
    }
    let mut g = vec![C64::new(0.0, 0.0); n];
    for (q, ck) in affine.q_range.iter().zip(&c) {
        axpy(*ck, q, &mut g);
    }
    let phi = g
        .iter()
        .zip(&red.weights)
        .map(|(gi, w)| gi.norm() / w)
        .fold(0.0, f64::max);
    let lower = dotc(&g, &affine.x0).re / phi.max(1.0);
    let primal = red.weighted_l1(&xp);
    let gap = ((primal - lower) / primal.max(f64::MIN_POSITIVE)).max(0.0);
    Some((xp, gap))
}

/// `min Σ|x_i|  s.t.  ‖A·x − b‖₂ ≤ epsilon`: the noise-tolerant relaxation of
/// [`basis_pursuit`]. The projection onto the constraint ellipsoid uses a thin
/// SVD of the reduced constraint matrix and a scalar root solve.
pub fn basis_pursuit_denoise(
    p: &BasisPursuitProblem,
    epsilon: f64,
    settings: &AdmmSettings,
) -> Result<BasisPursuitReport, NumericsError> {
    if p.a.rows() != p.b.len() {
        return Err(NumericsError::InvalidArgument("A rows must match b length"));
    }
    if !(epsilon >= 0.0) {
        return Err(NumericsError::InvalidArgument("epsilon must be nonnegative"));
    }
    if epsilon == 0.0 {
        return basis_pursuit_with(p, settings);
    }
    let red = Reduced::build(p)?;
    let n = red.nvars();
    let bnorm2 = norm2(&p.b);
    if bnorm2 <= epsilon {
        return Ok(BasisPursuitReport {
            x: vec![C64::new(0.0, 0.0); p.a.cols()],
            l1_norm: 0.0,
            iterations: 0,
            relative_residual: bnorm2 / p.b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE),
            certified_gap: Some(0.0),
            dropped_rows: Vec::new(),
            rank: 0,
        });
    }
    let a_red = ComplexMatrix::from_rows(&red.rows)?;
    let d = svd(&a_red)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let rank = d
        .sigma
        .iter()
        .take_while(|&&s| s > 10.0 * (n.max(p.a.rows()) as f64) * f64::EPSILON * smax)
        .count();
    let u_cols: Vec<Vec<C64>> = (0..rank).map(|k| d.u.column(k)).collect();
    let v_cols: Vec<Vec<C64>> = (0..rank).map(|k| d.v.column(k)).collect();
    let sigma = &d.sigma[..rank];
    let beta: Vec<C64> = u_cols.iter().map(|uc| dotc(uc, &p.b)).collect();
    let b_perp2 = (bnorm2 * bnorm2 - beta.iter().map(|z| z.norm_sqr()).sum::<f64>()).max(0.0);
    let eps2 = epsilon * epsilon - b_perp2;
    if eps2 < 0.0 {
        return Err(NumericsError::Infeasible {
            residual: libm::sqrt(b_perp2) / bnorm2,
        });
    }
    let eps_eff = libm::sqrt(eps2);

    // scale so that the least-norm solution has unit magnitude
    let mut xls = vec![C64::new(0.0, 0.0); n];
    for k in 0..rank {
        axpy(beta[k] / sigma[k], &v_cols[k], &mut xls);
    }
    let scale = xls.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let beta_s: Vec<C64> = beta.iter().map(|z| z / scale).collect();
    let eps_s = eps_eff / scale;

    let project = |v: &[C64], out: &mut [C64]| {
        let cv: Vec<C64> = v_cols.iter().map(|vc| dotc(vc, v)).collect();
        let mis = |mu: f64| -> f64 {
            (0..rank)
                .map(|k| {
                    let t = cv[k] * sigma[k] - beta_s[k];
                    let d = 1.0 + mu * sigma[k] * sigma[k];
                    t.norm_sqr() / (d * d)
                })
                .sum::<f64>()
        };
        out.copy_from_slice(v);
        if mis(0.0) <= eps_s * eps_s {
            return;
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while mis(hi) > eps_s * eps_s {
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mis(mid) > eps_s * eps_s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let mu = hi;
        for k in 0..rank {
            let ck = (cv[k] + beta_s[k] * (mu * sigma[k])) / (1.0 + mu * sigma[k] * sigma[k]);
            axpy(ck - cv[k], &v_cols[k], out);
        }
    };

    let rho = settings.rho;
    let kappa: Vec<f64> = red.weights.iter().map(|w| w / rho).collect();
    let sqrt_n = libm::sqrt(n as f64);
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut z = vec![C64::new(0.0, 0.0); n];
    project(&z.clone(), &mut z);
    let mut u = vec![C64::new(0.0, 0.0); n];
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut z_old = z.clone();
    let check_every = settings.check_every.max(1);
    let bmax = p.b.iter().map(|z| z.norm()).fold(0.0, f64::max);

    for it in 1..=p.max_iters {
        for i in 0..n {
            v[i] = z[i] - u[i];
        }
        project(&v, &mut x);
        z_old.copy_from_slice(&z);
        for i in 0..n {
            let xh = x[i] * settings.relaxation + z_old[i] * (1.0 - settings.relaxation);
            z[i] = soft_threshold(xh + u[i], kappa[i]);
            u[i] += xh - z[i];
        }
        if it % check_every != 0 {
            continue;
        }
        let r_norm = libm::sqrt((0..n).map(|i| (x[i] - z[i]).norm_sqr()).sum::<f64>());
        let s_norm = rho * libm::sqrt((0..n).map(|i| (z[i] - z_old[i]).norm_sqr()).sum::<f64>());
        let eps_pri = sqrt_n * settings.eps_abs + settings.eps_rel * norm2(&x).max(norm2(&z));
        let eps_dual = sqrt_n * settings.eps_abs + settings.eps_rel * rho * norm2(&u);
        if r_norm <= eps_pri && s_norm <= eps_dual {
            let mut xf = vec![C64::new(0.0, 0.0); n];
            project(&z, &mut xf);
            let full = red.expand(&xf, scale);
            let ax = p.a.mul_vec(&full)?;
            let res = ax.iter().zip(&p.b).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            return Ok(BasisPursuitReport {
                l1_norm: full.iter().map(|z| z.norm()).sum(),
                x: full,
                iterations: it,
                relative_residual: res / bmax.max(f64::MIN_POSITIVE),
                certified_gap: None,
                dropped_rows: Vec::new(),
                rank,
            });
        }
    }
    let mut xf = vec![C64::new(0.0, 0.0); n];
    project(&z, &mut xf);
    Err(NumericsError::NoConvergence {
        iterations: p.max_iters,
        residual: libm::sqrt((0..n).map(|i| (x[i] - z[i]).norm_sqr()).sum::<f64>()) * scale,
        last_iterate: red.expand(&xf, scale),
    })
}
