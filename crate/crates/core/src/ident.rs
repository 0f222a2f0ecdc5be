//! Admittance identification from low-rank phasor data.
//!
//! Rows of `V` are split into `R` linearly independent rows (`𝕍2`) and
//! `D−R` rows in their span (`𝕍1 = X·𝕍2`). The data fix `Y_X` in
//! `[𝕀1; 𝕀2] = Y_X·𝕍2` and, through it, `C = Y22 − Xᵀ·Y11·X`. The two
//! symmetric blocks `Y11`, `Y22` are recovered from `C` by ℓ1 minimization,
//! and `Y12` follows by least squares.

use alloc::vec::Vec;

use crate::numerics::{
    basis_pursuit_with, lstsq, numerical_rank, qr_pivoted, AdmmSettings, BasisPursuitProblem,
    ComplexMatrix, NumericsError, SymmetryMap, C64, DEFAULT_RANK_TAU,
};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum IdentError {
    #[error("voltage data is identically zero")]
    Degenerate,
    #[error("insufficient data: {k} samples cannot reveal rank beyond {rank} of {d} rows")]
    InsufficientData { k: usize, rank: usize, d: usize },
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        source: NumericsError,
    },
}

fn stage(stage: &'static str) -> impl Fn(NumericsError) -> IdentError {
    move |source| IdentError::Stage { stage, source }
}

/// Row split realized as a permutation: `perm = dep_rows ++ ind_rows`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub perm: Vec<usize>,
    pub rank: usize,
    /// Ascending.
    pub dep_rows: Vec<usize>,
    /// Ascending.
    pub ind_rows: Vec<usize>,
}

impl Partition {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }
}

/// Relative fit of every stage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageResiduals {
    /// `‖𝕍1 − X·𝕍2‖_F / ‖𝕍1‖_F`.
    pub basis: f64,
    /// `‖[𝕀1; 𝕀2] − Y_X·𝕍2‖_F / ‖I‖_F`.
    pub y_x: f64,
    /// `‖C − Cᵀ‖_F / ‖C‖_F` before symmetrization.
    pub c_asymmetry: f64,
    /// `‖[−Xᵀ⊗Xᵀ I]·y − vec C‖∞ / ‖vec C‖∞` at the ℓ1 solution.
    pub sparse_constraint: f64,
    /// `‖(Y11·X + Y12)·𝕍2 − 𝕀1‖_F / ‖𝕀1‖_F`.
    pub y12: f64,
    /// ADMM iterations spent on the ℓ1 stage.
    pub sparse_iterations: usize,
    /// Relative duality gap certified for the ℓ1 stage, if any.
    pub sparse_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedModel {
    pub partition: Partition,
    /// `(D−R)×R`.
    pub x: ComplexMatrix,
    /// `D×R`, rows in `perm` order.
    pub y_x: ComplexMatrix,
    pub y11: ComplexMatrix,
    pub y22: ComplexMatrix,
    pub y12: ComplexMatrix,
    pub residuals: StageResiduals,
}

impl IdentifiedModel {
    /// Full `D×D` admittance in the original node order.
    pub fn assemble(&self) -> ComplexMatrix {
        let p = &self.partition;
        let d = p.dim();
        let mut y = ComplexMatrix::zeros(d, d);
        for (a, &i) in p.dep_rows.iter().enumerate() {
            for (b, &j) in p.dep_rows.iter().enumerate() {
                y[(i, j)] = self.y11[(a, b)];
            }
            for (b, &j) in p.ind_rows.iter().enumerate() {
                y[(i, j)] = self.y12[(a, b)];
                y[(j, i)] = self.y12[(a, b)];
            }
        }
        for (a, &i) in p.ind_rows.iter().enumerate() {
            for (b, &j) in p.ind_rows.iter().enumerate() {
                y[(i, j)] = self.y22[(a, b)];
            }
        }
        y
    }

    pub fn is_full_rank(&self) -> bool {
        self.partition.rank == self.partition.dim()
    }
}

#[derive(Clone, Debug)]
pub struct IdentSettings {
    /// Numerical-rank threshold on `|R[i,i]| / |R[0,0]|`.
    pub tau: f64,
    /// Feasibility and gap tolerance of the ℓ1 stage.
    pub sparse_tolerance: f64,
    pub max_iters: usize,
    pub admm: AdmmSettings,
}

impl Default for IdentSettings {
    fn default() -> Self {
        Self {
            tau: DEFAULT_RANK_TAU,
            sparse_tolerance: 1e-8,
            max_iters: 50_000,
            admm: AdmmSettings::default(),
        }
    }
}

/// Independent rows of `v` from a pivoted QR of `vᵀ`.
pub fn select_basis(v: &ComplexMatrix, tau: f64) -> Result<Partition, IdentError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(IdentError::Shape("tau must lie in (0, 1)"));
    }
    if v.is_empty() || v.max_abs() == 0.0 {
        return Err(IdentError::Degenerate);
    }
    let qr = qr_pivoted(&v.transpose()).map_err(stage("select_basis"))?;
    let rank = numerical_rank(&qr.diag_magnitudes, tau);
    let mut ind_rows = qr.perm[..rank].to_vec();
    let mut dep_rows = qr.perm[rank..].to_vec();
    ind_rows.sort_unstable();
    dep_rows.sort_unstable();
    let perm = dep_rows.iter().chain(&ind_rows).copied().collect();
    Ok(Partition {
        perm,
        rank,
        dep_rows,
        ind_rows,
    })
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// `X = 𝕍1·𝕍2†`, computed as a least-squares solve against `𝕍2ᵀ`.
pub fn estimate_x(v: &ComplexMatrix, p: &Partition) -> Result<ComplexMatrix, IdentError> {
    if p.rank == 0 {
        return Err(IdentError::Degenerate);
    }
    let v1 = v.select_rows(&p.dep_rows);
    let v2 = v.select_rows(&p.ind_rows);
    if v1.rows() == 0 {
        return Ok(ComplexMatrix::zeros(0, p.rank));
    }
    Ok(lstsq(&v2.transpose(), &v1.transpose())
        .map_err(stage("estimate_x"))?
        .transpose())
}

/// `Y_X` minimizing `‖[𝕀1; 𝕀2] − Y_X·𝕍2‖_F`.
pub fn estimate_yx(
    v: &ComplexMatrix,
    i: &ComplexMatrix,
    p: &Partition,
) -> Result<ComplexMatrix, IdentError> {
    if v.shape() != i.shape() {
        return Err(IdentError::Shape("V and I differ in shape"));
    }
    let v2 = v.select_rows(&p.ind_rows);
    let ip = i.select_rows(&p.perm);
    Ok(lstsq(&v2.transpose(), &ip.transpose())
        .map_err(stage("estimate_yx"))?
        .transpose())
}

/// `C = 𝕀2·𝕍2† − (𝕍2†)ᵀ·𝕀1ᵀ·X`, evaluated as `Y_X2 − Y_X1ᵀ·X`.
pub fn compute_c(y_x: &ComplexMatrix, p: &Partition, x: &ComplexMatrix) -> Result<ComplexMatrix, IdentError> {
    let nd = p.dep_rows.len();
    if y_x.rows() != p.dim() || y_x.cols() != p.rank || x.shape() != (nd, p.rank) {
        return Err(IdentError::Shape("inconsistent Y_X, X and partition"));
    }
    let dep: Vec<usize> = (0..nd).collect();
    let ind: Vec<usize> = (nd..p.dim()).collect();
    let y_x1 = y_x.select_rows(&dep);
    let y_x2 = y_x.select_rows(&ind);
    if nd == 0 {
        return Ok(y_x2);
    }
    let t = y_x1.transpose().matmul(x).map_err(stage("compute_c"))?;
    Ok(&y_x2 - &t)
}

/// Result of the ℓ1 stage.
#[derive(Clone, Debug)]
pub struct SparseBlocks {
    pub y11: ComplexMatrix,
    pub y22: ComplexMatrix,
    pub constraint_residual: f64,
    pub iterations: usize,
    pub gap: Option<f64>,
}

/// Solves `min ‖Y11‖₁ + ‖Y22‖₁` over symmetric blocks subject to
/// `Y22 − Xᵀ·Y11·X = C` (vectorized: `[−Xᵀ⊗Xᵀ  I]·[vec Y11; vec Y22] = vec C`).
///
/// `C` must be symmetric. Under the shared-variable parameterization,
/// equation rows `(i,j)` and `(j,i)` coincide, so only `i ≥ j` is passed on.
pub fn recover_y11_y22(
    c: &ComplexMatrix,
    x: &ComplexMatrix,
    settings: &IdentSettings,
) -> Result<SparseBlocks, IdentError> {
    let r = c.rows();
    let nd = x.rows();
    if c.cols() != r || x.cols() != r {
        return Err(IdentError::Shape("C must be R×R and X (D−R)×R"));
    }
    let n11 = nd * nd;
    let n = n11 + r * r;
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|j| (j..r).map(move |i| (i, j))).collect();
    let mut a = ComplexMatrix::zeros(pairs.len(), n);
    let mut b = Vec::with_capacity(pairs.len());
    for (row, &(i, j)) in pairs.iter().enumerate() {
        // −(XᵀY11X)_ij = −Σ_kl X_ki X_lj Y11_kl, column-major vec index k + l·nd
        for l in 0..nd {
            for k in 0..nd {
                a[(row, k + l * nd)] = -(x[(k, i)] * x[(l, j)]);
            }
        }
        a[(row, n11 + i + j * r)] = C64::new(1.0, 0.0);
        b.push(c[(i, j)]);
    }
    let symmetry = SymmetryMap::symmetric_block(nd, 0).merge(SymmetryMap::symmetric_block(r, n11));
    let mut problem = BasisPursuitProblem::new(a, b).with_symmetry(symmetry);
    problem.tolerance = settings.sparse_tolerance;
    problem.max_iters = settings.max_iters;
    let rep = basis_pursuit_with(&problem, &settings.admm).map_err(stage("recover_y11_y22"))?;
    let y11 = ComplexMatrix::unvec(nd, nd, &rep.x[..n11]);
    let y22 = ComplexMatrix::unvec(r, r, &rep.x[n11..]);
    let full = c - &(&y22 - &(&x.transpose() * &(&y11 * x)));
    let constraint_residual = rel(full.max_abs(), c.max_abs());
    Ok(SparseBlocks {
        y11,
        y22,
        constraint_residual,
        iterations: rep.iterations,
        gap: rep.certified_gap,
    })
}

/// `Y12` minimizing `‖(Y11·X + Y12)·𝕍2 − 𝕀1‖_F`.
pub fn recover_y12(
    v: &ComplexMatrix,
    i: &ComplexMatrix,
    p: &Partition,
    x: &ComplexMatrix,
    y11: &ComplexMatrix,
) -> Result<(ComplexMatrix, f64), IdentError> {
    let v2 = v.select_rows(&p.ind_rows);
    let i1 = i.select_rows(&p.dep_rows);
    if i1.rows() == 0 {
        return Ok((ComplexMatrix::zeros(0, p.rank), 0.0));
    }
    let known = (y11 * x).matmul(&v2).map_err(stage("recover_y12"))?;
    let rhs = &i1 - &known;
    let y12 = lstsq(&v2.transpose(), &rhs.transpose())
        .map_err(stage("recover_y12"))?
        .transpose();
    let fit = &(&y12 * &v2) - &rhs;
    Ok((y12, rel(fit.frobenius_norm(), i1.frobenius_norm())))
}

/// Runs the whole pipeline on a `D×K` window.
pub fn identify(
    v: &ComplexMatrix,
    i: &ComplexMatrix,
    settings: &IdentSettings,
) -> Result<IdentifiedModel, IdentError> {
    if v.shape() != i.shape() {
        return Err(IdentError::Shape("V and I differ in shape"));
    }
    let (d, k) = v.shape();
    let p = select_basis(v, settings.tau)?;
    if p.rank == k && k < d {
        return Err(IdentError::InsufficientData { k, rank: p.rank, d });
    }
    let mut res = StageResiduals::default();

    if p.rank == d {
        // nothing is dependent: solve Y·V = I directly
        let yt = lstsq(&v.transpose(), &i.transpose()).map_err(stage("full_rank"))?;
        let y = yt.transpose();
        let fit = &(&y * v) - i;
        res.y_x = rel(fit.frobenius_norm(), i.frobenius_norm());
        res.c_asymmetry = rel((&y - &y.transpose()).frobenius_norm(), y.frobenius_norm());
        let y_sym = ComplexMatrix::from_fn(d, d, |a, b| (y[(a, b)] + y[(b, a)]) * 0.5);
        return Ok(IdentifiedModel {
            x: ComplexMatrix::zeros(0, d),
            y_x: y,
            y11: ComplexMatrix::zeros(0, 0),
            y22: y_sym,
            y12: ComplexMatrix::zeros(0, d),
            partition: p,
            residuals: res,
        });
    }

    let x = estimate_x(v, &p)?;
    let v1 = v.select_rows(&p.dep_rows);
    let v2 = v.select_rows(&p.ind_rows);
    res.basis = rel((&v1 - &(&x * &v2)).frobenius_norm(), v1.frobenius_norm());

    let y_x = estimate_yx(v, i, &p)?;
    let ip = i.select_rows(&p.perm);
    res.y_x = rel((&ip - &(&y_x * &v2)).frobenius_norm(), i.frobenius_norm());

    let c_raw = compute_c(&y_x, &p, &x)?;
    res.c_asymmetry = rel((&c_raw - &c_raw.transpose()).frobenius_norm(), c_raw.frobenius_norm());
    let r = p.rank;
    let c = ComplexMatrix::from_fn(r, r, |a, b| (c_raw[(a, b)] + c_raw[(b, a)]) * 0.5);

    let blocks = recover_y11_y22(&c, &x, settings)?;
    res.sparse_constraint = blocks.constraint_residual;
    res.sparse_iterations = blocks.iterations;
    res.sparse_gap = blocks.gap;

    let (y12, fit) = recover_y12(v, i, &p, &x, &blocks.y11)?;
    res.y12 = fit;

    Ok(IdentifiedModel {
        partition: p,
        x,
        y_x,
        y11: blocks.y11,
        y22: blocks.y22,
        y12,
        residuals: res,
    })
}

/// Per-element relative error `|Ŷ_ij − Y_ij| / s_ij` where `s_ij = |Y_ij|`
/// for nonzero true entries and `sqrt(|Y_ii·Y_jj|)` for structural zeros.
pub fn relative_element_errors(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(estimate.shape(), truth.shape());
    let (r, c) = truth.shape();
    ComplexMatrix::from_fn(r, c, |i, j| {
        let t = truth[(i, j)].norm();
        let s = if t > 0.0 || i >= r.min(c) || j >= r.min(c) {
            t
        } else {
            libm::sqrt(truth[(i, i)].norm() * truth[(j, j)].norm())
        };
        let e = (estimate[(i, j)] - truth[(i, j)]).norm();
        C64::new(if s > 0.0 { e / s } else if e == 0.0 { 0.0 } else { f64::INFINITY }, 0.0)
    })
}

/// Largest entry of [`relative_element_errors`].
pub fn max_relative_element_error(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
    relative_element_errors(estimate, truth)
        .as_slice()
        .iter()
        .map(|z| z.re)
        .fold(0.0, f64::max)
}
