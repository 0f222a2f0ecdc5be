use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{residual, EventError};
use crate::feeder::{line_contribution, BlockRef, BusAdmittance, FeederModel};
use crate::numerics::{
    basis_pursuit_denoise, basis_pursuit_with, AdmmSettings, BasisPursuitProblem, ComplexMatrix,
    NumericsError, SymmetryMap, C64,
};
use crate::simulator::{PhasorSnapshot, PhasorWindow};

/// Event type read off the pattern of `ΔY`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    LineTrip,
    LineClose,
    ShuntChange,
    SwitchPair,
    Unknown,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LineTrip => "line_trip",
            Self::LineClose => "line_close",
            Self::ShuntChange => "shunt_change",
            Self::SwitchPair => "switch_pair",
            Self::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "line_trip" => Self::LineTrip,
            "line_close" => Self::LineClose,
            "shunt_change" => Self::ShuntChange,
            "switch_pair" => Self::SwitchPair,
            "unknown" => Self::Unknown,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LocalizeSettings {
    /// Minimum number of post-event samples.
    pub min_samples: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    pub admm: AdmmSettings,
    /// Blocks below `block_floor ×` the largest `ΔY` block are dropped.
    pub block_floor: f64,
    /// Frobenius bound on `ΔY·V − E` for noisy data; `None` means equality.
    pub epsilon: Option<f64>,
    /// Relative mismatch accepted when matching a block to a line model.
    pub match_tolerance: f64,
}

impl Default for LocalizeSettings {
    fn default() -> Self {
        Self {
            min_samples: 10,
            tolerance: 1e-8,
            max_iters: 50_000,
            admm: AdmmSettings::default(),
            block_floor: 1e-3,
            epsilon: None,
            match_tolerance: 0.05,
        }
    }
}

/// A localized admittance change.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    /// Detection slot.
    pub t: u64,
    pub delta: ComplexMatrix,
    /// Significant bus pairs, largest first.
    pub changed_blocks: Vec<BlockRef>,
    pub classification: Classification,
    /// Lines whose model explains the matched blocks.
    pub lines: Vec<String>,
    pub samples_used: usize,
    /// `‖ΔY·V − E‖_F / ‖E‖_F`.
    pub constraint_residual: f64,
    pub l1_norm: f64,
}

/// Nodes whose voltage is not identically zero over the window.
pub fn observable_nodes(w: &PhasorWindow) -> Vec<bool> {
    (0..w.dim())
        .map(|r| w.v.row(r).iter().any(|z| z.norm() > 0.0))
        .collect()
}

/// Solves `min ‖ΔY‖₁` over symmetric `ΔY` subject to
/// `I − Y⁰·V = ΔY·V` on the window (or `‖ΔY·V − E‖_F ≤ ε` when
/// `settings.epsilon` is set), then classifies the result.
///
/// `feeder` supplies line impedances for classification; `t` is the
/// detection slot recorded in the result.
pub fn localize(
    y0: &BusAdmittance,
    w: &PhasorWindow,
    t: u64,
    feeder: Option<&FeederModel>,
    settings: &LocalizeSettings,
) -> Result<EventRecord, EventError> {
    let d = y0.dim();
    if w.dim() != d {
        return Err(EventError::Dimension {
            expected: d,
            got: w.dim(),
        });
    }
    let k = w.len();
    if k < settings.min_samples.max(1) {
        return Err(EventError::InsufficientSamples {
            needed: settings.min_samples.max(1),
            got: k,
        });
    }
    let e = &w.i - &(&y0.y * &w.v);

    // row (i, s) of the system: Σ_j ΔY_ij V_js = E_is; vec index i + j·D
    let mut a = ComplexMatrix::zeros(d * k, d * d);
    let mut b = Vec::with_capacity(d * k);
    for s in 0..k {
        for i in 0..d {
            let row = a.row_mut(s * d + i);
            for j in 0..d {
                row[i + j * d] = w.v[(j, s)];
            }
            b.push(e[(i, s)]);
        }
    }
    let mut problem =
        BasisPursuitProblem::new(a, b).with_symmetry(SymmetryMap::symmetric_block(d, 0));
    problem.tolerance = settings.tolerance;
    problem.max_iters = settings.max_iters;
    let report = match settings.epsilon {
        Some(eps) => basis_pursuit_denoise(&problem, eps, &settings.admm),
        None => basis_pursuit_with(&problem, &settings.admm),
    };
    let report = match report {
        Ok(r) => r,
        Err(NumericsError::Infeasible { residual }) => {
            return Err(EventError::Infeasible {
                slot: t,
                advice: format!(
                    "no symmetric ΔY fits the window (relative residual {residual:.3e}); \
                     the window likely spans the event, retry with a later start"
                ),
            })
        }
        Err(other) => return Err(other.into()),
    };
    let delta = ComplexMatrix::unvec(d, d, &report.x);
    let fit = &(&delta * &w.v) - &e;
    let en = e.frobenius_norm();
    let constraint_residual = if en > 0.0 { fit.frobenius_norm() / en } else { fit.frobenius_norm() };

    let observable = observable_nodes(w);
    let changed_blocks = significant_blocks(y0, &delta, settings.block_floor);
    let (classification, lines) = classify(&delta, y0, feeder, &observable, settings);
    Ok(EventRecord {
        t,
        delta,
        changed_blocks,
        classification,
        lines,
        samples_used: k,
        constraint_residual,
        l1_norm: report.l1_norm,
    })
}

/// Rejects a localization whose updated admittance leaves any held-out
/// residual above `gamma`.
pub fn verify_holdout(
    y1: &ComplexMatrix,
    holdout: &[PhasorSnapshot],
    gamma: f64,
    t: u64,
) -> Result<(), EventError> {
    for s in holdout {
        let (_, n) = residual(y1, s)?;
        if n > gamma {
            return Err(EventError::Rejected {
                slot: t,
                advice: format!(
                    "updated admittance misfits held-out slot {} (‖e‖ = {n:.3e} > γ = {gamma:.3e}); \
                     the window likely overlaps the event, retry with a later start",
                    s.slot
                ),
            });
        }
    }
    Ok(())
}

fn significant_blocks(y0: &BusAdmittance, delta: &ComplexMatrix, floor: f64) -> Vec<BlockRef> {
    let blocks = y0.block_magnitudes(delta);
    let top = blocks.first().map(|b| b.magnitude).unwrap_or(0.0);
    let cut = floor * top;
    blocks.into_iter().filter(|b| b.magnitude > 0.0 && b.magnitude >= cut).collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Removed,
    Added,
}

/// Reads the event type off the significant blocks of `delta`.
///
/// - one off-diagonal pair that cancels an existing `Y⁰` block → line trip;
/// - one off-diagonal pair where `Y⁰` is zero → line close;
/// - one of each → switch pair;
/// - diagonal blocks only → shunt change;
/// - anything else → unknown.
///
/// Every off-diagonal pair must come with consistent diagonal updates on its
/// two buses: the negated line stamp when `feeder` knows the line, otherwise
/// zero row sums (pure series branch). Entries between two nodes that are
/// dead in the window (`observable == false`) are not checked, since the data
/// cannot reveal them. Every significant diagonal block must belong to an
/// endpoint of a matched pair.
pub fn classify(
    delta: &ComplexMatrix,
    y0: &BusAdmittance,
    feeder: Option<&FeederModel>,
    observable: &[bool],
    settings: &LocalizeSettings,
) -> (Classification, Vec<String>) {
    let blocks = significant_blocks(y0, delta, settings.block_floor);
    if blocks.is_empty() {
        return (Classification::Unknown, Vec::new());
    }
    let off: Vec<&BlockRef> = blocks.iter().filter(|b| !b.is_diagonal()).collect();
    if off.is_empty() {
        return (Classification::ShuntChange, Vec::new());
    }
    if off.len() > 2 {
        return (Classification::Unknown, Vec::new());
    }
    let tol = settings.match_tolerance;
    let mut roles = Vec::new();
    let mut lines = Vec::new();
    let mut expected = ComplexMatrix::zeros(delta.rows(), delta.cols());
    for b in &off {
        let Some((rm, rn)) = y0.block_index(&b.row_bus, &b.col_bus) else {
            return (Classification::Unknown, Vec::new());
        };
        let y0_block = y0.y.submatrix(rm, rn);
        let d_block = delta.submatrix(rm, rn);
        let y0n = y0_block.frobenius_norm();
        let line = feeder.and_then(|f| f.line_between(&b.row_bus, &b.col_bus));
        let role = if y0n > 0.0 {
            if (&d_block + &y0_block).frobenius_norm() > tol * y0n {
                return (Classification::Unknown, Vec::new());
            }
            Role::Removed
        } else {
            Role::Added
        };
        match (line, feeder) {
            (Some(l), Some(f)) => {
                let Ok(stamp) = line_contribution(f, &l.id) else {
                    return (Classification::Unknown, Vec::new());
                };
                let sign = if role == Role::Removed { -1.0 } else { 1.0 };
                if role == Role::Added {
                    let model = stamp.submatrix(rm, rn);
                    if (&d_block - &model).frobenius_norm() > tol * model.frobenius_norm() {
                        return (Classification::Unknown, Vec::new());
                    }
                }
                expected = &expected + &stamp.scale(C64::new(sign, 0.0));
                lines.push(l.id.clone());
            }
            _ => {
                // no line model: pure series branch, the diagonal must balance the pair
                if !row_sums_balance(delta, y0, &b.row_bus, &b.col_bus, observable, tol) {
                    return (Classification::Unknown, Vec::new());
                }
            }
        }
        roles.push(role);
    }

    // buses touched by matched pairs
    let mut endpoints: Vec<&str> = Vec::new();
    for b in &off {
        endpoints.push(&b.row_bus);
        endpoints.push(&b.col_bus);
    }
    if blocks
        .iter()
        .filter(|b| b.is_diagonal())
        .any(|b| !endpoints.contains(&b.row_bus.as_str()))
    {
        return (Classification::Unknown, Vec::new());
    }
    if !lines.is_empty() && !diagonals_match(delta, &expected, y0, &endpoints, observable, tol) {
        return (Classification::Unknown, Vec::new());
    }

    let class = match roles.as_slice() {
        [Role::Removed] => Classification::LineTrip,
        [Role::Added] => Classification::LineClose,
        [Role::Removed, Role::Added] | [Role::Added, Role::Removed] => Classification::SwitchPair,
        _ => Classification::Unknown,
    };
    if class == Classification::Unknown {
        lines.clear();
    }
    (class, lines)
}

fn diagonals_match(
    delta: &ComplexMatrix,
    expected: &ComplexMatrix,
    y0: &BusAdmittance,
    endpoints: &[&str],
    observable: &[bool],
    tol: f64,
) -> bool {
    for bus in endpoints {
        let Some(idx) = y0.bus_indices(bus) else {
            return false;
        };
        let (mut err, mut scale) = (0.0, 0.0);
        for &r in idx {
            for &c in idx {
                if !observable[r] && !observable[c] {
                    continue;
                }
                err += (delta[(r, c)] - expected[(r, c)]).norm_sqr();
                scale += expected[(r, c)].norm_sqr();
            }
        }
        if libm::sqrt(err) > tol * libm::sqrt(scale).max(f64::MIN_POSITIVE) && err > 0.0 {
            return false;
        }
    }
    true
}

fn row_sums_balance(
    delta: &ComplexMatrix,
    y0: &BusAdmittance,
    m: &str,
    n: &str,
    observable: &[bool],
    tol: f64,
) -> bool {
    let (Some(im), Some(inn)) = (y0.bus_indices(m), y0.bus_indices(n)) else {
        return false;
    };
    let cols: Vec<usize> = im.iter().chain(inn).copied().collect();
    for &r in &cols {
        if !observable[r] {
            continue;
        }
        let mut sum = C64::new(0.0, 0.0);
        let mut scale = 0.0f64;
        for &c in &cols {
            sum += delta[(r, c)];
            scale = scale.max(delta[(r, c)].norm());
        }
        if sum.norm() > tol * scale {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{apply_line_close, apply_line_trip, apply_shunt_change, assemble_ybus, fixtures, PhaseSet};
    use crate::numerics::test_util::rng;
    use alloc::vec;
    use rand::Rng;

    fn settings() -> LocalizeSettings {
        LocalizeSettings::default()
    }

    /// Voltages with independent per-node variation around nominal.
    fn window_for(y: &ComplexMatrix, dead: &[usize], k: usize, seed: u64) -> PhasorWindow {
        let d = y.rows();
        let mut g = rng(seed);
        let mut v = ComplexMatrix::zeros(d, k);
        for s in 0..k {
            for r in 0..d {
                if dead.contains(&r) {
                    continue;
                }
                let mag = 2400.0 * (1.0 + g.random_range(-0.02..0.02));
                let ang = -((r % 3) as f64) * 2.094 + g.random_range(-0.01..0.01);
                v[(r, s)] = C64::from_polar(mag, ang);
            }
        }
        let i = y * &v;
        PhasorWindow { v, i, first_slot: 1 }
    }

    #[test]
    fn no_change_gives_zero_delta() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let w = window_for(&y0.y, &[], 10, 1);
        let rec = localize(&y0, &w, 1, Some(&f), &settings()).unwrap();
        assert!(rec.delta.max_abs() <= 1e-9 * y0.y.max_abs(), "{}", rec.delta.max_abs());
        assert_eq!(rec.classification, Classification::Unknown);
    }

    #[test]
    fn leaf_trip_is_localized_and_classified() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let tripped = apply_line_trip(&f, "684-652").unwrap();
        let y1 = assemble_ybus(&tripped).unwrap();
        let dead = y0.bus_indices("652").unwrap().to_vec();
        let w = window_for(&y1.y, &dead, 10, 2);
        let rec = localize(&y0, &w, 50, Some(&f), &settings()).unwrap();
        let top_off = rec.changed_blocks.iter().find(|b| !b.is_diagonal()).unwrap();
        assert!(top_off.same_pair("684", "652"));
        assert_eq!(rec.classification, Classification::LineTrip);
        assert!(rec.constraint_residual < 1e-7, "{}", rec.constraint_residual);
    }

    #[test]
    fn interior_trip_recovers_delta() {
        // 632–645 trip leaves 645 and 646 dead; the observable part of ΔY
        // is the 632 side of the line
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let y1 = assemble_ybus(&apply_line_trip(&f, "632-645").unwrap()).unwrap();
        let mut dead = y0.bus_indices("645").unwrap().to_vec();
        dead.extend(y0.bus_indices("646").unwrap());
        let w = window_for(&y1.y, &dead, 10, 3);
        let rec = localize(&y0, &w, 50, Some(&f), &settings()).unwrap();
        let truth = &y1.y - &y0.y;
        let mut err = 0.0;
        let mut scale = 0.0;
        for r in 0..38 {
            for c in 0..38 {
                if dead.contains(&r) && dead.contains(&c) {
                    continue;
                }
                err += (rec.delta[(r, c)] - truth[(r, c)]).norm_sqr();
                scale += truth[(r, c)].norm_sqr();
            }
        }
        assert!(libm::sqrt(err / scale) < 1e-6, "{}", libm::sqrt(err / scale));
        assert_eq!(rec.classification, Classification::LineTrip);
        assert_eq!(rec.lines, vec![String::from("632-645")]);
    }

    #[test]
    fn classify_rules() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let all = vec![true; 38];
        let s = settings();

        let y1 = assemble_ybus(&apply_line_trip(&f, "684-611").unwrap()).unwrap();
        let trip = &y1.y - &y0.y;
        assert_eq!(classify(&trip, &y0, Some(&f), &all, &s).0, Classification::LineTrip);
        assert_eq!(classify(&trip, &y0, None, &all, &s).0, Classification::LineTrip);

        // closing the same line starting from the tripped network
        let y0t = y1.clone();
        let ft = apply_line_trip(&f, "684-611").unwrap();
        let close = &y0.y - &y1.y;
        assert_eq!(classify(&close, &y0t, Some(&ft), &all, &s).0, Classification::LineClose);
        let _ = apply_line_close(&ft, "684-611").unwrap();

        let mut shunt = ComplexMatrix::zeros(38, 38);
        let i = y0.bus_indices("675").unwrap()[0];
        shunt[(i, i)] = C64::new(0.0, 0.05);
        assert_eq!(classify(&shunt, &y0, Some(&f), &all, &s).0, Classification::ShuntChange);
        let g = apply_shunt_change(&f, "675", PhaseSet::parse("a").unwrap(), ComplexMatrix::from_real(1, 1, &[0.1]).unwrap()).unwrap();
        let dy = &assemble_ybus(&g).unwrap().y - &y0.y;
        assert_eq!(classify(&dy, &y0, Some(&f), &all, &s).0, Classification::ShuntChange);

        let mut gg = rng(5);
        let dense = ComplexMatrix::from_fn(38, 38, |_, _| C64::new(gg.random_range(-1.0..1.0), 0.0));
        let dense = &dense + &dense.transpose();
        assert_eq!(classify(&dense, &y0, Some(&f), &all, &s).0, Classification::Unknown);
    }

    #[test]
    fn switch_pair_is_recognized() {
        // open 632-645 and close a tie 646-684 that is out of service
        let mut f = fixtures::ieee13_like();
        let mut tie = f.line("632-645").unwrap().clone();
        tie.id = "646-684".into();
        tie.from_bus = "646".into();
        tie.to_bus = "684".into();
        tie.phases = PhaseSet::parse("c").unwrap();
        tie.z = ComplexMatrix::from_fn(1, 1, |_, _| C64::new(0.3, 0.4));
        tie.ys = ComplexMatrix::zeros(1, 1);
        tie.in_service = false;
        f.lines.push(tie);
        let y0 = assemble_ybus(&f).unwrap();
        let g = apply_line_close(&apply_line_trip(&f, "632-645").unwrap(), "646-684").unwrap();
        let y1 = assemble_ybus(&g).unwrap();
        let dy = &y1.y - &y0.y;
        let (class, lines) = classify(&dy, &y0, Some(&f), &vec![true; 38], &settings());
        assert_eq!(class, Classification::SwitchPair);
        assert_eq!(lines.len(), 2);
        let w = window_for(&y1.y, &[], 12, 9);
        let rec = localize(&y0, &w, 10, Some(&f), &settings()).unwrap();
        let pairs: Vec<_> = rec.changed_blocks.iter().filter(|b| !b.is_diagonal()).collect();
        assert!(pairs.iter().any(|b| b.same_pair("632", "645")));
        assert!(pairs.iter().any(|b| b.same_pair("646", "684")));
        assert_eq!(rec.classification, Classification::SwitchPair);
    }

    #[test]
    fn overlapping_window_is_rejected_by_holdout() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let y1 = assemble_ybus(&apply_line_trip(&f, "632-645").unwrap()).unwrap();
        let mut dead = y0.bus_indices("645").unwrap().to_vec();
        dead.extend(y0.bus_indices("646").unwrap());
        let pre = window_for(&y0.y, &[], 3, 4);
        let post = window_for(&y1.y, &dead, 12, 5);
        let mut v = ComplexMatrix::zeros(38, 10);
        let mut i = ComplexMatrix::zeros(38, 10);
        for s in 0..10 {
            let (src, col) = if s < 3 { (&pre, s) } else { (&post, s - 3) };
            v.set_column(s, &src.v.column(col));
            i.set_column(s, &src.i.column(col));
        }
        let mixed = PhasorWindow { v, i, first_slot: 48 };
        let holdout: Vec<PhasorSnapshot> = (7..12)
            .map(|s| PhasorSnapshot { slot: 60 + s as u64, v: post.v.column(s), i: post.i.column(s) })
            .collect();
        let outcome = localize(&y0, &mixed, 50, Some(&f), &settings())
            .and_then(|rec| verify_holdout(&(&y0.y + &rec.delta), &holdout, 1e-3, 50));
        assert!(matches!(outcome, Err(EventError::Rejected { .. }) | Err(EventError::Infeasible { .. })));
    }

    #[test]
    fn short_window_is_rejected() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let w = window_for(&y0.y, &[], 5, 1);
        assert!(matches!(
            localize(&y0, &w, 1, None, &settings()),
            Err(EventError::InsufficientSamples { .. })
        ));
    }
}
