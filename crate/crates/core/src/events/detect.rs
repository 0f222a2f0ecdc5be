use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::{EventError, DEFAULT_SAFETY_FACTOR};
use crate::feeder::BusAdmittance;
use crate::numerics::{norm2, ComplexMatrix, C64};
use crate::simulator::PhasorSnapshot;

/// `e(k) = I(k) − Y⁰·V(k)` and its Euclidean norm.
pub fn residual(y0: &ComplexMatrix, snap: &PhasorSnapshot) -> Result<(Vec<C64>, f64), EventError> {
    let d = y0.rows();
    if snap.v.len() != d || snap.i.len() != d {
        return Err(EventError::Dimension {
            expected: d,
            got: snap.v.len().min(snap.i.len()),
        });
    }
    let yv = y0.mul_vec(&snap.v)?;
    let e: Vec<C64> = snap.i.iter().zip(&yv).map(|(a, b)| a - b).collect();
    let n = norm2(&e);
    Ok((e, n))
}

/// `γ = max(q_{1−α}(norms) · safety, floor)`, with `q` the linearly
/// interpolated empirical quantile. `floor` (amperes) keeps `γ` above the
/// numerical resolution when the calibration stream is noiseless.
pub fn calibrate_threshold(
    norms: &[f64],
    alpha: f64,
    safety: f64,
    floor: f64,
) -> Result<f64, EventError> {
    if norms.len() < 1000 {
        return Err(EventError::InsufficientSamples {
            needed: 1000,
            got: norms.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EventError::InvalidArgument("alpha must lie in (0, 1)"));
    }
    if !(safety >= 1.0) || !safety.is_finite() {
        return Err(EventError::InvalidArgument("safety factor must be at least 1"));
    }
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(EventError::InvalidArgument("floor must be finite and nonnegative"));
    }
    if norms.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(EventError::InvalidArgument("residual norms must be finite and nonnegative"));
    }
    let mut s = norms.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let h = (s.len() - 1) as f64 * (1.0 - alpha);
    let lo = h as usize;
    let hi = (lo + 1).min(s.len() - 1);
    let q = s[lo] + (h - lo as f64) * (s[hi] - s[lo]);
    let gamma = (q * safety).max(floor);
    if gamma > 0.0 {
        Ok(gamma)
    } else {
        Err(EventError::InvalidArgument("calibration residuals are all zero and no floor is set"))
    }
}

/// One logged residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSample {
    pub slot: u64,
    pub norm: f64,
    pub alarmed: bool,
}

/// A threshold crossing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alarm {
    pub slot: u64,
    pub norm: f64,
}

/// Detector for a single believed admittance `Y⁰`.
///
/// After an alarm the detector disarms itself; [`DetectorState::rebase`]
/// installs the updated admittance and re-arms it.
#[derive(Clone, Debug)]
pub struct DetectorState {
    y0: BusAdmittance,
    gamma: f64,
    history: VecDeque<ResidualSample>,
    capacity: usize,
    armed: bool,
}

impl DetectorState {
    pub fn new(y0: BusAdmittance, gamma: f64, capacity: usize) -> Result<Self, EventError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(EventError::InvalidArgument("γ must be positive"));
        }
        if capacity == 0 {
            return Err(EventError::InvalidArgument("history capacity must be positive"));
        }
        Ok(Self {
            y0,
            gamma,
            history: VecDeque::with_capacity(capacity),
            capacity,
            armed: true,
        })
    }

    pub fn y0(&self) -> &BusAdmittance {
        &self.y0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    pub fn history(&self) -> impl Iterator<Item = &ResidualSample> {
        self.history.iter()
    }

    /// Norms currently in the ring buffer, oldest first.
    pub fn history_norms(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.norm).collect()
    }

    pub fn residual(&self, snap: &PhasorSnapshot) -> Result<(Vec<C64>, f64), EventError> {
        residual(&self.y0.y, snap)
    }

    /// Logs `‖e(k)‖` and alarms iff it exceeds `γ` while armed.
    pub fn detect(&mut self, snap: &PhasorSnapshot) -> Result<Option<Alarm>, EventError> {
        let (_, norm) = self.residual(snap)?;
        let alarmed = self.armed && norm > self.gamma;
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(ResidualSample {
            slot: snap.slot,
            norm,
            alarmed,
        });
        if alarmed {
            self.armed = false;
            return Ok(Some(Alarm { slot: snap.slot, norm }));
        }
        Ok(None)
    }

    /// Replaces `Y⁰` (same index map) and re-arms.
    pub fn rebase(&mut self, y: ComplexMatrix) -> Result<(), EventError> {
        if y.shape() != self.y0.y.shape() {
            return Err(EventError::Dimension {
                expected: self.y0.dim(),
                got: y.rows(),
            });
        }
        self.y0 = self.y0.with_matrix(y);
        self.history.clear();
        self.armed = true;
        Ok(())
    }

    /// Re-arms without changing `Y⁰`.
    pub fn rearm(&mut self) {
        self.armed = true;
    }
}

/// [`calibrate_threshold`] with the default safety factor and no floor.
pub fn calibrate_default(norms: &[f64], alpha: f64) -> Result<f64, EventError> {
    calibrate_threshold(norms, alpha, DEFAULT_SAFETY_FACTOR, 0.0)
}

/// Residual floor in amperes: `tolerance` per-unit of the base current
/// `base_power / base_voltage`.
pub fn resolution_floor(base_power: f64, base_voltage: f64, tolerance: f64) -> f64 {
    tolerance * base_power / base_voltage
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{apply_line_trip, assemble_ybus, fixtures};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn flat_snapshot(y: &ComplexMatrix, slot: u64) -> PhasorSnapshot {
        let d = y.rows();
        let v: Vec<C64> = (0..d).map(|k| C64::from_polar(2400.0, -(k as f64) * 0.01)).collect();
        let i = y.mul_vec(&v).unwrap();
        PhasorSnapshot { slot, v, i }
    }

    #[test]
    fn matched_model_residual_is_roundoff() {
        let y = assemble_ybus(&fixtures::ieee13_like()).unwrap();
        let s = flat_snapshot(&y.y, 1);
        let (_, n) = residual(&y.y, &s).unwrap();
        assert!(n <= 1e-8 * s.i.iter().map(|z| z.norm()).fold(1.0, f64::max), "{n}");
    }

    #[test]
    fn tripped_line_residual_matches_direct_product() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let y1 = assemble_ybus(&apply_line_trip(&f, "684-611").unwrap()).unwrap();
        let s = flat_snapshot(&y1.y, 1);
        let (_, n) = residual(&y0.y, &s).unwrap();
        // oracle: ‖(Y1 − Y0)·V‖ evaluated separately
        let direct = norm2(&(&y1.y - &y0.y).mul_vec(&s.v).unwrap());
        assert!((n - direct).abs() <= 1e-9 * direct.max(1.0));
        assert!(direct > 1.0);
    }

    #[test]
    fn zero_snapshot_gives_zero_residual() {
        let y = assemble_ybus(&fixtures::ieee13_like()).unwrap();
        let s = PhasorSnapshot {
            slot: 0,
            v: vec![c(0.0, 0.0); 38],
            i: vec![c(0.0, 0.0); 38],
        };
        assert_eq!(residual(&y.y, &s).unwrap().1, 0.0);
        assert!(residual(&y.y, &PhasorSnapshot { slot: 0, v: vec![], i: vec![] }).is_err());
    }

    #[test]
    fn detector_alarms_once_then_disarms() {
        let f = fixtures::ieee13_like();
        let y0 = assemble_ybus(&f).unwrap();
        let y1 = assemble_ybus(&apply_line_trip(&f, "684-611").unwrap()).unwrap();
        let mut d = DetectorState::new(y0.clone(), 1e-3, 16).unwrap();
        for k in 1..50 {
            assert_eq!(d.detect(&flat_snapshot(&y0.y, k)).unwrap(), None);
        }
        let a = d.detect(&flat_snapshot(&y1.y, 50)).unwrap().unwrap();
        assert_eq!(a.slot, 50);
        assert!(!d.is_armed());
        assert_eq!(d.detect(&flat_snapshot(&y1.y, 51)).unwrap(), None);
        assert_eq!(d.history().count(), 16);
        d.rebase(y1.y.clone()).unwrap();
        assert!(d.is_armed());
        assert_eq!(d.detect(&flat_snapshot(&y1.y, 52)).unwrap(), None);
    }

    #[test]
    fn alarms_are_antitone_in_gamma() {
        let mut g = ChaCha8Rng::seed_from_u64(3);
        let y = assemble_ybus(&fixtures::ieee13_like()).unwrap();
        let snaps: Vec<PhasorSnapshot> = (0..200)
            .map(|k| {
                let mut s = flat_snapshot(&y.y, k);
                for z in s.i.iter_mut() {
                    let a: f64 = StandardNormal.sample(&mut g);
                    *z += c(a, 0.0);
                }
                s
            })
            .collect();
        let alarms = |gamma: f64| -> Vec<u64> {
            snaps
                .iter()
                .filter_map(|s| {
                    let mut d = DetectorState::new(y.clone(), gamma, 4).unwrap();
                    d.detect(s).unwrap().map(|a| a.slot)
                })
                .collect()
        };
        let lo = alarms(6.0);
        let hi = alarms(7.0);
        assert!(hi.iter().all(|k| lo.contains(k)));
        assert!(lo.len() >= hi.len());
    }

    #[test]
    fn calibration_cases() {
        assert_eq!(calibrate_default(&[2.0; 1000], 0.01).unwrap(), 3.0);
        assert!(calibrate_default(&[2.0; 999], 0.01).is_err());
        assert!(calibrate_default(&[2.0; 1000], 0.0).is_err());
        assert!(calibrate_default(&[0.0; 1000], 0.01).is_err());
        assert_eq!(calibrate_threshold(&[0.0; 1000], 0.01, 1.5, 1e-5).unwrap(), 1e-5);
        assert_eq!(calibrate_threshold(&[2.0; 1000], 0.01, 1.5, 1e-5).unwrap(), 3.0);
    }

    #[test]
    fn calibration_matches_rayleigh_quantile() {
        // norms of 2-D standard Gaussians are Rayleigh: q_p = sqrt(−2 ln(1−p))
        let mut g = ChaCha8Rng::seed_from_u64(11);
        let norms: Vec<f64> = (0..20000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut g);
                let b: f64 = StandardNormal.sample(&mut g);
                libm::sqrt(a * a + b * b)
            })
            .collect();
        let gamma = calibrate_threshold(&norms, 0.01, 1.0, 0.0).unwrap();
        let analytic = libm::sqrt(-2.0 * libm::log(0.01));
        assert!((gamma / analytic - 1.0).abs() < 0.05, "{gamma} vs {analytic}");
    }
}
