use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{PhasorSnapshot, SimError};
use crate::numerics::{ComplexMatrix, C64};

/// Polar Gaussian measurement noise: relative magnitude error and absolute
/// angle error (radians), independently per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub magnitude_std: f64,
    pub angle_std: f64,
    /// Current-channel noise, applied after currents are recomputed from the
    /// noisy voltages through the true admittance.
    pub current_magnitude_std: f64,
    pub current_angle_std: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            magnitude_std: 0.0,
            angle_std: 0.0,
            current_magnitude_std: 0.0,
            current_angle_std: 0.0,
            seed: 0,
        }
    }

    /// Same polar noise on voltage and current channels.
    pub fn polar(magnitude_std: f64, angle_std: f64, seed: u64) -> Self {
        Self {
            magnitude_std,
            angle_std,
            current_magnitude_std: magnitude_std,
            current_angle_std: angle_std,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.magnitude_std,
            self.angle_std,
            self.current_magnitude_std,
            self.current_angle_std,
        ];
        if all.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SimError::BadNoise("standard deviations must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.magnitude_std == 0.0
            && self.angle_std == 0.0
            && self.current_magnitude_std == 0.0
            && self.current_angle_std == 0.0
    }
}

/// Stateful noise source; one per stream.
#[derive(Clone, Debug)]
pub(crate) struct NoiseInjector {
    model: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoiseInjector {
    pub fn new(model: NoiseModel) -> Result<Self, SimError> {
        model.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Ok(Self { model, rng })
    }

    fn perturb(&mut self, x: &mut [C64], mag: f64, ang: f64) {
        if mag == 0.0 && ang == 0.0 {
            return;
        }
        for z in x.iter_mut() {
            let a: f64 = StandardNormal.sample(&mut self.rng);
            let b: f64 = StandardNormal.sample(&mut self.rng);
            *z = *z * (1.0 + mag * a) * C64::from_polar(1.0, ang * b);
        }
    }

    /// Perturbs voltages, recomputes currents as `Y_true·V_noisy`, then
    /// perturbs currents.
    pub fn apply(&mut self, snap: &mut PhasorSnapshot, y_true: &ComplexMatrix) {
        if self.model.is_noiseless() {
            return;
        }
        let (m, a) = (self.model.magnitude_std, self.model.angle_std);
        self.perturb(&mut snap.v, m, a);
        if m != 0.0 || a != 0.0 {
            snap.i = y_true.mul_vec(&snap.v).expect("dimension");
        }
        let (m, a) = (self.model.current_magnitude_std, self.model.current_angle_std);
        self.perturb(&mut snap.i, m, a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn noiseless_is_identity() {
        let mut inj = NoiseInjector::new(NoiseModel::noiseless()).unwrap();
        let v = vec![C64::new(1.0, 2.0); 4];
        let mut s = PhasorSnapshot { slot: 1, v: v.clone(), i: v.clone() };
        inj.apply(&mut s, &ComplexMatrix::identity(4));
        assert_eq!(s.v, v);
        assert_eq!(s.i, v);
    }

    #[test]
    fn magnitude_noise_has_configured_spread() {
        let mut inj = NoiseInjector::new(NoiseModel::polar(0.001, 0.0, 3)).unwrap();
        let y = ComplexMatrix::identity(1);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        let n = 10_000;
        for k in 0..n {
            let mut s = PhasorSnapshot {
                slot: k,
                v: vec![C64::new(0.0, 2.0)],
                i: vec![C64::new(0.0, 0.0)],
            };
            inj.apply(&mut s, &y);
            let rel = s.v[0].norm() / 2.0 - 1.0;
            acc += rel;
            acc2 += rel * rel;
        }
        let mean = acc / n as f64;
        let std = libm::sqrt(acc2 / n as f64 - mean * mean);
        assert!((std - 0.001).abs() <= 0.1 * 0.001, "{std}");
    }

    #[test]
    fn negative_std_is_rejected() {
        assert!(NoiseInjector::new(NoiseModel::polar(-1.0, 0.0, 0)).is_err());
    }
}
