use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bus, FeederModel, LineSegment, Phase, PhaseSet};
use crate::numerics::{ComplexMatrix, C64};

/// Bounds for [`random_radial`].
#[derive(Clone, Debug)]
pub struct RandomFeederSpec {
    pub min_buses: usize,
    pub max_buses: usize,
    /// Line length range, miles.
    pub length: (f64, f64),
    pub base_voltage: f64,
    pub base_power: f64,
}

impl Default for RandomFeederSpec {
    fn default() -> Self {
        Self {
            min_buses: 3,
            max_buses: 10,
            length: (0.05, 0.4),
            base_voltage: 2401.78,
            base_power: 1e6,
        }
    }
}

/// Seeded random radial feeder. Bus `b0` is the three-phase slack; every other
/// bus hangs off a random earlier bus and carries a random nonempty subset of
/// its parent's phases.
pub fn random_radial(seed: u64, spec: &RandomFeederSpec) -> FeederModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(spec.min_buses.max(2)..=spec.max_buses.max(spec.min_buses.max(2)));
    let mut buses = Vec::with_capacity(n);
    buses.push(Bus {
        id: "b0".into(),
        phases: PhaseSet::ABC,
    });
    let mut lines = Vec::with_capacity(n - 1);
    for i in 1..n {
        let parent = rng.random_range(0..i);
        let mut avail: Vec<Phase> = buses[parent].phases.iter().collect();
        avail.shuffle(&mut rng);
        // the first line carries every slack phase so no slack node is left unconnected
        let k = if i == 1 { avail.len() } else { rng.random_range(1..=avail.len()) };
        let phases = PhaseSet::from_phases(&avail[..k]);
        let id = format!("b{i}");
        let len = rng.random_range(spec.length.0..spec.length.1);
        let (z, ys) = random_line_params(&mut rng, phases.len(), len);
        lines.push(LineSegment::new(&buses[parent].id.clone(), &id, phases, z, ys));
        buses.push(Bus { id, phases });
    }
    FeederModel {
        buses,
        lines,
        shunts: Vec::new(),
        slack_bus: "b0".into(),
        base_voltage: spec.base_voltage,
        base_power: spec.base_power,
    }
}

fn random_line_params(rng: &mut ChaCha8Rng, n: usize, len: f64) -> (ComplexMatrix, ComplexMatrix) {
    let mut z = ComplexMatrix::zeros(n, n);
    let mut ys = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        z[(i, i)] = C64::new(rng.random_range(0.3..1.3), rng.random_range(0.4..1.3)) * len;
        ys[(i, i)] = C64::new(0.0, rng.random_range(3e-6..6e-6) * len);
        for j in 0..i {
            let zm = C64::new(rng.random_range(0.1..0.3), rng.random_range(0.2..0.4)) * len;
            let bm = C64::new(0.0, -rng.random_range(0.5e-6..1.5e-6) * len);
            z[(i, j)] = zm;
            z[(j, i)] = zm;
            ys[(i, j)] = bm;
            ys[(j, i)] = bm;
        }
    }
    (z, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::assemble_ybus;

    #[test]
    fn generated_feeders_are_valid_and_radial() {
        let spec = RandomFeederSpec::default();
        for seed in 0..50 {
            let f = random_radial(seed, &spec);
            f.validate().unwrap();
            assert!(f.is_radial());
            assert!((3..=10).contains(&f.buses.len()));
            assert!(f.buses.iter().all(|b| (1..=3).contains(&b.phases.len())));
            assert!(f.energized_nodes().iter().all(|&e| e));
            let y = assemble_ybus(&f).unwrap().y;
            assert!((0..y.rows()).all(|i| y[(i, i)].norm() > 0.0), "seed {seed}: unconnected node");
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = RandomFeederSpec::default();
        assert_eq!(random_radial(7, &spec), random_radial(7, &spec));
        assert_ne!(random_radial(7, &spec), random_radial(8, &spec));
    }
}
