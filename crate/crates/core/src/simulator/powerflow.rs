use alloc::vec;
use alloc::vec::Vec;

use super::{PhasorSnapshot, PowerFlowError};
use crate::feeder::{assemble_ybus, BusAdmittance, FeederModel, Phase};
use crate::numerics::{ComplexMatrix, Lu, C64};

#[derive(Clone, Debug)]
pub struct PowerFlowSettings {
    /// Stop when every nodal power mismatch is below this, per unit.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Any energized |V| below this (per unit) is treated as collapse.
    pub min_voltage: f64,
}

impl Default for PowerFlowSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            min_voltage: 0.5,
        }
    }
}

/// Fixed-point current-injection solver for one network state. The
/// slack-reduced admittance is factored once and reused across slots.
#[derive(Clone, Debug)]
pub struct PowerFlowSolver {
    ybus: BusAdmittance,
    slack: [usize; 3],
    /// Energized non-slack nodes.
    free: Vec<usize>,
    energized: Vec<bool>,
    lu: Option<Lu>,
    /// `Y[free, slack]`.
    y_fs: ComplexMatrix,
    base_voltage: f64,
    base_power: f64,
    settings: PowerFlowSettings,
}

impl PowerFlowSolver {
    pub fn new(f: &FeederModel, settings: PowerFlowSettings) -> Result<Self, PowerFlowError> {
        let ybus = assemble_ybus(f)?;
        let slack = Phase::ALL.map(|p| f.node_index(&f.slack_bus, p).expect("validated slack"));
        let energized = f.energized_nodes();
        let free: Vec<usize> = (0..ybus.dim())
            .filter(|i| energized[*i] && !slack.contains(i))
            .collect();
        let lu = if free.is_empty() {
            None
        } else {
            Some(Lu::factor(&ybus.y.submatrix(&free, &free))?)
        };
        let y_fs = ybus.y.submatrix(&free, &slack);
        Ok(Self {
            ybus,
            slack,
            free,
            energized,
            lu,
            y_fs,
            base_voltage: f.base_voltage,
            base_power: f.base_power,
            settings,
        })
    }

    pub fn ybus(&self) -> &BusAdmittance {
        &self.ybus
    }

    pub fn energized(&self) -> &[bool] {
        &self.energized
    }

    pub fn dim(&self) -> usize {
        self.ybus.dim()
    }

    /// Solves one slot. `s_load` is consumption in VA per node/phase (entries
    /// on the slack and on de-energized nodes are ignored); `slack` holds the
    /// substation phase voltages in volts. `warm` seeds the iteration.
    pub fn solve(
        &self,
        slot: u64,
        s_load: &[C64],
        slack: [C64; 3],
        warm: Option<&[C64]>,
    ) -> Result<PhasorSnapshot, PowerFlowError> {
        let d = self.dim();
        if s_load.len() != d {
            return Err(PowerFlowError::Dimension {
                got: s_load.len(),
                expected: d,
            });
        }
        let mut v = vec![C64::new(0.0, 0.0); d];
        for (k, &s) in self.slack.iter().enumerate() {
            v[s] = slack[k];
        }
        match warm {
            Some(w) if w.len() == d => {
                for &n in &self.free {
                    v[n] = w[n];
                }
            }
            _ => {
                // flat start: each node takes its phase's slack voltage
                let nodes = self.ybus.nodes();
                for &n in &self.free {
                    v[n] = slack[nodes[n].phase.index()];
                }
            }
        }
        let Some(lu) = &self.lu else {
            return Ok(self.finish(slot, v));
        };
        let slack_v: Vec<C64> = self.slack.iter().map(|&s| v[s]).collect();
        let y_fs_vs = self.y_fs.mul_vec(&slack_v)?;
        let inv_base = 1.0 / self.base_power;

        let mut mismatch = f64::INFINITY;
        for _ in 0..self.settings.max_iterations {
            // mismatch of the current iterate
            mismatch = self.max_mismatch(&v, s_load) * inv_base;
            if mismatch < self.settings.tolerance {
                self.check_voltage(&v)?;
                return Ok(self.finish(slot, v));
            }
            let rhs: Vec<C64> = self
                .free
                .iter()
                .zip(&y_fs_vs)
                .map(|(&n, ys)| {
                    let i_load = if v[n].norm() > 0.0 {
                        (-s_load[n] / v[n]).conj()
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    i_load - ys
                })
                .collect();
            let vn = lu.solve(&rhs);
            for (k, &n) in self.free.iter().enumerate() {
                v[n] = vn[k];
            }
            self.check_voltage(&v)?;
        }
        mismatch = mismatch.min(self.max_mismatch(&v, s_load) * inv_base);
        if mismatch < self.settings.tolerance {
            return Ok(self.finish(slot, v));
        }
        Err(PowerFlowError::NoConvergence {
            max_mismatch: mismatch,
        })
    }

    /// Largest `|V·conj(I) + S_load|` over energized non-slack nodes, VA.
    pub fn max_mismatch(&self, v: &[C64], s_load: &[C64]) -> f64 {
        self.free
            .iter()
            .map(|&n| {
                let i: C64 = self
                    .ybus
                    .y
                    .row(n)
                    .iter()
                    .zip(v)
                    .map(|(y, x)| y * x)
                    .sum();
                (v[n] * i.conj() + s_load[n]).norm()
            })
            .fold(0.0, f64::max)
    }

    fn check_voltage(&self, v: &[C64]) -> Result<(), PowerFlowError> {
        for &n in &self.free {
            let m = v[n].norm() / self.base_voltage;
            if !(m >= self.settings.min_voltage) {
                return Err(PowerFlowError::Divergence { node: n, magnitude: m });
            }
        }
        Ok(())
    }

    fn finish(&self, slot: u64, v: Vec<C64>) -> PhasorSnapshot {
        let i = self.ybus.y.mul_vec(&v).expect("dimension checked");
        PhasorSnapshot { slot, v, i }
    }
}

/// One-shot power flow with default settings.
pub fn solve_powerflow(
    f: &FeederModel,
    s_load: &[C64],
    slack: [C64; 3],
) -> Result<PhasorSnapshot, PowerFlowError> {
    PowerFlowSolver::new(f, PowerFlowSettings::default())?.solve(0, s_load, slack, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{fixtures, Bus, LineSegment, PhaseSet};
    use crate::loads::{ieee13_allocation, HouseholdModel};
    use crate::simulator::balanced_slack;

    fn two_bus() -> FeederModel {
        FeederModel {
            buses: vec![
                Bus { id: "s".into(), phases: PhaseSet::ABC },
                Bus { id: "n".into(), phases: PhaseSet::parse("a").unwrap() },
            ],
            lines: vec![LineSegment::new(
                "s",
                "n",
                PhaseSet::parse("a").unwrap(),
                ComplexMatrix::diagonal(&[C64::new(0.01, 0.02)]),
                ComplexMatrix::zeros(1, 1),
            )],
            shunts: vec![],
            slack_bus: "s".into(),
            base_voltage: 240.0,
            base_power: 1e4,
        }
    }

    #[test]
    fn no_load_gives_flat_profile() {
        let f = fixtures::ieee13_like();
        // drop line charging and capacitors so the no-load profile is exactly flat
        let mut g = f.clone();
        g.shunts.clear();
        for l in g.lines.iter_mut() {
            l.ys = ComplexMatrix::zeros(l.ys.rows(), l.ys.cols());
        }
        let slack = balanced_slack(g.base_voltage);
        let snap = solve_powerflow(&g, &vec![C64::new(0.0, 0.0); 38], slack).unwrap();
        for n in g.node_phases() {
            assert!((snap.v[n.index] - slack[n.phase.index()]).norm() < 1e-9);
        }
        assert!(snap.i.iter().all(|z| z.norm() < 1e-6));
    }

    #[test]
    fn two_bus_matches_scalar_fixed_point() {
        let f = two_bus();
        let s = C64::new(1000.0, 1000.0 * libm::tan(libm::acos(0.95)));
        let mut load = vec![C64::new(0.0, 0.0); 4];
        load[3] = s;
        let slack = [C64::new(240.0, 0.0), C64::new(-120.0, -207.846), C64::new(-120.0, 207.846)];
        let snap = solve_powerflow(&f, &load, slack).unwrap();
        // independent oracle: V = Vs − z·conj(S/V), iterated to convergence
        let z = C64::new(0.01, 0.02);
        let mut v = C64::new(240.0, 0.0);
        for _ in 0..1000 {
            v = C64::new(240.0, 0.0) - z * (s / v).conj();
        }
        assert!((snap.v[3] - v).norm() / 240.0 <= 1e-9, "{} vs {}", snap.v[3], v);
        assert!((snap.i[3] + (s / v).conj()).norm() < 1e-6);
    }

    #[test]
    fn fixture_at_mean_load_is_within_band() {
        let f = fixtures::ieee13_like();
        let alloc = ieee13_allocation();
        let mean = HouseholdModel::residential(0).mean_power();
        let q = libm::tan(libm::acos(0.95));
        let mut load = vec![C64::new(0.0, 0.0); 38];
        for (j, n) in alloc.node_counts(&f).unwrap() {
            load[j] = C64::new(mean * n as f64, mean * n as f64 * q);
        }
        let solver = PowerFlowSolver::new(&f, PowerFlowSettings::default()).unwrap();
        let snap = solver.solve(1, &load, balanced_slack(f.base_voltage), None).unwrap();
        for z in &snap.v {
            let pu = z.norm() / f.base_voltage;
            assert!((0.90..=1.05).contains(&pu), "{pu}");
        }
        assert!(solver.max_mismatch(&snap.v, &load) / f.base_power < 1e-8);
        let ohm = solver.ybus().y.mul_vec(&snap.v).unwrap();
        let base_i = f.base_power / f.base_voltage;
        for (a, b) in ohm.iter().zip(&snap.i) {
            assert!((a - b).norm() / base_i <= 1e-8);
        }
    }

    #[test]
    fn islanded_nodes_are_dead() {
        let f = crate::feeder::apply_line_trip(&fixtures::ieee13_like(), fixtures::TRIP_LINE).unwrap();
        let mut load = vec![C64::new(0.0, 0.0); 38];
        let k611 = f.node_index("611", Phase::C).unwrap();
        load[k611] = C64::new(5e4, 1e4);
        let snap = solve_powerflow(&f, &load, balanced_slack(f.base_voltage)).unwrap();
        assert_eq!(snap.v[k611], C64::new(0.0, 0.0));
        assert_eq!(snap.i[k611], C64::new(0.0, 0.0));
    }

    #[test]
    fn overload_is_reported() {
        let f = two_bus();
        let mut load = vec![C64::new(0.0, 0.0); 4];
        load[3] = C64::new(5e6, 0.0);
        let err = solve_powerflow(&f, &load, balanced_slack(240.0)).unwrap_err();
        assert!(matches!(
            err,
            PowerFlowError::Divergence { .. } | PowerFlowError::NoConvergence { .. }
        ));
    }
}
