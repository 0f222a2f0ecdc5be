use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::noise::NoiseInjector;
use super::{NoiseModel, PhasorSnapshot, PowerFlowSettings, PowerFlowSolver, SimError};
use crate::feeder::{
    apply_line_close, apply_line_trip, apply_shunt_change, BusAdmittance, FeederModel, PhaseSet,
};
use crate::numerics::{ComplexMatrix, C64};

/// Admittance-changing network edit.
#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    LineTrip { line: String },
    LineClose { line: String },
    /// Adds `delta` (siemens) as a shunt on `bus`.
    ShuntChange {
        bus: String,
        phases: PhaseSet,
        delta: ComplexMatrix,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioEvent {
    /// Applied before this slot is solved.
    pub slot: u64,
    pub kind: EventKind,
}

impl ScenarioEvent {
    pub fn apply(&self, f: &FeederModel) -> Result<FeederModel, crate::feeder::FeederError> {
        match &self.kind {
            EventKind::LineTrip { line } => apply_line_trip(f, line),
            EventKind::LineClose { line } => apply_line_close(f, line),
            EventKind::ShuntChange { bus, phases, delta } => {
                apply_shunt_change(f, bus, *phases, delta.clone())
            }
        }
    }
}

/// Balanced positive-sequence phase voltages of magnitude `base`.
pub fn balanced_slack(base: f64) -> [C64; 3] {
    let deg = core::f64::consts::PI / 180.0;
    [
        C64::from_polar(base, 0.0),
        C64::from_polar(base, -120.0 * deg),
        C64::from_polar(base, 120.0 * deg),
    ]
}

/// Constant substation voltage.
#[derive(Clone, Debug)]
pub struct FixedSlack(pub [C64; 3]);

impl Iterator for FixedSlack {
    type Item = [C64; 3];
    fn next(&mut self) -> Option<[C64; 3]> {
        Some(self.0)
    }
}

/// Substation voltage that wanders uniformly around a nominal value, drawn
/// independently per slot and phase.
#[derive(Clone, Debug)]
pub struct RandomSlack {
    nominal: [C64; 3],
    magnitude_spread: f64,
    angle_spread: f64,
    rng: ChaCha8Rng,
}

impl RandomSlack {
    pub fn new(nominal: [C64; 3], magnitude_spread: f64, angle_spread: f64, seed: u64) -> Self {
        Self {
            nominal,
            magnitude_spread,
            angle_spread,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Iterator for RandomSlack {
    type Item = [C64; 3];
    fn next(&mut self) -> Option<[C64; 3]> {
        let mut out = self.nominal;
        for z in out.iter_mut() {
            let m = 1.0 + self.magnitude_spread * self.rng.random_range(-1.0..=1.0);
            let a = self.angle_spread * self.rng.random_range(-1.0..=1.0);
            *z = *z * C64::from_polar(m, a);
        }
        Some(out)
    }
}

/// Independent uniform random loads on the given nodes, with random power
/// factor; a rich excitation for identification tests.
#[derive(Clone, Debug)]
pub struct RandomDemand {
    dim: usize,
    nodes: Vec<usize>,
    p_range: (f64, f64),
    pf_range: (f64, f64),
    rng: ChaCha8Rng,
}

impl RandomDemand {
    pub fn new(dim: usize, nodes: Vec<usize>, p_range: (f64, f64), pf_range: (f64, f64), seed: u64) -> Self {
        Self {
            dim,
            nodes,
            p_range,
            pf_range,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Iterator for RandomDemand {
    type Item = Vec<C64>;
    fn next(&mut self) -> Option<Vec<C64>> {
        let mut s = vec![C64::new(0.0, 0.0); self.dim];
        for &n in &self.nodes {
            let p = self.rng.random_range(self.p_range.0..=self.p_range.1);
            let pf: f64 = self.rng.random_range(self.pf_range.0..=self.pf_range.1);
            s[n] = C64::new(p, p * libm::sqrt(1.0 - pf * pf) / pf);
        }
        Some(s)
    }
}

/// Produces `K` snapshots for slots `1..=K`, editing the feeder at event slots
/// and warm-starting each solve from the previous slot.
pub struct ScenarioRunner<D, S> {
    feeder: FeederModel,
    solver: PowerFlowSolver,
    settings: PowerFlowSettings,
    demand: D,
    slack: S,
    noise: NoiseInjector,
    events: Vec<ScenarioEvent>,
    next_event: usize,
    slot: u64,
    total: u64,
    warm: Option<Vec<C64>>,
    last_demand: Vec<C64>,
    last_clean: Option<PhasorSnapshot>,
    failed: bool,
}

impl<D, S> ScenarioRunner<D, S>
where
    D: Iterator<Item = Vec<C64>>,
    S: Iterator<Item = [C64; 3]>,
{
    pub fn new(
        feeder: FeederModel,
        demand: D,
        slack: S,
        noise: NoiseModel,
        events: Vec<ScenarioEvent>,
        k: u64,
        settings: PowerFlowSettings,
    ) -> Result<Self, SimError> {
        if events.iter().any(|e| e.slot == 0) || events.windows(2).any(|w| w[0].slot > w[1].slot) {
            return Err(SimError::BadEvents);
        }
        let solver = PowerFlowSolver::new(&feeder, settings.clone()).map_err(|source| {
            SimError::PowerFlow { slot: 0, source }
        })?;
        Ok(Self {
            feeder,
            solver,
            settings,
            demand,
            slack,
            noise: NoiseInjector::new(noise)?,
            events,
            next_event: 0,
            slot: 0,
            total: k,
            warm: None,
            last_demand: Vec::new(),
            last_clean: None,
            failed: false,
        })
    }

    /// Feeder state used for the most recent slot.
    pub fn feeder(&self) -> &FeederModel {
        &self.feeder
    }

    /// True admittance of the most recent slot.
    pub fn ybus(&self) -> &BusAdmittance {
        self.solver.ybus()
    }

    pub fn solver(&self) -> &PowerFlowSolver {
        &self.solver
    }

    /// Demand (VA) of the most recent slot.
    pub fn last_demand(&self) -> &[C64] {
        &self.last_demand
    }

    /// Most recent snapshot before noise was added.
    pub fn last_clean(&self) -> Option<&PhasorSnapshot> {
        self.last_clean.as_ref()
    }

    fn step(&mut self) -> Result<PhasorSnapshot, SimError> {
        let slot = self.slot;
        let mut edited = false;
        while let Some(e) = self.events.get(self.next_event) {
            if e.slot != slot {
                break;
            }
            self.feeder = e
                .apply(&self.feeder)
                .map_err(|source| SimError::Event { slot, source })?;
            self.next_event += 1;
            edited = true;
        }
        if edited {
            self.solver = PowerFlowSolver::new(&self.feeder, self.settings.clone())
                .map_err(|source| SimError::PowerFlow { slot, source })?;
        }
        let s = self
            .demand
            .next()
            .ok_or_else(|| SimError::Invalid("demand source exhausted".into()))?;
        let vs = self
            .slack
            .next()
            .ok_or_else(|| SimError::Invalid("slack source exhausted".into()))?;
        let snap = self
            .solver
            .solve(slot, &s, vs, self.warm.as_deref())
            .map_err(|source| SimError::PowerFlow { slot, source })?;
        self.warm = Some(snap.v.clone());
        self.last_demand = s;
        let mut out = snap.clone();
        self.last_clean = Some(snap);
        self.noise.apply(&mut out, &self.solver.ybus().y);
        Ok(out)
    }
}

impl<D, S> Iterator for ScenarioRunner<D, S>
where
    D: Iterator<Item = Vec<C64>>,
    S: Iterator<Item = [C64; 3]>,
{
    type Item = Result<PhasorSnapshot, SimError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.slot >= self.total {
            return None;
        }
        self.slot += 1;
        let r = self.step();
        self.failed = r.is_err();
        Some(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{assemble_ybus, fixtures};
    use crate::loads::{ieee13_allocation, DemandStream, HouseholdModel};
    use crate::simulator::solve_powerflow;

    fn fixture_runner(
        events: Vec<ScenarioEvent>,
        k: u64,
        noise: NoiseModel,
    ) -> ScenarioRunner<DemandStream, FixedSlack> {
        let f = fixtures::ieee13_like();
        let demand = DemandStream::new(&f, &ieee13_allocation(), &HouseholdModel::residential(7), 0.95)
            .unwrap();
        let slack = FixedSlack(balanced_slack(f.base_voltage));
        ScenarioRunner::new(f, demand, slack, noise, events, k, PowerFlowSettings::default()).unwrap()
    }

    #[test]
    fn noiseless_snapshots_obey_ohms_law() {
        let mut r = fixture_runner(vec![], 30, NoiseModel::noiseless());
        let mut n = 0;
        while let Some(s) = r.next() {
            let s = s.unwrap();
            let iy = r.ybus().y.mul_vec(&s.v).unwrap();
            let base_i = fixtures::BASE_POWER / fixtures::BASE_VOLTAGE;
            assert!(iy.iter().zip(&s.i).all(|(a, b)| (a - b).norm() / base_i <= 1e-8));
            n += 1;
        }
        assert_eq!(n, 30);
    }

    #[test]
    fn trip_reassembles_y_at_event_slot() {
        let trip = ScenarioEvent {
            slot: 50,
            kind: EventKind::LineTrip { line: fixtures::TRIP_LINE.into() },
        };
        let mut r = fixture_runner(vec![trip], 60, NoiseModel::noiseless());
        let f0 = fixtures::ieee13_like();
        let f1 = apply_line_trip(&f0, fixtures::TRIP_LINE).unwrap();
        let y0 = assemble_ybus(&f0).unwrap();
        let y1 = assemble_ybus(&f1).unwrap();
        let slack = balanced_slack(f0.base_voltage);
        for slot in 1..=60u64 {
            let s = r.next().unwrap().unwrap();
            assert_eq!(s.slot, slot);
            let (fref, yref) = if slot < 50 { (&f0, &y0) } else { (&f1, &y1) };
            assert_eq!(r.ybus(), yref);
            // independent static solve of the same demand on the matching topology
            let stat = solve_powerflow(fref, r.last_demand(), slack).unwrap();
            let dv = s.v.iter().zip(&stat.v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(dv / f0.base_voltage < 1e-7, "slot {slot}: {dv}");
        }
    }

    #[test]
    fn streams_are_deterministic() {
        let a: Vec<_> = fixture_runner(vec![], 20, NoiseModel::polar(1e-3, 1e-3, 5))
            .map(Result::unwrap)
            .collect();
        let b: Vec<_> = fixture_runner(vec![], 20, NoiseModel::polar(1e-3, 1e-3, 5))
            .map(Result::unwrap)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn unsorted_events_are_rejected() {
        let f = fixtures::ieee13_like();
        let ev = |slot| ScenarioEvent {
            slot,
            kind: EventKind::LineTrip { line: "684-652".into() },
        };
        let mk = |events| {
            ScenarioRunner::new(
                f.clone(),
                core::iter::repeat(vec![C64::new(0.0, 0.0); 38]),
                FixedSlack(balanced_slack(f.base_voltage)),
                NoiseModel::noiseless(),
                events,
                10,
                PowerFlowSettings::default(),
            )
            .err()
        };
        assert_eq!(mk(vec![ev(5), ev(3)]), Some(SimError::BadEvents));
        assert_eq!(mk(vec![ev(0)]), Some(SimError::BadEvents));
    }

    #[test]
    fn failed_event_reports_slot() {
        let ev = ScenarioEvent {
            slot: 3,
            kind: EventKind::LineClose { line: "684-652".into() },
        };
        let r = fixture_runner(vec![ev], 10, NoiseModel::noiseless());
        let results: Vec<_> = r.collect();
        assert_eq!(results.len(), 3);
        assert!(matches!(results[2], Err(SimError::Event { slot: 3, .. })));
    }
}
