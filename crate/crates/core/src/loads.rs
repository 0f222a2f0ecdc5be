//! Synthetic household demand and its aggregation onto node/phase pairs.
//!
//! Each household is a discrete-time Markov chain over a few power levels,
//! advanced once per slot. Household `i` on node/phase `j` draws from its own
//! ChaCha8 stream seeded by [`household_seed`]`(master, j, i)`, so node
//! demand is a plain sum over independent, individually reproducible chains.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::feeder::{FeederModel, Phase};
use crate::numerics::C64;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("invalid household model: {0}")]
    InvalidModel(&'static str),
    #[error("allocation references missing node {bus}.{phase}")]
    MissingNode { bus: String, phase: Phase },
    #[error("excluded bus {0} carries households")]
    ExcludedBusLoaded(String),
    #[error("duplicate allocation entry {bus}.{phase}")]
    DuplicateEntry { bus: String, phase: Phase },
    #[error("power factor must lie in (0, 1]")]
    BadPowerFactor,
    #[error("slot count must be at least 1")]
    NoSlots,
}

/// Per-slot Markov chain over real-power levels (watts).
#[derive(Clone, Debug, PartialEq)]
pub struct HouseholdModel {
    pub levels: Vec<f64>,
    /// Row-stochastic per-slot transition matrix.
    pub transitions: Vec<Vec<f64>>,
    pub seed: u64,
}

impl HouseholdModel {
    /// Idle 150 W, active 800 W, peak 2500 W.
    pub fn residential(seed: u64) -> Self {
        Self {
            levels: vec![150.0, 800.0, 2500.0],
            transitions: vec![
                vec![0.99, 0.009, 0.001],
                vec![0.01, 0.985, 0.005],
                vec![0.01, 0.03, 0.96],
            ],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        let n = self.levels.len();
        if n == 0 {
            return Err(LoadError::InvalidModel("no states"));
        }
        if self.levels.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(LoadError::InvalidModel("power levels must be finite and nonnegative"));
        }
        if self.transitions.len() != n || self.transitions.iter().any(|r| r.len() != n) {
            return Err(LoadError::InvalidModel("transition matrix must be square over the states"));
        }
        for r in &self.transitions {
            if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(LoadError::InvalidModel("transition probabilities must lie in [0, 1]"));
            }
            if (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(LoadError::InvalidModel("transition rows must sum to 1"));
            }
        }
        Ok(())
    }

    /// Stationary distribution: solves `πᵀ(P − I) = 0`, `Σπ = 1` by Gaussian
    /// elimination with partial pivoting.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.levels.len();
        // row i of the system: Σ_j π_j (P_ji − δ_ji) = 0, last row replaced by Σπ = 1
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| self.transitions[j][i] - if i == j { 1.0 } else { 0.0 })
                    .collect();
                row.push(0.0);
                row
            })
            .collect();
        a[n - 1] = vec![1.0; n + 1];
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            let piv = a[k][k];
            if piv == 0.0 {
                continue;
            }
            for i in 0..n {
                if i != k {
                    let f = a[i][k] / piv;
                    if f != 0.0 {
                        for j in k..=n {
                            a[i][j] -= f * a[k][j];
                        }
                    }
                }
            }
        }
        let pi: Vec<f64> = (0..n)
            .map(|i| if a[i][i] != 0.0 { (a[i][n] / a[i][i]).max(0.0) } else { 0.0 })
            .collect();
        let s: f64 = pi.iter().sum();
        pi.iter().map(|p| p / s).collect()
    }

    pub fn mean_power(&self) -> f64 {
        self.stationary().iter().zip(&self.levels).map(|(p, w)| p * w).sum()
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of household `household` on node/phase `node`:
/// `mix(mix(mix(master) ⊕ node) ⊕ household)` with the SplitMix64 finalizer
/// applied after adding the golden-ratio increment at each stage.
pub fn household_seed(master: u64, node: usize, household: usize) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let a = mix64(master.wrapping_add(GOLDEN));
    let b = mix64((a ^ node as u64).wrapping_add(GOLDEN));
    mix64((b ^ household as u64).wrapping_add(GOLDEN))
}

/// Validated model with precomputed cumulative distributions.
#[derive(Clone, Debug)]
struct Prepared {
    levels: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl Prepared {
    fn new(m: &HouseholdModel) -> Result<Self, LoadError> {
        m.validate()?;
        Ok(Self {
            levels: m.levels.clone(),
            cumulative: m.transitions.iter().map(|r| cumsum(r)).collect(),
            initial: cumsum(&m.stationary()),
        })
    }
}

/// One household's demand as an endless stream, one value per slot.
#[derive(Clone, Debug)]
pub struct HouseholdChain {
    model: alloc::sync::Arc<Prepared>,
    state: usize,
    rng: ChaCha8Rng,
}

impl HouseholdChain {
    /// Starts from a state drawn from the stationary distribution.
    pub fn new(m: &HouseholdModel, seed: u64) -> Result<Self, LoadError> {
        Ok(Self::from_prepared(alloc::sync::Arc::new(Prepared::new(m)?), seed))
    }

    fn from_prepared(model: alloc::sync::Arc<Prepared>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = draw(&model.initial, rng.random::<f64>());
        Self { model, state, rng }
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl Iterator for HouseholdChain {
    type Item = f64;

    /// Demand for the current slot, then advance.
    fn next(&mut self) -> Option<f64> {
        let w = self.model.levels[self.state];
        let u = self.rng.random::<f64>();
        self.state = draw(&self.model.cumulative[self.state], u);
        Some(w)
    }
}

fn cumsum(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// `K` slots of a single household seeded with `m.seed`.
pub fn sample_household(m: &HouseholdModel, k: usize) -> Result<Vec<f64>, LoadError> {
    if k == 0 {
        return Err(LoadError::NoSlots);
    }
    Ok(HouseholdChain::new(m, m.seed)?.take(k).collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationEntry {
    pub bus: String,
    pub phase: Phase,
    pub households: usize,
}

/// Household counts per node/phase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadAllocation {
    pub entries: Vec<AllocationEntry>,
}

impl LoadAllocation {
    pub fn total_households(&self) -> usize {
        self.entries.iter().map(|e| e.households).sum()
    }

    pub fn households_at(&self, bus: &str, phase: Phase) -> usize {
        self.entries
            .iter()
            .filter(|e| e.bus == bus && e.phase == phase)
            .map(|e| e.households)
            .sum()
    }

    /// Checks entries against `f`; buses in `excluded` (the slack always is)
    /// must carry no households.
    pub fn validate(&self, f: &FeederModel, excluded: &[&str]) -> Result<(), LoadError> {
        let mut seen: Vec<(String, Phase)> = Vec::new();
        for e in &self.entries {
            if f.node_index(&e.bus, e.phase).is_none() {
                return Err(LoadError::MissingNode {
                    bus: e.bus.clone(),
                    phase: e.phase,
                });
            }
            if e.households > 0 && (e.bus == f.slack_bus || excluded.contains(&e.bus.as_str())) {
                return Err(LoadError::ExcludedBusLoaded(e.bus.clone()));
            }
            if seen.iter().any(|(b, p)| *b == e.bus && *p == e.phase) {
                return Err(LoadError::DuplicateEntry {
                    bus: e.bus.clone(),
                    phase: e.phase,
                });
            }
            seen.push((e.bus.clone(), e.phase));
        }
        Ok(())
    }

    /// `(global node index, household count)` for loaded entries, in node order.
    pub fn node_counts(&self, f: &FeederModel) -> Result<Vec<(usize, usize)>, LoadError> {
        let mut out = Vec::with_capacity(self.entries.len());
        for e in self.entries.iter().filter(|e| e.households > 0) {
            let j = f.node_index(&e.bus, e.phase).ok_or_else(|| LoadError::MissingNode {
                bus: e.bus.clone(),
                phase: e.phase,
            })?;
            out.push((j, e.households));
        }
        out.sort_unstable();
        Ok(out)
    }
}

/// Household allocation of the shipped fixture.
pub fn ieee13_allocation() -> LoadAllocation {
    const ROWS: [(&str, char, usize); 26] = [
        ("632", 'a', 300),
        ("632", 'b', 280),
        ("632", 'c', 250),
        ("671", 'a', 10),
        ("671", 'b', 15),
        ("671", 'c', 25),
        ("680", 'a', 130),
        ("680", 'b', 180),
        ("680", 'c', 200),
        ("633", 'a', 40),
        ("633", 'b', 50),
        ("633", 'c', 60),
        ("634", 'a', 60),
        ("634", 'b', 50),
        ("634", 'c', 40),
        ("675", 'a', 125),
        ("675", 'b', 100),
        ("675", 'c', 75),
        ("645", 'b', 70),
        ("645", 'c', 30),
        ("646", 'b', 190),
        ("646", 'c', 210),
        ("684", 'a', 55),
        ("684", 'c', 45),
        ("652", 'a', 150),
        ("611", 'c', 150),
    ];
    LoadAllocation {
        entries: ROWS
            .iter()
            .map(|&(bus, ph, n)| AllocationEntry {
                bus: bus.to_string(),
                phase: Phase::from_char(ph).unwrap(),
                households: n,
            })
            .collect(),
    }
}

/// Buses of the fixture that never carry load besides the slack.
pub const FIXTURE_UNLOADED_BUSES: [&str; 3] = ["rg60", "670", "692"];

/// Reactive-to-real power ratio `tan(acos(pf))`.
pub fn reactive_ratio(pf: f64) -> Result<f64, LoadError> {
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(LoadError::BadPowerFactor);
    }
    Ok(libm::sqrt(1.0 - pf * pf) / pf)
}

/// Sum of `count` household chains on node `node`, starting at household
/// index `first`.
#[derive(Clone, Debug)]
pub struct NodeDemand {
    chains: Vec<HouseholdChain>,
}

impl NodeDemand {
    pub fn new(
        m: &HouseholdModel,
        node: usize,
        first: usize,
        count: usize,
    ) -> Result<Self, LoadError> {
        let prepared = alloc::sync::Arc::new(Prepared::new(m)?);
        let chains = (first..first + count)
            .map(|i| HouseholdChain::from_prepared(prepared.clone(), household_seed(m.seed, node, i)))
            .collect();
        Ok(Self { chains })
    }
}

impl Iterator for NodeDemand {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        // summed in household order for bit-reproducibility
        let mut s = 0.0;
        for c in self.chains.iter_mut() {
            s += c.next()?;
        }
        Some(s)
    }
}

/// Per-slot complex demand (VA, consumption positive) on every node/phase.
#[derive(Clone, Debug)]
pub struct DemandStream {
    dim: usize,
    nodes: Vec<(usize, NodeDemand)>,
    q_ratio: f64,
}

impl DemandStream {
    pub fn new(
        f: &FeederModel,
        alloc: &LoadAllocation,
        m: &HouseholdModel,
        pf: f64,
    ) -> Result<Self, LoadError> {
        let q_ratio = reactive_ratio(pf)?;
        let nodes = alloc
            .node_counts(f)?
            .into_iter()
            .map(|(j, n)| Ok((j, NodeDemand::new(m, j, 0, n)?)))
            .collect::<Result<_, LoadError>>()?;
        Ok(Self {
            dim: f.node_count(),
            nodes,
            q_ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Iterator for DemandStream {
    type Item = Vec<C64>;

    fn next(&mut self) -> Option<Vec<C64>> {
        let mut s = vec![C64::new(0.0, 0.0); self.dim];
        for (j, d) in self.nodes.iter_mut() {
            let p = d.next()?;
            s[*j] = C64::new(p, p * self.q_ratio);
        }
        Some(s)
    }
}

/// `K` slots of demand for every loaded node/phase.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandSeries {
    /// Global node index of each series, ascending.
    pub nodes: Vec<usize>,
    /// `series[n][k]`: complex power of `nodes[n]` in slot `k`, VA.
    pub series: Vec<Vec<C64>>,
}

impl DemandSeries {
    pub fn slots(&self) -> usize {
        self.series.first().map_or(0, |s| s.len())
    }

    pub fn node(&self, index: usize) -> Option<&[C64]> {
        self.nodes
            .iter()
            .position(|&n| n == index)
            .map(|k| self.series[k].as_slice())
    }
}

/// Demand of every allocated node/phase over `k` slots.
pub fn aggregate(
    f: &FeederModel,
    alloc: &LoadAllocation,
    m: &HouseholdModel,
    pf: f64,
    k: usize,
) -> Result<DemandSeries, LoadError> {
    if k == 0 {
        return Err(LoadError::NoSlots);
    }
    let q_ratio = reactive_ratio(pf)?;
    let counts = alloc.node_counts(f)?;
    let mut nodes = Vec::with_capacity(counts.len());
    let mut series = Vec::with_capacity(counts.len());
    for (j, n) in counts {
        nodes.push(j);
        series.push(
            NodeDemand::new(m, j, 0, n)?
                .take(k)
                .map(|p| C64::new(p, p * q_ratio))
                .collect(),
        );
    }
    Ok(DemandSeries { nodes, series })
}

/// Peak-to-average ratio of a nonnegative series.
pub fn peak_to_average(series: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut peak = f64::NEG_INFINITY;
    for x in series {
        n += 1;
        sum += x;
        peak = peak.max(x);
    }
    if n == 0 || sum == 0.0 {
        return 0.0;
    }
    peak / (sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::fixtures::ieee13_like;

    #[test]
    fn single_state_is_constant() {
        let m = HouseholdModel {
            levels: vec![500.0],
            transitions: vec![vec![1.0]],
            seed: 4,
        };
        assert!(sample_household(&m, 100).unwrap().iter().all(|&w| w == 500.0));
    }

    #[test]
    fn two_state_frequencies_match_stationary() {
        let (p, q) = (0.02, 0.05);
        let m = HouseholdModel {
            levels: vec![200.0, 2000.0],
            transitions: vec![vec![1.0 - p, p], vec![q, 1.0 - q]],
            seed: 17,
        };
        let k = 100_000;
        let xs = sample_household(&m, k).unwrap();
        let high = xs.iter().filter(|&&w| w == 2000.0).count() as f64 / k as f64;
        // analytic stationary probability of the high state and the
        // variance of its time average for a two-state chain
        let pi1 = p / (p + q);
        let lambda = 1.0 - p - q;
        let var = pi1 * (1.0 - pi1) / k as f64 * (1.0 + lambda) / (1.0 - lambda);
        assert!((high - pi1).abs() <= 3.0 * libm::sqrt(var), "{high} vs {pi1}");
        let st = m.stationary();
        assert!((st[1] - pi1).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_series() {
        let m = HouseholdModel::residential(99);
        assert_eq!(sample_household(&m, 500).unwrap(), sample_household(&m, 500).unwrap());
        let other = HouseholdModel::residential(100);
        assert_ne!(sample_household(&m, 500).unwrap(), sample_household(&other, 500).unwrap());
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut m = HouseholdModel::residential(0);
        m.transitions[0][0] = 0.5;
        assert!(m.validate().is_err());
        let mut m = HouseholdModel::residential(0);
        m.levels[1] = -1.0;
        assert!(m.validate().is_err());
        assert_eq!(sample_household(&HouseholdModel::residential(0), 0), Err(LoadError::NoSlots));
    }

    #[test]
    fn table_allocation_counts() {
        let a = ieee13_allocation();
        assert_eq!(a.households_at("632", Phase::A), 300);
        assert_eq!(a.total_households(), 2890);
        let f = ieee13_like();
        a.validate(&f, &FIXTURE_UNLOADED_BUSES).unwrap();
        assert_eq!(a.node_counts(&f).unwrap().len(), 26);
    }

    #[test]
    fn allocation_errors() {
        let f = ieee13_like();
        let mut a = ieee13_allocation();
        a.entries.push(AllocationEntry {
            bus: "611".into(),
            phase: Phase::A,
            households: 1,
        });
        assert!(matches!(a.validate(&f, &[]), Err(LoadError::MissingNode { .. })));
        let mut a = ieee13_allocation();
        a.entries.push(AllocationEntry {
            bus: "692".into(),
            phase: Phase::A,
            households: 3,
        });
        assert!(matches!(
            a.validate(&f, &FIXTURE_UNLOADED_BUSES),
            Err(LoadError::ExcludedBusLoaded(_))
        ));
    }

    #[test]
    fn power_factor_is_exact() {
        let f = ieee13_like();
        let a = ieee13_allocation();
        let m = HouseholdModel::residential(1);
        let d = aggregate(&f, &a, &m, 0.95, 50).unwrap();
        for s in d.series.iter().flatten() {
            let pf = s.re / s.norm();
            assert!((pf - 0.95).abs() < 1e-9);
        }
        let d1 = aggregate(&f, &a, &m, 1.0, 20).unwrap();
        assert!(d1.series.iter().flatten().all(|s| s.im == 0.0));
        assert!(aggregate(&f, &a, &m, 0.0, 20).is_err());
    }

    #[test]
    fn aggregation_is_additive() {
        let m = HouseholdModel::residential(5);
        let whole: Vec<f64> = NodeDemand::new(&m, 7, 0, 30).unwrap().take(300).collect();
        let a: Vec<f64> = NodeDemand::new(&m, 7, 0, 12).unwrap().take(300).collect();
        let b: Vec<f64> = NodeDemand::new(&m, 7, 12, 18).unwrap().take(300).collect();
        for k in 0..300 {
            assert!((whole[k] - (a[k] + b[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn stream_matches_series() {
        let f = ieee13_like();
        let a = ieee13_allocation();
        let m = HouseholdModel::residential(3);
        let series = aggregate(&f, &a, &m, 0.95, 25).unwrap();
        let stream: Vec<Vec<C64>> = DemandStream::new(&f, &a, &m, 0.95).unwrap().take(25).collect();
        for (n, &j) in series.nodes.iter().enumerate() {
            for k in 0..25 {
                assert_eq!(series.series[n][k], stream[k][j]);
            }
        }
        let slack = f.node_index("650", Phase::A).unwrap();
        assert!(stream.iter().all(|s| s[slack] == C64::new(0.0, 0.0)));
    }

    #[test]
    fn household_seeds_are_distinct() {
        let mut seen = alloc::collections::BTreeSet::new();
        for j in 0..40 {
            for i in 0..300 {
                assert!(seen.insert(household_seed(11, j, i)));
            }
        }
    }
}
