//! Three-phase radial feeder model and its block bus-admittance matrix.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::numerics::{ComplexMatrix, NumericsError, C64};

mod edit;
pub mod fixtures;
mod generate;
mod ybus;

pub use edit::{apply_line_close, apply_line_trip, apply_shunt_change};
pub use generate::{random_radial, RandomFeederSpec};
pub use ybus::{assemble_ybus, line_contribution, BlockRef, BusAdmittance, NodePhase};

/// Default series impedance used for closed switches, ohm.
pub const SWITCH_IMPEDANCE: C64 = C64::new(1e-4, 1e-4);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Subset of `{a, b, c}`, iterated in `a, b, c` order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn empty() -> Self {
        PhaseSet(0)
    }

    pub fn from_phases(phases: &[Phase]) -> Self {
        PhaseSet(phases.iter().fold(0, |m, p| m | (1 << p.index())))
    }

    /// Parses strings like `"abc"` or `"ac"`; repeated or unknown letters fail.
    pub fn parse(s: &str) -> Option<Self> {
        let mut m = 0u8;
        for ch in s.chars() {
            let p = Phase::from_char(ch)?;
            if m & (1 << p.index()) != 0 {
                return None;
            }
            m |= 1 << p.index();
        }
        (m != 0).then_some(PhaseSet(m))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` within this set's ordering.
    pub fn position(self, p: Phase) -> Option<usize> {
        self.iter().position(|q| q == p)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
}

/// π-model series element. Transformers, regulators and switches are also
/// represented this way.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSegment {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: PhaseSet,
    /// Series phase impedance, ohm.
    pub z: ComplexMatrix,
    /// Total shunt admittance, siemens; half is placed at each end.
    pub ys: ComplexMatrix,
    pub in_service: bool,
}

impl LineSegment {
    /// Line with the conventional `from-to` identifier.
    pub fn new(
        from_bus: &str,
        to_bus: &str,
        phases: PhaseSet,
        z: ComplexMatrix,
        ys: ComplexMatrix,
    ) -> Self {
        Self {
            id: alloc::format!("{from_bus}-{to_bus}"),
            from_bus: from_bus.to_string(),
            to_bus: to_bus.to_string(),
            phases,
            z,
            ys,
            in_service: true,
        }
    }

    pub fn touches(&self, bus: &str) -> bool {
        self.from_bus == bus || self.to_bus == bus
    }
}

/// Lumped shunt admittance (capacitor bank) on a bus.
#[derive(Clone, Debug, PartialEq)]
pub struct Shunt {
    pub bus: String,
    pub phases: PhaseSet,
    /// Siemens, `|phases|×|phases|`.
    pub y: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeederModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSegment>,
    pub shunts: Vec<Shunt>,
    pub slack_bus: String,
    /// Line-to-neutral voltage base, volts.
    pub base_voltage: f64,
    /// Per-phase power base, volt-amperes.
    pub base_power: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FeederError {
    #[error("duplicate bus id `{0}`")]
    DuplicateBus(String),
    #[error("duplicate line id `{0}`")]
    DuplicateLine(String),
    #[error("unknown bus `{0}`")]
    UnknownBus(String),
    #[error("unknown line `{0}`")]
    UnknownLine(String),
    #[error("slack bus `{0}` missing or not three-phase")]
    BadSlack(String),
    #[error("line `{line}`: {reason}")]
    BadLine { line: String, reason: &'static str },
    #[error("line `{0}` has a singular impedance matrix")]
    SingularImpedance(String),
    #[error("shunt on bus `{bus}`: {reason}")]
    BadShunt { bus: String, reason: &'static str },
    #[error("line `{0}` is already out of service")]
    AlreadyTripped(String),
    #[error("line `{0}` is already in service")]
    AlreadyClosed(String),
    #[error("invalid base quantities")]
    BadBase,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl FeederModel {
    /// Checks the structural invariants. Connectivity is not required here so
    /// that edited (islanded) models stay representable; see [`Self::is_connected`].
    pub fn validate(&self) -> Result<(), FeederError> {
        if !(self.base_voltage > 0.0 && self.base_power > 0.0) {
            return Err(FeederError::BadBase);
        }
        let mut seen = BTreeMap::new();
        for b in &self.buses {
            if b.phases.is_empty() || seen.insert(b.id.as_str(), b.phases).is_some() {
                return Err(FeederError::DuplicateBus(b.id.clone()));
            }
        }
        match seen.get(self.slack_bus.as_str()) {
            Some(p) if *p == PhaseSet::ABC => {}
            _ => return Err(FeederError::BadSlack(self.slack_bus.clone())),
        }
        let mut line_ids = BTreeMap::new();
        for l in &self.lines {
            if line_ids.insert(l.id.as_str(), ()).is_some() {
                return Err(FeederError::DuplicateLine(l.id.clone()));
            }
            let bad = |reason| FeederError::BadLine {
                line: l.id.clone(),
                reason,
            };
            let pf = *seen
                .get(l.from_bus.as_str())
                .ok_or_else(|| FeederError::UnknownBus(l.from_bus.clone()))?;
            let pt = *seen
                .get(l.to_bus.as_str())
                .ok_or_else(|| FeederError::UnknownBus(l.to_bus.clone()))?;
            if l.from_bus == l.to_bus {
                return Err(bad("endpoints coincide"));
            }
            if l.phases.is_empty() {
                return Err(bad("no phases"));
            }
            if !l.phases.is_subset_of(pf) || !l.phases.is_subset_of(pt) {
                return Err(bad("phases not present on both endpoint buses"));
            }
            let n = l.phases.len();
            if l.z.shape() != (n, n) || l.ys.shape() != (n, n) {
                return Err(bad("matrix size does not match phase count"));
            }
            if !l.z.is_symmetric(1e-12 * l.z.max_abs().max(1.0)) {
                return Err(bad("impedance matrix not symmetric"));
            }
            if !l.ys.is_symmetric(1e-12 * l.ys.max_abs().max(1.0)) {
                return Err(bad("shunt matrix not symmetric"));
            }
        }
        for s in &self.shunts {
            let bad = |reason| FeederError::BadShunt {
                bus: s.bus.clone(),
                reason,
            };
            let pb = *seen
                .get(s.bus.as_str())
                .ok_or_else(|| FeederError::UnknownBus(s.bus.clone()))?;
            if s.phases.is_empty() || !s.phases.is_subset_of(pb) {
                return Err(bad("phases not present on bus"));
            }
            let n = s.phases.len();
            if s.y.shape() != (n, n) {
                return Err(bad("matrix size does not match phase count"));
            }
            if !s.y.is_symmetric(1e-12 * s.y.max_abs().max(1.0)) {
                return Err(bad("admittance matrix not symmetric"));
            }
        }
        Ok(())
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_position(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line(&self, id: &str) -> Option<&LineSegment> {
        self.lines.iter().find(|l| l.id == id)
    }

    /// Line joining two buses, in either orientation.
    pub fn line_between(&self, a: &str, b: &str) -> Option<&LineSegment> {
        self.lines
            .iter()
            .find(|l| (l.from_bus == a && l.to_bus == b) || (l.from_bus == b && l.to_bus == a))
    }

    /// Number of node/phase pairs.
    pub fn node_count(&self) -> usize {
        self.buses.iter().map(|b| b.phases.len()).sum()
    }

    /// Global ordering: buses in declaration order, phases `a, b, c` within.
    pub fn node_phases(&self) -> Vec<NodePhase> {
        let mut out = Vec::with_capacity(self.node_count());
        for b in &self.buses {
            for p in b.phases.iter() {
                out.push(NodePhase {
                    bus_id: b.id.clone(),
                    phase: p,
                    index: out.len(),
                });
            }
        }
        out
    }

    pub fn node_index(&self, bus: &str, phase: Phase) -> Option<usize> {
        let mut idx = 0;
        for b in &self.buses {
            if b.id == bus {
                return b.phases.position(phase).map(|k| idx + k);
            }
            idx += b.phases.len();
        }
        None
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.buses.len()];
        for l in self.lines.iter().filter(|l| l.in_service) {
            if let (Some(i), Some(j)) = (self.bus_position(&l.from_bus), self.bus_position(&l.to_bus)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        adj
    }

    /// Every bus reachable from the slack over in-service lines.
    pub fn is_connected(&self) -> bool {
        let Some(s) = self.bus_position(&self.slack_bus) else {
            return false;
        };
        let adj = self.adjacency();
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&x| x)
    }

    /// Connected with exactly `|buses| − 1` in-service lines.
    pub fn is_radial(&self) -> bool {
        self.is_connected() && self.lines.iter().filter(|l| l.in_service).count() + 1 == self.buses.len()
    }

    /// Node/phases reachable from the slack through in-service lines that
    /// carry the same phase.
    pub fn energized_nodes(&self) -> Vec<bool> {
        let d = self.node_count();
        let mut on = vec![false; d];
        let mut stack = Vec::new();
        for p in Phase::ALL {
            if let Some(i) = self.node_index(&self.slack_bus, p) {
                on[i] = true;
                stack.push((self.slack_bus.as_str(), p));
            }
        }
        while let Some((bus, p)) = stack.pop() {
            for l in self.lines.iter().filter(|l| l.in_service && l.phases.contains(p)) {
                let other = if l.from_bus == bus {
                    &l.to_bus
                } else if l.to_bus == bus {
                    &l.from_bus
                } else {
                    continue;
                };
                if let Some(j) = self.node_index(other, p) {
                    if !on[j] {
                        on[j] = true;
                        stack.push((other.as_str(), p));
                    }
                }
            }
        }
        on
    }
}

/// Builds a symmetric matrix from its upper triangle given row by row
/// (`n(n+1)/2` entries).
pub fn symmetric_from_upper(n: usize, upper: &[C64]) -> ComplexMatrix {
    assert_eq!(upper.len(), n * (n + 1) / 2, "upper triangle length");
    let mut m = ComplexMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = upper[k];
            m[(j, i)] = upper[k];
            k += 1;
        }
    }
    m
}
