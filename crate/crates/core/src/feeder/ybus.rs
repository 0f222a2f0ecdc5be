use alloc::string::String;
use alloc::vec::Vec;

use super::{FeederError, FeederModel, LineSegment, Phase};
use crate::numerics::{inverse, ComplexMatrix, NumericsError};

/// One entry of the global node/phase ordering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePhase {
    pub bus_id: String,
    pub phase: Phase,
    pub index: usize,
}

/// `D×D` bus admittance matrix (siemens) with its node/phase index map.
#[derive(Clone, Debug, PartialEq)]
pub struct BusAdmittance {
    pub y: ComplexMatrix,
    nodes: Vec<NodePhase>,
    buses: Vec<(String, Vec<usize>)>,
}

/// A `(bus, bus)` block and its Frobenius magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRef {
    pub row_bus: String,
    pub col_bus: String,
    pub magnitude: f64,
}

impl BlockRef {
    pub fn is_diagonal(&self) -> bool {
        self.row_bus == self.col_bus
    }

    /// Same block regardless of orientation.
    pub fn same_pair(&self, a: &str, b: &str) -> bool {
        (self.row_bus == a && self.col_bus == b) || (self.row_bus == b && self.col_bus == a)
    }
}

impl BusAdmittance {
    pub fn from_parts(y: ComplexMatrix, nodes: Vec<NodePhase>) -> Result<Self, FeederError> {
        if y.rows() != nodes.len() || y.cols() != nodes.len() {
            return Err(FeederError::Numerics(NumericsError::InvalidArgument(
                "admittance size does not match node list",
            )));
        }
        let mut buses: Vec<(String, Vec<usize>)> = Vec::new();
        for n in &nodes {
            match buses.iter_mut().find(|(b, _)| *b == n.bus_id) {
                Some((_, idx)) => idx.push(n.index),
                None => buses.push((n.bus_id.clone(), alloc::vec![n.index])),
            }
        }
        Ok(Self { y, nodes, buses })
    }

    /// Same index map, different matrix.
    pub fn with_matrix(&self, y: ComplexMatrix) -> Self {
        assert_eq!(y.shape(), self.y.shape());
        Self {
            y,
            nodes: self.nodes.clone(),
            buses: self.buses.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodePhase] {
        &self.nodes
    }

    pub fn bus_ids(&self) -> impl Iterator<Item = &str> {
        self.buses.iter().map(|(b, _)| b.as_str())
    }

    pub fn bus_indices(&self, bus: &str) -> Option<&[usize]> {
        self.buses
            .iter()
            .find(|(b, _)| b == bus)
            .map(|(_, v)| v.as_slice())
    }

    /// Row and column index sets of block `(m, n)`.
    pub fn block_index(&self, m: &str, n: &str) -> Option<(&[usize], &[usize])> {
        Some((self.bus_indices(m)?, self.bus_indices(n)?))
    }

    pub fn block(&self, m: &str, n: &str) -> Option<ComplexMatrix> {
        let (r, c) = self.block_index(m, n)?;
        Some(self.y.submatrix(r, c))
    }

    /// Frobenius magnitudes of all bus pairs `m ≤ n` (in bus order) of
    /// `delta`, which must share this index map. An off-diagonal pair counts
    /// both blocks `(m,n)` and `(n,m)`. Sorted descending, ties in bus order.
    pub fn block_magnitudes(&self, delta: &ComplexMatrix) -> Vec<BlockRef> {
        let mut out = Vec::new();
        for (i, (bm, im)) in self.buses.iter().enumerate() {
            for (j, (bn, inn)) in self.buses.iter().enumerate().skip(i) {
                let mut s = 0.0;
                for &r in im {
                    for &c in inn {
                        s += delta[(r, c)].norm_sqr();
                        if j != i {
                            s += delta[(c, r)].norm_sqr();
                        }
                    }
                }
                out.push(BlockRef {
                    row_bus: bm.clone(),
                    col_bus: bn.clone(),
                    magnitude: libm::sqrt(s),
                });
            }
        }
        out.sort_by(|a, b| b.magnitude.partial_cmp(&a.magnitude).unwrap_or(core::cmp::Ordering::Equal));
        out
    }
}

/// Global indices of a line's phases on both ends.
pub(crate) fn line_indices(
    f: &FeederModel,
    l: &LineSegment,
) -> Result<(Vec<usize>, Vec<usize>), FeederError> {
    let mut a = Vec::with_capacity(l.phases.len());
    let mut b = Vec::with_capacity(l.phases.len());
    for p in l.phases.iter() {
        a.push(f.node_index(&l.from_bus, p).ok_or_else(|| FeederError::BadLine {
            line: l.id.clone(),
            reason: "phase missing on from bus",
        })?);
        b.push(f.node_index(&l.to_bus, p).ok_or_else(|| FeederError::BadLine {
            line: l.id.clone(),
            reason: "phase missing on to bus",
        })?);
    }
    Ok((a, b))
}

/// `Z⁻¹` of a line, with the line named on failure.
pub(crate) fn series_admittance(l: &LineSegment) -> Result<ComplexMatrix, FeederError> {
    let scale = l.z.max_abs();
    if scale == 0.0 {
        return Err(FeederError::SingularImpedance(l.id.clone()));
    }
    let zi = inverse(&l.z).map_err(|_| FeederError::SingularImpedance(l.id.clone()))?;
    // symmetric by construction up to rounding; enforce exactly
    Ok(ComplexMatrix::from_fn(zi.rows(), zi.cols(), |i, j| {
        (zi[(i, j)] + zi[(j, i)]) * 0.5
    }))
}

/// `D×D` contribution of a single line (its π-model stamp), whether or not
/// it is in service.
pub fn line_contribution(f: &FeederModel, line_id: &str) -> Result<ComplexMatrix, FeederError> {
    let l = f
        .line(line_id)
        .ok_or_else(|| FeederError::UnknownLine(line_id.into()))?;
    let d = f.node_count();
    let mut y = ComplexMatrix::zeros(d, d);
    stamp_line(f, l, &mut y, 1.0)?;
    Ok(y)
}

/// Adds the π-model stamp of one line into `y`, scaled by `sign`.
pub(crate) fn stamp_line(
    f: &FeederModel,
    l: &LineSegment,
    y: &mut ComplexMatrix,
    sign: f64,
) -> Result<(), FeederError> {
    let (a, b) = line_indices(f, l)?;
    let zi = series_admittance(l)?;
    let n = a.len();
    for r in 0..n {
        for c in 0..n {
            let series = zi[(r, c)] * sign;
            let half = l.ys[(r, c)] * (0.5 * sign);
            y[(a[r], a[c])] += series + half;
            y[(b[r], b[c])] += series + half;
            y[(a[r], b[c])] -= series;
            y[(b[r], a[c])] -= series;
        }
    }
    Ok(())
}

/// Assembles the block bus admittance matrix: off-diagonal block `(m,n)` is
/// `−Z_mn⁻¹`, diagonal block `n` is `Σ (½Ys + Z⁻¹)` over incident in-service
/// lines plus any shunts on `n`.
pub fn assemble_ybus(f: &FeederModel) -> Result<BusAdmittance, FeederError> {
    f.validate()?;
    let nodes = f.node_phases();
    let d = nodes.len();
    let mut y = ComplexMatrix::zeros(d, d);
    for l in f.lines.iter().filter(|l| l.in_service) {
        stamp_line(f, l, &mut y, 1.0)?;
    }
    for s in &f.shunts {
        let idx: Vec<usize> = s
            .phases
            .iter()
            .map(|p| f.node_index(&s.bus, p).expect("validated"))
            .collect();
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                y[(i, j)] += s.y[(r, c)];
            }
        }
    }
    BusAdmittance::from_parts(y, nodes)
}
