
use super::{PhasorSnapshot, SimError};
use crate::numerics::ComplexMatrix;

/// `D×K` voltage and current matrices over consecutive slots.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasorWindow {
    pub v: ComplexMatrix,
    pub i: ComplexMatrix,
    pub first_slot: u64,
}

impl PhasorWindow {
    /// Stacks consecutive snapshots column by column.
    pub fn from_snapshots(snaps: &[PhasorSnapshot]) -> Result<Self, SimError> {
        let Some(first) = snaps.first() else {
            return Err(SimError::InsufficientSnapshots {
                first: 0,
                needed: 1,
                available: 0,
            });
        };
        let d = first.v.len();
        for (k, s) in snaps.iter().enumerate() {
            if s.slot != first.slot + k as u64 {
                return Err(SimError::Gap(s.slot));
            }
            if s.v.len() != d || s.i.len() != d {
                return Err(SimError::Invalid("snapshot dimensions differ".into()));
            }
        }
        let k = snaps.len();
        let v = ComplexMatrix::from_fn(d, k, |r, c| snaps[c].v[r]);
        let i = ComplexMatrix::from_fn(d, k, |r, c| snaps[c].i[r]);
        Ok(Self {
            v,
            i,
            first_slot: first.slot,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.rows()
    }

    pub fn len(&self) -> usize {
        self.v.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.v.cols() == 0
    }

    pub fn slots(&self) -> core::ops::Range<u64> {
        self.first_slot..self.first_slot + self.len() as u64
    }

    /// Rows permuted by `perm` (row `k` of the result is row `perm[k]`).
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self {
            v: self.v.select_rows(perm),
            i: self.i.select_rows(perm),
            first_slot: self.first_slot,
        }
    }
}

/// Columns for slots `first..first+k` taken from `stream`.
pub fn window(stream: &[PhasorSnapshot], first: u64, k: usize) -> Result<PhasorWindow, SimError> {
    let start = stream.iter().position(|s| s.slot == first);
    let available = start.map_or(0, |p| stream.len() - p);
    if k == 0 || available < k {
        return Err(SimError::InsufficientSnapshots {
            first,
            needed: k.max(1),
            available,
        });
    }
    let p = start.unwrap_or(0);
    PhasorWindow::from_snapshots(&stream[p..p + k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use alloc::vec;
    use alloc::vec::Vec;

    fn stream(n: u64) -> Vec<PhasorSnapshot> {
        (1..=n)
            .map(|k| PhasorSnapshot {
                slot: k,
                v: vec![C64::new(k as f64, 0.0), C64::new(0.0, k as f64)],
                i: vec![C64::new(-(k as f64), 1.0), C64::new(2.0, 0.0)],
            })
            .collect()
    }

    #[test]
    fn single_column_window() {
        let s = stream(5);
        let w = window(&s, 3, 1).unwrap();
        assert_eq!(w.v.column(0), s[2].v);
        assert_eq!(w.i.column(0), s[2].i);
        assert_eq!(w.first_slot, 3);
    }

    #[test]
    fn adjacent_windows_are_disjoint() {
        let s = stream(10);
        let a = window(&s, 1, 5).unwrap();
        let b = window(&s, 6, 5).unwrap();
        assert_eq!(a.slots().end, b.slots().start);
        for c in 0..5 {
            for d in 0..5 {
                assert_ne!(a.v.column(c), b.v.column(d));
            }
        }
    }

    #[test]
    fn short_stream_is_an_error() {
        let s = stream(4);
        assert!(matches!(window(&s, 2, 5), Err(SimError::InsufficientSnapshots { .. })));
        assert!(window(&s, 9, 1).is_err());
    }
}
