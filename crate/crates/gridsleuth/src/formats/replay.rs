//! Binary replay format (`.gsph`), all integers and floats little-endian.
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `GSPH` |
//! | 4 | 2 | version (`1`) |
//! | 6 | 2 | flags (bit 0: noiseless) |
//! | 8 | 4 | `D`, node/phase count |
//! | 12 | 8 | `K`, record count |
//! | 20 | 32 | SHA-256 config hash |
//! | 52 | … | `D` labels, each a `u8` length and UTF-8 bytes |
//! | … | `8 + 32·D` each | `K` records: slot `u64`, then `V_re V_im I_re I_im` `f64` per node |

use gridsleuth_core::numerics::C64;
use gridsleuth_core::simulator::PhasorSnapshot;

pub const MAGIC: [u8; 4] = *b"GSPH";
pub const VERSION: u16 = 1;
pub const FLAG_NOISELESS: u16 = 1;

/// A recorded phasor stream with its provenance header.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFile {
    pub config_hash: [u8; 32],
    pub flags: u16,
    /// `bus.phase` label per node, in index order.
    pub labels: Vec<String>,
    pub snapshots: Vec<PhasorSnapshot>,
}

impl StreamFile {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.config_hash)
    }
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("not a replay file (bad magic)")]
    BadMagic,
    #[error("unsupported replay version {0}")]
    Version(u16),
    #[error("truncated at byte offset {offset}: expected {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("invalid label at byte offset {offset}")]
    BadLabel { offset: usize },
    #[error("{extra} trailing bytes after the last record at byte offset {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("snapshot {slot} has {got} nodes, header says {expected}")]
    Dimension { slot: u64, expected: usize, got: usize },
}

pub fn encode(s: &StreamFile) -> Result<Vec<u8>, ReplayError> {
    let d = s.dim();
    let mut out = Vec::with_capacity(52 + 16 * d + s.snapshots.len() * (8 + 32 * d));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&s.flags.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(s.snapshots.len() as u64).to_le_bytes());
    out.extend_from_slice(&s.config_hash);
    for l in &s.labels {
        let b = l.as_bytes();
        let n = u8::try_from(b.len()).map_err(|_| ReplayError::BadLabel { offset: out.len() })?;
        out.push(n);
        out.extend_from_slice(b);
    }
    for snap in &s.snapshots {
        if snap.v.len() != d || snap.i.len() != d {
            return Err(ReplayError::Dimension { slot: snap.slot, expected: d, got: snap.v.len() });
        }
        out.extend_from_slice(&snap.slot.to_le_bytes());
        for (v, i) in snap.v.iter().zip(&snap.i) {
            for x in [v.re, v.im, i.re, i.im] {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ReplayError> {
        if self.buf.len() - self.pos < n {
            return Err(ReplayError::Truncated { offset: self.buf.len(), what });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], ReplayError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn decode(buf: &[u8]) -> Result<StreamFile, ReplayError> {
    let mut r = Reader { buf, pos: 0 };
    if r.array::<4>("magic").map_err(|_| ReplayError::BadMagic)? != MAGIC {
        return Err(ReplayError::BadMagic);
    }
    let version = u16::from_le_bytes(r.array("version")?);
    if version != VERSION {
        return Err(ReplayError::Version(version));
    }
    let flags = u16::from_le_bytes(r.array("flags")?);
    let d = u32::from_le_bytes(r.array("node count")?) as usize;
    let k = u64::from_le_bytes(r.array("record count")?);
    let config_hash = r.array::<32>("config hash")?;
    let mut labels = Vec::with_capacity(d);
    for _ in 0..d {
        let n = r.array::<1>("label length")?[0] as usize;
        let at = r.pos;
        let b = r.take(n, "label bytes")?;
        labels.push(String::from_utf8(b.to_vec()).map_err(|_| ReplayError::BadLabel { offset: at })?);
    }
    let mut snapshots = Vec::with_capacity(k.min(1 << 20) as usize);
    for _ in 0..k {
        let slot = u64::from_le_bytes(r.array("record slot")?);
        let mut v = Vec::with_capacity(d);
        let mut i = Vec::with_capacity(d);
        for _ in 0..d {
            let mut x = [0.0; 4];
            for e in x.iter_mut() {
                *e = f64::from_le_bytes(r.array("record phasor")?);
            }
            v.push(C64::new(x[0], x[1]));
            i.push(C64::new(x[2], x[3]));
        }
        snapshots.push(PhasorSnapshot { slot, v, i });
    }
    if r.pos != buf.len() {
        return Err(ReplayError::Trailing { offset: r.pos, extra: buf.len() - r.pos });
    }
    Ok(StreamFile { config_hash, flags, labels, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> StreamFile {
        StreamFile {
            config_hash: [7; 32],
            flags: FLAG_NOISELESS,
            labels: vec!["s.a".into(), "load.a".into()],
            snapshots: (1..=3)
                .map(|k| PhasorSnapshot {
                    slot: k,
                    v: vec![C64::new(k as f64, -0.5), C64::new(1.0 / 3.0, 2.0)],
                    i: vec![C64::new(-1e-9, 0.0), C64::new(f64::MIN_POSITIVE, -0.0)],
                })
                .collect(),
        }
    }

    #[test]
    fn layout_and_round_trip() {
        let s = sample();
        let b = encode(&s).unwrap();
        assert_eq!(&b[..4], b"GSPH");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(b.len(), 52 + (1 + 3) + (1 + 6) + 3 * (8 + 64));
        assert_eq!(decode(&b).unwrap(), s);
    }

    #[test]
    fn truncation_reports_offset() {
        let b = encode(&sample()).unwrap();
        for cut in [10, 30, 60, b.len() - 1] {
            match decode(&b[..cut]) {
                Err(ReplayError::Truncated { offset, .. }) => assert_eq!(offset, cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut extra = b.clone();
        extra.push(0);
        assert_eq!(decode(&extra), Err(ReplayError::Trailing { offset: b.len(), extra: 1 }));
    }

    #[test]
    fn header_checks() {
        let mut b = encode(&sample()).unwrap();
        b[4] = 9;
        assert_eq!(decode(&b), Err(ReplayError::Version(9)));
        b[0] = b'X';
        assert_eq!(decode(&b), Err(ReplayError::BadMagic));
        assert_eq!(decode(b"GS"), Err(ReplayError::BadMagic));
    }
}
