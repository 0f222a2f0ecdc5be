//! Phasor stream as CSV: a `#` header carrying the config hash, then one
//! row per slot and node with columns `slot,node_phase,V_re,V_im,I_re,I_im`.

use std::fmt::Write as _;

use gridsleuth_core::numerics::C64;
use gridsleuth_core::simulator::PhasorSnapshot;

use super::replay::StreamFile;
use super::ParseError;

pub const COLUMNS: &str = "slot,node_phase,V_re,V_im,I_re,I_im";

pub fn write_stream_csv(s: &StreamFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# gridsleuth phasor stream v1");
    let _ = writeln!(out, "# config_hash={}", s.hash_hex());
    let _ = writeln!(out, "# flags={}", s.flags);
    let _ = writeln!(out, "{COLUMNS}");
    for snap in &s.snapshots {
        for (n, label) in s.labels.iter().enumerate() {
            let (v, i) = (snap.v[n], snap.i[n]);
            let _ = writeln!(out, "{},{label},{:e},{:e},{:e},{:e}", snap.slot, v.re, v.im, i.re, i.im);
        }
    }
    out
}

pub fn read_stream_csv(text: &str) -> Result<StreamFile, ParseError> {
    let mut hash = None;
    let mut flags = 0u16;
    let mut header_seen = false;
    let mut labels: Vec<String> = Vec::new();
    let mut labels_done = false;
    let mut snapshots: Vec<PhasorSnapshot> = Vec::new();
    let mut node = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end();
        let fail = |column: usize, reason: String| ParseError { line: lineno, column, reason };
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(h) = meta.strip_prefix("config_hash=") {
                let bytes = hex::decode(h).ok().and_then(|b| <[u8; 32]>::try_from(b).ok());
                hash = Some(bytes.ok_or_else(|| fail(1, format!("invalid config hash `{h}`")))?);
            } else if let Some(f) = meta.strip_prefix("flags=") {
                flags = f.parse().map_err(|_| fail(1, format!("invalid flags `{f}`")))?;
            }
            continue;
        }
        if !header_seen {
            if line != COLUMNS {
                return Err(fail(1, format!("expected column header `{COLUMNS}`")));
            }
            header_seen = true;
            continue;
        }
        let mut fields = Vec::with_capacity(6);
        let mut col = 1;
        for f in line.split(',') {
            fields.push((f, col));
            col += f.chars().count() + 1;
        }
        if fields.len() != 6 {
            return Err(fail(1, format!("expected 6 fields, found {}", fields.len())));
        }
        let slot: u64 = fields[0].0.parse().map_err(|_| fail(1, format!("invalid slot `{}`", fields[0].0)))?;
        let mut x = [0.0f64; 4];
        for (k, e) in x.iter_mut().enumerate() {
            let (f, c) = fields[k + 2];
            *e = f.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| fail(c, format!("invalid number `{f}`")))?;
        }
        let label = fields[1].0;
        let new_slot = snapshots.last().map(|s| s.slot != slot).unwrap_or(true);
        if new_slot {
            if let Some(prev) = snapshots.last() {
                if !labels_done {
                    labels_done = true;
                }
                if node != labels.len() {
                    return Err(fail(1, format!("slot {} has {node} nodes, expected {}", prev.slot, labels.len())));
                }
                if slot <= prev.slot {
                    return Err(fail(1, format!("slot {slot} does not increase")));
                }
            }
            snapshots.push(PhasorSnapshot { slot, v: Vec::new(), i: Vec::new() });
            node = 0;
        }
        if labels_done {
            if labels.get(node).map(String::as_str) != Some(label) {
                return Err(fail(fields[1].1, format!("unexpected node `{label}` in slot {slot}")));
            }
        } else {
            if labels.iter().any(|l| l == label) {
                return Err(fail(fields[1].1, format!("duplicate node `{label}` in slot {slot}")));
            }
            labels.push(label.to_string());
        }
        let s = snapshots.last_mut().expect("pushed above");
        s.v.push(C64::new(x[0], x[1]));
        s.i.push(C64::new(x[2], x[3]));
        node += 1;
    }
    let end = text.lines().count().max(1);
    if snapshots.len() > 1 && node != labels.len() {
        return Err(ParseError { line: end, column: 1, reason: format!("last slot has {node} nodes, expected {}", labels.len()) });
    }
    let config_hash = hash.ok_or_else(|| ParseError { line: 1, column: 1, reason: "missing `# config_hash=` header".into() })?;
    Ok(StreamFile { config_hash, flags, labels, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::replay::FLAG_NOISELESS;

    fn sample() -> StreamFile {
        StreamFile {
            config_hash: [0xab; 32],
            flags: FLAG_NOISELESS,
            labels: vec!["650.a".into(), "611.c".into()],
            snapshots: (1..=4)
                .map(|k| PhasorSnapshot {
                    slot: k,
                    v: vec![C64::new(2401.78, 0.1 * k as f64), C64::new(1.0 / 3.0, -0.0)],
                    i: vec![C64::new(-1.5e-300, 2.0), C64::new(0.0, 7.0)],
                })
                .collect(),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = sample();
        let text = write_stream_csv(&s);
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4 * 2);
        assert_eq!(read_stream_csv(&text).unwrap(), s);
    }

    #[test]
    fn malformed_rows_are_located() {
        let text = write_stream_csv(&sample());
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let mut f: Vec<&str> = lines[5].split(',').collect();
        f[2] = "zz";
        lines[5] = f.join(",");
        let bad = lines.join("\n");
        let e = read_stream_csv(&bad).unwrap_err();
        assert_eq!(e.line, 6);
        assert!(e.reason.contains("`zz`"), "{e}");
        let missing = text.lines().filter(|l| !l.contains("1,611.c")).collect::<Vec<_>>().join("\n");
        assert!(read_stream_csv(&missing).is_err());
        assert!(read_stream_csv(&text.replace("# config_hash", "# other")).is_err());
    }
}
