//! Line-oriented feeder description.
//!
//! ```text
//! # two-bus example
//! BASE voltage=2401.78 power=1e6
//! SLACK s
//!
//! [BUS]
//! s abc
//! load a
//!
//! [LINE]
//! line s-load s load a in
//!   z  1e-2+2e-2j
//!   ys 0e0+0e0j
//!
//! [SHUNT]
//! shunt load a
//!   y 0e0+1e-4j
//! ```
//!
//! Matrix rows list either the upper triangle row by row (`n(n+1)/2`
//! entries) or all `n²` entries row-major. The full grammar is in
//! `docs/feeder-format.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use gridsleuth_core::feeder::{Bus, FeederError, FeederModel, LineSegment, PhaseSet, Shunt};
use gridsleuth_core::numerics::ComplexMatrix;

use super::{format_complex, parse_complex, strip_comment, tokens, ParseError, Token};

#[derive(Debug, thiserror::Error)]
pub enum FeederFileError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("invalid feeder: {0}")]
    Model(#[from] FeederError),
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Bus,
    Line,
    Shunt,
}

/// Record waiting for its matrix rows.
enum Pending {
    Line {
        line: LineSegment,
        at: usize,
        z: Option<ComplexMatrix>,
        ys: Option<ComplexMatrix>,
    },
    Shunt {
        shunt: Shunt,
        at: usize,
        y: Option<ComplexMatrix>,
    },
}

struct Parser {
    lineno: usize,
    base: Option<(f64, f64)>,
    slack: Option<String>,
    buses: Vec<Bus>,
    bus_at: BTreeMap<String, usize>,
    lines: Vec<LineSegment>,
    line_ids: BTreeMap<String, usize>,
    shunts: Vec<Shunt>,
    pending: Option<Pending>,
}

fn err(line: usize, column: usize, reason: impl Into<String>) -> ParseError {
    ParseError { line, column, reason: reason.into() }
}

impl Parser {
    fn here(&self, t: &Token, reason: impl Into<String>) -> ParseError {
        err(self.lineno, t.column, reason)
    }

    fn phases(&self, t: &Token) -> Result<PhaseSet, ParseError> {
        PhaseSet::parse(t.text)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| self.here(t, format!("invalid phase set `{}` (expected a subset of `abc`)", t.text)))
    }

    fn known_bus(&self, t: &Token) -> Result<PhaseSet, ParseError> {
        self.bus_at
            .get(t.text)
            .map(|&i| self.buses[i].phases)
            .ok_or_else(|| self.here(t, format!("unknown bus `{}`", t.text)))
    }

    fn matrix(&self, head: &Token, vals: &[Token], n: usize) -> Result<ComplexMatrix, ParseError> {
        let mut z = Vec::with_capacity(vals.len());
        for t in vals {
            z.push(parse_complex(t.text).ok_or_else(|| {
                self.here(t, format!("invalid complex number `{}` (expected re+imj)", t.text))
            })?);
        }
        if z.len() == n * (n + 1) / 2 {
            Ok(gridsleuth_core::feeder::symmetric_from_upper(n, &z))
        } else if z.len() == n * n {
            let m = ComplexMatrix::new(n, n, z).expect("length checked");
            if !m.is_symmetric(1e-12 * m.max_abs().max(1.0)) {
                return Err(self.here(head, format!("matrix `{}` is not symmetric", head.text)));
            }
            Ok(m)
        } else {
            Err(self.here(
                head,
                format!(
                    "matrix `{}` needs {} (upper triangle) or {} entries for {n} phases, found {}",
                    head.text,
                    n * (n + 1) / 2,
                    n * n,
                    z.len()
                ),
            ))
        }
    }

    fn flush(&mut self) -> Result<(), ParseError> {
        match self.pending.take() {
            None => Ok(()),
            Some(Pending::Line { mut line, at, z, ys }) => {
                let z = z.ok_or_else(|| err(at, 1, format!("line `{}` has no `z` row", line.id)))?;
                let n = line.phases.len();
                line.z = z;
                line.ys = ys.unwrap_or_else(|| ComplexMatrix::zeros(n, n));
                self.lines.push(line);
                Ok(())
            }
            Some(Pending::Shunt { mut shunt, at, y }) => {
                shunt.y = y.ok_or_else(|| err(at, 1, format!("shunt on `{}` has no `y` row", shunt.bus)))?;
                self.shunts.push(shunt);
                Ok(())
            }
        }
    }

    fn header(&mut self, t: &[Token]) -> Result<(), ParseError> {
        match t[0].text {
            "BASE" => {
                let mut v = None;
                let mut p = None;
                for kv in &t[1..] {
                    let (k, val) = kv
                        .text
                        .split_once('=')
                        .ok_or_else(|| self.here(kv, format!("expected key=value, found `{}`", kv.text)))?;
                    let x: f64 = val
                        .parse()
                        .ok()
                        .filter(|x: &f64| x.is_finite() && *x > 0.0)
                        .ok_or_else(|| self.here(kv, format!("`{val}` is not a positive number")))?;
                    match k {
                        "voltage" => v = Some(x),
                        "power" => p = Some(x),
                        _ => return Err(self.here(kv, format!("unknown BASE key `{k}`"))),
                    }
                }
                match (v, p) {
                    (Some(v), Some(p)) => self.base = Some((v, p)),
                    _ => return Err(self.here(&t[0], "BASE needs voltage= and power=")),
                }
            }
            "SLACK" => {
                if t.len() != 2 {
                    return Err(self.here(&t[0], "SLACK takes one bus id"));
                }
                self.slack = Some(t[1].text.to_string());
            }
            other => return Err(self.here(&t[0], format!("unexpected `{other}` before the first section"))),
        }
        Ok(())
    }

    fn bus(&mut self, t: &[Token]) -> Result<(), ParseError> {
        if t.len() != 2 {
            return Err(self.here(&t[0], "bus record is `<id> <phases>`"));
        }
        let phases = self.phases(&t[1])?;
        if self.bus_at.contains_key(t[0].text) {
            return Err(self.here(&t[0], format!("duplicate bus id `{}`", t[0].text)));
        }
        self.bus_at.insert(t[0].text.to_string(), self.buses.len());
        self.buses.push(Bus { id: t[0].text.to_string(), phases });
        Ok(())
    }

    fn line(&mut self, t: &[Token]) -> Result<(), ParseError> {
        match t[0].text {
            "line" => {
                self.flush()?;
                if t.len() != 6 {
                    return Err(self.here(&t[0], "line record is `line <id> <from> <to> <phases> in|out`"));
                }
                if self.line_ids.contains_key(t[1].text) {
                    return Err(self.here(&t[1], format!("duplicate line id `{}`", t[1].text)));
                }
                let pf = self.known_bus(&t[2])?;
                let pt = self.known_bus(&t[3])?;
                if t[2].text == t[3].text {
                    return Err(self.here(&t[3], "line endpoints coincide"));
                }
                let phases = self.phases(&t[4])?;
                if !phases.is_subset_of(pf) || !phases.is_subset_of(pt) {
                    return Err(self.here(&t[4], format!("phases `{}` not present on both endpoints", t[4].text)));
                }
                let in_service = match t[5].text {
                    "in" => true,
                    "out" => false,
                    s => return Err(self.here(&t[5], format!("status `{s}` must be `in` or `out`"))),
                };
                self.line_ids.insert(t[1].text.to_string(), self.lineno);
                let n = phases.len();
                let mut line = LineSegment::new(t[2].text, t[3].text, phases, ComplexMatrix::zeros(n, n), ComplexMatrix::zeros(n, n));
                line.id = t[1].text.to_string();
                line.in_service = in_service;
                self.pending = Some(Pending::Line { line, at: self.lineno, z: None, ys: None });
                Ok(())
            }
            "z" | "ys" => {
                let n = match &self.pending {
                    Some(Pending::Line { line, .. }) => line.phases.len(),
                    _ => return Err(self.here(&t[0], format!("`{}` row outside a line record", t[0].text))),
                };
                let m = self.matrix(&t[0], &t[1..], n)?;
                if t[0].text == "z" && gridsleuth_core::numerics::Lu::factor(&m).is_err() {
                    return Err(self.here(&t[0], "impedance matrix is singular"));
                }
                let lineno = self.lineno;
                if let Some(Pending::Line { z, ys, .. }) = &mut self.pending {
                    let slot = if t[0].text == "z" { z } else { ys };
                    if slot.is_some() {
                        return Err(err(lineno, t[0].column, format!("repeated `{}` row", t[0].text)));
                    }
                    *slot = Some(m);
                }
                Ok(())
            }
            other => Err(self.here(&t[0], format!("expected `line`, `z` or `ys`, found `{other}`"))),
        }
    }

    fn shunt(&mut self, t: &[Token]) -> Result<(), ParseError> {
        match t[0].text {
            "shunt" => {
                self.flush()?;
                if t.len() != 3 {
                    return Err(self.here(&t[0], "shunt record is `shunt <bus> <phases>`"));
                }
                let pb = self.known_bus(&t[1])?;
                let phases = self.phases(&t[2])?;
                if !phases.is_subset_of(pb) {
                    return Err(self.here(&t[2], format!("phases `{}` not present on bus", t[2].text)));
                }
                let n = phases.len();
                let shunt = Shunt { bus: t[1].text.to_string(), phases, y: ComplexMatrix::zeros(n, n) };
                self.pending = Some(Pending::Shunt { shunt, at: self.lineno, y: None });
                Ok(())
            }
            "y" => {
                let n = match &self.pending {
                    Some(Pending::Shunt { shunt, .. }) => shunt.phases.len(),
                    _ => return Err(self.here(&t[0], "`y` row outside a shunt record")),
                };
                let m = self.matrix(&t[0], &t[1..], n)?;
                let lineno = self.lineno;
                if let Some(Pending::Shunt { y, .. }) = &mut self.pending {
                    if y.is_some() {
                        return Err(err(lineno, t[0].column, "repeated `y` row"));
                    }
                    *y = Some(m);
                }
                Ok(())
            }
            other => Err(self.here(&t[0], format!("expected `shunt` or `y`, found `{other}`"))),
        }
    }
}

/// Parses a feeder file and checks the model invariants.
pub fn load_feeder(text: &str) -> Result<FeederModel, FeederFileError> {
    let mut p = Parser {
        lineno: 0,
        base: None,
        slack: None,
        buses: Vec::new(),
        bus_at: BTreeMap::new(),
        lines: Vec::new(),
        line_ids: BTreeMap::new(),
        shunts: Vec::new(),
        pending: None,
    };
    let mut section = Section::Header;
    for (i, raw) in text.lines().enumerate() {
        p.lineno = i + 1;
        let t = tokens(strip_comment(raw));
        if t.is_empty() {
            continue;
        }
        if t[0].text.starts_with('[') {
            p.flush()?;
            section = match t[0].text {
                "[BUS]" => Section::Bus,
                "[LINE]" => Section::Line,
                "[SHUNT]" => Section::Shunt,
                s => return Err(p.here(&t[0], format!("unknown section `{s}`")).into()),
            };
            if t.len() > 1 {
                return Err(p.here(&t[1], "unexpected text after section header").into());
            }
            continue;
        }
        match section {
            Section::Header => p.header(&t)?,
            Section::Bus => p.bus(&t)?,
            Section::Line => p.line(&t)?,
            Section::Shunt => p.shunt(&t)?,
        }
    }
    p.flush()?;
    let end = p.lineno.max(1);
    let (base_voltage, base_power) = p.base.ok_or_else(|| err(end, 1, "missing BASE record"))?;
    let slack_bus = p.slack.ok_or_else(|| err(end, 1, "missing SLACK record"))?;
    let f = FeederModel {
        buses: p.buses,
        lines: p.lines,
        shunts: p.shunts,
        slack_bus,
        base_voltage,
        base_power,
    };
    f.validate()?;
    Ok(f)
}

fn write_matrix(out: &mut String, key: &str, m: &ComplexMatrix) {
    let n = m.rows();
    let exact = (0..n).all(|r| (0..r).all(|c| m[(r, c)] == m[(c, r)]));
    let _ = write!(out, "  {key}");
    for r in 0..n {
        for c in if exact { r..n } else { 0..n } {
            let _ = write!(out, " {}", format_complex(m[(r, c)]));
        }
    }
    out.push('\n');
}

/// Writes `f` so that [`load_feeder`] reproduces it exactly.
pub fn save_feeder(f: &FeederModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "BASE voltage={:e} power={:e}", f.base_voltage, f.base_power);
    let _ = writeln!(out, "SLACK {}", f.slack_bus);
    out.push_str("\n[BUS]\n");
    for b in &f.buses {
        let _ = writeln!(out, "{} {}", b.id, b.phases);
    }
    out.push_str("\n[LINE]\n");
    for l in &f.lines {
        let status = if l.in_service { "in" } else { "out" };
        let _ = writeln!(out, "line {} {} {} {} {status}", l.id, l.from_bus, l.to_bus, l.phases);
        write_matrix(&mut out, "z", &l.z);
        write_matrix(&mut out, "ys", &l.ys);
    }
    if !f.shunts.is_empty() {
        out.push_str("\n[SHUNT]\n");
        for s in &f.shunts {
            let _ = writeln!(out, "shunt {} {}", s.bus, s.phases);
            write_matrix(&mut out, "y", &s.y);
        }
    }
    out
}
