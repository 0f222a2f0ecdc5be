//! Household allocation: one `<bus> <phase> <households>` record per line.

use std::fmt::Write as _;

use gridsleuth_core::feeder::Phase;
use gridsleuth_core::loads::{AllocationEntry, LoadAllocation};

use super::{strip_comment, tokens, ParseError};

pub fn load_allocation(text: &str) -> Result<LoadAllocation, ParseError> {
    let mut entries: Vec<AllocationEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let t = tokens(strip_comment(raw));
        if t.is_empty() {
            continue;
        }
        let at = |k: usize, reason: String| ParseError { line: i + 1, column: t[k].column, reason };
        if t.len() != 3 {
            return Err(at(0, "record is `<bus> <phase> <households>`".into()));
        }
        let mut chars = t[1].text.chars();
        let phase = match (chars.next().and_then(Phase::from_char), chars.next()) {
            (Some(p), None) => p,
            _ => return Err(at(1, format!("invalid phase `{}` (expected a, b or c)", t[1].text))),
        };
        let households: usize = t[2]
            .text
            .parse()
            .map_err(|_| at(2, format!("invalid household count `{}`", t[2].text)))?;
        if entries.iter().any(|e| e.bus == t[0].text && e.phase == phase) {
            return Err(at(0, format!("duplicate entry for `{} {}`", t[0].text, t[1].text)));
        }
        entries.push(AllocationEntry { bus: t[0].text.to_string(), phase, households });
    }
    Ok(LoadAllocation { entries })
}

pub fn save_allocation(a: &LoadAllocation) -> String {
    let mut out = String::from("# bus phase households\n");
    for e in &a.entries {
        let _ = writeln!(out, "{} {} {}", e.bus, e.phase, e.households);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridsleuth_core::loads::ieee13_allocation;

    #[test]
    fn round_trip_of_table() {
        let a = ieee13_allocation();
        assert_eq!(load_allocation(&save_allocation(&a)).unwrap(), a);
    }

    #[test]
    fn errors_name_the_token() {
        let e = load_allocation("632 a 300\n632 d 10\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 5));
        assert!(e.reason.contains("`d`"));
        let e = load_allocation("632 a -3\n").unwrap_err();
        assert_eq!(e.column, 7);
        assert!(load_allocation("632 a 1\n632 a 2\n").unwrap_err().reason.contains("duplicate"));
    }
}
