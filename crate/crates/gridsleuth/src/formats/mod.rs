//! Text and binary file formats.

pub mod allocation;
pub mod feeder;
pub mod json;
pub mod replay;
pub mod stream_csv;

use std::fmt;

use gridsleuth_core::numerics::C64;

/// Position-tagged parse failure in a text file. `line` and `column` are
/// 1-based; `column` points at the offending token.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub reason: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.reason)
    }
}

/// Whitespace-separated token with its 1-based column.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Token<'a> {
    pub text: &'a str,
    pub column: usize,
}

pub(crate) fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token { text: &line[s..i], column: line[..s].chars().count() + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &line[s..], column: line[..s].chars().count() + 1 });
    }
    out
}

/// Strips a trailing `#` comment.
pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Formats `z` as `re+imj` with shortest round-trip exponent notation.
pub fn format_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { "" } else { "+" };
    format!("{:e}{sign}{:e}j", z.re, z.im)
}

/// Parses `re+imj` / `re-imj`. Both parts are required.
pub fn parse_complex(s: &str) -> Option<C64> {
    let body = s.strip_suffix('j')?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))?;
    let re: f64 = body[..split].parse().ok()?;
    let im_text = if bytes[split] == b'+' { &body[split + 1..] } else { &body[split..] };
    let im: f64 = im_text.parse().ok()?;
    (re.is_finite() && im.is_finite()).then(|| C64::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_round_trip_is_bit_exact() {
        for z in [
            C64::new(20.0, -40.0),
            C64::new(-1.25e-7, 3.5e12),
            C64::new(0.1, 0.2),
            C64::new(-0.0, -0.0),
            C64::new(1.0 / 3.0, -2.0 / 7.0),
        ] {
            let back = parse_complex(&format_complex(z)).unwrap();
            assert_eq!(back.re.to_bits(), z.re.to_bits());
            assert_eq!(back.im.to_bits(), z.im.to_bits());
        }
    }

    #[test]
    fn complex_accepts_plain_forms() {
        assert_eq!(parse_complex("1+2j"), Some(C64::new(1.0, 2.0)));
        assert_eq!(parse_complex("-1.5-2e-3j"), Some(C64::new(-1.5, -2e-3)));
        assert_eq!(parse_complex("1e+2+3E-1j"), Some(C64::new(100.0, 0.3)));
        for bad in ["1", "j", "1+j", "abc+1j", "1+2i", "nan+0j", "+2j"] {
            assert_eq!(parse_complex(bad), None, "{bad}");
        }
    }

    #[test]
    fn tokens_report_columns() {
        let t = tokens("  ab\tcd  e");
        let cols: Vec<_> = t.iter().map(|t| (t.text, t.column)).collect();
        assert_eq!(cols, vec![("ab", 3), ("cd", 6), ("e", 10)]);
    }
}
