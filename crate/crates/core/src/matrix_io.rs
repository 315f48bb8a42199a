//! Plain-text complex matrix format.
//!
//! ```text
//! 3 re+im
//! 1+0i 0.5-0.25i 0+0i
//! ...
//! ```
//!
//! The header holds the row count, an optional column count (square when
//! omitted) and the literal tag `re+im`. Each following line is one row of
//! whitespace-separated `a+bi` entries. Values are written in shortest
//! round-trip form so a dump followed by a load is bit-exact.

use num_complex::Complex64;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

const TAG: &str = "re+im";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

pub fn parse_complex(tok: &str) -> Option<Complex64> {
    let body = tok.strip_suffix('i')?;
    let bytes = body.as_bytes();
    // Split at the last sign that is not leading and not part of an exponent.
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))?;
    let re: f64 = body[..split].parse().ok()?;
    let im: f64 = body[split..].parse().ok()?;
    Some(Complex64::new(re, im))
}

pub fn dump_matrix(m: &CMatrix) -> String {
    let mut out = String::new();
    if m.nrows() == m.ncols() {
        let _ = writeln!(out, "{} {TAG}", m.nrows());
    } else {
        let _ = writeln!(out, "{} {} {TAG}", m.nrows(), m.ncols());
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn load_matrix(text: &str) -> Result<CMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols) = match fields.as_slice() {
        [r, tag] if *tag == TAG => {
            let r = r
                .parse::<usize>()
                .map_err(|_| parse_err(hline, "bad row count"))?;
            (r, r)
        }
        [r, c, tag] if *tag == TAG => (
            r.parse::<usize>()
                .map_err(|_| parse_err(hline, "bad row count"))?,
            c.parse::<usize>()
                .map_err(|_| parse_err(hline, "bad column count"))?,
        ),
        _ => return Err(parse_err(hline, format!("expected header '<rows> [cols] {TAG}'"))),
    };
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        let (lno, line) = lines
            .next()
            .ok_or_else(|| parse_err(hline + i + 1, format!("expected {rows} rows, found {i}")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != cols {
            return Err(parse_err(
                lno,
                format!("expected {cols} entries, found {}", toks.len()),
            ));
        }
        for (j, tok) in toks.iter().enumerate() {
            m[(i, j)] =
                parse_complex(tok).ok_or_else(|| parse_err(lno, format!("bad complex entry '{tok}'")))?;
        }
    }
    if let Some((lno, _)) = lines.next() {
        return Err(parse_err(lno, "trailing data after matrix"));
    }
    Ok(m)
}
