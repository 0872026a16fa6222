//! Plain-text formats shared by the library and the CLI.
//!
//! Floats are written with 17 significant digits so every value survives a
//! write/read round trip bit-for-bit. Signal files are two-column CSV with a
//! mandatory header (`node,value`) and 1-based node indices.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_signal_csv(header: &str, x: &DVector<f64>) -> String {
    let mut out = String::new();
    writeln!(out, "node,{header}").unwrap();
    for (k, v) in x.iter().enumerate() {
        writeln!(out, "{},{}", k + 1, fmt_f64(*v)).unwrap();
    }
    out
}

/// Parses a `node,<value>` CSV. Rows may come in any order but every node in
/// `1..=N` must appear exactly once.
pub fn read_signal_csv(text: &str) -> Result<DVector<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty signal file".into()))?;
    if header.split(',').count() != 2 {
        return Err(Error::Malformed(format!("expected a two-column header, got {header:?}")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let mut cells = line.split(',').map(str::trim);
        let (Some(node), Some(value), None) = (cells.next(), cells.next(), cells.next()) else {
            return Err(Error::Malformed(format!("row {}: expected 2 columns", lineno + 2)));
        };
        let node: usize = node
            .parse()
            .map_err(|_| Error::Malformed(format!("row {}: bad node index {node:?}", lineno + 2)))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::Malformed(format!("row {}: bad value {value:?}", lineno + 2)))?;
        rows.push((node, value));
    }
    let n = rows.len();
    let mut x = vec![f64::NAN; n];
    for (node, value) in rows {
        if node == 0 || node > n {
            return Err(Error::IndexOutOfRange { index: node, n });
        }
        if !x[node - 1].is_nan() {
            return Err(Error::Malformed(format!("node {node} listed twice")));
        }
        x[node - 1] = value;
    }
    Ok(DVector::from_vec(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_duplicates_and_gaps() {
        assert!(read_signal_csv("node,value\n1,0.5\n1,0.25\n").is_err());
        assert!(read_signal_csv("node,value\n1,0.5\n3,0.25\n").is_err());
        assert!(read_signal_csv("").is_err());
    }

    #[test]
    fn accepts_shuffled_rows() {
        let x = read_signal_csv("node,value\n2,2.0\n1,1.0\n").unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn signal_csv_round_trips_exactly(v in proptest::collection::vec(-1e300f64..1e300, 1..20)) {
            let x = DVector::from_vec(v);
            let back = read_signal_csv(&write_signal_csv("value", &x)).unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
