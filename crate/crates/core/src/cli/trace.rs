//! CSV trace files.
//!
//! Columns: `time`, `x0_1..x0_n`, `xt_i_k` (global error of follower `i` on
//! state `k`, follower-major), `psi_i_k`, `V_1..V_n`, `budget_active`.
//! Values are written with 17 significant digits so a re-read reproduces the
//! binary64 values exactly.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::sim::SimResult;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An in-memory trace, as written to or read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub order: usize,
    pub followers: usize,
    pub rows: Vec<Vec<f64>>,
}

pub fn header(order: usize, followers: usize) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    h.extend((1..=order).map(|k| format!("x0_{k}")));
    for prefix in ["xt", "psi"] {
        for i in 1..=followers {
            h.extend((1..=order).map(|k| format!("{prefix}_{i}_{k}")));
        }
    }
    h.extend((1..=order).map(|k| format!("V_{k}")));
    h.push("budget_active".into());
    h
}

pub fn column_count(order: usize, followers: usize) -> usize {
    1 + order + 2 * followers * order + order + 1
}

fn fmt_value(out: &mut String, v: f64) {
    // `{:.16e}` is 17 significant digits in scientific notation.
    write!(out, "{v:.16e}").expect("writing to a String");
}

impl Trace {
    pub fn from_result(result: &SimResult) -> Self {
        let order = result.order();
        let followers = result.estimate_errors.first().map_or(0, |m| m.rows());
        let rows = (0..result.times.len())
            .map(|s| {
                let mut row = Vec::with_capacity(column_count(order, followers));
                row.push(result.times[s]);
                row.extend_from_slice(&result.leader_states[s]);
                row.extend_from_slice(result.estimate_errors[s].as_slice());
                row.extend_from_slice(result.local_errors[s].as_slice());
                row.extend_from_slice(&result.lyapunov[s]);
                row.push(result.decay_bound[s]);
                row
            })
            .collect();
        Self { order, followers, rows }
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Global error column of follower `i`, state `k` (both 1-based).
    pub fn global_error(&self, i: usize, k: usize) -> Vec<f64> {
        let col = 1 + self.order + (i - 1) * self.order + (k - 1);
        self.rows.iter().map(|r| r[col]).collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = header(self.order, self.followers).join(",");
        line.push('\n');
        w.write_all(line.as_bytes())?;
        for row in &self.rows {
            line.clear();
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                fmt_value(&mut line, *v);
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = r.lines();
        let head = lines
            .next()
            .ok_or_else(|| TraceError::Malformed("empty file".into()))??;
        let cols: Vec<&str> = head.trim_end_matches('\r').split(',').collect();
        if cols.first() != Some(&"time") {
            return Err(TraceError::Malformed("first column must be `time`".into()));
        }
        let order = cols.iter().filter(|c| c.starts_with("x0_")).count();
        let xt = cols.iter().filter(|c| c.starts_with("xt_")).count();
        if order == 0 || xt % order != 0 {
            return Err(TraceError::Malformed("cannot infer leader order and follower count from header".into()));
        }
        let followers = xt / order;
        let expected = header(order, followers);
        if cols.len() != expected.len() || cols.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(TraceError::Malformed(format!(
                "header does not match the expected {} columns for order {order} and {followers} followers",
                expected.len()
            )));
        }
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| TraceError::Malformed(format!("line {}: {e}", ln + 2)))?;
            if row.len() != expected.len() {
                return Err(TraceError::Malformed(format!(
                    "line {}: {} fields, expected {}",
                    ln + 2,
                    row.len(),
                    expected.len()
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(TraceError::Malformed("no data rows".into()));
        }
        if rows.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(TraceError::Malformed("time column is not strictly increasing".into()));
        }
        Ok(Self { order, followers, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let h = header(2, 2);
        assert_eq!(h.len(), column_count(2, 2));
        assert_eq!(
            h,
            [
                "time", "x0_1", "x0_2", "xt_1_1", "xt_1_2", "xt_2_1", "xt_2_2", "psi_1_1", "psi_1_2", "psi_2_1",
                "psi_2_2", "V_1", "V_2", "budget_active"
            ]
        );
    }

    #[test]
    fn header_only_is_malformed() {
        let text = header(1, 1).join(",") + "\n";
        assert!(matches!(Trace::read(text.as_bytes()), Err(TraceError::Malformed(_))));
        assert!(matches!(Trace::read(&b""[..]), Err(TraceError::Malformed(_))));
    }

    #[test]
    fn wrong_field_count_is_malformed() {
        let text = header(1, 1).join(",") + "\n0,1,2\n";
        assert!(matches!(Trace::read(text.as_bytes()), Err(TraceError::Malformed(_))));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6 * 3),
        ) {
            // order 1, one follower: 6 columns.
            let rows: Vec<Vec<f64>> = vals
                .chunks(6)
                .enumerate()
                .map(|(s, c)| {
                    let mut r = c.to_vec();
                    r[0] = s as f64 * 0.1;
                    r
                })
                .collect();
            let t = Trace { order: 1, followers: 1, rows };
            let mut buf = Vec::new();
            t.write(&mut buf).unwrap();
            let back = Trace::read(buf.as_slice()).unwrap();
            prop_assert_eq!(back.rows.len(), t.rows.len());
            for (a, b) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
