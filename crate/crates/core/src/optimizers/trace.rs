use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Metrics of one iterate `x_t`, taken before the step from `x_t` to
/// `x_{t+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Record {
    pub t: usize,
    pub f_gap: f64,
    /// Squared norm of the exact gradient at `x_t`.
    pub grad_norm_sq: f64,
    /// The step size used at `t` (coordinate mean for vector steps).
    pub eta: f64,
    /// Norm of the momentum buffer after step `t`.
    pub m_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// The iterate left the ball of radius `1e12` or `f` became non-finite
    /// while computing step `t`.
    Diverged {
        t: usize,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub records: Vec<Record>,
    /// Every `thin`-th iterate is recorded (plus the first and the last).
    pub thin: usize,
    /// `x_{T+1}`, or the last finite iterate of a diverged run.
    pub final_iterate: Vec<f64>,
    pub final_gap: f64,
    pub seed: u64,
    pub status: RunStatus,
    /// Gaps are measured against the best observed `f` because the
    /// problem's minimum is unknown.
    pub gap_relative: bool,
    /// `x_1, ..., x_{T+1}` when requested.
    #[serde(skip)]
    pub iterates: Option<Vec<Vec<f64>>>,
}

pub const CSV_HEADER: &str = "t,f_gap,grad_norm_sq,eta,m_norm";

impl Trace {
    pub fn is_diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn last(&self) -> Result<&Record> {
        self.records.last().ok_or(Error::EmptyTrace)
    }

    /// Record for iterate `t`, if it was kept.
    pub fn at(&self, t: usize) -> Option<&Record> {
        self.records
            .binary_search_by_key(&t, |r| r.t)
            .ok()
            .map(|i| &self.records[i])
    }

    /// `(t, value)` pairs of a named column.
    pub fn column(&self, field: &str) -> Result<Vec<(usize, f64)>> {
        let get: fn(&Record) -> f64 = match field {
            "f_gap" => |r| r.f_gap,
            "grad_norm_sq" => |r| r.grad_norm_sq,
            "eta" => |r| r.eta,
            "m_norm" => |r| r.m_norm,
            // Running minimum of the squared gradient norm.
            "min_grad_norm_sq" => {
                let mut best = f64::INFINITY;
                return Ok(self
                    .records
                    .iter()
                    .map(|r| {
                        best = best.min(r.grad_norm_sq);
                        (r.t, best)
                    })
                    .collect());
            }
            other => {
                return Err(Error::param(format!("unknown trace field `{other}`")));
            }
        };
        Ok(self.records.iter().map(|r| (r.t, get(r))).collect())
    }

    /// Writes the records as CSV with shortest round-trip number formatting,
    /// so equal traces give equal bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.t, r.f_gap, r.grad_norm_sq, r.eta, r.m_norm
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            records: (1..=4)
                .map(|t| Record {
                    t,
                    f_gap: 1.0 / t as f64,
                    grad_norm_sq: [3.0, 1.0, 2.0, 0.5][t - 1],
                    eta: 0.1,
                    m_norm: 0.0,
                })
                .collect(),
            thin: 1,
            final_iterate: vec![0.0],
            final_gap: 0.2,
            seed: 0,
            status: RunStatus::Completed,
            gap_relative: false,
            iterates: None,
        }
    }

    #[test]
    fn csv_uses_round_trip_formatting() {
        let csv = sample().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("1,1,3,0.1,0"));
        assert_eq!(lines.nth(1), Some("3,0.3333333333333333,2,0.1,0"));
        for line in csv.lines().skip(1) {
            let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            let t: usize = line.split(',').next().unwrap().parse().unwrap();
            assert_eq!(v, 1.0 / t as f64);
        }
    }

    #[test]
    fn running_minimum_column() {
        let col = sample().column("min_grad_norm_sq").unwrap();
        let vals: Vec<f64> = col.iter().map(|p| p.1).collect();
        assert_eq!(vals, vec![3.0, 1.0, 1.0, 0.5]);
        assert!(sample().column("bogus").is_err());
    }

    #[test]
    fn lookup_by_t() {
        let t = sample();
        assert_eq!(t.at(3).unwrap().t, 3);
        assert!(t.at(9).is_none());
    }
}
