//! JSON and CSV reports.

use std::io::Write;
use std::path::Path;

use ou_riesz::experiments::{Direction, GrowthSeries, Verdict};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Case {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    /// Passes when `value >= tolerance` (the tolerance is a floor).
    pub fn at_least(name: impl Into<String>, value: f64, floor: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: floor,
            pass: value >= floor,
        }
    }

    pub fn check(name: impl Into<String>, value: f64, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass,
        }
    }

    /// A failed case recording an error message in its name.
    pub fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self {
            name: format!("{} ({err})", name.into()),
            value: f64::NAN,
            tolerance: f64::NAN,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub op: String,
    pub dim: usize,
    pub direction: String,
    pub xi: f64,
    pub value: f64,
}

impl CsvRow {
    pub fn ladder(series: &GrowthSeries) -> Vec<CsvRow> {
        series
            .xi
            .iter()
            .zip(&series.values)
            .map(|(&xi, &value)| CsvRow {
                op: series.op.to_string(),
                dim: series.dim,
                direction: series.direction.to_string(),
                xi,
                value,
            })
            .collect()
    }

    pub fn point(op: &str, dim: usize, direction: Direction, xi: f64, value: f64) -> Self {
        Self {
            op: op.to_string(),
            dim,
            direction: direction.to_string(),
            xi,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: String,
    pub cases: Vec<Case>,
    pub verdicts: Vec<Verdict>,
    /// CSV rows; not part of the JSON.
    #[serde(skip)]
    pub rows: Vec<CsvRow>,
    /// Human-readable summary for stdout.
    #[serde(skip)]
    pub text: String,
    /// Set when a ladder could not be evaluated.
    #[serde(skip)]
    pub inconclusive: bool,
}

impl Report {
    pub fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            cases: Vec::new(),
            verdicts: Vec::new(),
            rows: Vec::new(),
            text: String::new(),
            inconclusive: false,
        }
    }

    pub fn push(&mut self, case: Case) {
        self.cases.push(case);
    }

    pub fn all_pass(&self) -> bool {
        !self.inconclusive && self.cases.iter().all(|c| c.pass)
    }

    /// 0 when every case passed and every ladder was conclusive, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        // header even when there are no rows
        w.write_record(["op", "dim", "direction", "xi", "value"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.op.clone(),
                r.dim.to_string(),
                r.direction.clone(),
                r.xi.to_string(),
                r.value.to_string(),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// One line per case plus the free-form text.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.cases {
            s.push_str(&format!(
                "[{}] {}: {:.6e} (tolerance {:.3e})\n",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            ));
        }
        s.push_str(&self.text);
        s
    }

    /// Writes `<suite>.json` and `<suite>.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join(format!("{}.json", self.suite)))?.write_all(self.to_json().as_bytes())?;
        std::fs::File::create(dir.join(format!("{}.csv", self.suite)))?.write_all(&self.to_csv())?;
        Ok(())
    }
}
