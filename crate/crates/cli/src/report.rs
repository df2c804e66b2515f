//! Run reports: assertion bookkeeping, JSON serialization, CSV tables.

use std::collections::BTreeMap;

use serde::Serialize;

/// One checked statement, with its measured value and tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    /// How `measured` relates to `tolerance`: one of `abs<=`, `<`, `>`,
    /// `true` (boolean encoded as 1.0 with tolerance 0.5).
    pub comparison: String,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config: serde_json::Value,
    pub threads: usize,
    pub scalars: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    pub assertions: Vec<Assertion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<serde_json::Value>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(scenario: &str, config: serde_json::Value, threads: usize) -> Self {
        Self {
            scenario: scenario.to_owned(),
            config,
            threads,
            scalars: BTreeMap::new(),
            notes: BTreeMap::new(),
            assertions: Vec::new(),
            certificate: None,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_owned(), value);
    }

    pub fn note(&mut self, name: &str, value: impl Into<String>) {
        self.notes.insert(name.to_owned(), value.into());
    }

    /// `|measured| <= tolerance`.
    pub fn assert_abs_le(&mut self, name: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured.abs() <= tolerance;
        self.assertions.push(Assertion {
            name: name.to_owned(),
            measured,
            tolerance,
            comparison: "abs<=".to_owned(),
            pass,
        });
        pass
    }

    /// `measured < tolerance`.
    pub fn assert_lt(&mut self, name: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured < tolerance;
        self.assertions.push(Assertion {
            name: name.to_owned(),
            measured,
            tolerance,
            comparison: "<".to_owned(),
            pass,
        });
        pass
    }

    /// `measured > tolerance`.
    pub fn assert_gt(&mut self, name: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured > tolerance;
        self.assertions.push(Assertion {
            name: name.to_owned(),
            measured,
            tolerance,
            comparison: ">".to_owned(),
            pass,
        });
        pass
    }

    pub fn assert_flag(&mut self, name: &str, value: bool) -> bool {
        self.assertions.push(Assertion {
            name: name.to_owned(),
            measured: if value { 1.0 } else { 0.0 },
            tolerance: 0.5,
            comparison: "true".to_owned(),
            pass: value,
        });
        value
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// One line per assertion, plus a summary line.
    pub fn print_summary(&self) {
        for a in &self.assertions {
            let status = if a.pass { "PASS" } else { "FAIL" };
            println!(
                "{status} {}: measured {:e} {} {:e}",
                a.name, a.measured, a.comparison, a.tolerance
            );
        }
        let failed = self.assertions.iter().filter(|a| !a.pass).count();
        println!(
            "{}: {} assertions, {} failed",
            self.scenario,
            self.assertions.len(),
            failed
        );
    }
}

/// Fixed-column CSV table for solver iteration histories.
pub fn monotone_history_csv(history: &[crlab_core::solvers::MonotoneIterate<f64>]) -> String {
    let mut out =
        String::from("iter,increment_linf,residual_linf,min_u,max_u,monotone_ok,sandwich_ok\n");
    for it in history {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{},{}\n",
            it.iteration,
            it.increment_linf,
            it.residual_linf,
            it.min_u,
            it.max_u,
            it.monotone_ok,
            it.sandwich_ok
        ));
    }
    out
}
