//! Theory checks over trajectories, traces and ensembles.
//!
//! Each check returns a [`TheoryReport`]: a table of measured against
//! predicted values with one tolerance rule per row.

mod decay;
mod geometry;
mod probe;
mod stationary;

pub use decay::{decay_variance_recursion, dominance_alternatives, schedule_dominance, DecayRecursion};
pub use geometry::{decompose, time_alignment, Alignment};
pub use probe::{classify, probe_segment, ProbeClass, ProbeCurve, PROBE_TOL_REL};
pub use stationary::{burn_in, hill_slope_vs_lr, stationary_check, stationary_variance, HillSlope, HillSlopeOpts};

use std::fmt::{self, Write as _};

/// Acceptance rule for one report row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    /// `|measured − predicted| ≤ tol`
    Abs(f64),
    /// `|measured − predicted| ≤ tol·|predicted|`
    Rel(f64),
    /// `measured ≤ predicted`
    AtMost,
    /// `measured ≥ predicted`
    AtLeast,
    /// `measured > predicted`
    Above,
    /// `measured < predicted`
    Below,
    /// Reported only.
    Info,
}

impl Check {
    pub fn holds(self, measured: f64, predicted: f64) -> bool {
        match self {
            Check::Abs(t) => (measured - predicted).abs() <= t,
            Check::Rel(t) => (measured - predicted).abs() <= t * predicted.abs(),
            Check::AtMost => measured <= predicted,
            Check::AtLeast => measured >= predicted,
            Check::Above => measured > predicted,
            Check::Below => measured < predicted,
            Check::Info => true,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Abs(t) => write!(f, "abs {t:.1e}"),
            Check::Rel(t) => write!(f, "rel {t:.1e}"),
            Check::AtMost => f.write_str("<="),
            Check::AtLeast => f.write_str(">="),
            Check::Above => f.write_str(">"),
            Check::Below => f.write_str("<"),
            Check::Info => f.write_str("info"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub measured: f64,
    pub predicted: f64,
    pub check: Check,
}

impl ReportRow {
    pub fn passed(&self) -> bool {
        self.check.holds(self.measured, self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TheoryReport {
    pub name: String,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

impl TheoryReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn row(&mut self, label: impl Into<String>, measured: f64, predicted: f64, check: Check) -> &mut Self {
        self.rows.push(ReportRow {
            label: label.into(),
            measured,
            predicted,
            check,
        });
        self
    }

    /// A pass/fail row for a boolean property.
    pub fn flag(&mut self, label: impl Into<String>, ok: bool) -> &mut Self {
        self.row(label, f64::from(u8::from(ok)), 1.0, Check::Abs(0.0))
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(ReportRow::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.passed())
    }

    pub fn merge(&mut self, other: TheoryReport) {
        let prefix = other.name;
        for mut r in other.rows {
            r.label = format!("{prefix}: {}", r.label);
            self.rows.push(r);
        }
        self.notes.extend(other.notes.into_iter().map(|n| format!("{prefix}: {n}")));
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("[{}] {}\n", if self.passed() { "PASS" } else { "FAIL" }, self.name);
        let width = self.rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0);
        for r in &self.rows {
            let pad = width - r.label.chars().count();
            let _ = writeln!(
                s,
                "  {}{}  measured {:>14.7e}  predicted {:>14.7e}  {:<10} {}",
                r.label,
                " ".repeat(pad),
                r.measured,
                r.predicted,
                r.check.to_string(),
                if r.passed() { "ok" } else { "FAIL" }
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        s
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
