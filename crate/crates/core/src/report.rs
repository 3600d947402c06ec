//! Self-describing check reports shared by every verification routine.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Nothing to measure (for instance a constraint that never activates).
    Vacuous,
    /// The right-hand side vanished while the left-hand side did not.
    Degenerate,
    /// A premise of the estimate did not hold, so its conclusion was not
    /// evaluated.
    PremiseFailure,
}

/// One row of the `(term, value, stderr)` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub term: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// One sampled clause with its worst observed margin (negative = violated).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub clause: String,
    pub worst_margin: f64,
    pub location: Option<Vec<f64>>,
    pub pass: bool,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    /// Ratio of ensemble means, `E lhs / E rhs`.
    pub ratio: f64,
    /// Pathwise ratios restricted to paths with `rhs > floor`.
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
    pub counted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub status: Status,
    pub pass: bool,
    pub tolerance: f64,
    pub terms: Vec<Term>,
    pub entries: Vec<Entry>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub ratio: Option<RatioSummary>,
    pub config_hash: Option<String>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            status: Status::Pass,
            pass: true,
            tolerance,
            terms: Vec::new(),
            entries: Vec::new(),
            lhs: None,
            rhs: None,
            ratio: None,
            config_hash: None,
            notes: Vec::new(),
        }
    }

    pub fn term(&mut self, term: impl Into<String>, value: f64, stderr: Option<f64>) {
        self.terms.push(Term { term: term.into(), value, stderr });
    }

    pub fn term_value(&self, term: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.term == term).map(|t| t.value)
    }

    /// Records a clause. A failing entry downgrades the report to `Fail`
    /// unless a stronger status is already set.
    pub fn entry(&mut self, clause: impl Into<String>, worst: Worst, tolerance: f64) {
        let pass = worst.margin >= -tolerance;
        self.entries.push(Entry {
            clause: clause.into(),
            worst_margin: worst.margin,
            location: worst.location,
            pass,
            samples: worst.samples,
        });
        if !pass {
            self.fail();
        }
    }

    pub fn entry_named(&self, clause: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.clause == clause)
    }

    pub fn fail(&mut self) {
        if self.status == Status::Pass {
            self.status = Status::Fail;
        }
        self.pass = false;
    }

    pub fn set_status(&mut self, status: Status) {
        self.status = status;
        self.pass = status == Status::Pass;
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn with_config_hash(mut self, hash: Option<String>) -> Self {
        self.config_hash = hash;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Running minimum of a margin together with where it happened.
#[derive(Clone, Debug)]
pub struct Worst {
    pub margin: f64,
    pub location: Option<Vec<f64>>,
    pub samples: usize,
}

impl Default for Worst {
    fn default() -> Self {
        Self { margin: f64::INFINITY, location: None, samples: 0 }
    }
}

impl Worst {
    pub fn observe(&mut self, margin: f64, location: &[f64]) {
        self.samples += 1;
        // NaN margins count as violations.
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < self.margin {
            self.margin = margin;
            self.location = Some(location.to_vec());
        }
    }
}

/// Summary of pathwise ratios `lhs/rhs` where `rhs > floor`.
pub fn ratio_summary(lhs: &[f64], rhs: &[f64], floor: f64) -> Option<RatioSummary> {
    let mean_l = mean(lhs);
    let mean_r = mean(rhs);
    if mean_r <= floor {
        return None;
    }
    let mut ratios: Vec<f64> = lhs
        .iter()
        .zip(rhs)
        .filter(|(_, r)| **r > floor)
        .map(|(l, r)| l / r)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let q = |p: f64| {
        if ratios.is_empty() {
            f64::NAN
        } else {
            ratios[((ratios.len() - 1) as f64 * p).round() as usize]
        }
    };
    Some(RatioSummary {
        ratio: mean_l / mean_r,
        p05: q(0.05),
        p50: q(0.5),
        p95: q(0.95),
        counted: ratios.len(),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean.
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}
