//! Success rate, success weighted by path length (SPL), and per-label reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::PlanTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no trials to aggregate")]
    EmptyTrials,
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
}

/// Outcome of one trial. `steps` is rounds executed, `min_steps` the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub label: String,
    pub success: bool,
    pub steps: u32,
    pub min_steps: u32,
    pub planning_time_ms: f64,
}

impl TrialResult {
    pub fn new(
        label: impl Into<String>,
        success: bool,
        steps: u32,
        min_steps: u32,
        planning_time_ms: f64,
    ) -> Result<Self, MetricsError> {
        let t = Self {
            label: label.into(),
            success,
            steps,
            min_steps,
            planning_time_ms,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_trace(trace: &PlanTrace) -> Result<Self, MetricsError> {
        Self::new(
            trace.label.clone(),
            trace.outcome.is_success(),
            trace.step_count,
            trace.min_steps,
            trace.planning_time_ms,
        )
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.min_steps == 0 {
            return Err(MetricsError::InvalidTrial(format!("{}: min_steps must be >= 1", self.label)));
        }
        if self.success && self.steps == 0 {
            return Err(MetricsError::InvalidTrial(format!(
                "{}: a successful trial takes at least one step",
                self.label
            )));
        }
        if !self.planning_time_ms.is_finite() || self.planning_time_ms < 0.0 {
            return Err(MetricsError::InvalidTrial(format!("{}: bad planning time", self.label)));
        }
        Ok(())
    }

    /// `l / max(p, l)` on success, 0 otherwise.
    pub fn path_efficiency(&self) -> f64 {
        if self.success {
            let l = f64::from(self.min_steps);
            l / f64::from(self.steps).max(l)
        } else {
            0.0
        }
    }
}

fn checked(trials: &[TrialResult]) -> Result<(), MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::EmptyTrials);
    }
    trials.iter().try_for_each(TrialResult::validate)
}

pub fn spl(trials: &[TrialResult]) -> Result<f64, MetricsError> {
    checked(trials)?;
    Ok(trials.iter().map(TrialResult::path_efficiency).sum::<f64>() / trials.len() as f64)
}

pub fn success_rate(trials: &[TrialResult]) -> Result<f64, MetricsError> {
    checked(trials)?;
    Ok(trials.iter().filter(|t| t.success).count() as f64 / trials.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub spl: f64,
    /// Mean over successful trials only; `None` when none succeeded.
    pub mean_planning_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<LabelSummary>,
}

/// Aggregates trials per label, labels in sorted order.
pub fn summarize(trials: &[TrialResult]) -> Result<Report, MetricsError> {
    checked(trials)?;
    let mut groups: BTreeMap<&str, Vec<TrialResult>> = BTreeMap::new();
    for t in trials {
        groups.entry(&t.label).or_default().push(t.clone());
    }
    let rows = groups
        .into_iter()
        .map(|(label, ts)| {
            let ok: Vec<&TrialResult> = ts.iter().filter(|t| t.success).collect();
            let mean = (!ok.is_empty())
                .then(|| ok.iter().map(|t| t.planning_time_ms).sum::<f64>() / ok.len() as f64);
            Ok(LabelSummary {
                label: label.to_owned(),
                trials: ts.len(),
                successes: ok.len(),
                success_rate: success_rate(&ts)?,
                spl: spl(&ts)?,
                mean_planning_time_ms: mean,
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    Ok(Report { rows })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width table, one row per label.
    pub fn to_text(&self) -> String {
        let header = ["label", "trials", "success", "SR", "SPL", "time_ms"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.trials.to_string(),
                    r.successes.to_string(),
                    format!("{:.3}", r.success_rate),
                    format!("{:.3}", r.spl),
                    r.mean_planning_time_ms.map_or_else(|| "-".to_owned(), |t| format!("{t:.1}")),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cols: &[&str]| {
            let mut l = format!("{:<w$}", cols[0], w = widths[0]);
            for (c, w) in cols[1..].iter().zip(&widths[1..]) {
                let _ = write!(l, "  {c:>w$}");
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(&header);
        for row in &cells {
            line(&row.each_ref().map(String::as_str));
        }
        out
    }
}
