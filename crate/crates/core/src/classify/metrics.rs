use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::corpus::Gender;
use crate::error::{Error, Result};

/// Rounds to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Unweighted mean of per-condition percentages, rounded to one decimal.
pub fn average_performance(per_condition: &[f64]) -> Result<f64> {
    if per_condition.is_empty() {
        return Err(Error::invalid("no conditions to average"));
    }
    Ok(round1(per_condition.iter().sum::<f64>() / per_condition.len() as f64))
}

/// `100 * (new - base) / base`, rounded to one decimal.
pub fn relative_improvement(new: f64, base: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::invalid(format!("baseline {base} must be positive")));
    }
    Ok(round1(100.0 * (new - base) / base))
}

/// Formats a percentage for report tables: one decimal, trailing
/// `.0` dropped.
fn fmt_pct(x: f64) -> String {
    let r = round1(x);
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

/// Counts of (predicted, true) condition pairs. Columns are true conditions,
/// rows are predicted conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![0; k * k],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        let k = self.len();
        self.counts[predicted * k + truth] += 1;
    }

    pub fn count(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted * self.len() + truth]
    }

    pub fn column_total(&self, truth: usize) -> u64 {
        (0..self.len()).map(|p| self.count(p, truth)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.len()).map(|v| self.count(v, v)).sum()
    }

    /// Share of true-`truth` utterances predicted as `predicted`, or `None`
    /// for a condition with no test utterances.
    pub fn percent(&self, predicted: usize, truth: usize) -> Option<f64> {
        let total = self.column_total(truth);
        (total > 0).then(|| 100.0 * self.count(predicted, truth) as f64 / total as f64)
    }

    pub fn diagonal_percentages(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|v| self.percent(v, v)).collect()
    }

    /// Percentage columns, each summing to 100 unless empty.
    pub fn column_sums(&self) -> Vec<Option<f64>> {
        (0..self.len())
            .map(|t| (self.column_total(t) > 0).then(|| (0..self.len()).map(|p| self.percent(p, t).unwrap()).sum()))
            .collect()
    }

    /// Plain-text table with the predicted model down the side and the true
    /// condition across the top.
    pub fn render(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(7) + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Model");
        for l in &self.labels {
            let _ = write!(out, "{:>width$}", title(l));
        }
        out.push('\n');
        for p in 0..self.len() {
            let _ = write!(out, "{:<width$}", title(&self.labels[p]));
            for t in 0..self.len() {
                let cell = self.percent(p, t).map_or_else(|| "-".to_string(), fmt_pct);
                let _ = write!(out, "{cell:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

fn title(label: &str) -> String {
    let mut c = label.chars();
    c.next()
        .map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

/// Outcome of scoring one test utterance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    /// Position of the utterance in the manifest.
    pub utterance: usize,
    pub truth: usize,
    pub predicted: usize,
    pub gender: Gender,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderRow {
    pub gender: Gender,
    pub per_condition: Vec<Option<f64>>,
}

/// Per-condition identification rates by gender and pooled, plus their
/// unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub kind: ModelKind,
    pub alpha: Option<f64>,
    pub labels: Vec<String>,
    pub genders: Vec<GenderRow>,
    /// Pooled over all test utterances; equals the confusion diagonal.
    pub per_condition: Vec<Option<f64>>,
    /// Mean over conditions that have test utterances, one decimal.
    pub average: f64,
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    average_performance(&present).unwrap_or(0.0)
}

impl PerformanceReport {
    pub fn from_decisions(
        kind: ModelKind,
        alpha: Option<f64>,
        labels: &[String],
        decisions: &[Decision],
    ) -> (ConfusionMatrix, Self) {
        let confusion = confusion_of(labels, decisions.iter());
        let genders = [Gender::Male, Gender::Female, Gender::Unknown]
            .into_iter()
            .filter(|g| decisions.iter().any(|d| d.gender == *g))
            .map(|g| GenderRow {
                gender: g,
                per_condition: confusion_of(labels, decisions.iter().filter(|d| d.gender == g)).diagonal_percentages(),
            })
            .collect();
        let per_condition = confusion.diagonal_percentages();
        let report = PerformanceReport {
            kind,
            alpha,
            labels: labels.to_vec(),
            genders,
            average: mean_present(&per_condition),
            per_condition,
        };
        (confusion, report)
    }

    /// Table with one block per report: a row per gender and an average row.
    pub fn render_table(reports: &[&PerformanceReport]) -> String {
        let Some(first) = reports.first() else {
            return String::new();
        };
        let width = first.labels.iter().map(String::len).max().unwrap_or(0).max(7) + 2;
        let name_of = |r: &PerformanceReport| match r.alpha {
            Some(a) => format!("{} (alpha={a})", r.kind.as_str().to_uppercase()),
            None => r.kind.as_str().to_uppercase(),
        };
        let name_w = reports.iter().map(|r| name_of(r).len()).max().unwrap_or(0).max(6) + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}{:<10}", "Models", "Gender");
        for l in &first.labels {
            let _ = write!(out, "{:>width$}", title(l));
        }
        out.push('\n');
        for r in reports {
            let name = name_of(r);
            let mut rows: Vec<(String, &[Option<f64>])> = r
                .genders
                .iter()
                .map(|g| (title(g.gender.as_str()), g.per_condition.as_slice()))
                .collect();
            rows.push(("Average".into(), &r.per_condition));
            for (i, (g, vals)) in rows.into_iter().enumerate() {
                let _ = write!(out, "{:<name_w$}{:<10}", if i == 0 { name.as_str() } else { "" }, g);
                for v in vals {
                    let _ = write!(out, "{:>width$}", v.map_or_else(|| "-".to_string(), fmt_pct));
                }
                out.push('\n');
            }
        }
        for r in reports {
            let _ = writeln!(
                out,
                "Average identification performance ({}): {}%",
                r.kind,
                fmt_pct(r.average)
            );
        }
        out
    }
}

pub(crate) fn confusion_of<'a>(labels: &[String], decisions: impl Iterator<Item = &'a Decision>) -> ConfusionMatrix {
    let mut c = ConfusionMatrix::new(labels.to_vec());
    for d in decisions {
        c.record(d.truth, d.predicted);
    }
    c
}

/// Identification results at one fusion weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub per_condition: Vec<Option<f64>>,
    pub average: f64,
    /// Average over every condition except `neutral`, when that label exists.
    pub average_excluding_neutral: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// Predicted condition of each test utterance, in test order.
    pub predicted: Vec<usize>,
}

impl SweepRow {
    pub(crate) fn new(alpha: f64, confusion: ConfusionMatrix, predicted: Vec<usize>) -> Self {
        let per_condition = confusion.diagonal_percentages();
        let average_excluding_neutral = confusion.labels().iter().position(|l| l == "neutral").map(|skip| {
            let rest: Vec<Option<f64>> = per_condition
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, v)| *v)
                .collect();
            mean_present(&rest)
        });
        SweepRow {
            alpha,
            average: mean_present(&per_condition),
            per_condition,
            average_excluding_neutral,
            confusion,
            predicted,
        }
    }

    /// `alpha  average  average-excluding-neutral` series, one row per line.
    pub fn render_series(rows: &[SweepRow]) -> String {
        let mut out = String::from("alpha\taverage\taverage_excluding_neutral\n");
        for r in rows {
            let ex = r
                .average_excluding_neutral
                .map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(out, "{:.1}\t{:.1}\t{ex}", r.alpha, r.average);
        }
        out
    }
}
