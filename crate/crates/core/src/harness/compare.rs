//! Side-by-side error statistics of several experiments.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentConfig, ExperimentOutcome};
use super::report::{ErrorReport, THRESHOLDS};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    Column(usize),
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub unit: String,
    pub values: Vec<f64>,
    pub lower_is_better: bool,
}

impl ComparisonRow {
    pub fn winner(&self) -> Winner {
        let best = if self.lower_is_better {
            self.values.iter().copied().fold(f64::INFINITY, f64::min)
        } else {
            self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let at_best: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i] == best).collect();
        match at_best.as_slice() {
            [i] => Winner::Column(*i),
            _ => Winner::Tie,
        }
    }

    /// Largest minus smallest value.
    pub fn spread(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Rows RMS, Max and the three accuracy percentages, one column per report.
pub fn compare(reports: &[(String, &ErrorReport)]) -> ComparisonTable {
    let col = |f: &dyn Fn(&ErrorReport) -> f64| reports.iter().map(|(_, r)| f(r)).collect();
    let mut rows = vec![
        ComparisonRow { metric: "RMS".into(), unit: "m".into(), values: col(&|r| r.rms_2d), lower_is_better: true },
        ComparisonRow { metric: "Max".into(), unit: "m".into(), values: col(&|r| r.max_2d), lower_is_better: true },
    ];
    for (k, (label, _)) in THRESHOLDS.iter().enumerate() {
        rows.push(ComparisonRow {
            metric: (*label).into(),
            unit: "%".into(),
            values: col(&|r| r.percentages()[k]),
            lower_is_better: false,
        });
    }
    ComparisonTable { columns: reports.iter().map(|(n, _)| n.clone()).collect(), rows }
}

/// Runs each experiment, then tabulates their pooled reports.
pub fn compare_experiments(
    configs: &[ExperimentConfig],
) -> Result<(ComparisonTable, Vec<ExperimentOutcome>), HarnessError> {
    let outcomes: Vec<ExperimentOutcome> = configs.iter().map(run_experiment).collect::<Result<_, _>>()?;
    let named: Vec<(String, &ErrorReport)> =
        configs.iter().zip(&outcomes).map(|(c, o)| (c.name.clone(), &o.report)).collect();
    Ok((compare(&named), outcomes))
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.values
                    .iter()
                    .map(|v| if r.unit == "%" { format!("{v:.1} %") } else { format!("{v:.3} m") })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|c| cells.iter().map(|r| r[c].len()).chain([self.columns[c].len()]).max().unwrap_or(0))
            .collect();
        let label_w = self.rows.iter().map(|r| r.metric.len()).max().unwrap_or(0).max(6);
        write!(f, "{:<label_w$}", "Error")?;
        for (c, w) in self.columns.iter().zip(&widths) {
            write!(f, "  {c:>w$}")?;
        }
        writeln!(f, "  best")?;
        for (row, vals) in self.rows.iter().zip(&cells) {
            write!(f, "{:<label_w$}", row.metric)?;
            for (v, w) in vals.iter().zip(&widths) {
                write!(f, "  {v:>w$}")?;
            }
            match row.winner() {
                Winner::Column(i) => writeln!(f, "  {}", self.columns[i])?,
                Winner::Tie => writeln!(f, "  tie")?,
            }
        }
        Ok(())
    }
}
