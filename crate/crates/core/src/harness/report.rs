//! Summaries of experiment record files: per-strategy accuracy statistics,
//! pairwise significance tests, a text table, and a CSV emit for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentRecord;
use crate::harness::stats::{mean_std, welch_t_test};

/// Per-strategy aggregate over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub replicates: usize,
    pub mean_final_accuracy: f64,
    pub std_final_accuracy: f64,
    /// Mean accuracy per iteration, averaged across replicates (ragged
    /// replicates are truncated to the shortest).
    pub learning_curve: Vec<f64>,
}

/// Welch test between the final accuracies of two strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub t: f64,
    pub p: f64,
}

/// A full report over one or more record files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub strategies: Vec<StrategySummary>,
    pub pairwise: Vec<PairwiseTest>,
}

fn group_by_strategy(
    records: &[ExperimentRecord],
) -> BTreeMap<String, Vec<&ExperimentRecord>> {
    let mut groups: BTreeMap<String, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.strategy.clone()).or_default().push(r);
    }
    groups
}

/// Build a report from loaded records. Pairwise Welch tests that cannot run
/// (fewer than two replicates, or zero variance on both sides with different
/// means) are skipped rather than failing the whole report.
pub fn build_report(records: &[ExperimentRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to summarize".into()));
    }
    let groups = group_by_strategy(records);

    let mut strategies = Vec::with_capacity(groups.len());
    for (name, recs) in &groups {
        let finals: Vec<f64> = recs.iter().map(|r| r.final_accuracy).collect();
        let (mean, std) = mean_std(&finals);
        let min_iters = recs.iter().map(|r| r.iterations.len()).min().unwrap_or(0);
        let learning_curve = (0..min_iters)
            .map(|i| {
                recs.iter().map(|r| r.iterations[i].accuracy).sum::<f64>() / recs.len() as f64
            })
            .collect();
        strategies.push(StrategySummary {
            strategy: name.clone(),
            replicates: recs.len(),
            mean_final_accuracy: mean,
            std_final_accuracy: std,
            learning_curve,
        });
    }

    let names: Vec<&String> = groups.keys().collect();
    let mut pairwise = Vec::new();
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            let a: Vec<f64> = groups[names[i]].iter().map(|r| r.final_accuracy).collect();
            let b: Vec<f64> = groups[names[j]].iter().map(|r| r.final_accuracy).collect();
            if let Ok((t, p)) = welch_t_test(&a, &b) {
                pairwise.push(PairwiseTest {
                    a: names[i].clone(),
                    b: names[j].clone(),
                    t,
                    p,
                });
            }
        }
    }

    Ok(Report {
        strategies,
        pairwise,
    })
}

impl Report {
    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>12} {:>12}",
            "strategy", "reps", "mean acc", "std acc"
        );
        for s in &self.strategies {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>12.4} {:>12.4}",
                s.strategy, s.replicates, s.mean_final_accuracy, s.std_final_accuracy
            );
        }
        if !self.pairwise.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<20} {:<20} {:>10} {:>12}",
                "strategy a", "strategy b", "t", "p"
            );
            for p in &self.pairwise {
                let _ = writeln!(
                    out,
                    "{:<20} {:<20} {:>10.4} {:>12.3e}",
                    p.a, p.b, p.t, p.p
                );
            }
        }
        out
    }

    /// Learning curves as CSV: one row per (strategy, iteration).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,iteration,mean_accuracy\n");
        for s in &self.strategies {
            for (i, acc) in s.learning_curve.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", s.strategy, i, acc);
            }
        }
        out
    }
}
