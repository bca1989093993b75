//! Aggregation of a result table into per-method curves and a final-loss table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::io::{create_dir, write_rows, ResultRow};
use crate::seeds::derive_seed;
use crate::stats::{bootstrap_median_ci, median, quantile};

/// `(method, ε bits, stepsize bits, B bits or u64::MAX)`; all values are
/// positive so bit order is numeric order.
type CellKey = (String, u64, u64, u64);

fn cell_key(r: &ResultRow) -> CellKey {
    (
        r.method.clone(),
        r.epsilon.to_bits(),
        r.stepsize.to_bits(),
        r.clip_bound.map_or(u64::MAX, f64::to_bits),
    )
}

/// Loss trajectories of one cell: repetition → iteration → loss.
#[derive(Debug, Clone, Default)]
pub struct CellRuns {
    pub runs: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl CellRuns {
    /// Loss at the last evaluated iteration of each repetition.
    pub fn finals(&self) -> BTreeMap<usize, f64> {
        self.runs
            .iter()
            .filter_map(|(&rep, it)| it.values().next_back().map(|&l| (rep, l)))
            .collect()
    }

    pub fn median_final(&self) -> f64 {
        median(&self.finals().values().copied().collect::<Vec<_>>())
    }
}

pub fn group_cells(rows: &[ResultRow]) -> BTreeMap<CellKey, CellRuns> {
    let mut cells: BTreeMap<CellKey, CellRuns> = BTreeMap::new();
    for r in rows {
        cells
            .entry(cell_key(r))
            .or_default()
            .runs
            .entry(r.rep)
            .or_default()
            .insert(r.iteration, r.loss);
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub method: String,
    pub epsilon: f64,
    pub stepsize: f64,
    pub clip_bound: Option<f64>,
    pub repetitions: usize,
    pub median_final_loss: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// 1 = lowest median final loss among methods at this `ε`.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epsilon: f64,
    pub stepsize: f64,
    pub clip_bound: Option<f64>,
    pub iteration: usize,
    pub median: f64,
    /// Percentile-bootstrap 95% interval for the median.
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// 2.5% and 97.5% quantiles of the runs themselves.
    pub p025: f64,
    pub p975: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    /// Best `(stepsize, B)` per `(method, ε)`, by median final loss.
    pub best: Vec<FinalRow>,
    pub curves: BTreeMap<String, Vec<CurveRow>>,
    /// Final loss per repetition of each selected cell, keyed like `best`.
    pub finals: Vec<BTreeMap<usize, f64>>,
}

impl Summary {
    pub fn find(&self, method: &str, epsilon: f64) -> Option<(&FinalRow, &BTreeMap<usize, f64>)> {
        self.best
            .iter()
            .zip(&self.finals)
            .find(|(b, _)| b.method == method && b.epsilon == epsilon)
    }
}

pub fn summarize(rows: &[ResultRow], resamples: usize, seed: u64) -> Result<Summary> {
    if rows.is_empty() {
        return Err(BenchError::config("result table is empty"));
    }
    let cells = group_cells(rows);
    // best cell per (method, ε); ties keep the smaller stepsize / bound
    let mut best: BTreeMap<(String, u64), (&CellKey, &CellRuns, f64)> = BTreeMap::new();
    for (key, runs) in &cells {
        let m = runs.median_final();
        let slot = (key.0.clone(), key.1);
        match best.get(&slot) {
            Some((_, _, cur)) if *cur <= m => {}
            _ => {
                best.insert(slot, (key, runs, m));
            }
        }
    }

    let mut summary = Summary::default();
    for ((method, eps_bits), (key, runs, med)) in &best {
        let epsilon = f64::from_bits(*eps_bits);
        let stepsize = f64::from_bits(key.2);
        let clip_bound = (key.3 != u64::MAX).then(|| f64::from_bits(key.3));
        let finals = runs.finals();
        let fv: Vec<f64> = finals.values().copied().collect();
        let tag = format!("{epsilon:e}");
        let (ci_lo, ci_hi) = bootstrap_median_ci(&fv, resamples, 0.95, derive_seed(&[&seed.to_string(), method, &tag, "final"]));
        summary.best.push(FinalRow {
            method: method.clone(),
            epsilon,
            stepsize,
            clip_bound,
            repetitions: finals.len(),
            median_final_loss: *med,
            ci_lo,
            ci_hi,
            rank: 0,
        });
        summary.finals.push(finals);

        let mut by_iter: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for it in runs.runs.values() {
            for (&k, &l) in it {
                by_iter.entry(k).or_default().push(l);
            }
        }
        let curve = summary.curves.entry(method.clone()).or_default();
        for (k, losses) in by_iter {
            let (lo, hi) = bootstrap_median_ci(
                &losses,
                resamples,
                0.95,
                derive_seed(&[&seed.to_string(), method, &tag, &k.to_string()]),
            );
            curve.push(CurveRow {
                epsilon,
                stepsize,
                clip_bound,
                iteration: k,
                median: median(&losses),
                ci_lo: lo,
                ci_hi: hi,
                p025: quantile(&losses, 0.025),
                p975: quantile(&losses, 0.975),
            });
        }
    }

    // rank methods within each ε
    let mut order: Vec<usize> = (0..summary.best.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&summary.best[a], &summary.best[b]);
        x.epsilon
            .total_cmp(&y.epsilon)
            .then(x.median_final_loss.total_cmp(&y.median_final_loss))
    });
    let mut prev_eps = f64::NAN;
    let mut rank = 0;
    for i in order {
        if summary.best[i].epsilon != prev_eps {
            prev_eps = summary.best[i].epsilon;
            rank = 0;
        }
        rank += 1;
        summary.best[i].rank = rank;
    }
    Ok(summary)
}

/// Writes `curves/<method>.csv` and `final.csv` under `dir`.
pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    let curves = dir.join("curves");
    create_dir(&curves)?;
    for (method, rows) in &summary.curves {
        write_rows(&curves.join(format!("{method}.csv")), rows)?;
    }
    let mut best = summary.best.clone();
    best.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon).then(a.rank.cmp(&b.rank)));
    write_rows(&dir.join("final.csv"), &best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, eps: f64, stepsize: f64, rep: usize, iteration: usize, loss: f64) -> ResultRow {
        ResultRow {
            method: method.into(),
            epsilon: eps,
            stepsize,
            clip_bound: Some(1.0),
            rep,
            seed: 0,
            iteration,
            loss,
        }
    }

    #[test]
    fn picks_best_stepsize_by_median_final_loss() {
        let mut rows = Vec::new();
        for rep in 0..3 {
            rows.push(row("a", 1.0, 0.1, rep, 1, 5.0));
            rows.push(row("a", 1.0, 0.1, rep, 2, 3.0 + rep as f64));
            rows.push(row("a", 1.0, 0.5, rep, 1, 5.0));
            rows.push(row("a", 1.0, 0.5, rep, 2, 1.0 + rep as f64));
            rows.push(row("b", 1.0, 0.1, rep, 1, 5.0));
            rows.push(row("b", 1.0, 0.1, rep, 2, 2.5));
        }
        let s = summarize(&rows, 200, 0).unwrap();
        let (a, finals) = s.find("a", 1.0).unwrap();
        assert_eq!(a.stepsize, 0.5);
        assert_eq!(a.median_final_loss, 2.0);
        assert_eq!(finals.len(), 3);
        assert_eq!(a.rank, 1);
        assert_eq!(s.find("b", 1.0).unwrap().0.rank, 2);
        assert_eq!(s.curves["a"].len(), 2);
        assert_eq!(s.curves["a"][1].median, 2.0);
    }

    #[test]
    fn single_method_writes_one_curve() {
        let rows: Vec<ResultRow> = (1..=5).map(|k| row("only", 2.0, 0.1, 0, k, 1.0 / k as f64)).collect();
        let s = summarize(&rows, 10, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_summary(dir.path(), &s).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path().join("curves")).unwrap().collect();
        assert_eq!(files.len(), 1);
        assert!(dir.path().join("final.csv").exists());
    }

    #[test]
    fn empty_table_rejected() {
        assert!(summarize(&[], 10, 0).is_err());
    }
}
