//! Precision, recall, F1 and accuracy over relation predictions, plus the
//! per-epoch report table.
//!
//! The no-relation class is excluded from P/R/F1 (predicting NA is "no
//! extraction"); accuracy counts every class. Any 0/0 ratio is reported as 0.

use serde::{Deserialize, Serialize};

use crate::corpus::RelationSchema;
use crate::error::{DocreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub loss: f64,
}

impl SplitMetrics {
    pub fn from_scores(s: Scores, loss: f64) -> Self {
        SplitMetrics {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            accuracy: s.accuracy,
            loss,
        }
    }
}

/// One epoch's metrics, mirroring the train/val/test table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train: SplitMetrics,
    pub val: Option<SplitMetrics>,
    pub test: Option<SplitMetrics>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Scores predictions against golds with the given NA class index.
pub fn score_with_na(
    predictions: &[usize],
    golds: &[usize],
    na_id: usize,
    averaging: Averaging,
) -> Result<Scores> {
    if predictions.len() != golds.len() {
        return Err(DocreError::Input(format!(
            "prediction/gold length mismatch: {} vs {}",
            predictions.len(),
            golds.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count();
    let accuracy = ratio(correct as f64, predictions.len() as f64);

    let mut classes: Vec<usize> = predictions.iter().chain(golds).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    classes.retain(|&c| c != na_id);

    let mut tp_total = 0usize;
    let mut fp_total = 0usize;
    let mut fn_total = 0usize;
    let mut per_class = Vec::new();
    for &c in &classes {
        let tp = predictions
            .iter()
            .zip(golds)
            .filter(|&(&p, &g)| p == c && g == c)
            .count();
        let fp = predictions
            .iter()
            .zip(golds)
            .filter(|&(&p, &g)| p == c && g != c)
            .count();
        let fnn = predictions
            .iter()
            .zip(golds)
            .filter(|&(&p, &g)| p != c && g == c)
            .count();
        tp_total += tp;
        fp_total += fp;
        fn_total += fnn;
        let p = ratio(tp as f64, (tp + fp) as f64);
        let r = ratio(tp as f64, (tp + fnn) as f64);
        per_class.push((p, r, f1_of(p, r)));
    }

    let (precision, recall, f1) = match averaging {
        Averaging::Micro => {
            let p = ratio(tp_total as f64, (tp_total + fp_total) as f64);
            let r = ratio(tp_total as f64, (tp_total + fn_total) as f64);
            (p, r, f1_of(p, r))
        }
        Averaging::Macro => {
            if per_class.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                let n = per_class.len() as f64;
                let p = per_class.iter().map(|x| x.0).sum::<f64>() / n;
                let r = per_class.iter().map(|x| x.1).sum::<f64>() / n;
                let f = per_class.iter().map(|x| x.2).sum::<f64>() / n;
                (p, r, f)
            }
        }
    };
    Ok(Scores {
        precision,
        recall,
        f1,
        accuracy,
    })
}

/// Scores against a relation schema (NA = schema's na_id).
pub fn score(
    predictions: &[usize],
    golds: &[usize],
    schema: &RelationSchema,
    averaging: Averaging,
) -> Result<Scores> {
    score_with_na(predictions, golds, schema.na_id, averaging)
}

fn fmt_cell(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Renders epoch reports as a text table; values are ×100, one decimal.
pub fn format_report(reports: &[EpochReport]) -> String {
    let mut out = String::new();
    let header = [
        "Epoch", "P(Train)", "R(Train)", "F1(Train)", "Loss(Train)", "Acc(Train)",
        "P(Val)", "R(Val)", "F1(Val)", "Loss(Val)", "Acc(Val)",
        "P(Test)", "R(Test)", "F1(Test)", "Loss(Test)", "Acc(Test)",
    ];
    out.push_str(&header.join("\t"));
    out.push('\n');
    for r in reports {
        let mut cells = vec![format!("{}", r.epoch)];
        let mut push_split = |s: Option<&SplitMetrics>| match s {
            Some(m) => {
                cells.push(fmt_cell(m.precision));
                cells.push(fmt_cell(m.recall));
                cells.push(fmt_cell(m.f1));
                cells.push(fmt_cell(m.loss));
                cells.push(fmt_cell(m.accuracy));
            }
            None => cells.extend((0..5).map(|_| "-".to_string())),
        };
        push_split(Some(&r.train));
        push_split(r.val.as_ref());
        push_split(r.test.as_ref());
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}
