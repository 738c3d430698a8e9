//! Confusion matrices and per-class / support-weighted precision, recall
//! and F1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

const K: usize = Label::COUNT;

/// Counts indexed `[actual][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; K]; K]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, actual: Label, predicted: Label) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for a in 0..K {
            for p in 0..K {
                self.counts[a][p] += other.counts[a][p];
            }
        }
    }

    pub fn get(&self, actual: Label, predicted: Label) -> u64 {
        self.counts[actual.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    /// Gold support of class `i`.
    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Number of predictions of class `i`.
    pub fn col_sum(&self, i: usize) -> u64 {
        self.counts.iter().map(|row| row[i]).sum()
    }

    /// Header row and column carry label names; rows are actual labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for l in Label::ALL {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for (i, l) in Label::ALL.iter().enumerate() {
            out.push_str(l.as_str());
            for c in self.counts[i] {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(golds: &[Label], preds: &[Label]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::new();
    for (&g, &p) in golds.iter().zip(preds) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let classes: Vec<ClassMetrics> = Label::ALL
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let precision = ratio(cm.counts[i][i], cm.col_sum(i));
            let recall = ratio(cm.counts[i][i], cm.row_sum(i));
            ClassMetrics {
                label,
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cm.row_sum(i),
            }
        })
        .collect();
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
    };
    Ok(EvalReport {
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        accuracy: ratio(cm.trace(), total),
        total,
        classes,
    })
}

/// `x` in [0, 1] as a percentage with two decimals, rounding halves up.
pub fn percent(x: f64) -> String {
    let hundredths = (x * 10_000.0 + 0.5 + 1e-9).floor() as i64;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

impl EvalReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.classes[label.index()]
    }

    /// Aligned text table: one row per class plus the weighted average.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14}{:>10}{:>10}{:>10}{:>10}\n",
            "label", "precision", "recall", "f1", "support"
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<14}{:>10}{:>10}{:>10}{:>10}",
                c.label.as_str(),
                percent(c.precision),
                percent(c.recall),
                percent(c.f1),
                c.support
            );
        }
        let _ = writeln!(
            out,
            "{:<14}{:>10}{:>10}{:>10}{:>10}",
            "weighted avg",
            percent(self.weighted_precision),
            percent(self.weighted_recall),
            percent(self.weighted_f1),
            self.total
        );
        let _ = writeln!(out, "accuracy {}", percent(self.accuracy));
        out
    }

    /// Flat JSON object, e.g. `{"weighted_f1": 0.93, "BACKGROUND.precision": ...}`.
    pub fn to_key_values(&self) -> String {
        let mut map = serde_json::Map::new();
        for c in &self.classes {
            let name = c.label.as_str();
            map.insert(format!("{name}.precision"), c.precision.into());
            map.insert(format!("{name}.recall"), c.recall.into());
            map.insert(format!("{name}.f1"), c.f1.into());
            map.insert(format!("{name}.support"), c.support.into());
        }
        map.insert("weighted_precision".into(), self.weighted_precision.into());
        map.insert("weighted_recall".into(), self.weighted_recall.into());
        map.insert("weighted_f1".into(), self.weighted_f1.into());
        map.insert("accuracy".into(), self.accuracy.into());
        map.insert("total".into(), self.total.into());
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("plain JSON values serialize")
    }
}
