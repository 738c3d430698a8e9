use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::corpus::Label;
use crate::error::{Error, Result};

/// Hard constraints on label sequences: which label may follow which, plus
/// a set of terminal labels that may only be followed by themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRules {
    /// `allowed[a][b]`: label `b` may directly follow label `a`.
    pub allowed: Vec<Vec<bool>>,
    pub terminal: Vec<Label>,
}

impl OrderRules {
    /// Non-decreasing in the canonical order, with CONCLUSIONS terminal.
    pub fn monotone() -> Self {
        let k = Label::COUNT;
        OrderRules {
            allowed: (0..k).map(|a| (0..k).map(|b| b >= a).collect()).collect(),
            terminal: vec![Label::Conclusions],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.allowed.len()
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        if from != to && self.terminal.iter().any(|t| t.index() == from) {
            return false;
        }
        self.allowed[from][to]
    }

    /// Self-transitions must be allowed so every single-label run is legal.
    pub fn validate(&self) -> Result<()> {
        let k = self.allowed.len();
        if k == 0 || self.allowed.iter().any(|row| row.len() != k) {
            return Err(Error::Config("rule matrix must be square and non-empty".into()));
        }
        if (0..k).any(|a| !self.allowed[a][a]) {
            return Err(Error::Config("rule matrix must allow self-transitions".into()));
        }
        Ok(())
    }

    pub fn sequence_allowed(&self, labels: &[usize]) -> bool {
        labels.windows(2).all(|w| self.allows(w[0], w[1]))
    }
}

impl Default for OrderRules {
    fn default() -> Self {
        Self::monotone()
    }
}

/// Maximize `sum_i scores[i][y_i]` over sequences the rules allow. Ties go
/// to the lower label index.
pub fn constrained_decode(scores: &Tensor, rules: &OrderRules) -> Result<Vec<usize>> {
    let (m, k) = scores.dims2();
    if k != rules.num_labels() {
        return Err(Error::Shape(format!("scores have {k} columns, rules cover {}", rules.num_labels())));
    }
    let mut best: Vec<Option<f64>> = (0..k).map(|y| Some(scores.get(0, y))).collect();
    let mut back = vec![vec![0usize; k]; m];
    for (i, pointers) in back.iter_mut().enumerate().skip(1) {
        let mut next = vec![None; k];
        for y in 0..k {
            let mut arg: Option<(usize, f64)> = None;
            for (j, b) in best.iter().enumerate() {
                if let Some(b) = *b {
                    if rules.allows(j, y) && arg.is_none_or(|(_, v)| b > v) {
                        arg = Some((j, b));
                    }
                }
            }
            if let Some((j, v)) = arg {
                pointers[y] = j;
                next[y] = Some(v + scores.get(i, y));
            }
        }
        best = next;
    }
    let mut last: Option<(usize, f64)> = None;
    for (y, b) in best.iter().enumerate() {
        if let Some(b) = *b {
            if last.is_none_or(|(_, v)| b > v) {
                last = Some((y, b));
            }
        }
    }
    let (y, _) = last.ok_or_else(|| Error::Config("order rules admit no label sequence".into()))?;
    let mut path = vec![y];
    for i in (1..m).rev() {
        path.push(back[i][*path.last().unwrap()]);
    }
    path.reverse();
    Ok(path)
}
