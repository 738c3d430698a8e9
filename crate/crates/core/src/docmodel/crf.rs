use crate::autodiff::{logsumexp, CustomOp, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};

/// Plain-value CRF potentials: `transitions[a][b]` scores label `a`
/// followed by label `b`; `start` and `end` score the first and last label.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfScores {
    pub transitions: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfScores {
    pub fn zeros(k: usize) -> Self {
        CrfScores {
            transitions: vec![vec![0.0; k]; k],
            start: vec![0.0; k],
            end: vec![0.0; k],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.start.len()
    }
}

fn check_emissions(emissions: &Tensor, k: usize) -> Result<usize> {
    let (m, cols) = emissions.dims2();
    if cols != k {
        return Err(Error::Shape(format!("emissions have {cols} columns, CRF has {k} labels")));
    }
    Ok(m)
}

/// `start[y1] + sum_i r_i[y_i] + sum_i T(y_{i-1}, y_i) + end[y_m]`.
pub fn sequence_score(emissions: &Tensor, labels: &[usize], crf: &CrfScores) -> Result<f64> {
    let k = crf.num_labels();
    let m = check_emissions(emissions, k)?;
    if labels.len() != m {
        return Err(Error::Shape(format!("{} labels for {m} emission rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidArgument(format!("label index {bad} out of range")));
    }
    let mut s = crf.start[labels[0]] + crf.end[labels[m - 1]];
    for (i, &y) in labels.iter().enumerate() {
        s += emissions.get(i, y);
        if i > 0 {
            s += crf.transitions[labels[i - 1]][y];
        }
    }
    Ok(s)
}

/// Forward log-messages: `alpha[i][k]` is the log-sum of scores of all
/// prefixes ending in label `k` at position `i` (start and emission included).
fn forward_messages(emissions: &Tensor, crf: &CrfScores) -> Vec<Vec<f64>> {
    let (m, k) = emissions.dims2();
    let mut alpha = Vec::with_capacity(m);
    alpha.push((0..k).map(|y| crf.start[y] + emissions.get(0, y)).collect::<Vec<_>>());
    let mut buf = vec![0.0; k];
    for i in 1..m {
        let prev = &alpha[i - 1];
        let row = (0..k)
            .map(|y| {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = prev[j] + crf.transitions[j][y];
                }
                logsumexp(&buf) + emissions.get(i, y)
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

/// Backward log-messages: `beta[i][k]` is the log-sum of scores of all
/// suffixes after position `i` given label `k` there (end included).
fn backward_messages(emissions: &Tensor, crf: &CrfScores) -> Vec<Vec<f64>> {
    let (m, k) = emissions.dims2();
    let mut beta = vec![vec![0.0; k]; m];
    beta[m - 1] = crf.end.clone();
    let mut buf = vec![0.0; k];
    for i in (0..m - 1).rev() {
        for y in 0..k {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = crf.transitions[y][j] + emissions.get(i + 1, j) + beta[i + 1][j];
            }
            beta[i][y] = logsumexp(&buf);
        }
    }
    beta
}

/// Log of the sum over all `K^m` label sequences of `exp(score)`, by the
/// forward algorithm.
pub fn log_partition(emissions: &Tensor, crf: &CrfScores) -> Result<f64> {
    let m = check_emissions(emissions, crf.num_labels())?;
    let alpha = forward_messages(emissions, crf);
    let last: Vec<f64> = alpha[m - 1].iter().zip(&crf.end).map(|(a, e)| a + e).collect();
    Ok(logsumexp(&last))
}

/// Highest-scoring label sequence. Ties go to the lower label index, both
/// for the final label and at every backpointer.
pub fn viterbi_decode(emissions: &Tensor, crf: &CrfScores) -> Result<Vec<usize>> {
    let k = crf.num_labels();
    let m = check_emissions(emissions, k)?;
    let mut delta: Vec<f64> = (0..k).map(|y| crf.start[y] + emissions.get(0, y)).collect();
    let mut back = vec![vec![0usize; k]; m];
    for (i, pointers) in back.iter_mut().enumerate().skip(1) {
        let mut next = vec![0.0; k];
        for y in 0..k {
            let mut best = 0;
            for j in 1..k {
                if delta[j] + crf.transitions[j][y] > delta[best] + crf.transitions[best][y] {
                    best = j;
                }
            }
            pointers[y] = best;
            next[y] = delta[best] + crf.transitions[best][y] + emissions.get(i, y);
        }
        delta = next;
    }
    let finals: Vec<f64> = delta.iter().zip(&crf.end).map(|(d, e)| d + e).collect();
    let mut path = vec![crate::autodiff::argmax(&finals)];
    for i in (1..m).rev() {
        path.push(back[i][*path.last().unwrap()]);
    }
    path.reverse();
    Ok(path)
}

/// Learned CRF potentials. Without start/end vectors the score reduces to
/// emissions plus transitions.
#[derive(Debug, Clone)]
pub struct CrfParams {
    pub transitions: ParamId,
    pub start_end: Option<(ParamId, ParamId)>,
    pub num_labels: usize,
}

impl CrfParams {
    pub fn new(store: &mut ParamStore, prefix: &str, num_labels: usize, start_end: bool) -> Result<Self> {
        let transitions = store.add(format!("{prefix}.T"), Tensor::zeros(&[num_labels, num_labels]))?;
        let start_end = if start_end {
            Some((
                store.add(format!("{prefix}.start"), Tensor::zeros(&[num_labels]))?,
                store.add(format!("{prefix}.end"), Tensor::zeros(&[num_labels]))?,
            ))
        } else {
            None
        };
        Ok(CrfParams {
            transitions,
            start_end,
            num_labels,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.transitions];
        if let Some((s, e)) = self.start_end {
            p.extend([s, e]);
        }
        p
    }

    pub fn scores(&self, store: &ParamStore) -> CrfScores {
        let k = self.num_labels;
        let (start, end) = match self.start_end {
            Some((s, e)) => (store.value(s).data().to_vec(), store.value(e).data().to_vec()),
            None => (vec![0.0; k], vec![0.0; k]),
        };
        CrfScores {
            transitions: store.value(self.transitions).to_rows(),
            start,
            end,
        }
    }
}

fn scores_from_tensors(t: &Tensor, start: &Tensor, end: &Tensor) -> CrfScores {
    CrfScores {
        transitions: t.to_rows(),
        start: start.data().to_vec(),
        end: end.data().to_vec(),
    }
}

/// Forward-algorithm log-partition with a marginal-based adjoint.
/// Inputs: emissions (`m x K`), transitions (`K x K`), start, end.
#[derive(Debug)]
struct LogPartitionOp;

impl CustomOp for LogPartitionOp {
    fn name(&self) -> &str {
        "crf_log_partition"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let (r, t, start, end) = (inputs[0], inputs[1], inputs[2], inputs[3]);
        let crf = scores_from_tensors(t, start, end);
        let z = output.data()[0];
        let g = grad_output.data()[0];
        let (m, k) = r.dims2();
        let alpha = forward_messages(r, &crf);
        let beta = backward_messages(r, &crf);
        let mut gr = vec![0.0; m * k];
        for i in 0..m {
            for y in 0..k {
                gr[i * k + y] = g * (alpha[i][y] + beta[i][y] - z).exp();
            }
        }
        let mut gt = vec![0.0; k * k];
        for i in 1..m {
            for a in 0..k {
                for b in 0..k {
                    let lp = alpha[i - 1][a] + crf.transitions[a][b] + r.get(i, b) + beta[i][b] - z;
                    gt[a * k + b] += g * lp.exp();
                }
            }
        }
        let gs: Vec<f64> = (0..k).map(|y| gr[y]).collect();
        let ge: Vec<f64> = (0..k).map(|y| gr[(m - 1) * k + y]).collect();
        Ok(vec![
            Some(Tensor::unchecked(m, k, gr)),
            Some(Tensor::unchecked(k, k, gt)),
            Some(Tensor::unchecked(k, 1, gs)),
            Some(Tensor::unchecked(k, 1, ge)),
        ])
    }
}

fn crf_nodes(tape: &mut Tape, crf: &CrfParams) -> (NodeId, NodeId, NodeId) {
    let t = tape.param(crf.transitions);
    let (s, e) = match crf.start_end {
        Some((s, e)) => (tape.param(s), tape.param(e)),
        None => {
            let z = Tensor::zeros(&[crf.num_labels, 1]);
            (tape.constant(z.clone()), tape.constant(z))
        }
    };
    (t, s, e)
}

/// Taped log-partition of `emissions` (`m x K`).
pub fn crf_log_partition(tape: &mut Tape, emissions: NodeId, crf: &CrfParams) -> Result<NodeId> {
    let (t, s, e) = crf_nodes(tape, crf);
    let scores = scores_from_tensors(tape.value(t), tape.value(s), tape.value(e));
    let z = log_partition(tape.value(emissions), &scores)?;
    let value = Tensor::from_op(1, 1, vec![z], "crf_log_partition")?;
    Ok(tape.custom(Box::new(LogPartitionOp), &[emissions, t, s, e], value))
}

/// Taped score of a fixed label sequence.
pub fn crf_sequence_score(tape: &mut Tape, emissions: NodeId, labels: &[usize], crf: &CrfParams) -> Result<NodeId> {
    let (m, k) = tape.value(emissions).dims2();
    if labels.len() != m || m == 0 {
        return Err(Error::Shape(format!("{} labels for {m} emission rows", labels.len())));
    }
    if k != crf.num_labels || labels.iter().any(|&y| y >= k) {
        return Err(Error::InvalidArgument("label index out of range".into()));
    }
    let (t, s, e) = crf_nodes(tape, crf);
    let em: Vec<(usize, usize)> = labels.iter().copied().enumerate().collect();
    let tr: Vec<(usize, usize)> = labels.windows(2).map(|w| (w[0], w[1])).collect();
    let mut total = tape.pick(emissions, &em)?;
    if !tr.is_empty() {
        let ts = tape.pick(t, &tr)?;
        total = tape.add(total, ts)?;
    }
    let ss = tape.pick(s, &[(labels[0], 0)])?;
    let es = tape.pick(e, &[(labels[m - 1], 0)])?;
    total = tape.add(total, ss)?;
    tape.add(total, es)
}

/// Negative log-likelihood of the gold sequence: log-partition minus gold
/// score.
pub fn crf_nll(tape: &mut Tape, emissions: NodeId, gold: &[usize], crf: &CrfParams) -> Result<NodeId> {
    let gold_score = crf_sequence_score(tape, emissions, gold, crf)?;
    let z = crf_log_partition(tape, emissions, crf)?;
    tape.sub(z, gold_score)
}
