//! word2vec text format: a `<count> <dim>` header, then one
//! `<word> <f1> ... <fd>` line per word.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::corpus::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::layers::glorot_bound;

/// Embedding matrix for a vocabulary plus the fraction of non-reserved
/// vocabulary tokens found in the file.
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub matrix: Tensor,
    pub coverage: f64,
}

pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<LoadedEmbeddings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    embeddings_from_text(&text, vocab, dim, rng)
}

/// Parse word2vec text into a `word -> vector` map, keeping only words in
/// `keep` when given. The first occurrence of a word wins.
pub fn parse_word2vec_text(
    text: &str,
    dim: usize,
    keep: Option<&Vocabulary>,
) -> Result<HashMap<String, Vec<f64>>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing `<count> <dim>` header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [_, file_dim] = fields.as_slice() else {
        return Err(Error::parse(1, "header must be `<count> <dim>`"));
    };
    let file_dim: usize = file_dim
        .parse()
        .map_err(|_| Error::parse(1, format!("bad dimension {file_dim:?}")))?;
    if file_dim != dim {
        return Err(Error::Data(format!(
            "embedding dimension mismatch: file has {file_dim}, expected {dim}"
        )));
    }

    let mut out = HashMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line");
        if keep.is_some_and(|v| v.get(word).is_none()) || out.contains_key(word) {
            continue;
        }
        let values = parts
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(i + 1, format!("unparseable float {p:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                i + 1,
                format!("dimension mismatch: {} values, expected {dim}", values.len()),
            ));
        }
        out.insert(word.to_string(), values);
    }
    Ok(out)
}

pub fn embeddings_from_text(
    text: &str,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<LoadedEmbeddings> {
    let vectors = parse_word2vec_text(text, dim, Some(vocab))?;
    let bound = glorot_bound(&[vocab.len(), dim]);
    let mut data = Vec::with_capacity(vocab.len() * dim);
    let mut found = 0usize;
    for (i, tok) in vocab.tokens().iter().enumerate() {
        let reserved = i == PAD || i == UNK;
        match vectors.get(tok.as_str()).filter(|_| !reserved) {
            Some(v) => {
                found += 1;
                data.extend_from_slice(v);
            }
            None => data.extend((0..dim).map(|_| rng.gen_range(-bound..=bound))),
        }
    }
    let regular = vocab.len().saturating_sub(2);
    let coverage = if regular == 0 {
        1.0
    } else {
        found as f64 / regular as f64
    };
    Ok(LoadedEmbeddings {
        matrix: Tensor::matrix(vocab.len(), dim, data)?,
        coverage,
    })
}
