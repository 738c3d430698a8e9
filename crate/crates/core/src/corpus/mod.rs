//! Corpus parsing, tokenization, vocabularies and pretrained embeddings.

mod embeddings;
mod label;
mod rct;
mod tokenize;
mod vocab;

pub use embeddings::{embeddings_from_text, load_embeddings, parse_word2vec_text, LoadedEmbeddings};
pub use label::{Label, UnknownLabel};
pub use rct::{parse_rct_file, write_rct, write_rct_with_labels, Abstract, Sentence};
pub use tokenize::{tokenize, NUM_TOKEN};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Token indices for every sentence; unknown tokens map to [`UNK`].
pub fn encode_abstract(abs: &Abstract, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    abs.sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| vocab.lookup(t)).collect())
        .collect()
}

pub fn read_rct_path(path: &Path) -> Result<Vec<Abstract>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_rct_file(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_maps_oov_to_unk() {
        let abs = parse_rct_file("###1\nMETHODS\ta zzz\n").unwrap();
        let train = parse_rct_file("###2\nMETHODS\ta\n").unwrap();
        let vocab = Vocabulary::build(&train, 1).unwrap();
        let enc = encode_abstract(&abs[0], &vocab);
        assert_eq!(enc, vec![vec![2, UNK]]);
        assert_eq!(vocab.decode(&enc[0]), ["a", UNK_TOKEN]);
    }
}
