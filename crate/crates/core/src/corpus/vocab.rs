use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::Abstract;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/index bijection with reserved `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    min_count: usize,
}

impl Vocabulary {
    fn with_reserved(min_count: usize) -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
            min_count,
        };
        v.push(PAD_TOKEN);
        v.push(UNK_TOKEN);
        v
    }

    fn push(&mut self, token: &str) {
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
    }

    /// Tokens with corpus frequency `>= min_count`, ordered by descending
    /// frequency then lexicographically.
    pub fn build(abstracts: &[Abstract], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be >= 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for abs in abstracts {
            for s in &abs.sentences {
                for t in &s.tokens {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut vocab = Self::with_reserved(min_count);
        for (t, _) in entries {
            vocab.push(t);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Index of `token`, or [`UNK`].
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    /// One `<token>\t<index>` line per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{t}\t{i}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut vocab = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
            min_count: 1,
        };
        for (i, line) in text.lines().enumerate() {
            let (tok, idx) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "vocabulary line without a tab"))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad index {idx:?}")))?;
            if idx != vocab.tokens.len() {
                return Err(Error::parse(
                    i + 1,
                    format!("expected index {}, found {idx}", vocab.tokens.len()),
                ));
            }
            if vocab.index.contains_key(tok) {
                return Err(Error::parse(i + 1, format!("duplicate token {tok:?}")));
            }
            vocab.push(tok);
        }
        if vocab.token(PAD) != Some(PAD_TOKEN) || vocab.token(UNK) != Some(UNK_TOKEN) {
            return Err(Error::Data("vocabulary must start with <pad> and <unk>".into()));
        }
        Ok(vocab)
    }
}
