//! Reader and writer for the PubMed RCT text layout:
//!
//! ```text
//! ###24293578
//! OBJECTIVE\tTo investigate ...
//! METHODS\tA total of ...
//!
//! ###24854809
//! ...
//! ```
//!
//! An empty label field (`\t<sentence>`) marks an unlabeled sentence.

use crate::corpus::{tokenize, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// Text exactly as it appeared after the tab.
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub gold: Option<Label>,
}

impl Sentence {
    pub fn new(raw_text: impl Into<String>, gold: Option<Label>) -> Result<Self> {
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text);
        if tokens.is_empty() {
            return Err(Error::Data(format!(
                "sentence {raw_text:?} has no tokens"
            )));
        }
        Ok(Sentence {
            raw_text,
            tokens,
            gold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstract {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Abstract {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Gold labels, or `None` if any sentence is unlabeled.
    pub fn gold_labels(&self) -> Option<Vec<Label>> {
        self.sentences.iter().map(|s| s.gold).collect()
    }
}

pub fn parse_rct_file(text: &str) -> Result<Vec<Abstract>> {
    let mut out = Vec::new();
    let mut current: Option<(Abstract, usize)> = None;

    fn finish(current: Option<(Abstract, usize)>, out: &mut Vec<Abstract>) -> Result<()> {
        if let Some((abs, header_line)) = current {
            if abs.sentences.is_empty() {
                return Err(Error::parse(
                    header_line,
                    format!("abstract {} has no sentences", abs.id),
                ));
            }
            out.push(abs);
        }
        Ok(())
    }

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(id) = line.strip_prefix("###") {
            let id = id.trim();
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(Error::parse(lineno, format!("malformed header {line:?}")));
            }
            finish(current.take(), &mut out)?;
            current = Some((
                Abstract {
                    id: id.to_string(),
                    sentences: Vec::new(),
                },
                lineno,
            ));
            continue;
        }
        let Some((label, text)) = line.split_once('\t') else {
            return Err(Error::parse(lineno, "sentence line without a tab"));
        };
        let Some((abs, _)) = current.as_mut() else {
            return Err(Error::parse(lineno, "sentence before the first ### header"));
        };
        let gold = if label.trim().is_empty() {
            None
        } else {
            Some(
                label
                    .parse::<Label>()
                    .map_err(|e| Error::parse(lineno, e.to_string()))?,
            )
        };
        let sentence = Sentence::new(text, gold).map_err(|e| Error::parse(lineno, e.to_string()))?;
        abs.sentences.push(sentence);
    }
    finish(current, &mut out)?;
    Ok(out)
}

/// Inverse of [`parse_rct_file`] for well-formed input: canonical label
/// spellings, one blank line after each abstract.
pub fn write_rct(abstracts: &[Abstract]) -> String {
    let mut out = String::new();
    for abs in abstracts {
        write_abstract(&mut out, abs, |s| s.gold);
    }
    out
}

/// Like [`write_rct`] but with `labels[i][j]` in place of the gold label.
pub fn write_rct_with_labels(abstracts: &[Abstract], labels: &[Vec<Label>]) -> String {
    let mut out = String::new();
    for (abs, labs) in abstracts.iter().zip(labels) {
        let mut it = labs.iter();
        write_abstract(&mut out, abs, |_| it.next().copied());
    }
    out
}

fn write_abstract(out: &mut String, abs: &Abstract, mut label: impl FnMut(&Sentence) -> Option<Label>) {
    out.push_str("###");
    out.push_str(&abs.id);
    out.push('\n');
    for s in &abs.sentences {
        if let Some(l) = label(s) {
            out.push_str(l.as_str());
        }
        out.push('\t');
        out.push_str(&s.raw_text);
        out.push('\n');
    }
    out.push('\n');
}
