use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Rhetorical category of an abstract sentence, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Background,
    Objective,
    Methods,
    Results,
    Conclusions,
}

impl Label {
    pub const COUNT: usize = 5;
    pub const ALL: [Label; Label::COUNT] = [
        Label::Background,
        Label::Objective,
        Label::Methods,
        Label::Results,
        Label::Conclusions,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    /// Spelling used when writing corpus files.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Background => "BACKGROUND",
            Label::Objective => "OBJECTIVE",
            Label::Methods => "METHODS",
            Label::Results => "RESULTS",
            Label::Conclusions => "CONCLUSIONS",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Label::Background => "Background",
            Label::Objective => "Objective",
            Label::Methods => "Methods",
            Label::Results => "Results",
            Label::Conclusions => "Conclusions",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label {:?}", self.0)
    }
}

impl FromStr for Label {
    type Err = UnknownLabel;

    /// Case-insensitive; singular and plural spellings are both accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BACKGROUND" | "BACKGROUNDS" => Ok(Label::Background),
            "OBJECTIVE" | "OBJECTIVES" => Ok(Label::Objective),
            "METHOD" | "METHODS" => Ok(Label::Methods),
            "RESULT" | "RESULTS" => Ok(Label::Results),
            "CONCLUSION" | "CONCLUSIONS" => Ok(Label::Conclusions),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_mapping_is_total_and_stable() {
        for (i, l) in Label::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Label::from_index(i), Some(*l));
            assert_eq!(l.as_str().parse::<Label>().unwrap(), *l);
        }
        assert_eq!(Label::from_index(5), None);
    }

    #[test]
    fn spelling_variants() {
        assert_eq!("Conclusion".parse::<Label>().unwrap(), Label::Conclusions);
        assert_eq!("conclusions".parse::<Label>().unwrap(), Label::Conclusions);
        assert_eq!("Objectives".parse::<Label>().unwrap(), Label::Objective);
        assert_eq!("method".parse::<Label>().unwrap(), Label::Methods);
        assert!("DISCUSSION".parse::<Label>().is_err());
    }
}
