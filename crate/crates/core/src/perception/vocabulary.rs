use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Captions the detector is queried with to flag transparent objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TransparencyVocabulary {
    terms: Vec<String>,
}

impl TransparencyVocabulary {
    /// Lowercases, trims and deduplicates (first occurrence wins).
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for t in terms {
            let t = t.as_ref().trim().to_lowercase();
            if !t.is_empty() && !out.contains(&t) {
                out.push(t);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("transparency vocabulary is empty"));
        }
        Ok(Self { terms: out })
    }

    /// One term per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(|line| match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn to_file_text(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(t);
            s.push('\n');
        }
        s
    }
}

impl TryFrom<Vec<String>> for TransparencyVocabulary {
    type Error = Error;

    fn try_from(terms: Vec<String>) -> Result<Self> {
        Self::new(terms)
    }
}

impl From<TransparencyVocabulary> for Vec<String> {
    fn from(v: TransparencyVocabulary) -> Self {
        v.terms
    }
}

impl Default for TransparencyVocabulary {
    fn default() -> Self {
        Self {
            terms: vec!["glass".to_string()],
        }
    }
}
