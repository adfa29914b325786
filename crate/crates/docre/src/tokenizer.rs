//! Deterministic whole-word vocabulary with BERT-style special tokens.
//!
//! Stands in for a pretrained WordPiece vocabulary: lowercased whole tokens,
//! frequency-ordered, no subword merging.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::Document;
use crate::error::{DocreError, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn from_ordered(tokens: Vec<String>) -> Self {
        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    /// Id for a token after lowercasing; unknown tokens map to [UNK].
    pub fn id_of(&self, token: &str) -> usize {
        let lower = token.to_lowercase();
        self.token_to_id.get(&lower).copied().unwrap_or(UNK_ID)
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Writes the non-special tokens, one per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let body = self.id_to_token[SPECIAL_TOKENS.len()..].join("\n");
        fs::write(path, if body.is_empty() { body } else { body + "\n" })?;
        Ok(())
    }

    /// Reads a one-token-per-line file; line i becomes id i + 4.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if !seen.insert(t) {
                return Err(DocreError::Config(format!("duplicate vocab token {t:?}")));
            }
        }
        Ok(Vocab::from_ordered(tokens))
    }
}

/// Builds a vocabulary over lowercased corpus tokens. Tokens with frequency
/// at least `min_freq` are kept, ordered by descending frequency then
/// lexicographically, after the four specials.
pub fn build_vocab(documents: &[Document], min_freq: usize) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(DocreError::Config("min_freq must be at least 1".into()));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    for doc in documents {
        for tok in doc.sentences.iter().flatten() {
            *freq.entry(tok.to_lowercase()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, usize)> =
        freq.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocab::from_ordered(entries.into_iter().map(|(t, _)| t).collect()))
}

/// Per-token lowercase lookup; length-preserving.
pub fn encode(tokens: &[String], vocab: &Vocab) -> Vec<usize> {
    tokens.iter().map(|t| vocab.id_of(t)).collect()
}

/// Splits free text on whitespace, then peels leading and trailing ASCII
/// punctuation into separate tokens. Corpus data arrives pre-split and
/// never goes through this.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut leading = Vec::new();
        let mut core = word;
        while let Some(c) = core.chars().next() {
            if c.is_ascii_punctuation() && core.chars().count() > 1 {
                leading.push(c.to_string());
                core = &core[c.len_utf8()..];
            } else {
                break;
            }
        }
        let mut trailing = Vec::new();
        while let Some(c) = core.chars().last() {
            if c.is_ascii_punctuation() && core.chars().count() > 1 {
                trailing.push(c.to_string());
                core = &core[..core.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        out.extend(leading);
        if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}
