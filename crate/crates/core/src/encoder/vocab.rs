use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub const UNK_TOKEN: &str = "<unk>";

/// Token to embedding-row map. Row 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Vocab {
    /// Sorted, deduplicated vocabulary over `tokens`.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let unique: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| t != UNK_TOKEN)
            .collect();
        Self::from_ordered(unique)
    }

    /// Keeps the given order (used when restoring a checkpoint).
    pub fn from_ordered(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all = Vec::new();
        all.push(UNK_TOKEN.to_string());
        all.extend(tokens.into_iter().filter(|t| t != UNK_TOKEN));
        let ids = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens: all, ids }
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    /// Number of rows, including the unknown row.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    /// All tokens in row order; row 0 is the unknown token.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
