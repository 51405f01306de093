//! Word-level vocabulary shared by encoder input and decoder output.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const EOU: TokenId = 4;
pub const SPEAKER_SEP: TokenId = 5;

/// Surface strings of the special ids, in id order.
pub const SPECIALS: [&str; 6] = ["<pad>", "<s>", "</s>", "<unk>", "[EOU]", "<sep>"];

/// Token/id bijection. Ids `0..6` are the specials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Argument(
                "vocabulary does not start with the special tokens".into(),
            ));
        }
        let v = Self::from_tokens(&tokens[SPECIALS.len()..]);
        if v.len() != tokens.len() {
            return Err(Error::Argument("vocabulary contains duplicate tokens".into()));
        }
        Ok(v)
    }
}

impl Vocabulary {
    /// A vocabulary of specials followed by `tokens` in the given order.
    /// Duplicates and special strings are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIALS.iter().copied() {
            vocab.push(t);
        }
        for t in tokens {
            let t = t.as_ref();
            if !vocab.index.contains_key(t) {
                vocab.push(t);
            }
        }
        vocab
    }

    fn push(&mut self, token: &str) {
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Map ids back to tokens, dropping specials other than UNK.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id == UNK || id as usize >= SPECIALS.len())
            .filter_map(|&id| self.token(id).map(str::to_string))
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.tokens)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = serde_json::from_str(&text)?;
        Self::try_from(tokens)
    }
}

/// Tokens counted by [`build_vocab`] for one dialogue: speaker name words,
/// utterance tokens and summary tokens.
pub fn dialogue_tokens(d: &crate::corpus::Dialogue) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    for turn in &d.turns {
        out.extend(d.speaker_name(turn).split_whitespace());
        let tokens = turn.tokens.as_ref().ok_or_else(|| {
            Error::Precondition(format!("dialogue `{}` is not tokenized", d.id))
        })?;
        out.extend(tokens.iter().map(String::as_str));
    }
    out.extend(d.summary_tokens.iter().map(String::as_str));
    Ok(out)
}

/// Vocabulary of tokens occurring at least `min_freq` times, ordered by
/// descending frequency with ties broken lexicographically.
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Result<Vocabulary> {
    if min_freq == 0 {
        return Err(Error::Argument("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in &corpus.dialogues {
        for t in dialogue_tokens(d)? {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !SPECIALS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t)))
}
