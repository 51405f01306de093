//! Part-of-speech tagging over the Twitter tagset.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::Tag;
use crate::tokenize::{classify, TokenKind};

/// Tokens with one tag each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedUtterance {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

/// Anything that assigns one tag per token.
pub trait Tagger {
    fn tag_tokens(&self, tokens: &[String]) -> Result<Vec<Tag>>;
}

/// Tag a token sequence, checking that the tagger returned one tag per token.
pub fn tag(tokens: &[String], tagger: &dyn Tagger) -> Result<TaggedUtterance> {
    let tags = tagger.tag_tokens(tokens)?;
    if tags.len() != tokens.len() {
        return Err(Error::Tagging {
            index: tags.len().min(tokens.len()),
            message: format!("tagger returned {} tags for {} tokens", tags.len(), tokens.len()),
        });
    }
    Ok(TaggedUtterance {
        tokens: tokens.to_vec(),
        tags,
    })
}

/// Lexicon lookup order; the first lexicon containing a token wins.
const LEXICON_ORDER: [Tag; 10] = [
    Tag::Pronoun,
    Tag::Determiner,
    Tag::Preposition,
    Tag::Conjunction,
    Tag::Particle,
    Tag::Existential,
    Tag::NominalVerbal,
    Tag::Interjection,
    Tag::Discourse,
    Tag::Abbreviation,
];

const BUNDLED: [(&str, &str); 10] = [
    ("O", include_str!("../data/lexicon/O")),
    ("D", include_str!("../data/lexicon/D")),
    ("P", include_str!("../data/lexicon/P")),
    ("&", include_str!("../data/lexicon/&")),
    ("T", include_str!("../data/lexicon/T")),
    ("X", include_str!("../data/lexicon/X")),
    ("L", include_str!("../data/lexicon/L")),
    ("!", include_str!("../data/lexicon/!")),
    ("~", include_str!("../data/lexicon/~")),
    ("G", include_str!("../data/lexicon/G")),
];

/// Deterministic rule tagger backed by small closed-class lexicons.
///
/// Rules, highest priority first:
///
/// | rule                                  | tag |
/// |---------------------------------------|-----|
/// | emoticon                              | `E` |
/// | URL or email                          | `U` |
/// | @-mention                             | `@` |
/// | hashtag                               | `#` |
/// | number or currency                    | `$` |
/// | punctuation only                      | `,` |
/// | closed-class lexicon (O D P & T X L ! ~ G) | lexicon tag |
/// | capitalized, not the first token      | `^` |
/// | suffix `-ly`                          | `R` |
/// | suffix `-ed`, `-ing`                  | `V` |
/// | suffix `-ous`, `-ful`                 | `A` |
/// | anything else                         | `N` |
///
/// Lexicon lookup is case-insensitive. Suffix rules need at least two
/// characters before the suffix (`bed` stays `N`).
#[derive(Debug, Clone)]
pub struct LexiconRuleTagger {
    lexicon: HashMap<String, Tag>,
}

impl LexiconRuleTagger {
    /// The tagger with the lexicons shipped in the crate.
    pub fn bundled() -> Self {
        let files = BUNDLED.iter().map(|(sym, text)| (sym.to_string(), text.to_string()));
        Self::from_files(files).expect("bundled lexicons are valid")
    }

    /// Load lexicons from a directory holding one file per tag symbol.
    ///
    /// Files named after tags outside the closed-class set are ignored.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files = Vec::new();
        for tag in LEXICON_ORDER {
            let path = dir.join(tag.symbol());
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                files.push((tag.symbol().to_string(), text));
            }
        }
        Self::from_files(files)
    }

    fn from_files(files: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut by_tag: HashMap<Tag, String> = HashMap::new();
        for (symbol, text) in files {
            let tag: Tag = symbol.parse()?;
            by_tag.insert(tag, text);
        }
        let mut lexicon = HashMap::new();
        // insert in priority order so earlier lexicons keep their entries
        for tag in LEXICON_ORDER {
            let Some(text) = by_tag.get(&tag) else { continue };
            for line in text.lines() {
                let word = line.trim();
                if !word.is_empty() {
                    lexicon.entry(word.to_lowercase()).or_insert(tag);
                }
            }
        }
        Ok(Self { lexicon })
    }

    /// Tag of the token at `position` within its utterance.
    pub fn tag_token(&self, token: &str, position: usize) -> Tag {
        match classify(token) {
            TokenKind::Emoticon => return Tag::Emoticon,
            TokenKind::Url | TokenKind::Email => return Tag::Url,
            TokenKind::Mention => return Tag::Mention,
            TokenKind::Hashtag => return Tag::Hashtag,
            TokenKind::Number => return Tag::Numeral,
            _ => {}
        }
        if token.chars().all(|c| !c.is_alphanumeric()) {
            return match self.lexicon.get(token) {
                Some(Tag::Discourse) => Tag::Discourse,
                _ => Tag::Punctuation,
            };
        }
        let lower = token.to_lowercase();
        if let Some(tag) = self.lexicon.get(&lower) {
            return *tag;
        }
        if position > 0 && token.chars().next().is_some_and(char::is_uppercase) {
            return Tag::ProperNoun;
        }
        let has_suffix = |suffix: &str| {
            lower.ends_with(suffix) && lower.chars().count() >= suffix.chars().count() + 2
        };
        if has_suffix("ly") {
            Tag::Adverb
        } else if has_suffix("ed") || has_suffix("ing") {
            Tag::Verb
        } else if has_suffix("ous") || has_suffix("ful") {
            Tag::Adjective
        } else {
            Tag::Noun
        }
    }
}

impl Default for LexiconRuleTagger {
    fn default() -> Self {
        Self::bundled()
    }
}

impl Tagger for LexiconRuleTagger {
    fn tag_tokens(&self, tokens: &[String]) -> Result<Vec<Tag>> {
        Ok(tokens
            .iter()
            .enumerate()
            .map(|(i, t)| self.tag_token(t, i))
            .collect())
    }
}
