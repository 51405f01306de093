//! The 25-symbol Twitter part-of-speech inventory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// One tag of the Twitter POS tagset.
///
/// Variant order is the classifier index order used by the tagging head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// `N` common noun
    Noun,
    /// `O` pronoun (personal/WH, not possessive)
    Pronoun,
    /// `^` proper noun
    ProperNoun,
    /// `S` nominal + possessive
    NominalPossessive,
    /// `Z` proper noun + possessive
    ProperPossessive,
    /// `V` verb incl. copula and auxiliaries
    Verb,
    /// `A` adjective
    Adjective,
    /// `R` adverb
    Adverb,
    /// `!` interjection
    Interjection,
    /// `D` determiner
    Determiner,
    /// `P` pre- or postposition, or subordinating conjunction
    Preposition,
    /// `&` coordinating conjunction
    Conjunction,
    /// `T` verb particle
    Particle,
    /// `X` existential *there*, predeterminers
    Existential,
    /// `Y` `X` + verbal
    ExistentialVerbal,
    /// `#` hashtag
    Hashtag,
    /// `@` at-mention
    Mention,
    /// `~` discourse marker or file placeholder
    Discourse,
    /// `U` URL or email address
    Url,
    /// `E` emoticon
    Emoticon,
    /// `$` numeral
    Numeral,
    /// `,` punctuation
    Punctuation,
    /// `G` abbreviation, foreign word, other
    Abbreviation,
    /// `L` nominal + verbal (*i'm*, *it's*)
    NominalVerbal,
    /// `M` proper noun + verbal
    ProperVerbal,
}

/// Number of classes of the tagging head.
pub const NUM_TAGS: usize = 25;

impl Tag {
    pub const ALL: [Tag; NUM_TAGS] = [
        Tag::Noun,
        Tag::Pronoun,
        Tag::ProperNoun,
        Tag::NominalPossessive,
        Tag::ProperPossessive,
        Tag::Verb,
        Tag::Adjective,
        Tag::Adverb,
        Tag::Interjection,
        Tag::Determiner,
        Tag::Preposition,
        Tag::Conjunction,
        Tag::Particle,
        Tag::Existential,
        Tag::ExistentialVerbal,
        Tag::Hashtag,
        Tag::Mention,
        Tag::Discourse,
        Tag::Url,
        Tag::Emoticon,
        Tag::Numeral,
        Tag::Punctuation,
        Tag::Abbreviation,
        Tag::NominalVerbal,
        Tag::ProperVerbal,
    ];

    const SYMBOLS: [&'static str; NUM_TAGS] = [
        "N", "O", "^", "S", "Z", "V", "A", "R", "!", "D", "P", "&", "T", "X", "Y", "#", "@", "~",
        "U", "E", "$", ",", "G", "L", "M",
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Tag> {
        Tag::ALL.get(index).copied()
    }

    pub fn symbol(self) -> &'static str {
        Tag::SYMBOLS[self.index()]
    }

    pub fn from_symbol(symbol: &str) -> Option<Tag> {
        Tag::SYMBOLS
            .iter()
            .position(|s| *s == symbol)
            .map(|i| Tag::ALL[i])
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::from_symbol(s).ok_or_else(|| Error::Argument(format!("unknown POS tag `{s}`")))
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Tag::from_symbol(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown POS tag `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn inventory_has_25_unique_symbols() {
        let symbols: HashSet<_> = Tag::ALL.iter().map(|t| t.symbol()).collect();
        assert_eq!(symbols.len(), NUM_TAGS);
        for (i, tag) in Tag::ALL.iter().enumerate() {
            assert_eq!(tag.index(), i);
            assert_eq!(Tag::from_symbol(tag.symbol()), Some(*tag));
        }
    }

    #[test]
    fn unknown_symbol_rejected() {
        assert!("IGNORE".parse::<Tag>().is_err());
        assert!(Tag::from_index(NUM_TAGS).is_none());
    }
}
