//! Emoticon-preserving chat tokenizer.
//!
//! Text is first split on whitespace. Each chunk is then scanned left to
//! right; at every position the rules below are tried in order and the first
//! one that matches consumes its span:
//!
//! 1. URLs (`http://`, `https://`, `www.`), email addresses and file
//!    placeholders such as `<file_photo>`
//! 2. emoticons
//!    * western, eyes then mouth: `:)`, `:-(`, `;P`, `:'(`, `=D`, `>:(`, `:/`
//!    * western, mouth then eyes: `(:`, `):`
//!    * letter faces: `XD`, `xP`
//!    * hearts: `<3`, `</3`
//!    * eastern: `^_^`, `^^`, `-_-`, `T_T`, `o.O`, `(^_^)`
//! 3. @-mentions
//! 4. hashtags
//! 5. numbers, including decimals, times, currency and a few unit suffixes
//!    (`3.5`, `5:30`, `$20`, `4pm`, `2nd`, `50%`)
//! 6. repeated punctuation runs (`!!`, `?!?`, `...`, `--`)
//! 7. apostrophe contractions (`don't`, `i'll`)
//! 8. fallback: a run of word characters, otherwise a single character
//!
//! Emoticons and numbers whose last character is alphanumeric only match
//! when not followed by another alphanumeric character, so `:Sunday` is not
//! read as `:S` + `unday`.

use std::sync::LazyLock;

use regex::Regex;

/// Which cascade rule produced a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Url,
    Email,
    Placeholder,
    Emoticon,
    Mention,
    Hashtag,
    Number,
    PunctuationRun,
    Contraction,
    Word,
    Symbol,
}

struct Rule {
    kind: TokenKind,
    pattern: Regex,
    /// Reject matches whose last char is alphanumeric and is followed by one.
    needs_boundary: bool,
}

fn anchored(pattern: &str) -> Regex {
    Regex::new(&format!("^(?:{pattern})")).expect("tokenizer pattern must compile")
}

const URL: &str = r"(?:https?://|www\.)\S+";
const EMAIL: &str = r"[\w.+\-]+@[\w\-]+(?:\.[\w\-]+)+";
const PLACEHOLDER: &str = r"<[A-Za-z]+(?:_[A-Za-z]+)*>";
const WESTERN: &str = r#"[<>]?[:;=]['"]?[\-o\*\^]?[\)\]\(\[dDpPbB/\\\}\{@\|3oOsSxX\*\$]+"#;
const WESTERN_REVERSED: &str = r"[\)\(\]\[]['\-o]?[:;=]";
const LETTER_FACE: &str = r"[xX][dDpP]+";
const HEART: &str = r"</?3+";
const EASTERN: &str =
    r"\(?(?:\^_*\^|[\-oOTt;>][_.][\-oOTt;<]|-_+-|\^[\-_.]\^|[oO]_[oO])\)?";
const MENTION: &str = r"@\w+";
const HASHTAG: &str = r"#\w+";
const NUMBER: &str = r"[$€£]?\d+(?:[.,:/]\d+)*(?:%|am|pm|st|nd|rd|th|k)?";
const PUNCT_RUN: &str = r"[!?.]{2,}|-{2,}|~{2,}|\*{2,}";
const CONTRACTION: &str = r"\w+(?:['’]\w+)+";
const WORD: &str = r"\w+";

static RULES: LazyLock<Vec<Rule>> = LazyLock::new(|| {
    let rule = |kind, pattern: &str, needs_boundary| Rule {
        kind,
        pattern: anchored(pattern),
        needs_boundary,
    };
    vec![
        rule(TokenKind::Url, URL, false),
        rule(TokenKind::Email, EMAIL, true),
        rule(TokenKind::Placeholder, PLACEHOLDER, false),
        rule(TokenKind::Emoticon, WESTERN, true),
        rule(TokenKind::Emoticon, WESTERN_REVERSED, true),
        rule(TokenKind::Emoticon, LETTER_FACE, true),
        rule(TokenKind::Emoticon, HEART, true),
        rule(TokenKind::Emoticon, EASTERN, true),
        rule(TokenKind::Mention, MENTION, false),
        rule(TokenKind::Hashtag, HASHTAG, false),
        rule(TokenKind::Number, NUMBER, true),
        rule(TokenKind::PunctuationRun, PUNCT_RUN, false),
        rule(TokenKind::Contraction, CONTRACTION, false),
        rule(TokenKind::Word, WORD, false),
    ]
});

const URL_TRAILING: &[char] = &['.', ',', '!', '?', ';', ':', ')', '\'', '"'];

/// Length in bytes of the span the cascade consumes at the start of `rest`.
fn next_token(rest: &str) -> (usize, TokenKind) {
    for rule in RULES.iter() {
        let Some(m) = rule.pattern.find(rest) else {
            continue;
        };
        let mut end = m.end();
        if rule.kind == TokenKind::Url {
            end = rest[..end].trim_end_matches(URL_TRAILING).len();
        }
        if end == 0 {
            continue;
        }
        if rule.needs_boundary {
            let last = rest[..end].chars().next_back();
            let next = rest[end..].chars().next();
            if let (Some(last), Some(next)) = (last, next) {
                if last.is_alphanumeric() && next.is_alphanumeric() {
                    continue;
                }
            }
        }
        return (end, rule.kind);
    }
    let ch = rest.chars().next().expect("non-empty remainder");
    (ch.len_utf8(), TokenKind::Symbol)
}

/// Tokenize text into `(token, kind)` pairs.
pub fn tokenize_with_kinds(text: &str) -> Vec<(String, TokenKind)> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut pos = 0;
        while pos < chunk.len() {
            let (len, kind) = next_token(&chunk[pos..]);
            out.push((chunk[pos..pos + len].to_string(), kind));
            pos += len;
        }
    }
    out
}

/// Tokenize a raw utterance. Empty or all-whitespace text yields no tokens.
///
/// ```
/// use dialsum::tokenize::tokenize;
/// assert_eq!(tokenize("no problem :)"), vec!["no", "problem", ":)"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_kinds(text).into_iter().map(|(t, _)| t).collect()
}

/// Classify a single, already isolated token.
///
/// Returns the kind the cascade assigns when the token is tokenized on its
/// own and is consumed whole.
pub fn classify(token: &str) -> TokenKind {
    if token.is_empty() {
        return TokenKind::Symbol;
    }
    let (len, kind) = next_token(token);
    if len == token.len() {
        kind
    } else if token.chars().all(|c| !c.is_alphanumeric() && !c.is_whitespace()) {
        TokenKind::PunctuationRun
    } else {
        TokenKind::Word
    }
}

pub fn is_emoticon(token: &str) -> bool {
    classify(token) == TokenKind::Emoticon
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn keeps_emoticon_whole() {
        assert_eq!(tokenize("no problem :)"), vec!["no", "problem", ":)"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t ").is_empty());
    }

    #[test]
    fn url_and_punctuation_run() {
        assert_eq!(
            tokenize("btw check http://a.io !!"),
            vec!["btw", "check", "http://a.io", "!!"]
        );
        assert_eq!(tokenize("see http://a.io."), vec!["see", "http://a.io", "."]);
    }

    #[test]
    fn chat_phenomena() {
        assert_eq!(
            tokenize("don't wait for me, @maya #dinner at 5:30pm ^_^"),
            vec!["don't", "wait", "for", "me", ",", "@maya", "#dinner", "at", "5:30pm", "^_^"]
        );
        assert_eq!(tokenize("great:)"), vec!["great", ":)"]);
        assert_eq!(tokenize("XD lol"), vec!["XD", "lol"]);
        assert_eq!(tokenize("<3 <file_photo>"), vec!["<3", "<file_photo>"]);
        assert_eq!(tokenize("mail me a@b.com"), vec!["mail", "me", "a@b.com"]);
        assert_eq!(tokenize("it costs $20"), vec!["it", "costs", "$20"]);
        assert_eq!(tokenize("(at 8)"), vec!["(", "at", "8", ")"]);
        assert_eq!(tokenize("really?!?"), vec!["really", "?!?"]);
    }

    #[test]
    fn letter_emoticon_needs_boundary() {
        assert_eq!(tokenize(":Sunday"), vec![":", "Sunday"]);
        assert_eq!(tokenize("xDD"), vec!["xDD"]);
        assert_eq!(tokenize("xdata"), vec!["xdata"]);
    }

    #[test]
    fn classify_isolated_tokens() {
        assert_eq!(classify(":-)"), TokenKind::Emoticon);
        assert_eq!(classify("http://x.org/a"), TokenKind::Url);
        assert_eq!(classify("@bob"), TokenKind::Mention);
        assert_eq!(classify("#tbt"), TokenKind::Hashtag);
        assert_eq!(classify("3.50"), TokenKind::Number);
        assert_eq!(classify("!!"), TokenKind::PunctuationRun);
        assert_eq!(classify("i'm"), TokenKind::Contraction);
        assert_eq!(classify("pasta"), TokenKind::Word);
        assert_eq!(classify(","), TokenKind::Symbol);
    }

    fn emoticon() -> impl Strategy<Value = String> {
        let western = (
            prop::sample::select(vec!["", ">", "<"]),
            prop::sample::select(vec![":", ";", "="]),
            prop::sample::select(vec!["", "-", "'", "o"]),
            prop::collection::vec(
                prop::sample::select(vec![")", "(", "D", "P", "p", "/", "|", "]", "3", "*"]),
                1..3,
            ),
        )
            .prop_map(|(brow, eyes, nose, mouth)| format!("{brow}{eyes}{nose}{}", mouth.concat()));
        let fixed = prop::sample::select(vec![
            "^_^", "^^", "-_-", "T_T", "o.O", "(^_^)", "<3", "</3", "XD", "xP", "(:", "):",
        ])
        .prop_map(str::to_string);
        prop_oneof![western, fixed]
    }

    fn chat_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-z]{1,6}",
                "[A-Z][a-z]{0,4}",
                "[0-9]{1,3}",
                prop::sample::select(vec![
                    ",", ".", "!!", "?", "...", "don't", ":)", ";P", "@amy", "#fun", "http://a.io",
                    "(", ")", "'", "-", "^_^", "x", "<3", ":", "$5", "5:30",
                ])
                .prop_map(str::to_string),
            ],
            0..12,
        )
        .prop_flat_map(|parts| {
            let n = parts.len();
            (Just(parts), prop::collection::vec(prop::bool::ANY, n))
        })
        .prop_map(|(parts, glue)| {
            let mut s = String::new();
            for (p, g) in parts.iter().zip(glue) {
                if !g && !s.is_empty() {
                    s.push(' ');
                }
                s.push_str(p);
            }
            s
        })
    }

    proptest! {
        #[test]
        fn emoticons_survive(prefix in "[a-z]{1,5}", emo in emoticon(), suffix in "[a-z]{1,5}") {
            let text = format!("{prefix} {emo} {suffix}");
            let tokens = tokenize(&text);
            prop_assert!(tokens.contains(&emo), "{:?} not kept in {:?}", emo, tokens);
            prop_assert!(is_emoticon(&emo));
        }

        #[test]
        fn retokenizing_joined_tokens_is_idempotent(text in chat_text()) {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
