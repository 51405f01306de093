//! Tokenization and POS annotation of whole corpora.

use std::fs;
use std::path::Path;

use crate::corpus::{parse_annotated, Corpus};
use crate::error::{Error, Result};
use crate::tagger::{tag, Tagger};
use crate::tokenize::tokenize;

/// Tokenize every untokenized turn and tag every untagged one.
///
/// Turns that already carry tokens or tags keep them, so running this on an
/// annotated corpus is the identity.
pub fn preprocess(corpus: &Corpus, tagger: &dyn Tagger) -> Result<Corpus> {
    let mut out = corpus.clone();
    for d in &mut out.dialogues {
        for (turn_index, turn) in d.turns.iter_mut().enumerate() {
            if turn.tokens.is_none() {
                let mut tokens = tokenize(&turn.raw_text);
                if tokens.is_empty() {
                    // a turn with no visible text still occupies a position
                    tokens.push("<empty>".to_string());
                }
                turn.tokens = Some(tokens);
            }
            if turn.pos_tags.is_none() {
                let tokens = turn.tokens.as_deref().unwrap_or_default();
                let tagged = tag(tokens, tagger).map_err(|e| match e {
                    Error::Tagging { index, message } => Error::Tagging {
                        index,
                        message: format!("dialogue `{}`, turn {turn_index}: {message}", d.id),
                    },
                    other => other,
                })?;
                turn.pos_tags = Some(tagged.tags);
            }
        }
    }
    Ok(out)
}

/// Attach tags from an annotated JSON Lines file produced elsewhere.
///
/// Records are matched to dialogues by position and must agree on dialogue
/// id, turn count and per-turn token count. Any mismatch rejects the whole
/// file and leaves the corpus untouched.
pub fn import_tags(corpus: &Corpus, annotations: impl AsRef<Path>) -> Result<Corpus> {
    let path = annotations.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    import_tags_from_str(corpus, &text)
}

pub fn import_tags_from_str(corpus: &Corpus, annotations: &str) -> Result<Corpus> {
    let annotated = parse_annotated(annotations, corpus.split)?;
    if annotated.len() != corpus.len() {
        return Err(Error::AnnotationMismatch {
            dialogue: String::new(),
            turn: 0,
            message: format!(
                "{} annotation records for {} dialogues",
                annotated.len(),
                corpus.len()
            ),
        });
    }
    let mut out = corpus.clone();
    for (d, a) in out.dialogues.iter_mut().zip(&annotated.dialogues) {
        let mismatch = |turn: usize, message: String| Error::AnnotationMismatch {
            dialogue: d.id.clone(),
            turn,
            message,
        };
        if d.id != a.id {
            return Err(mismatch(0, format!("annotation record has id `{}`", a.id)));
        }
        if d.turns.len() != a.turns.len() {
            return Err(mismatch(
                0,
                format!("{} annotated turns for {} turns", a.turns.len(), d.turns.len()),
            ));
        }
        for (i, (turn, ann)) in d.turns.iter_mut().zip(&a.turns).enumerate() {
            let ann_tokens = ann.tokens.as_ref().expect("annotated turns carry tokens");
            let Some(tags) = &ann.pos_tags else {
                return Err(mismatch(i, "annotation has no tags".into()));
            };
            let expected = turn.tokens.as_ref().map_or_else(|| tokenize(&turn.raw_text).len(), Vec::len);
            if ann_tokens.len() != expected {
                return Err(mismatch(
                    i,
                    format!("{} annotated tokens for {} tokens", ann_tokens.len(), expected),
                ));
            }
            if turn.tokens.is_none() {
                turn.tokens = Some(ann_tokens.clone());
            }
            turn.pos_tags = Some(tags.clone());
        }
    }
    Ok(out)
}
