//! Utterance selection and flattening of a dialogue into encoder input.
//!
//! Each selected turn becomes `speaker <sep> tokens… [EOU]`. The label
//! channel carries the POS tag of every utterance token and `None` on the
//! structural positions (speaker name, separator, `[EOU]`), which the tagging
//! loss skips.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::tags::Tag;
use crate::vocab::{TokenId, Vocabulary, EOU, SPEAKER_SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKind {
    Lead,
    Middle,
    Longest,
    Full,
}

/// Which turns enter the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: SelectionKind,
    /// Number of turns; ignored for `Full`.
    pub n: usize,
}

impl SelectionStrategy {
    pub fn new(kind: SelectionKind, n: usize) -> Result<Self> {
        if kind != SelectionKind::Full && n == 0 {
            return Err(Error::Argument("selection size n must be at least 1".into()));
        }
        Ok(Self { kind, n })
    }

    pub fn lead(n: usize) -> Self {
        Self::new(SelectionKind::Lead, n).expect("n >= 1")
    }

    pub fn middle(n: usize) -> Self {
        Self::new(SelectionKind::Middle, n).expect("n >= 1")
    }

    pub fn longest(n: usize) -> Self {
        Self::new(SelectionKind::Longest, n).expect("n >= 1")
    }

    pub fn full() -> Self {
        Self {
            kind: SelectionKind::Full,
            n: 0,
        }
    }
}

impl fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionKind::Lead => "lead",
            SelectionKind::Middle => "middle",
            SelectionKind::Longest => "longest",
            SelectionKind::Full => "full",
        })
    }
}

impl FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "lead" => Ok(SelectionKind::Lead),
            "middle" => Ok(SelectionKind::Middle),
            "longest" | "long" => Ok(SelectionKind::Longest),
            "full" => Ok(SelectionKind::Full),
            other => Err(Error::Argument(format!("unknown input type `{other}`"))),
        }
    }
}

/// Select turn indices (ascending) given per-turn token lengths.
pub fn select_by_lengths(lengths: &[usize], strategy: SelectionStrategy) -> Vec<usize> {
    let total = lengths.len();
    if strategy.kind == SelectionKind::Full || strategy.n >= total {
        return (0..total).collect();
    }
    let n = strategy.n;
    match strategy.kind {
        SelectionKind::Lead => (0..n).collect(),
        SelectionKind::Middle => {
            let start = (total - n) / 2;
            (start..start + n).collect()
        }
        SelectionKind::Longest => {
            let mut order: Vec<usize> = (0..total).collect();
            // stable sort keeps earlier indices first among equal lengths
            order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]));
            let mut chosen = order[..n].to_vec();
            chosen.sort_unstable();
            chosen
        }
        SelectionKind::Full => unreachable!(),
    }
}

/// Select turns of a dialogue; lengths are measured in tokenizer tokens.
pub fn select(dialogue: &Dialogue, strategy: SelectionStrategy) -> Vec<usize> {
    let lengths: Vec<usize> = dialogue.turns.iter().map(|t| t.token_len()).collect();
    select_by_lengths(&lengths, strategy)
}

/// Flattened encoder input with its aligned label channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub token_ids: Vec<TokenId>,
    pub label_ids: Vec<Option<Tag>>,
    /// Positions of the `[EOU]` tokens.
    pub turn_boundaries: Vec<usize>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of positions with a real label.
    pub fn labeled_positions(&self) -> usize {
        self.label_ids.iter().filter(|l| l.is_some()).count()
    }
}

/// Lay out the selected turns, dropping whole trailing turns that would
/// overflow `max_len`.
///
/// Fails if a selected turn is untagged or if not even the first selected
/// turn fits.
pub fn build_input(
    dialogue: &Dialogue,
    selected: &[usize],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<EncodedInput> {
    let mut input = EncodedInput {
        token_ids: Vec::new(),
        label_ids: Vec::new(),
        turn_boundaries: Vec::new(),
    };
    for &index in selected {
        let turn = dialogue.turns.get(index).ok_or_else(|| {
            Error::Argument(format!(
                "turn {index} out of range for dialogue `{}` with {} turns",
                dialogue.id,
                dialogue.turns.len()
            ))
        })?;
        let (Some(tokens), Some(tags)) = (&turn.tokens, &turn.pos_tags) else {
            return Err(Error::Precondition(format!(
                "turn {index} of dialogue `{}` is not tagged",
                dialogue.id
            )));
        };
        let speaker: Vec<&str> = dialogue.speaker_name(turn).split_whitespace().collect();
        let segment_len = speaker.len() + 1 + tokens.len() + 1;
        if input.len() + segment_len > max_len {
            break;
        }
        for word in speaker {
            input.token_ids.push(vocab.id(word));
            input.label_ids.push(None);
        }
        input.token_ids.push(SPEAKER_SEP);
        input.label_ids.push(None);
        for (token, tag) in tokens.iter().zip(tags) {
            input.token_ids.push(vocab.id(token));
            input.label_ids.push(Some(*tag));
        }
        input.turn_boundaries.push(input.token_ids.len());
        input.token_ids.push(EOU);
        input.label_ids.push(None);
    }
    if input.is_empty() && !selected.is_empty() {
        return Err(Error::Argument(format!(
            "first selected turn of dialogue `{}` does not fit in {max_len} positions",
            dialogue.id
        )));
    }
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Dialogue;
    use crate::tagger::LexiconRuleTagger;
    use crate::preprocess::preprocess;
    use crate::corpus::{Corpus, Split};
    use proptest::prelude::*;

    fn tagged(turns: &[(&str, &str)]) -> Dialogue {
        let d = Dialogue::from_turns("t", turns.iter().copied(), "s");
        let c = preprocess(&Corpus::new(Split::Train, vec![d]), &LexiconRuleTagger::bundled())
            .unwrap();
        c.dialogues.into_iter().next().unwrap()
    }

    #[test]
    fn lead_middle_longest() {
        assert_eq!(select_by_lengths(&[1, 1, 1, 1], SelectionStrategy::lead(2)), [0, 1]);
        assert_eq!(select_by_lengths(&[1; 5], SelectionStrategy::middle(2)), [1, 2]);
        assert_eq!(
            select_by_lengths(&[3, 9, 2, 9, 5], SelectionStrategy::longest(2)),
            [1, 3]
        );
        assert_eq!(
            select_by_lengths(&[4, 1, 4, 4], SelectionStrategy::longest(2)),
            [0, 2]
        );
        assert_eq!(select_by_lengths(&[1, 2], SelectionStrategy::lead(5)), [0, 1]);
        assert_eq!(select_by_lengths(&[1, 2, 3], SelectionStrategy::full()), [0, 1, 2]);
        assert!(SelectionStrategy::new(SelectionKind::Lead, 0).is_err());
    }

    #[test]
    fn single_turn_layout() {
        let d = tagged(&[("lilly", "sorry")]);
        let vocab = Vocabulary::from_tokens(["lilly", "sorry"]);
        let input = build_input(&d, &[0], &vocab, 64).unwrap();
        assert_eq!(
            input.token_ids,
            [vocab.id("lilly"), SPEAKER_SEP, vocab.id("sorry"), EOU]
        );
        let sorry_tag = d.turns[0].pos_tags.as_ref().unwrap()[0];
        assert_eq!(input.label_ids, [None, None, Some(sorry_tag), None]);
        assert_eq!(input.turn_boundaries, [3]);
    }

    #[test]
    fn two_turns_two_boundaries() {
        let d = tagged(&[("a", "hi there"), ("b", "hello")]);
        let vocab = Vocabulary::from_tokens(["a", "b"]);
        let input = build_input(&d, &[0, 1], &vocab, 64).unwrap();
        assert_eq!(input.turn_boundaries, [4, 8]);
        assert!(input.turn_boundaries.iter().all(|&i| input.token_ids[i] == EOU));
    }

    #[test]
    fn truncates_only_at_turn_boundaries() {
        // segments: 1 + 1 + 3 + 1 = 6, then 6, then 6 positions
        let d = tagged(&[("a", "x y z"), ("b", "p q r"), ("a", "u v w")]);
        let vocab = Vocabulary::from_tokens(["a", "b"]);
        let input = build_input(&d, &[0, 1, 2], &vocab, 16).unwrap();
        assert_eq!(input.len(), 12);
        assert_eq!(input.turn_boundaries, [5, 11]);
        assert_eq!(*input.token_ids.last().unwrap(), EOU);

        let err = build_input(&d, &[0], &vocab, 5).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn untagged_turn_rejected() {
        let d = Dialogue::from_turns("t", [("a", "hi")], "s");
        let err = build_input(&d, &[0], &Vocabulary::from_tokens(["a"]), 10).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    proptest! {
        #[test]
        fn selection_size_and_order(
            lengths in prop::collection::vec(0usize..12, 1..15),
            n in 1usize..20,
            kind in prop::sample::select(vec![SelectionKind::Lead, SelectionKind::Middle, SelectionKind::Longest]),
        ) {
            let s = SelectionStrategy::new(kind, n).unwrap();
            let chosen = select_by_lengths(&lengths, s);
            prop_assert_eq!(chosen.len(), n.min(lengths.len()));
            prop_assert!(chosen.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(chosen.iter().all(|&i| i < lengths.len()));
        }

        #[test]
        fn lead_ignores_later_turns(
            lengths in prop::collection::vec(0usize..12, 2..15),
            replacement in prop::collection::vec(0usize..12, 15),
            n in 1usize..5,
        ) {
            let mut changed = lengths.clone();
            for (i, slot) in changed.iter_mut().enumerate().skip(n) {
                *slot = replacement[i];
            }
            let s = SelectionStrategy::lead(n);
            prop_assert_eq!(select_by_lengths(&lengths, s), select_by_lengths(&changed, s));
        }

        #[test]
        fn every_position_classified_once(
            turns in prop::collection::vec(("[a-c]", "[a-z]{1,4}( [a-z]{1,4}){0,3}"), 1..6),
            max_len in 6usize..40,
        ) {
            let pairs: Vec<(&str, &str)> = turns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let d = tagged(&pairs);
            let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
            let all: Vec<usize> = (0..d.turns.len()).collect();
            if let Ok(input) = build_input(&d, &all, &vocab, max_len) {
                prop_assert!(input.len() <= max_len);
                prop_assert_eq!(input.token_ids.len(), input.label_ids.len());
                let structural = input.label_ids.iter().filter(|l| l.is_none()).count();
                prop_assert_eq!(structural + input.labeled_positions(), input.len());
                // every included turn is complete
                let mut included_tokens = 0;
                for (k, _) in input.turn_boundaries.iter().enumerate() {
                    included_tokens += d.turns[k].tokens.as_ref().unwrap().len();
                }
                prop_assert_eq!(included_tokens, input.labeled_positions());
                for &b in &input.turn_boundaries {
                    prop_assert_eq!(input.token_ids[b], EOU);
                    prop_assert_eq!(input.label_ids[b], None);
                }
            }
        }
    }
}
