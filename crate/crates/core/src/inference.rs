//! Greedy and beam-search decoding.
//!
//! Decoders drive any [`Scorer`]: something that consumes one token at a
//! time and returns log-probabilities for the next. Scores are raw sums of
//! log-probabilities, with no length normalization.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::vocab::{TokenId, BOS, EOS};

/// Incremental next-token scorer.
pub trait Scorer {
    type State: Clone;

    /// State before any token has been consumed.
    fn start(&self) -> Self::State;

    /// Consume `token`; return the new state and next-token log-probabilities.
    fn step(&self, state: &Self::State, token: TokenId) -> (Self::State, Vec<f64>);

    /// Most tokens the scorer can consume.
    fn max_len(&self) -> usize {
        usize::MAX
    }

    fn bos(&self) -> TokenId {
        BOS
    }

    fn eos(&self) -> TokenId {
        EOS
    }
}

/// A decoded sequence. `tokens` excludes `<s>` and ends with `</s>` when
/// the hypothesis finished before the length limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
}

impl Decoded {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tokens without the closing `</s>`.
    pub fn content(&self) -> &[TokenId] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Pick the most probable token at every step, ties toward the lower id.
/// At most `max_len` tokens are produced.
pub fn greedy_decode<S: Scorer>(scorer: &S, max_len: usize) -> Decoded {
    let max_len = max_len.min(scorer.max_len());
    let mut out = Decoded {
        tokens: Vec::new(),
        logprob: 0.0,
    };
    if max_len == 0 {
        return out;
    }
    let (mut state, mut logp) = scorer.step(&scorer.start(), scorer.bos());
    loop {
        let tok = argmax(&logp);
        out.logprob += logp[tok];
        out.tokens.push(tok as TokenId);
        if tok as TokenId == scorer.eos() || out.tokens.len() == max_len {
            return out;
        }
        (state, logp) = scorer.step(&state, tok as TokenId);
    }
}

/// Higher score first, then the lexicographically smaller sequence.
fn rank(a_score: f64, a: &[TokenId], b_score: f64, b: &[TokenId]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(b))
}

struct Live<St> {
    tokens: Vec<TokenId>,
    logprob: f64,
    state: St,
    next: Vec<f64>,
}

/// Beam search keeping the `beam` best unfinished hypotheses per step.
///
/// Candidates are ranked by cumulative log-probability, ties broken by
/// token sequence. A candidate ending in `</s>` that ranks ahead of the
/// last surviving unfinished one is set aside as finished. Search stops
/// once the best finished score strictly exceeds every unfinished one, or
/// after `max_len` tokens, at which point unfinished hypotheses compete
/// with finished ones.
pub fn beam_search<S: Scorer>(scorer: &S, beam: usize, max_len: usize) -> Result<Decoded> {
    if beam == 0 {
        return Err(Error::Argument("beam size must be at least 1".into()));
    }
    let max_len = max_len.min(scorer.max_len());
    if max_len == 0 {
        return Ok(Decoded {
            tokens: Vec::new(),
            logprob: 0.0,
        });
    }
    let eos = scorer.eos();
    let (state, next) = scorer.step(&scorer.start(), scorer.bos());
    let mut alive = vec![Live {
        tokens: Vec::new(),
        logprob: 0.0,
        state,
        next,
    }];
    let mut finished: Vec<Decoded> = Vec::new();

    for len in 1..=max_len {
        let mut candidates: Vec<(usize, TokenId, f64, Vec<TokenId>)> = Vec::new();
        for (h, live) in alive.iter().enumerate() {
            for (v, &lp) in live.next.iter().enumerate() {
                let mut tokens = live.tokens.clone();
                tokens.push(v as TokenId);
                candidates.push((h, v as TokenId, live.logprob + lp, tokens));
            }
        }
        candidates.sort_by(|a, b| rank(a.2, &a.3, b.2, &b.3));

        let mut next_alive = Vec::with_capacity(beam);
        for (h, tok, score, tokens) in candidates {
            if next_alive.len() == beam {
                break;
            }
            if tok == eos {
                finished.push(Decoded {
                    tokens,
                    logprob: score,
                });
            } else {
                next_alive.push((h, tok, score, tokens));
            }
        }

        let best_finished = finished
            .iter()
            .map(|d| d.logprob)
            .fold(f64::NEG_INFINITY, f64::max);
        let best_alive = next_alive
            .iter()
            .map(|c| c.2)
            .fold(f64::NEG_INFINITY, f64::max);
        let stop = !finished.is_empty() && best_finished > best_alive;
        if stop || next_alive.is_empty() || len == max_len {
            if !stop {
                finished.extend(next_alive.into_iter().map(|(_, _, score, tokens)| Decoded {
                    tokens,
                    logprob: score,
                }));
            }
            break;
        }
        alive = next_alive
            .into_iter()
            .map(|(h, tok, score, tokens)| {
                let (state, next) = scorer.step(&alive[h].state, tok);
                Live {
                    tokens,
                    logprob: score,
                    state,
                    next,
                }
            })
            .collect();
    }

    finished.sort_by(|a, b| rank(a.logprob, &a.tokens, b.logprob, &b.tokens));
    Ok(finished.swap_remove(0))
}

/// Encode `input` once and decode a summary. `beam == 1` is greedy search.
pub fn summarize(model: &Model, input: &[TokenId], beam: usize, max_len: usize) -> Result<Decoded> {
    let enc = model.encode(input)?;
    let scorer = model.incremental(&enc);
    beam_search(&scorer, beam, max_len)
}

/// Single-space join of summary tokens.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean whitespace word count of detokenized summaries.
pub fn avg_generated_words<S: AsRef<str>>(summaries: &[S]) -> Result<f64> {
    if summaries.is_empty() {
        return Err(Error::Argument("no summaries to average".into()));
    }
    let total: usize = summaries
        .iter()
        .map(|s| s.as_ref().split_whitespace().count())
        .sum();
    Ok(total as f64 / summaries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scorer whose next-token distribution depends only on the position.
    struct Table(Vec<Vec<f64>>);

    impl Scorer for Table {
        type State = usize;

        fn start(&self) -> usize {
            0
        }

        fn step(&self, state: &usize, _token: TokenId) -> (usize, Vec<f64>) {
            let p = &self.0[(*state).min(self.0.len() - 1)];
            (state + 1, p.iter().map(|v| v.ln()).collect())
        }
    }

    #[test]
    fn greedy_hand_trace() {
        // id 2 is </s>
        let t = Table(vec![
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.5, 0.1, 0.2, 0.2],
            vec![0.1, 0.1, 0.7, 0.1],
        ]);
        let d = greedy_decode(&t, 10);
        assert_eq!(d.tokens, [3, 0, 2]);
        assert!((d.logprob - (0.4f64 * 0.5 * 0.7).ln()).abs() < 1e-12);
        assert_eq!(d.content(), [3, 0]);
        assert!(d.finished());
    }

    #[test]
    fn greedy_ties_go_to_lower_id_and_respect_max_len() {
        let t = Table(vec![vec![0.0, 0.0, 0.0, 0.5, 0.5]]);
        let d = greedy_decode(&t, 3);
        assert_eq!(d.tokens, [3, 3, 3]);
        assert!(!d.finished());
    }

    #[test]
    fn eos_first_gives_empty_summary() {
        let t = Table(vec![vec![0.1, 0.1, 0.8]]);
        let d = greedy_decode(&t, 5);
        assert_eq!(d.tokens, [EOS]);
        assert!(d.content().is_empty());
        assert_eq!(beam_search(&t, 3, 5).unwrap(), d);
    }

    #[test]
    fn beam_finds_better_than_greedy() {
        // greedy takes 3 (0.5) then is stuck with 0.5·0.3; 4 (0.4) then </s> (0.9) wins
        struct Branch;
        impl Scorer for Branch {
            type State = Vec<TokenId>;
            fn start(&self) -> Vec<TokenId> {
                Vec::new()
            }
            fn step(&self, s: &Vec<TokenId>, tok: TokenId) -> (Vec<TokenId>, Vec<f64>) {
                let mut s = s.clone();
                s.push(tok);
                let p: [f64; 5] = match s.as_slice() {
                    [_] => [0.05, 0.05, 0.0, 0.5, 0.4],
                    [_, 3] => [0.1, 0.1, 0.3, 0.25, 0.25],
                    [_, 4] => [0.0, 0.0, 0.9, 0.05, 0.05],
                    _ => [0.0, 0.0, 1.0, 0.0, 0.0],
                };
                (s, p.iter().map(|v| v.ln()).collect())
            }
        }
        let g = greedy_decode(&Branch, 4);
        assert_eq!(g.tokens, [3, 2]);
        let b = beam_search(&Branch, 2, 4).unwrap();
        assert_eq!(b.tokens, [4, 2]);
        assert!(b.logprob > g.logprob);
        assert_eq!(beam_search(&Branch, 1, 4).unwrap(), g);
    }

    #[test]
    fn beam_zero_rejected() {
        let t = Table(vec![vec![0.5, 0.5]]);
        assert!(beam_search(&t, 0, 3).is_err());
    }

    #[test]
    fn words_average() {
        assert_eq!(avg_generated_words(&["a b c", "a b c d e"]).unwrap(), 4.0);
        assert!(avg_generated_words::<&str>(&[]).is_err());
        assert_eq!(detokenize(&["a", "b"]), "a b");
    }
}
