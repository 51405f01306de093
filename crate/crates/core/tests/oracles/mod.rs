//! Brute-force reference implementations shared by the integration tests
//! and the acceptance suite. Each one recomputes a result from its
//! definition without calling the code under test.
#![allow(dead_code)]

use dialsum::inference::Scorer;
use dialsum::model::{Batch, Model};
use dialsum::selection::SelectionKind;
use dialsum::vocab::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- selection

fn subsets(total: usize, size: usize) -> Vec<Vec<usize>> {
    (0u32..1 << total)
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| (0..total).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// Selection by exhaustive search over index sets.
///
/// LEAD: the set with the smallest largest index. MIDDLE: the contiguous
/// block whose centre is nearest the dialogue centre, earlier block on a
/// tie. LONGEST: the largest total length, then the lexicographically
/// smallest index list.
pub fn select_brute(lengths: &[usize], kind: SelectionKind, n: usize) -> Vec<usize> {
    let total = lengths.len();
    if kind == SelectionKind::Full || n >= total {
        return (0..total).collect();
    }
    let all = subsets(total, n);
    match kind {
        SelectionKind::Lead => all.into_iter().min_by_key(|s| (s[n - 1], s.clone())).unwrap(),
        SelectionKind::Middle => all
            .into_iter()
            .filter(|s| s[n - 1] - s[0] == n - 1)
            .min_by_key(|s| ((2 * s[0] + n).abs_diff(total), s[0]))
            .unwrap(),
        SelectionKind::Longest => {
            let sum = |s: &Vec<usize>| s.iter().map(|&i| lengths[i]).sum::<usize>();
            let best = all.iter().map(sum).max().unwrap();
            all.into_iter().filter(|s| sum(s) == best).min().unwrap()
        }
        SelectionKind::Full => unreachable!(),
    }
}

// -------------------------------------------------------------------- rouge

/// Clipped overlap by pairing each candidate n-gram with an unused equal
/// reference n-gram.
pub fn ngram_overlap<T: PartialEq + Clone>(cand: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let grams = |s: &[T]| -> Vec<Vec<T>> {
        if s.len() < n {
            Vec::new()
        } else {
            (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
        }
    };
    let c = grams(cand);
    let mut pool = grams(reference);
    let r = pool.len();
    let mut overlap = 0;
    for g in &c {
        if let Some(pos) = pool.iter().position(|p| p == g) {
            pool.remove(pos);
            overlap += 1;
        }
    }
    (overlap, c.len(), r)
}

fn is_subsequence<T: PartialEq>(needle: &[T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}

/// Longest common subsequence by trying every subsequence of `a`.
pub fn lcs_brute<T: PartialEq + Clone>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..1 << a.len() {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<T> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i].clone()).collect();
        if is_subsequence(&sub, b) {
            best = len;
        }
    }
    best
}

/// (precision, recall, f1) from an overlap count.
pub fn prf(overlap: usize, cand: usize, reference: usize) -> (f64, f64, f64) {
    let p = if cand == 0 { 0.0 } else { overlap as f64 / cand as f64 };
    let r = if reference == 0 { 0.0 } else { overlap as f64 / reference as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize, alphabet: u8) -> Vec<u8> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
}

// --------------------------------------------------------------------- beam

/// A scorer whose next-token distribution is a fixed pseudo-random function
/// of the prefix.
pub struct TableScorer {
    pub seed: u64,
    pub vocab: usize,
    pub bos: TokenId,
    pub eos: TokenId,
}

impl TableScorer {
    fn logprobs(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut key = self.seed ^ 0xcbf2_9ce4_8422_2325;
        for &t in prefix {
            key = (key ^ (t as u64 + 1)).wrapping_mul(0x0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        logits.iter().map(|l| l - max - z.ln()).collect()
    }
}

impl Scorer for TableScorer {
    type State = Vec<TokenId>;

    fn start(&self) -> Vec<TokenId> {
        Vec::new()
    }

    fn step(&self, state: &Vec<TokenId>, token: TokenId) -> (Vec<TokenId>, Vec<f64>) {
        let mut next = state.clone();
        next.push(token);
        let lp = self.logprobs(&next);
        (next, lp)
    }

    fn bos(&self) -> TokenId {
        self.bos
    }

    fn eos(&self) -> TokenId {
        self.eos
    }
}

/// Best sequence over every output of at most `max_len` tokens: finished
/// ones end at their first `eos`, unfinished ones have exactly `max_len`
/// tokens. Higher score wins, then the smaller token sequence.
pub fn exhaustive_best<S: Scorer>(scorer: &S, max_len: usize) -> (Vec<TokenId>, f64) {
    fn walk<S: Scorer>(
        scorer: &S,
        state: &S::State,
        next: &[f64],
        prefix: &mut Vec<TokenId>,
        score: f64,
        max_len: usize,
        best: &mut Option<(Vec<TokenId>, f64)>,
    ) {
        for (v, &lp) in next.iter().enumerate() {
            let tok = v as TokenId;
            prefix.push(tok);
            let s = score + lp;
            if tok == scorer.eos() || prefix.len() == max_len {
                let better = match best {
                    None => true,
                    Some((b, bs)) => s > *bs || (s == *bs && prefix.as_slice() < b.as_slice()),
                };
                if better {
                    *best = Some((prefix.clone(), s));
                }
            } else {
                let (st, nx) = scorer.step(state, tok);
                walk(scorer, &st, &nx, prefix, s, max_len, best);
            }
            prefix.pop();
        }
    }
    let (state, next) = scorer.step(&scorer.start(), scorer.bos());
    let mut best = None;
    walk(scorer, &state, &next, &mut Vec::new(), 0.0, max_len, &mut best);
    best.expect("max_len >= 1")
}

// ---------------------------------------------------------------- gradients

/// Relative error `|a − n| / max(|a|, |n|)` per parameter tensor, in
/// Frobenius norm, between the analytic gradient and central differences
/// of the batch loss. Tensors whose two gradients are both zero report 0.
pub fn finite_difference_errors(model: &Model, batch: &Batch, lambda: f64, h: f64) -> Vec<(String, f64)> {
    let (_, analytic) = model.loss_and_grads(batch, lambda, None).unwrap();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for p in 0..model.params().len() {
        let len = model.params().tensors()[p].data.len();
        let mut diff_sq = 0.0;
        let (mut a_sq, mut n_sq) = (0.0, 0.0);
        for k in 0..len {
            let orig = probe.params().tensors()[p].data[k];
            probe.params_mut().tensors_mut()[p].data[k] = orig + h;
            let plus = probe.loss_and_grads(batch, lambda, None).unwrap().0.l_total;
            probe.params_mut().tensors_mut()[p].data[k] = orig - h;
            let minus = probe.loss_and_grads(batch, lambda, None).unwrap().0.l_total;
            probe.params_mut().tensors_mut()[p].data[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.0[p].data[k];
            diff_sq += (a - numeric) * (a - numeric);
            a_sq += a * a;
            n_sq += numeric * numeric;
        }
        let scale = a_sq.sqrt().max(n_sq.sqrt());
        let err = if scale == 0.0 { 0.0 } else { diff_sq.sqrt() / scale };
        out.push((model.params().names()[p].clone(), err));
    }
    out
}

// --------------------------------------------------------------- clustering

/// Partition of `points` into two non-empty groups with the least total
/// within-group squared distance to the group means; labels normalised so
/// point 0 is in group 0.
pub fn best_two_partition(points: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = points.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << n) - 1 {
        if mask & 1 != 0 {
            continue;
        }
        let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let mut cost = 0.0;
        for g in 0..2 {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| labels[i] == g).map(|i| &points[i]).collect();
            let dim = points[0].len();
            let mean: Vec<f64> = (0..dim)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
            cost += members
                .iter()
                .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>();
        }
        if best.as_ref().map_or(true, |(_, c)| cost < *c) {
            best = Some((labels, cost));
        }
    }
    best.unwrap()
}

/// Relabel a partition so the first point is in group 0, the first point
/// outside it in group 1, and so on.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = Vec::new();
    labels
        .iter()
        .map(|l| match map.iter().position(|m| m == l) {
            Some(i) => i,
            None => {
                map.push(*l);
                map.len() - 1
            }
        })
        .collect()
}

// ---------------------------------------------------------------- toy count

/// Per-split figures of the bundled toy corpus, counted by hand from the
/// fixture: summary words, turns and speakers of every dialogue.
pub struct HandCount {
    pub split: &'static str,
    pub summary_words: &'static [usize],
    pub turns: &'static [usize],
    pub speakers: &'static [usize],
}

pub const TOY_HAND_COUNT: [HandCount; 3] = [
    HandCount {
        split: "train",
        summary_words: &[14, 12, 10, 10, 7, 7, 11, 12],
        turns: &[6, 8, 4, 5, 6, 4, 6, 6],
        speakers: &[2, 2, 2, 2, 2, 2, 2, 3],
    },
    HandCount {
        split: "dev",
        summary_words: &[9, 11],
        turns: &[5, 5],
        speakers: &[2, 2],
    },
    HandCount {
        split: "test",
        summary_words: &[6, 8],
        turns: &[5, 7],
        speakers: &[2, 2],
    },
];

impl HandCount {
    /// The stats CSV row for this split, formatted like the `stats` command.
    pub fn csv_row(&self) -> String {
        let f = |v: &[usize]| {
            let mean = v.iter().sum::<usize>() as f64 / v.len() as f64;
            format!("{:.2},{},{}", mean, v.iter().min().unwrap(), v.iter().max().unwrap())
        };
        format!(
            "{},{},{},{},{}",
            self.split,
            self.summary_words.len(),
            f(self.summary_words),
            f(self.speakers),
            f(self.turns)
        )
    }
}
