mod oracles;

use dialsum::corpus::Dialogue;
use dialsum::selection::{select, select_by_lengths, SelectionKind, SelectionStrategy};
use oracles::select_brute;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dialogue(rng: &mut ChaCha8Rng, id: usize) -> (Dialogue, Vec<usize>) {
    let turns = rng.gen_range(1..=10);
    let lengths: Vec<usize> = (0..turns).map(|_| rng.gen_range(1..=5)).collect();
    let texts: Vec<String> = lengths.iter().map(|&k| vec!["word"; k].join(" ")).collect();
    let names = ["ann", "bob", "cy"];
    let d = Dialogue::from_turns(
        format!("d{id}"),
        texts.iter().enumerate().map(|(i, t)| (names[i % 3], t.as_str())),
        "summary",
    );
    (d, lengths)
}

#[test]
fn hundred_random_dialogues_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for id in 0..100 {
        let (d, lengths) = random_dialogue(&mut rng, id);
        for kind in [SelectionKind::Lead, SelectionKind::Middle, SelectionKind::Longest] {
            for n in 1..=lengths.len() + 1 {
                let got = select(&d, SelectionStrategy::new(kind, n).unwrap());
                assert_eq!(got, select_brute(&lengths, kind, n), "{kind} n={n} lengths={lengths:?}");
            }
        }
        assert_eq!(select(&d, SelectionStrategy::full()), (0..lengths.len()).collect::<Vec<_>>());
    }
}

#[test]
fn worked_examples() {
    let lengths = [3, 9, 2, 9, 5];
    assert_eq!(select_by_lengths(&lengths, SelectionStrategy::longest(2)), [1, 3]);
    assert_eq!(select_by_lengths(&lengths, SelectionStrategy::middle(2)), [1, 2]);
    assert_eq!(select_by_lengths(&[1; 4], SelectionStrategy::lead(2)), [0, 1]);
    assert_eq!(select_brute(&lengths, SelectionKind::Longest, 2), [1, 3]);
    assert_eq!(select_brute(&lengths, SelectionKind::Middle, 2), [1, 2]);
}
