//! The bundled toy corpus: twelve short chats with reference summaries.
//!
//! Dialogues 1-8 form the training split, 9-10 dev and 11-12 test.

use crate::corpus::{parse_raw_chat, Corpus, Split};

const TOY_JSON: &str = include_str!("../data/toy/toy.json");

pub const TRAIN_SIZE: usize = 8;
pub const DEV_SIZE: usize = 2;

/// All twelve dialogues as one corpus.
pub fn corpus() -> Corpus {
    parse_raw_chat(TOY_JSON, Split::Train).expect("bundled toy corpus parses")
}

/// The raw JSON text of the bundled corpus.
pub fn raw_json() -> &'static str {
    TOY_JSON
}

/// The train, dev and test splits.
pub fn splits() -> (Corpus, Corpus, Corpus) {
    let mut all = corpus().dialogues;
    let test = all.split_off(TRAIN_SIZE + DEV_SIZE);
    let dev = all.split_off(TRAIN_SIZE);
    (
        Corpus::new(Split::Train, all),
        Corpus::new(Split::Dev, dev),
        Corpus::new(Split::Test, test),
    )
}
