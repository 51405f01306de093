//! Syntax-aware multi-task abstractive dialogue summarization.
//!
//! A small encoder-decoder transformer reads a chat flattened as
//! `speaker <sep> utterance [EOU]` segments. Its encoder is shared by two
//! heads: a per-token part-of-speech classifier and an autoregressive
//! decoder that writes the summary. Both are trained jointly on
//! `λ·L_pos + (1 − λ)·L_summary`.
//!
//! Around the model sit the pieces needed to run it end to end:
//!
//! * [`corpus`]: chat corpora, statistics, the bundled [`toy`] corpus
//! * [`tokenize`], [`tagger`], [`tags`]: emoticon-aware tokenization and
//!   rule-based tagging over the Twitter tagset
//! * [`vocab`], [`selection`]: vocabulary and input construction
//!   (LEAD/MIDDLE/LONGEST utterance selection)
//! * [`model`], [`train`], [`inference`]: the network, its optimizer and
//!   its decoders
//! * [`metrics`]: ROUGE-1/2/L
//! * [`style`]: speaker-style tf-idf, K-means, PCA and feature ranking
//!
//! The guide under `book/` walks through each part; its code listings are
//! compiled as doc-tests of this crate.

pub mod corpus;
pub mod error;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod selection;
pub mod style;
pub mod tagger;
pub mod tags;
pub mod tensor;
pub mod tokenize;
pub mod toy;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/input.md")]
    mod input {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/styles.md")]
    mod styles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
