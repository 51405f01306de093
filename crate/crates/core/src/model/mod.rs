//! Shared-encoder transformer with a tagging head and a summary decoder.
//!
//! One encoder reads the flattened dialogue. Its last-layer states feed a
//! per-token linear classifier over the 25 tags and, through
//! cross-attention, an autoregressive decoder whose LM head predicts the
//! summary. Layers are pre-norm; positions are learned; the token
//! embedding table is shared by encoder and decoder inputs.

mod cache;
mod checkpoint;
mod forward;
mod params;

use std::sync::atomic::{AtomicUsize, Ordering};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{DecoderCache, IncrementalDecoder};
pub use checkpoint::write_atomic;
pub use params::{
    AttentionIds, DecoderLayerIds, EncoderLayerIds, FeedForwardIds, LayerNormIds, Layout,
    ParamId, Parameters,
};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tags::{Tag, NUM_TAGS};
use crate::tensor::{softmax_rows, Matrix};
use crate::vocab::{TokenId, BOS, EOS, PAD};
use forward::Forward;

/// Network shape and initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Longest encoder input and longest decoder sequence, in positions.
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_tags: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale shape: 64-wide, 2 + 2 layers, 4 heads.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_enc_layers: 2,
            n_dec_layers: 2,
            n_heads: 4,
            d_ff: 256,
            dropout: 0.0,
            max_len: 512,
            vocab_size,
            n_tags: NUM_TAGS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Argument(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.n_tags != NUM_TAGS {
            return Err(Error::Argument(format!("n_tags must be {NUM_TAGS}")));
        }
        if (self.vocab_size as u64) <= EOS as u64 {
            return Err(Error::Argument("vocab_size must cover <pad>, <s> and </s>".into()));
        }
        Ok(())
    }
}

/// Last-layer encoder states and the mask of non-pad positions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub hidden: Matrix,
    pub valid: Vec<bool>,
}

/// One training example before padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<TokenId>,
    pub labels: Vec<Option<Tag>>,
    pub summary: Vec<TokenId>,
}

/// Padded batch. Decoder inputs are `<s> y_1 .. y_k` and targets
/// `y_1 .. y_k </s>`; padded target positions are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<TokenId>>,
    pub input_valid: Vec<Vec<bool>>,
    pub labels: Vec<Vec<Option<Tag>>>,
    pub dec_inputs: Vec<Vec<TokenId>>,
    pub targets: Vec<Vec<Option<TokenId>>>,
}

impl Batch {
    pub fn pad(examples: &[Example]) -> Self {
        let n = examples.iter().map(|e| e.input.len()).max().unwrap_or(0);
        let m = examples.iter().map(|e| e.summary.len() + 1).max().unwrap_or(0);
        let mut batch = Batch {
            inputs: Vec::new(),
            input_valid: Vec::new(),
            labels: Vec::new(),
            dec_inputs: Vec::new(),
            targets: Vec::new(),
        };
        for e in examples {
            let mut input = e.input.clone();
            let mut valid = vec![true; input.len()];
            let mut labels = e.labels.clone();
            input.resize(n, PAD);
            valid.resize(n, false);
            labels.resize(n, None);
            let mut dec = vec![BOS];
            dec.extend(&e.summary);
            let mut targets: Vec<Option<TokenId>> = e.summary.iter().copied().map(Some).collect();
            targets.push(Some(EOS));
            dec.resize(m, PAD);
            targets.resize(m, None);
            batch.inputs.push(input);
            batch.input_valid.push(valid);
            batch.labels.push(labels);
            batch.dec_inputs.push(dec);
            batch.targets.push(targets);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Rejects ragged rows and misaligned fields.
    pub fn check(&self) -> Result<()> {
        let b = self.inputs.len();
        if [
            self.input_valid.len(),
            self.labels.len(),
            self.dec_inputs.len(),
            self.targets.len(),
        ]
        .iter()
        .any(|&l| l != b)
        {
            return Err(Error::Argument("batch fields have different example counts".into()));
        }
        let Some(first) = self.inputs.first() else {
            return Ok(());
        };
        let (n, m) = (first.len(), self.dec_inputs[0].len());
        for i in 0..b {
            if self.inputs[i].len() != n
                || self.input_valid[i].len() != n
                || self.labels[i].len() != n
            {
                return Err(Error::Argument(format!(
                    "ragged batch: example {i} input has {} positions, expected {n}",
                    self.inputs[i].len()
                )));
            }
            if self.dec_inputs[i].len() != m || self.targets[i].len() != m {
                return Err(Error::Argument(format!(
                    "ragged batch: example {i} target has {} positions, expected {m}",
                    self.dec_inputs[i].len()
                )));
            }
        }
        Ok(())
    }

    /// Labeled input positions and non-pad target positions.
    pub fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().flatten().filter(|l| l.is_some()).count();
        let ds = self.targets.iter().flatten().filter(|t| t.is_some()).count();
        (pos, ds)
    }
}

/// Logits of both heads for one example, computed from one encoder pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskOutput {
    /// `target_len × vocab_size`
    pub lm_logits: Matrix,
    /// `input_len × n_tags`
    pub pos_logits: Matrix,
}

/// Mean losses of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub l_pos: f64,
    pub l_ds: f64,
    pub l_total: f64,
}

/// Gradients aligned with [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Matrix>);

impl Gradients {
    pub fn zeros_like(params: &Parameters) -> Self {
        Gradients(
            params
                .tensors()
                .iter()
                .map(|t| Matrix::zeros(t.rows, t.cols))
                .collect(),
        )
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.0 {
            g.scale(factor);
        }
    }
}

/// The network: configuration, tensors and the map between them.
#[derive(Debug)]
pub struct Model {
    config: ModelConfig,
    params: Parameters,
    layout: Layout,
    encoder_calls: AtomicUsize,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.clone(),
            layout: self.layout.clone(),
            encoder_calls: AtomicUsize::new(0),
        }
    }
}

impl Model {
    /// Freshly initialized model seeded by `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, params) = params::build(&config, Some(config.seed));
        Ok(Self {
            config,
            params,
            layout,
            encoder_calls: AtomicUsize::new(0),
        })
    }

    pub(crate) fn with_params(config: ModelConfig, params: Parameters, layout: Layout) -> Self {
        Self {
            config,
            params,
            layout,
            encoder_calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn w(&self, id: ParamId) -> &Matrix {
        self.params.tensor(id)
    }

    /// Number of encoder evaluations since construction.
    pub fn encoder_calls(&self) -> usize {
        self.encoder_calls.load(Ordering::Relaxed)
    }

    fn check_ids(&self, ids: &[TokenId], what: &str) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Argument(format!("{what} is empty")));
        }
        if ids.len() > self.config.max_len {
            return Err(Error::Argument(format!(
                "{what} has {} positions, max_len is {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Argument(format!(
                "{what} contains id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    pub fn encode(&self, ids: &[TokenId]) -> Result<EncoderOutput> {
        self.check_ids(ids, "encoder input")?;
        let valid = vec![true; ids.len()];
        let mut g = Graph::new();
        let mut f = Forward::new(&mut g, self, None);
        let h = f.encoder(ids, &valid);
        Ok(EncoderOutput {
            hidden: g.value(h).clone(),
            valid,
        })
    }

    /// Tag distribution for every encoder position.
    pub fn pos_head(&self, enc: &EncoderOutput) -> Matrix {
        let mut g = Graph::new();
        let h = g.constant(enc.hidden.clone());
        let mut f = Forward::new(&mut g, self, None);
        let logits = f.pos_logits(h);
        softmax_rows(g.value(logits))
    }

    /// Next-token distribution after `prefix`, which must start with `<s>`.
    pub fn decode_step(&self, prefix: &[TokenId], enc: &EncoderOutput) -> Result<Vec<f64>> {
        if prefix.first() != Some(&BOS) {
            return Err(Error::Argument("decoder prefix must start with <s>".into()));
        }
        self.check_ids(prefix, "decoder prefix")?;
        let logits = self.teacher_forced_logits(prefix, enc);
        let mut last = softmax_rows(&logits.slice_rows(logits.rows - 1, logits.rows));
        Ok(std::mem::take(&mut last.data))
    }

    /// LM logits at every position of a decoder input.
    pub fn teacher_forced_logits(&self, dec_input: &[TokenId], enc: &EncoderOutput) -> Matrix {
        let mut g = Graph::new();
        let memory = g.constant(enc.hidden.clone());
        let mut f = Forward::new(&mut g, self, None);
        let h = f.decoder(dec_input, memory, &enc.valid);
        let logits = f.lm_logits(h);
        g.value(logits).clone()
    }

    /// Cached decoder for beam and greedy search.
    pub fn incremental(&self, enc: &EncoderOutput) -> IncrementalDecoder<'_> {
        IncrementalDecoder::new(self, enc)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        batch.check()?;
        for (i, input) in batch.inputs.iter().enumerate() {
            self.check_ids(input, &format!("example {i} input"))?;
            self.check_ids(&batch.dec_inputs[i], &format!("example {i} decoder input"))?;
        }
        Ok(())
    }

    /// Both heads' logits, one encoder pass per example.
    pub fn forward_multitask(&self, batch: &Batch) -> Result<Vec<MultitaskOutput>> {
        self.check_batch(batch)?;
        Ok((0..batch.len())
            .map(|i| {
                let mut g = Graph::new();
                let mut f = Forward::new(&mut g, self, None);
                let enc = f.encoder(&batch.inputs[i], &batch.input_valid[i]);
                let pos = f.pos_logits(enc);
                let dec = f.decoder(&batch.dec_inputs[i], enc, &batch.input_valid[i]);
                let lm = f.lm_logits(dec);
                MultitaskOutput {
                    lm_logits: g.value(lm).clone(),
                    pos_logits: g.value(pos).clone(),
                }
            })
            .collect())
    }

    /// Combined loss `λ·L_pos + (1 − λ)·L_ds` of a batch and its gradient.
    /// Each term is a mean over its contributing positions in the whole
    /// batch. Dropout is active when `rng` is given.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        lambda: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(BatchLoss, Gradients)> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Argument(format!("lambda {lambda} outside [0, 1]")));
        }
        self.check_batch(batch)?;
        let (n_pos, n_ds) = batch.counts();
        let w_pos = if n_pos == 0 { 0.0 } else { lambda / n_pos as f64 };
        let w_ds = if n_ds == 0 { 0.0 } else { (1.0 - lambda) / n_ds as f64 };
        let mut grads = Gradients::zeros_like(&self.params);
        let (mut sum_pos, mut sum_ds) = (0.0, 0.0);
        for i in 0..batch.len() {
            let mut g = Graph::new();
            let mut f = Forward::new(&mut g, self, rng.as_deref_mut());
            let enc = f.encoder(&batch.inputs[i], &batch.input_valid[i]);
            let pos = f.pos_logits(enc);
            let dec = f.decoder(&batch.dec_inputs[i], enc, &batch.input_valid[i]);
            let lm = f.lm_logits(dec);
            let tags: Vec<Option<usize>> =
                batch.labels[i].iter().map(|l| l.map(Tag::index)).collect();
            let targets: Vec<Option<usize>> =
                batch.targets[i].iter().map(|t| t.map(|t| t as usize)).collect();
            let ce_pos = g.cross_entropy(pos, &tags);
            let ce_ds = g.cross_entropy(lm, &targets);
            sum_pos += g.value(ce_pos).data[0];
            sum_ds += g.value(ce_ds).data[0];
            let a = g.scale(ce_pos, w_pos);
            let b = g.scale(ce_ds, w_ds);
            let loss = g.add(a, b);
            for (p, grad) in g.backward(loss) {
                grads.0[p].add_assign(&grad);
            }
        }
        let l_pos = if n_pos == 0 { 0.0 } else { sum_pos / n_pos as f64 };
        let l_ds = if n_ds == 0 { 0.0 } else { sum_ds / n_ds as f64 };
        let loss = BatchLoss {
            l_pos,
            l_ds,
            l_total: lambda * l_pos + (1.0 - lambda) * l_ds,
        };
        Ok((loss, grads))
    }
}
