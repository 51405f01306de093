//! Joint training of the tagging and summary objectives.
//!
//! Every optimizer step minimizes `λ·L_pos + (1 − λ)·L_ds` on one batch
//! with Adam and global-norm clipping. After each epoch the dev split is
//! decoded with beam search; the parameters with the best dev ROUGE-1 F1
//! are kept, and training stops once `patience` epochs in a row fail to
//! improve on it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue};
use crate::error::{Error, Result};
use crate::inference::summarize;
use crate::metrics::{corpus_rouge, normalize};
use crate::model::{Batch, Example, Gradients, Model};
use crate::selection::{build_input, select, SelectionKind, SelectionStrategy};
use crate::tags::Tag;
use crate::tensor::{log_softmax, Matrix};
use crate::vocab::{TokenId, Vocabulary};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const CLIP_NORM: f64 = 1.0;

/// Training hyperparameters. Serialized keys match the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Beam size used to decode the dev split.
    pub beam: usize,
    pub patience: usize,
    pub seed: u64,
    pub input_type: SelectionKind,
    pub n: usize,
    /// Encoder input length in positions.
    pub max_len: usize,
    /// Summary length cap in tokens, for training targets and decoding.
    pub summary_max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            lr: 3e-4,
            epochs: 20,
            batch_size: 8,
            beam: 4,
            patience: 3,
            seed: 0,
            input_type: SelectionKind::Full,
            n: 0,
            max_len: 512,
            summary_max_len: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Argument(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("beam", self.beam),
            ("max_len", self.max_len),
            ("summary_max_len", self.summary_max_len),
        ] {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        self.strategy().map(|_| ())
    }

    pub fn strategy(&self) -> Result<SelectionStrategy> {
        SelectionStrategy::new(self.input_type, self.n)
    }
}

/// Mean losses over one epoch, logged once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub step: usize,
    pub l_ds: f64,
    pub l_pos: f64,
    pub l_total: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    #[serde(flatten)]
    pub loss: LossReport,
    pub dev_rouge1: f64,
}

/// `λ·l_pos + (1 − λ)·l_ds`
pub fn combined_loss(l_pos: f64, l_ds: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Argument(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(lambda * l_pos + (1.0 - lambda) * l_ds)
}

fn mean_nll(logits: &Matrix, targets: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (i, t) in targets.iter().enumerate() {
        if let Some(t) = *t {
            total -= log_softmax(logits.row(i))[t];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Mean negative log-likelihood of the reference under teacher-forced
/// logits. `targets` holds the gold next token per row, `None` on padding.
pub fn ds_loss(logits: &Matrix, targets: &[Option<TokenId>]) -> Result<f64> {
    if logits.rows != targets.len() {
        return Err(Error::Argument(format!(
            "{} logit rows for {} target positions",
            logits.rows,
            targets.len()
        )));
    }
    let t: Vec<Option<usize>> = targets.iter().map(|t| t.map(|t| t as usize)).collect();
    Ok(mean_nll(logits, &t))
}

/// Mean negative log-likelihood over labeled positions; 0 without any.
pub fn pos_loss(logits: &Matrix, labels: &[Option<Tag>]) -> f64 {
    let t: Vec<Option<usize>> = labels.iter().map(|l| l.map(Tag::index)).collect();
    mean_nll(logits, &t)
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [Matrix], grads: &[Matrix], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Argument("parameter, gradient and state counts differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Argument(format!(
                "tensor {i}: parameter {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i].data;
        let v = &mut state.v[i].data;
        for (j, (w, &gj)) in p.data.iter_mut().zip(&g.data).enumerate() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * gj;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Rescale `grads` to global norm `max_norm` if larger. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// A dialogue ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub id: String,
    pub example: Example,
    pub reference: Vec<String>,
}

/// Select turns, flatten and encode one dialogue.
pub fn prepare_dialogue(
    d: &Dialogue,
    vocab: &Vocabulary,
    strategy: SelectionStrategy,
    max_len: usize,
    summary_max_len: usize,
) -> Result<Prepared> {
    let input = build_input(d, &select(d, strategy), vocab, max_len)?;
    let mut summary = vocab.encode(&d.summary_tokens);
    summary.truncate(summary_max_len);
    Ok(Prepared {
        id: d.id.clone(),
        example: Example {
            input: input.token_ids,
            labels: input.label_ids,
            summary,
        },
        reference: d.summary_tokens.clone(),
    })
}

pub fn prepare(
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<Vec<Prepared>> {
    let strategy = config.strategy()?;
    corpus
        .dialogues
        .iter()
        .map(|d| prepare_dialogue(d, vocab, strategy, config.max_len, config.summary_max_len))
        .collect()
}

/// Batches of one epoch: shuffle, sort windows of eight batches by input
/// length, cut into batches, shuffle the batch order.
pub fn epoch_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    for window in order.chunks(batch_size * 8) {
        let mut window = window.to_vec();
        window.sort_by_key(|&i| lengths[i]);
        batches.extend(window.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Decode every prepared dialogue and score ROUGE-1 F1 against its
/// reference.
pub fn dev_rouge1(model: &Model, dev: &[Prepared], beam: usize, max_len: usize, vocab: &Vocabulary) -> Result<f64> {
    let mut pairs = Vec::with_capacity(dev.len());
    for p in dev {
        let out = summarize(model, &p.example.input, beam, max_len)?;
        let text = vocab.decode(out.content()).join(" ");
        pairs.push((normalize(&text), normalize(&p.reference.join(" "))));
    }
    Ok(corpus_rouge(&pairs)?.rouge1.f1)
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev ROUGE-1.
    pub model: Model,
    pub best_epoch: usize,
    pub best_dev_rouge1: f64,
    pub log: Vec<EpochRecord>,
    pub steps: usize,
}

/// Train `model` on `train`, selecting parameters on `dev`.
/// `on_epoch` sees each log record as it is produced.
pub fn train(
    mut model: Model,
    train: &[Prepared],
    dev: &[Prepared],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if dev.is_empty() {
        return Err(Error::Precondition("training needs a non-empty dev split".into()));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let lengths: Vec<usize> = train.iter().map(|p| p.example.input.len()).collect();
    let mut adam = AdamState::new(model.params().tensors());
    let mut best: Option<(Model, usize, f64)> = None;
    let mut log = Vec::new();
    let mut step = 0;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        let batches = epoch_batches(&lengths, config.batch_size, &mut shuffle_rng);
        let (mut sum_pos, mut sum_ds) = (0.0, 0.0);
        for indices in &batches {
            step += 1;
            let examples: Vec<Example> = indices.iter().map(|&i| train[i].example.clone()).collect();
            let batch = Batch::pad(&examples);
            let (loss, mut grads) = model.loss_and_grads(&batch, config.lambda, Some(&mut dropout_rng))?;
            if !loss.l_total.is_finite() {
                return Err(Error::NumericFailure {
                    step,
                    detail: format!("loss is {} (l_pos {}, l_ds {})", loss.l_total, loss.l_pos, loss.l_ds),
                });
            }
            if let Some(i) = grads.0.iter().position(|g| !g.is_finite()) {
                return Err(Error::NumericFailure {
                    step,
                    detail: format!("gradient of `{}` is not finite", model.params().names()[i]),
                });
            }
            clip_global_norm(&mut grads, CLIP_NORM);
            adam_step(model.params_mut().tensors_mut(), &grads.0, &mut adam, config.lr)?;
            sum_pos += loss.l_pos;
            sum_ds += loss.l_ds;
        }
        let nb = batches.len() as f64;
        let (l_pos, l_ds) = (sum_pos / nb, sum_ds / nb);
        let record = EpochRecord {
            loss: LossReport {
                epoch,
                step,
                l_ds,
                l_pos,
                l_total: combined_loss(l_pos, l_ds, config.lambda)?,
            },
            dev_rouge1: dev_rouge1(&model, dev, config.beam, config.summary_max_len, vocab)?,
        };
        on_epoch(&record);
        log.push(record);

        let improved = best.as_ref().is_none_or(|b| record.dev_rouge1 > b.2);
        if improved {
            best = Some((model.clone(), epoch, record.dev_rouge1));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }

    let (best_model, best_epoch, best_dev_rouge1) = match best {
        Some(b) => b,
        None => (model, 0, 0.0),
    };
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        best_dev_rouge1,
        log,
        steps: step,
    })
}
