use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::tensor::Matrix;

const INIT_RANGE: f64 = 0.08;

/// Index of one tensor in [`Parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl Parameters {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

/// Projections of one attention block. Keys carry no bias: a shared
/// offset on every score cancels in the softmax.
#[derive(Debug, Clone, Copy)]
pub struct AttentionIds {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForwardIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderLayerIds {
    pub ln_attn: LayerNormIds,
    pub attn: AttentionIds,
    pub ln_ff: LayerNormIds,
    pub ff: FeedForwardIds,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderLayerIds {
    pub ln_self: LayerNormIds,
    pub self_attn: AttentionIds,
    pub ln_cross: LayerNormIds,
    pub cross_attn: AttentionIds,
    pub ln_ff: LayerNormIds,
    pub ff: FeedForwardIds,
}

/// Where every tensor of the network lives.
#[derive(Debug, Clone)]
pub struct Layout {
    /// Token embeddings, read by both encoder and decoder.
    pub embed: ParamId,
    pub enc_pos: ParamId,
    pub dec_pos: ParamId,
    pub encoder: Vec<EncoderLayerIds>,
    pub enc_norm: LayerNormIds,
    pub decoder: Vec<DecoderLayerIds>,
    pub dec_norm: LayerNormIds,
    /// Tagging head `W_m` and its bias.
    pub pos_w: ParamId,
    pub pos_b: ParamId,
    /// Language-model head `W` and its bias.
    pub lm_w: ParamId,
    pub lm_b: ParamId,
}

impl Layout {
    /// Parameters read by the encoder, including the shared embedding.
    pub fn encoder_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embed, self.enc_pos];
        for l in &self.encoder {
            ids.extend(ln_ids(l.ln_attn));
            ids.extend(attn_ids(l.attn));
            ids.extend(ln_ids(l.ln_ff));
            ids.extend(ff_ids(l.ff));
        }
        ids.extend(ln_ids(self.enc_norm));
        ids
    }

    /// Parameters used only by the summary decoder and LM head.
    pub fn decoder_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.dec_pos];
        for l in &self.decoder {
            ids.extend(ln_ids(l.ln_self));
            ids.extend(attn_ids(l.self_attn));
            ids.extend(ln_ids(l.ln_cross));
            ids.extend(attn_ids(l.cross_attn));
            ids.extend(ln_ids(l.ln_ff));
            ids.extend(ff_ids(l.ff));
        }
        ids.extend(ln_ids(self.dec_norm));
        ids.extend([self.lm_w, self.lm_b]);
        ids
    }

    pub fn pos_head_ids(&self) -> Vec<ParamId> {
        vec![self.pos_w, self.pos_b]
    }
}

fn ln_ids(l: LayerNormIds) -> [ParamId; 2] {
    [l.gain, l.bias]
}

fn attn_ids(a: AttentionIds) -> [ParamId; 7] {
    [a.wq, a.bq, a.wk, a.wv, a.bv, a.wo, a.bo]
}

fn ff_ids(f: FeedForwardIds) -> [ParamId; 4] {
    [f.w1, f.b1, f.w2, f.b2]
}

enum Init {
    Uniform,
    Zeros,
    Ones,
}

struct Builder {
    names: Vec<String>,
    tensors: Vec<Matrix>,
    rng: Option<ChaCha8Rng>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> ParamId {
        let m = match (init, self.rng.as_mut()) {
            (Init::Uniform, Some(rng)) => Matrix::from_vec(
                rows,
                cols,
                (0..rows * cols)
                    .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
                    .collect(),
            ),
            (Init::Ones, _) => Matrix::filled(rows, cols, 1.0),
            _ => Matrix::zeros(rows, cols),
        };
        self.names.push(name);
        self.tensors.push(m);
        ParamId(self.tensors.len() - 1)
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) -> LayerNormIds {
        LayerNormIds {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIds {
        AttentionIds {
            wq: self.add(format!("{prefix}.wq"), d, d, Init::Uniform),
            bq: self.add(format!("{prefix}.bq"), 1, d, Init::Zeros),
            wk: self.add(format!("{prefix}.wk"), d, d, Init::Uniform),
            wv: self.add(format!("{prefix}.wv"), d, d, Init::Uniform),
            bv: self.add(format!("{prefix}.bv"), 1, d, Init::Zeros),
            wo: self.add(format!("{prefix}.wo"), d, d, Init::Uniform),
            bo: self.add(format!("{prefix}.bo"), 1, d, Init::Zeros),
        }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, d_ff: usize) -> FeedForwardIds {
        FeedForwardIds {
            w1: self.add(format!("{prefix}.w1"), d, d_ff, Init::Uniform),
            b1: self.add(format!("{prefix}.b1"), 1, d_ff, Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), d_ff, d, Init::Uniform),
            b2: self.add(format!("{prefix}.b2"), 1, d, Init::Zeros),
        }
    }
}

/// Build the layout and tensors for `config`. Without a seed every
/// tensor is zero-filled apart from layer-norm gains.
pub(super) fn build(config: &ModelConfig, seed: Option<u64>) -> (Layout, Parameters) {
    let d = config.d_model;
    let mut b = Builder {
        names: Vec::new(),
        tensors: Vec::new(),
        rng: seed.map(ChaCha8Rng::seed_from_u64),
    };
    let embed = b.add("embed".into(), config.vocab_size, d, Init::Uniform);
    let enc_pos = b.add("encoder.pos".into(), config.max_len, d, Init::Uniform);
    let dec_pos = b.add("decoder.pos".into(), config.max_len, d, Init::Uniform);
    let encoder = (0..config.n_enc_layers)
        .map(|i| {
            let p = format!("encoder.{i}");
            EncoderLayerIds {
                ln_attn: b.layer_norm(&format!("{p}.ln_attn"), d),
                attn: b.attention(&format!("{p}.attn"), d),
                ln_ff: b.layer_norm(&format!("{p}.ln_ff"), d),
                ff: b.feed_forward(&format!("{p}.ff"), d, config.d_ff),
            }
        })
        .collect();
    let enc_norm = b.layer_norm("encoder.norm", d);
    let decoder = (0..config.n_dec_layers)
        .map(|i| {
            let p = format!("decoder.{i}");
            DecoderLayerIds {
                ln_self: b.layer_norm(&format!("{p}.ln_self"), d),
                self_attn: b.attention(&format!("{p}.self_attn"), d),
                ln_cross: b.layer_norm(&format!("{p}.ln_cross"), d),
                cross_attn: b.attention(&format!("{p}.cross_attn"), d),
                ln_ff: b.layer_norm(&format!("{p}.ln_ff"), d),
                ff: b.feed_forward(&format!("{p}.ff"), d, config.d_ff),
            }
        })
        .collect();
    let dec_norm = b.layer_norm("decoder.norm", d);
    let pos_w = b.add("pos_head.w".into(), d, config.n_tags, Init::Uniform);
    let pos_b = b.add("pos_head.b".into(), 1, config.n_tags, Init::Zeros);
    let lm_w = b.add("lm_head.w".into(), d, config.vocab_size, Init::Uniform);
    let lm_b = b.add("lm_head.b".into(), 1, config.vocab_size, Init::Zeros);
    let layout = Layout {
        embed,
        enc_pos,
        dec_pos,
        encoder,
        enc_norm,
        decoder,
        dec_norm,
        pos_w,
        pos_b,
        lm_w,
        lm_b,
    };
    let params = Parameters {
        names: b.names,
        tensors: b.tensors,
    };
    (layout, params)
}
