//! Token-at-a-time decoding with cached keys and values.
//!
//! Every step runs the same kernels as the graph forward pass on a single
//! row, so scores agree bit for bit with [`Model::decode_step`].

use super::params::{AttentionIds, FeedForwardIds, LayerNormIds};
use super::{EncoderOutput, Model, ParamId};
use crate::inference::Scorer;
use crate::tensor::{add_row_bias, attention, gelu_matrix, layer_norm, log_softmax, matmul, AttnMask, Matrix};
use crate::vocab::TokenId;

/// Self-attention keys and values of the tokens consumed so far.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    keys: Vec<Matrix>,
    values: Vec<Matrix>,
    len: usize,
}

impl DecoderCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Decoder bound to one encoder output.
pub struct IncrementalDecoder<'m> {
    model: &'m Model,
    cross: Vec<(Matrix, Matrix)>,
    cross_mask: AttnMask,
}

fn append_row(m: &mut Matrix, row: &Matrix) {
    debug_assert_eq!(row.rows, 1);
    if m.rows == 0 {
        m.cols = row.cols;
    }
    m.data.extend_from_slice(&row.data);
    m.rows += 1;
}

impl<'m> IncrementalDecoder<'m> {
    pub(super) fn new(model: &'m Model, enc: &EncoderOutput) -> Self {
        let cross = model
            .layout
            .decoder
            .iter()
            .map(|l| {
                let a = l.cross_attn;
                let k = matmul(&enc.hidden, model.w(a.wk));
                let v = add_row_bias(&matmul(&enc.hidden, model.w(a.wv)), model.w(a.bv));
                (k, v)
            })
            .collect();
        Self {
            model,
            cross,
            cross_mask: AttnMask {
                causal: false,
                offset: 0,
                key_valid: Some(enc.valid.clone()),
            },
        }
    }

    fn linear(&self, x: &Matrix, w: ParamId, b: ParamId) -> Matrix {
        add_row_bias(&matmul(x, self.model.w(w)), self.model.w(b))
    }

    fn norm(&self, x: &Matrix, ids: LayerNormIds) -> Matrix {
        layer_norm(x, self.model.w(ids.gain), self.model.w(ids.bias)).0
    }

    fn feed_forward(&self, x: &Matrix, ids: FeedForwardIds) -> Matrix {
        let h = gelu_matrix(&self.linear(x, ids.w1, ids.b1));
        self.linear(&h, ids.w2, ids.b2)
    }

    fn project_out(&self, a: &Matrix, ids: AttentionIds) -> Matrix {
        self.linear(a, ids.wo, ids.bo)
    }

    /// Feed one token and return the logits for the next position.
    pub fn step_logits(&self, cache: &mut DecoderCache, token: TokenId) -> Vec<f64> {
        let model = self.model;
        let t = cache.len;
        assert!(
            t < model.config.max_len,
            "decoder position {t} exceeds max_len {}",
            model.config.max_len
        );
        let heads = model.config.n_heads;
        let embed = model.w(model.layout.embed);
        let pos = model.w(model.layout.dec_pos);
        let mut x = Matrix::from_vec(1, embed.cols, embed.row(token as usize).to_vec());
        x.add_assign(&Matrix::from_vec(1, pos.cols, pos.row(t).to_vec()));
        let full = AttnMask::full();
        for (i, l) in model.layout.decoder.iter().enumerate() {
            let h = self.norm(&x, l.ln_self);
            let a = l.self_attn;
            let q = self.linear(&h, a.wq, a.bq);
            append_row(&mut cache.keys[i], &matmul(&h, model.w(a.wk)));
            append_row(&mut cache.values[i], &self.linear(&h, a.wv, a.bv));
            let (o, _) = attention(&q, &cache.keys[i], &cache.values[i], heads, &full);
            x.add_assign(&self.project_out(&o, a));

            let h = self.norm(&x, l.ln_cross);
            let a = l.cross_attn;
            let q = self.linear(&h, a.wq, a.bq);
            let (k, v) = &self.cross[i];
            let (o, _) = attention(&q, k, v, heads, &self.cross_mask);
            x.add_assign(&self.project_out(&o, a));

            let h = self.norm(&x, l.ln_ff);
            x.add_assign(&self.feed_forward(&h, l.ff));
        }
        cache.len += 1;
        let h = self.norm(&x, model.layout.dec_norm);
        self.linear(&h, model.layout.lm_w, model.layout.lm_b).data
    }
}

impl Scorer for IncrementalDecoder<'_> {
    type State = DecoderCache;

    fn start(&self) -> DecoderCache {
        let n = self.model.layout.decoder.len();
        DecoderCache {
            keys: vec![Matrix::zeros(0, 0); n],
            values: vec![Matrix::zeros(0, 0); n],
            len: 0,
        }
    }

    fn step(&self, state: &DecoderCache, token: TokenId) -> (DecoderCache, Vec<f64>) {
        let mut next = state.clone();
        let logits = self.step_logits(&mut next, token);
        (next, log_softmax(&logits))
    }

    fn max_len(&self) -> usize {
        self.model.config.max_len
    }
}
