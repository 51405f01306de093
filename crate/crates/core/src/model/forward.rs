//! Full-sequence forward pass recorded on a [`Graph`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{AttentionIds, FeedForwardIds, LayerNormIds};
use super::Model;
use crate::graph::{Graph, Var};
use crate::tensor::AttnMask;
use crate::vocab::TokenId;

pub(crate) struct Forward<'a, 'p> {
    pub g: &'a mut Graph<'p>,
    model: &'p Model,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a, 'p> Forward<'a, 'p> {
    pub fn new(g: &'a mut Graph<'p>, model: &'p Model, rng: Option<&'a mut ChaCha8Rng>) -> Self {
        Self { g, model, rng }
    }

    fn p(&mut self, id: super::ParamId) -> Var {
        self.g.param(id.0, self.model.params.tensor(id))
    }

    fn dropout(&mut self, x: Var) -> Var {
        let p = self.model.config.dropout;
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if p == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.g.value(x).data.len();
        let mask = (0..n)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.g.dropout(x, mask)
    }

    fn layer_norm(&mut self, x: Var, ids: LayerNormIds) -> Var {
        let gain = self.p(ids.gain);
        let bias = self.p(ids.bias);
        self.g.layer_norm(x, gain, bias)
    }

    fn attention(&mut self, x: Var, memory: Var, ids: AttentionIds, mask: &AttnMask) -> Var {
        let (wq, bq, wk, wv, bv, wo, bo) = (
            self.p(ids.wq),
            self.p(ids.bq),
            self.p(ids.wk),
            self.p(ids.wv),
            self.p(ids.bv),
            self.p(ids.wo),
            self.p(ids.bo),
        );
        let q = self.g.linear(x, wq, Some(bq));
        let k = self.g.linear(memory, wk, None);
        let v = self.g.linear(memory, wv, Some(bv));
        let a = self.g.attention(q, k, v, self.model.config.n_heads, mask);
        self.g.linear(a, wo, Some(bo))
    }

    fn feed_forward(&mut self, x: Var, ids: FeedForwardIds) -> Var {
        let (w1, b1, w2, b2) = (self.p(ids.w1), self.p(ids.b1), self.p(ids.w2), self.p(ids.b2));
        let h = self.g.linear(x, w1, Some(b1));
        let h = self.g.gelu(h);
        self.g.linear(h, w2, Some(b2))
    }

    fn embed(&mut self, ids: &[TokenId], pos: super::ParamId) -> Var {
        let table = self.p(self.model.layout.embed);
        let pos_table = self.p(pos);
        let tok: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let e = self.g.embedding(table, &tok);
        let p = self.g.embedding(pos_table, &positions);
        let x = self.g.add(e, p);
        self.dropout(x)
    }

    /// Final-layer hidden states for `ids`; `valid` marks non-pad keys.
    pub fn encoder(&mut self, ids: &[TokenId], valid: &[bool]) -> Var {
        self.model
            .encoder_calls
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let layout = &self.model.layout;
        let mask = AttnMask {
            causal: false,
            offset: 0,
            key_valid: Some(valid.to_vec()),
        };
        let mut x = self.embed(ids, layout.enc_pos);
        for l in &layout.encoder {
            let h = self.layer_norm(x, l.ln_attn);
            let a = self.attention(h, h, l.attn, &mask);
            let a = self.dropout(a);
            x = self.g.add(x, a);
            let h = self.layer_norm(x, l.ln_ff);
            let f = self.feed_forward(h, l.ff);
            let f = self.dropout(f);
            x = self.g.add(x, f);
        }
        self.layer_norm(x, layout.enc_norm)
    }

    /// Decoder hidden states for the teacher-forced prefix `ids`.
    pub fn decoder(&mut self, ids: &[TokenId], memory: Var, memory_valid: &[bool]) -> Var {
        let layout = &self.model.layout;
        let self_mask = AttnMask {
            causal: true,
            offset: 0,
            key_valid: None,
        };
        let cross_mask = AttnMask {
            causal: false,
            offset: 0,
            key_valid: Some(memory_valid.to_vec()),
        };
        let mut x = self.embed(ids, layout.dec_pos);
        for l in &layout.decoder {
            let h = self.layer_norm(x, l.ln_self);
            let a = self.attention(h, h, l.self_attn, &self_mask);
            let a = self.dropout(a);
            x = self.g.add(x, a);
            let h = self.layer_norm(x, l.ln_cross);
            let a = self.attention(h, memory, l.cross_attn, &cross_mask);
            let a = self.dropout(a);
            x = self.g.add(x, a);
            let h = self.layer_norm(x, l.ln_ff);
            let f = self.feed_forward(h, l.ff);
            let f = self.dropout(f);
            x = self.g.add(x, f);
        }
        self.layer_norm(x, layout.dec_norm)
    }

    pub fn pos_logits(&mut self, hidden: Var) -> Var {
        let w = self.p(self.model.layout.pos_w);
        let b = self.p(self.model.layout.pos_b);
        self.g.linear(hidden, w, Some(b))
    }

    pub fn lm_logits(&mut self, hidden: Var) -> Var {
        let w = self.p(self.model.layout.lm_w);
        let b = self.p(self.model.layout.lm_b);
        self.g.linear(hidden, w, Some(b))
    }
}
