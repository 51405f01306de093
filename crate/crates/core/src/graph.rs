//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep over the
//! tape visits every node after all of its consumers.

use std::borrow::Cow;
use std::collections::HashMap;

use crate::tensor::{
    add_row_bias, attention, gelu_grad, gelu_matrix, layer_norm, log_softmax, matmul, matmul_nt,
    matmul_tn, softmax_in_place, AttnMask, Matrix,
};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<Matrix>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Matrix,
    },
}

struct Node<'p> {
    value: Cow<'p, Matrix>,
    op: Op,
    param: Option<usize>,
}

/// Computation tape. Parameter leaves borrow their values.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    param_nodes: HashMap<usize, Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    fn push(&mut self, value: Cow<'p, Matrix>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf for parameter `index`. Repeated calls return the same node so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, index: usize, value: &'p Matrix) -> Var {
        if let Some(&v) = self.param_nodes.get(&index) {
            return v;
        }
        let v = self.push(Cow::Borrowed(value), Op::Leaf);
        self.nodes[v.0].param = Some(index);
        self.param_nodes.insert(index, v);
        v
    }

    /// Constant leaf; receives no gradient outside the tape.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(
            Cow::Owned(out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(Cow::Owned(out), Op::Add(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let out = add_row_bias(self.value(a), self.value(bias));
        self.push(Cow::Owned(out), Op::AddBias(a, bias))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(self.value(a), self.value(b));
        self.push(Cow::Owned(out), Op::MatMul(a, b))
    }

    /// `a · w + b`
    pub fn linear(&mut self, a: Var, w: Var, b: Option<Var>) -> Var {
        let y = self.matmul(a, w);
        match b {
            Some(b) => self.add_bias(y, b),
            None => y,
        }
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale(factor);
        self.push(Cow::Owned(out), Op::Scale(a, factor))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (out, xhat, inv_std) = layer_norm(self.value(x), self.value(gain), self.value(bias));
        self.push(
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = gelu_matrix(self.value(x));
        self.push(Cow::Owned(out), Op::Gelu(x))
    }

    /// Inverted dropout with a precomputed multiplier per element
    /// (0 or `1 / (1 − p)`).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let xv = self.value(x);
        assert_eq!(mask.len(), xv.data.len());
        let data = xv.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Matrix::from_vec(xv.rows, xv.cols, data);
        self.push(Cow::Owned(out), Op::Dropout { x, mask })
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, mask: &AttnMask) -> Var {
        let (out, probs) = attention(self.value(q), self.value(k), self.value(v), heads, mask);
        self.push(
            Cow::Owned(out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
        )
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. Rows with a `None` target contribute nothing. The result is
    /// a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "one target per logit row");
        let mut probs = Matrix::zeros(lv.rows, lv.cols);
        let mut nll = 0.0;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let ls = log_softmax(lv.row(i));
            nll -= ls[t];
            let row = probs.row_mut(i);
            row.copy_from_slice(lv.row(i));
            softmax_in_place(row);
        }
        self.push(
            Cow::Owned(Matrix::scalar(nll)),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Reverse sweep from a scalar node. Returns gradients of every
    /// parameter leaf keyed by parameter index.
    pub fn backward(&self, loss: Var) -> Vec<(usize, Matrix)> {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for index in (0..=loss.0).rev() {
            let Some(g) = grads[index].take() else { continue };
            let node = &self.nodes[index];
            match &node.op {
                Op::Leaf => {
                    grads[index] = Some(g);
                }
                Op::Embedding { table, ids } => {
                    let t = self.value(*table);
                    let mut dt = Matrix::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, &gv) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddBias(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (d, &gv) in db.data.iter_mut().zip(g.row(i)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::MatMul(a, b) => {
                    let da = matmul_nt(&g, self.value(*b));
                    let db = matmul_tn(self.value(*a), &g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, factor) => {
                    let mut ga = g;
                    ga.scale(*factor);
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gain_v = self.value(*gain);
                    let (rows, cols) = g.shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dbias = Matrix::zeros(1, cols);
                    let n = cols as f64;
                    for i in 0..rows {
                        let gi = g.row(i);
                        let hi = xhat.row(i);
                        let mut dh = vec![0.0; cols];
                        for j in 0..cols {
                            dgain.data[j] += gi[j] * hi[j];
                            dbias.data[j] += gi[j];
                            dh[j] = gi[j] * gain_v.data[j];
                        }
                        let mean_dh = dh.iter().sum::<f64>() / n;
                        let mean_dh_h = dh.iter().zip(hi).map(|(a, b)| a * b).sum::<f64>() / n;
                        for j in 0..cols {
                            dx.data[i * cols + j] =
                                inv_std[i] * (dh[j] - mean_dh - hi[j] * mean_dh_h);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *bias, dbias);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let data = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(gv, &xv)| gv * gelu_grad(xv))
                        .collect();
                    accumulate(&mut grads, *x, Matrix::from_vec(g.rows, g.cols, data));
                }
                Op::Dropout { x, mask } => {
                    let data = g.data.iter().zip(mask).map(|(a, m)| a * m).collect();
                    accumulate(&mut grads, *x, Matrix::from_vec(g.rows, g.cols, data));
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    probs,
                } => {
                    let (dq, dk, dv) = attention_backward(
                        &g,
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        *heads,
                        probs,
                    );
                    accumulate(&mut grads, *q, dq);
                    accumulate(&mut grads, *k, dk);
                    accumulate(&mut grads, *v, dv);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g.data[0];
                    let mut dl = Matrix::zeros(probs.rows, probs.cols);
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = dl.row_mut(i);
                        for (d, &p) in row.iter_mut().zip(probs.row(i)) {
                            *d = scale * p;
                        }
                        row[t] -= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }

        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, node)| {
                let p = node.param?;
                grads[i].take().map(|g| (p, g))
            })
            .collect()
    }
}

fn attention_backward(
    g: &Matrix,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    heads: usize,
    probs: &[Matrix],
) -> (Matrix, Matrix, Matrix) {
    let (n, d) = q.shape();
    let m = k.rows;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Matrix::zeros(n, d);
    let mut dk = Matrix::zeros(m, d);
    let mut dv = Matrix::zeros(m, d);
    for (h, p) in probs.iter().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let gi = &g.row(i)[cols.clone()];
            let pi = p.row(i);
            let mut dp = vec![0.0; m];
            let mut weighted = 0.0;
            for j in 0..m {
                if pi[j] == 0.0 {
                    continue;
                }
                let vj = &v.row(j)[cols.clone()];
                dp[j] = crate::tensor::dot(gi, vj);
                weighted += pi[j] * dp[j];
                for (dvj, &gv) in dv.data[j * d + h * dh..j * d + (h + 1) * dh]
                    .iter_mut()
                    .zip(gi)
                {
                    *dvj += pi[j] * gv;
                }
            }
            for j in 0..m {
                if pi[j] == 0.0 {
                    continue;
                }
                let ds = pi[j] * (dp[j] - weighted) * scale;
                let qi = &q.row(i)[cols.clone()];
                let kj = &k.row(j)[cols.clone()];
                for (c, (&kv, &qv)) in kj.iter().zip(qi).enumerate() {
                    dq.data[i * d + h * dh + c] += ds * kv;
                    dk.data[j * d + h * dh + c] += ds * qv;
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of every parameter gradient of `build`.
    fn check(params: &[Matrix], build: impl Fn(&mut Graph<'_>, &[Var]) -> Var) {
        let analytic = {
            let mut g = Graph::new();
            let vars: Vec<Var> = params.iter().enumerate().map(|(i, p)| g.param(i, p)).collect();
            let loss = build(&mut g, &vars);
            let mut out: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect();
            for (i, grad) in g.backward(loss) {
                out[i] = grad;
            }
            out
        };
        let eval = |ps: &[Matrix]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| g.param(i, p)).collect();
            let loss = build(&mut g, &vars);
            g.value(loss).data[0]
        };
        let h = 1e-5;
        for (pi, p) in params.iter().enumerate() {
            for e in 0..p.data.len() {
                let mut plus = params.to_vec();
                plus[pi].data[e] += h;
                let mut minus = params.to_vec();
                minus[pi].data[e] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic[pi].data[e];
                assert!(
                    (a - fd).abs() <= 1e-7 * (1.0 + a.abs().max(fd.abs())),
                    "param {pi} elem {e}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn linear_layer_norm_gelu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![
            random(3, 4, &mut rng),
            random(4, 5, &mut rng),
            random(1, 5, &mut rng),
            random(1, 5, &mut rng),
            random(1, 5, &mut rng),
        ];
        check(&params, |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]));
            let y = g.layer_norm(y, v[3], v[4]);
            let y = g.gelu(y);
            let y = g.scale(y, 0.7);
            g.cross_entropy(y, &[Some(1), None, Some(4)])
        });
    }

    #[test]
    fn masked_multi_head_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = vec![random(4, 6, &mut rng), random(5, 6, &mut rng), random(5, 6, &mut rng)];
        let mask = AttnMask {
            causal: true,
            offset: 1,
            key_valid: Some(vec![true, true, false, true, true]),
        };
        check(&params, |g, v| {
            let a = g.attention(v[0], v[1], v[2], 2, &mask);
            let s = g.add(a, v[0]);
            g.cross_entropy(s, &[Some(0), Some(5), Some(2), Some(3)])
        });
    }

    #[test]
    fn embedding_with_repeated_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = vec![random(5, 3, &mut rng)];
        check(&params, |g, v| {
            let e = g.embedding(v[0], &[1, 3, 1, 0]);
            g.cross_entropy(e, &[Some(0), Some(1), Some(2), Some(2)])
        });
    }

    #[test]
    fn shared_leaf_accumulates() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let mut g = Graph::new();
        let a = g.param(0, &w);
        let b = g.param(0, &w);
        assert_eq!(a, b);
        let s = g.add(a, b);
        let loss = g.cross_entropy(s, &[Some(0)]);
        let grads = g.backward(loss);
        assert_eq!(grads.len(), 1);
    }

    #[test]
    fn dropout_mask_applies_to_gradient() {
        let x = Matrix::from_rows(&[vec![0.5, -0.2, 0.1]]);
        let mut g = Graph::new();
        let v = g.param(0, &x);
        let d = g.dropout(v, vec![2.0, 0.0, 2.0]);
        assert_eq!(g.value(d).data, vec![1.0, 0.0, 0.2]);
        let loss = g.cross_entropy(d, &[Some(0)]);
        let grads = g.backward(loss);
        assert_eq!(grads[0].1.data[1], 0.0);
    }
}
