//! Dense row-major matrices and the numeric kernels shared by the training
//! graph and the incremental decoder.
//!
//! Every kernel processes rows independently and in a fixed order, so the
//! same row yields bit-identical output whether it is computed alone or as
//! part of a larger matrix.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows * cols");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_vec(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }
}

/// `a · b`
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimensions");
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `a · bᵀ`
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimensions");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ai = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ai, b.row(j));
        }
    }
    out
}

/// `aᵀ · b`
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimensions");
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let bk = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            for (o, &bkj) in out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(bk) {
                *o += aki * bkj;
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Add a `1 × cols` bias to every row.
pub fn add_row_bias(a: &Matrix, bias: &Matrix) -> Matrix {
    assert_eq!(bias.rows, 1);
    assert_eq!(a.cols, bias.cols);
    let mut out = a.clone();
    for i in 0..out.rows {
        for (o, b) in out.row_mut(i).iter_mut().zip(&bias.data) {
            *o += b;
        }
    }
    out
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization. Returns the output, the normalized input
/// and the per-row inverse standard deviation.
pub fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let d = x.cols as f64;
    let mut out = Matrix::zeros(x.rows, x.cols);
    let mut xhat = Matrix::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        for j in 0..x.cols {
            let h = (row[j] - mean) * inv;
            xhat.data[i * x.cols + j] = h;
            out.data[i * x.cols + j] = h * gain.data[j] + bias.data[j];
        }
    }
    (out, xhat, inv_std)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub fn gelu_matrix(x: &Matrix) -> Matrix {
    Matrix::from_vec(x.rows, x.cols, x.data.iter().map(|&v| gelu(v)).collect())
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows {
        softmax_in_place(out.row_mut(i));
    }
    out
}

/// Which keys each query may attend to.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnMask {
    /// Query `i` only sees keys `j ≤ i + offset`.
    pub causal: bool,
    /// Absolute position of query row 0 for the causal rule.
    pub offset: usize,
    /// Per-key validity; `None` means every key is valid.
    pub key_valid: Option<Vec<bool>>,
}

impl AttnMask {
    pub fn full() -> Self {
        Self {
            causal: false,
            offset: 0,
            key_valid: None,
        }
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        if self.causal && j > i + self.offset {
            return false;
        }
        self.key_valid.as_ref().is_none_or(|v| v[j])
    }
}

/// Multi-head scaled dot-product attention.
///
/// `q` is `n × d`, `k` and `v` are `m × d`; heads split the columns into
/// `heads` contiguous blocks. Returns the `n × d` output and the attention
/// probabilities, one `n × m` matrix per head. Masked entries have
/// probability exactly zero.
pub fn attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    heads: usize,
    mask: &AttnMask,
) -> (Matrix, Vec<Matrix>) {
    let (n, d) = q.shape();
    let m = k.rows;
    assert_eq!(k.cols, d);
    assert_eq!(v.shape(), (m, d));
    assert_eq!(d % heads, 0);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Matrix::zeros(n, d);
    let mut all_probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut probs = Matrix::zeros(n, m);
        for i in 0..n {
            let qi = &q.row(i)[cols.clone()];
            let allowed: Vec<usize> = (0..m).filter(|&j| mask.allows(i, j)).collect();
            if allowed.is_empty() {
                continue;
            }
            let mut scores: Vec<f64> = allowed
                .iter()
                .map(|&j| dot(qi, &k.row(j)[cols.clone()]) * scale)
                .collect();
            softmax_in_place(&mut scores);
            let out_row = &mut out.data[i * d + h * dh..i * d + (h + 1) * dh];
            for (&j, &p) in allowed.iter().zip(&scores) {
                probs.data[i * m + j] = p;
                for (o, &vj) in out_row.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *o += p * vj;
                }
            }
        }
        all_probs.push(probs);
    }
    (out, all_probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, -1.0], vec![0.0, 3.0]]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![5.0, 7.0, 0.0, 5.5]);
        let bt = Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]]);
        assert_eq!(matmul_nt(&a, &bt), c);
        let at = Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5], vec![3.0, 2.0]]);
        assert_eq!(matmul_tn(&at, &b), c);
    }

    #[test]
    fn layer_norm_normalizes() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let (y, _, _) = layer_norm(&x, &Matrix::filled(1, 4, 1.0), &Matrix::zeros(1, 4));
        let mean: f64 = y.data.iter().sum::<f64>() / 4.0;
        let var: f64 = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-12);
        assert_relative_eq!(var, 1.25 / (1.25 + LAYER_NORM_EPS), epsilon = 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert_relative_eq!(gelu_grad(x), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let mut row = vec![1000.0, 1001.0, 999.0];
        softmax_in_place(&mut row);
        assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let ls = log_softmax(&[1000.0, 1001.0, 999.0]);
        for (p, l) in row.iter().zip(&ls) {
            assert_relative_eq!(p.ln(), *l, epsilon = 1e-12);
        }
    }

    #[test]
    fn causal_attention_ignores_future_keys() {
        let q = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.1], vec![0.0, 0.5]]);
        let mut k = q.clone();
        let v = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let mask = AttnMask {
            causal: true,
            offset: 0,
            key_valid: None,
        };
        let (out, probs) = attention(&q, &k, &v, 1, &mask);
        assert_eq!(probs[0].get(0, 1), 0.0);
        assert_eq!(out.row(0), v.row(0));
        k.row_mut(2).copy_from_slice(&[9.0, 9.0]);
        let (out2, _) = attention(&q, &k, &v, 1, &mask);
        assert_eq!(out.row(0), out2.row(0));
        assert_eq!(out.row(1), out2.row(1));
    }
}
