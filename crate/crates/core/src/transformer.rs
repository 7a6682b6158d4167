//! Transformer building blocks: dense layers, layer norm, masked multi-head
//! attention and pre-norm blocks.
//!
//! Work is split across rows with rayon. Each output row is computed by the
//! same sequential loop regardless of how rows are scheduled, so results do
//! not depend on the thread count.

use rayon::prelude::*;

use crate::error::{CodecError, Result};

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CodecError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Copies columns `start..start + width` into a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Matrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        if parts.iter().any(|m| m.cols != cols) {
            return Err(CodecError::Shape("vstack of mismatched widths".into()));
        }
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Rows `start..start + count`.
    pub fn rows_slice(&self, start: usize, count: usize) -> Matrix {
        Matrix {
            rows: count,
            cols: self.cols,
            data: self.data[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }
}

/// Additive attention mask with entries in `{0, −∞}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    size: usize,
    data: Vec<f64>,
}

impl AttentionMask {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(CodecError::Shape(format!(
                "{} mask entries for a {size}x{size} mask",
                data.len()
            )));
        }
        if data.iter().any(|&v| v != 0.0 && v != f64::NEG_INFINITY) {
            return Err(CodecError::Domain("mask entries must be 0 or -inf".into()));
        }
        Ok(AttentionMask { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 0.0
    }
}

/// Mask over `frames × tokens_per_frame` positions: full attention within a
/// frame, and position `i` may attend to `j` only when `frame(j) ≤ frame(i)`.
pub fn build_block_causal_mask(frames: usize, tokens_per_frame: usize) -> AttentionMask {
    let n = frames * tokens_per_frame;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if j / tokens_per_frame > i / tokens_per_frame {
                data[i * n + j] = f64::NEG_INFINITY;
            }
        }
    }
    AttentionMask { size: n, data }
}

/// `softmax(QKᵀ/√d_head + M)·V`. Masked positions are skipped outright, so a
/// row never reads keys or values it cannot attend to.
pub fn masked_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: Option<&AttentionMask>,
) -> Result<Matrix> {
    let n = q.rows;
    let dh = q.cols;
    if k.rows != n || v.rows != n || k.cols != dh {
        return Err(CodecError::Shape(format!(
            "attention shapes Q {}x{}, K {}x{}, V {}x{} disagree",
            q.rows, q.cols, k.rows, k.cols, v.rows, v.cols
        )));
    }
    if let Some(m) = mask {
        if m.size != n {
            return Err(CodecError::Shape(format!(
                "mask size {} does not match {n} positions",
                m.size
            )));
        }
        if let Some(i) = (0..n).find(|&i| m.row(i).iter().all(|&x| x != 0.0)) {
            return Err(CodecError::Domain(format!(
                "attention row {i} is fully masked"
            )));
        }
    }
    let scale = 1.0 / (dh as f64).sqrt();
    let dv = v.cols;
    let mut out = vec![0.0; n * dv];
    out.par_chunks_mut(dv.max(1))
        .enumerate()
        .for_each(|(i, out_row)| {
            let qi = q.row(i);
            let mut scores: Vec<(usize, f64)> = Vec::with_capacity(n);
            for j in 0..n {
                let bias = match mask {
                    Some(m) => {
                        let b = m.get(i, j);
                        if b == f64::NEG_INFINITY {
                            continue;
                        }
                        b
                    }
                    None => 0.0,
                };
                let s: f64 = qi.iter().zip(k.row(j)).map(|(a, b)| a * b).sum();
                scores.push((j, s * scale + bias));
            }
            let max = scores
                .iter()
                .map(|&(_, s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (_, s) in scores.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            for &(j, w) in &scores {
                let w = w / total;
                for (o, &x) in out_row.iter_mut().zip(v.row(j)) {
                    *o += w * x;
                }
            }
        });
    Matrix::new(n, dv, out)
}

/// `y = x·Wᵀ + b` with `W` stored `out × in`.
pub fn linear(x: &Matrix, w: &[f64], b: &[f64], out_dim: usize) -> Result<Matrix> {
    let in_dim = x.cols;
    if w.len() != out_dim * in_dim || b.len() != out_dim {
        return Err(CodecError::Shape(format!(
            "linear layer {out_dim}x{in_dim} has {} weights and {} biases",
            w.len(),
            b.len()
        )));
    }
    let mut out = vec![0.0; x.rows * out_dim];
    out.par_chunks_mut(out_dim.max(1))
        .enumerate()
        .for_each(|(r, out_row)| {
            let xr = x.row(r);
            for (o, (wr, bo)) in out_row.iter_mut().zip(w.chunks_exact(in_dim).zip(b)) {
                *o = bo + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
            }
        });
    Matrix::new(x.rows, out_dim, out)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64]) -> Matrix {
    let d = x.cols;
    let mut out = x.data.clone();
    out.par_chunks_mut(d.max(1)).for_each(|row| {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    });
    Matrix {
        rows: x.rows,
        cols: d,
        data: out,
    }
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Parameters of one pre-norm transformer block of width `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub dim: usize,
    pub heads: usize,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    /// `3d × d`: query, key and value projections stacked.
    pub qkv_weight: Vec<f64>,
    pub qkv_bias: Vec<f64>,
    pub out_weight: Vec<f64>,
    pub out_bias: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    /// `4d × d`.
    pub fc1_weight: Vec<f64>,
    pub fc1_bias: Vec<f64>,
    /// `d × 4d`.
    pub fc2_weight: Vec<f64>,
    pub fc2_bias: Vec<f64>,
}

pub const MLP_EXPANSION: usize = 4;

impl BlockWeights {
    /// `x + attn(ln1(x))`, then `+ mlp(ln2(·))`.
    pub fn forward(&self, x: &Matrix, mask: Option<&AttentionMask>) -> Result<Matrix> {
        let d = self.dim;
        if x.cols != d {
            return Err(CodecError::Shape(format!(
                "block width {d} applied to {} features",
                x.cols
            )));
        }
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(CodecError::Shape(format!(
                "{} heads do not divide width {d}",
                self.heads
            )));
        }
        let h = layer_norm(x, &self.ln1_gain, &self.ln1_bias);
        let qkv = linear(&h, &self.qkv_weight, &self.qkv_bias, 3 * d)?;
        let dh = d / self.heads;
        let mut heads_out = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let q = qkv.columns(head * dh, dh);
            let k = qkv.columns(d + head * dh, dh);
            let v = qkv.columns(2 * d + head * dh, dh);
            heads_out.push(masked_attention(&q, &k, &v, mask)?);
        }
        let mut merged = Matrix::zeros(x.rows, d);
        for (head, m) in heads_out.iter().enumerate() {
            for r in 0..x.rows {
                merged.data[r * d + head * dh..r * d + (head + 1) * dh].copy_from_slice(m.row(r));
            }
        }
        let attn = linear(&merged, &self.out_weight, &self.out_bias, d)?;
        let mut x1 = x.clone();
        add_assign(&mut x1, &attn);

        let h2 = layer_norm(&x1, &self.ln2_gain, &self.ln2_bias);
        let mut hidden = linear(&h2, &self.fc1_weight, &self.fc1_bias, MLP_EXPANSION * d)?;
        hidden.data.par_iter_mut().for_each(|v| *v = gelu(*v));
        let mlp = linear(&hidden, &self.fc2_weight, &self.fc2_bias, d)?;
        add_assign(&mut x1, &mlp);
        Ok(x1)
    }
}

fn add_assign(a: &mut Matrix, b: &Matrix) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn single_frame_mask_is_zero() {
        let mask = build_block_causal_mask(1, 4);
        assert_eq!(mask.size(), 4);
        assert!(mask.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_frame_mask() {
        let mask = build_block_causal_mask(2, 1);
        assert_eq!(mask.data, vec![0.0, f64::NEG_INFINITY, 0.0, 0.0]);
    }

    #[test]
    fn three_frame_block_mask() {
        let mask = build_block_causal_mask(3, 2);
        for i in 0..6 {
            for j in 0..6 {
                let allowed = j / 2 <= i / 2;
                assert_eq!(mask.allows(i, j), allowed, "({i},{j})");
            }
        }
        // rows 0-1 see only frame 0; rows 4-5 see everything
        assert!(mask.allows(1, 0) && mask.allows(0, 1) && !mask.allows(1, 2));
        assert!((0..6).all(|j| mask.allows(5, j)));
    }

    #[test]
    fn singleton_attention_returns_v() {
        let v = m(1, 3, &[1.0, -2.0, 0.5]);
        let out = masked_attention(
            &m(1, 3, &[4.0, 1.0, 1.0]),
            &m(1, 3, &[0.1, 0.2, 0.3]),
            &v,
            None,
        )
        .unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn zero_query_averages_unmasked_rows() {
        let q = Matrix::zeros(3, 2);
        let k = m(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = m(3, 1, &[3.0, 6.0, 9.0]);
        let mask = build_block_causal_mask(3, 1);
        let out = masked_attention(&q, &k, &v, Some(&mask)).unwrap();
        let expect = [3.0, 4.5, 6.0];
        for (o, e) in out.data.iter().zip(expect) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_two_by_two_matches_hand_softmax() {
        // d_head = 1: scores q_i k_j, scale 1
        let q = m(2, 1, &[1.0, 2.0]);
        let k = m(2, 1, &[0.5, -1.0]);
        let v = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let mask = build_block_causal_mask(2, 1);
        let out = masked_attention(&q, &k, &v, Some(&mask)).unwrap();
        // row 0 sees only key 0
        assert_eq!(out.row(0), &[1.0, 0.0]);
        // row 1: scores 1.0 and -2.0
        let e0 = 1.0f64.exp();
        let e1 = (-2.0f64).exp();
        let w0 = e0 / (e0 + e1);
        assert!((out.get(1, 0) - w0).abs() < 1e-12);
        assert!((out.get(1, 1) - (1.0 - w0)).abs() < 1e-12);
    }

    #[test]
    fn fully_masked_row_is_domain_error() {
        let mask =
            AttentionMask::new(2, vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0]).unwrap();
        let x = Matrix::zeros(2, 1);
        assert!(matches!(
            masked_attention(&x, &x, &x, Some(&mask)),
            Err(CodecError::Domain(_))
        ));
    }

    #[test]
    fn attention_rows_are_convex() {
        let n = 7;
        let q = Matrix::new(
            n,
            3,
            (0..n * 3)
                .map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.5)
                .collect(),
        )
        .unwrap();
        let k = Matrix::new(
            n,
            3,
            (0..n * 3)
                .map(|i| ((i * 17) % 13) as f64 * 0.2 - 1.0)
                .collect(),
        )
        .unwrap();
        // V = identity exposes the attention weights directly
        let mut v = Matrix::zeros(n, n);
        for i in 0..n {
            v.data[i * n + i] = 1.0;
        }
        let mask = build_block_causal_mask(n, 1);
        let out = masked_attention(&q, &k, &v, Some(&mask)).unwrap();
        for i in 0..n {
            let row = out.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row[i + 1..].iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn layer_norm_unit_gain() {
        let x = m(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let y = layer_norm(&x, &[1.0; 4], &[0.0; 4]);
        assert!(y.data.iter().sum::<f64>().abs() < 1e-12);
        let var = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // Φ(1) = 0.8413447460685429
        assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.15865525393145707).abs() < 1e-12);
    }

    #[test]
    fn linear_shapes() {
        let x = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = linear(&x, &[1.0, 0.0, 1.0, 1.0, 0.0, -1.0], &[0.0, 1.0, 0.5], 3).unwrap();
        assert_eq!(y.data, vec![1.0, 4.0, -1.5, 3.0, 8.0, -3.5]);
        assert!(linear(&x, &[1.0], &[0.0], 1).is_err());
    }
}
