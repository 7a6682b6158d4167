//! Frequency-domain enhancement blocks: 8×8 block DCT, per-coefficient
//! frequency scales with a channel-mixing sigmoid gate, and a global
//! adaptive contrast gate.
//!
//! Feature maps are planar `[C][H][W]` slices.

use std::sync::OnceLock;

use crate::error::{CodecError, Result};
use crate::weights::{ModelWeights, Tensor};

pub const BLOCK: usize = 8;
const BLOCK_AREA: usize = BLOCK * BLOCK;

/// Hidden width of the contrast gate.
pub const CONTRAST_HIDDEN: usize = 16;

/// Slope of the contrast gate's leaky ReLU.
pub const CONTRAST_LEAK: f64 = 0.2;

/// Orthonormal DCT-II basis, `basis[k][n] = α(k)·cos(π(2n+1)k/16)`.
fn dct_basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; BLOCK]; BLOCK];
        for (k, row) in b.iter_mut().enumerate() {
            let alpha = if k == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * BLOCK) as f64)
                        .cos();
            }
        }
        b
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DctDirection {
    /// Type-II.
    Forward,
    /// Type-III, the inverse of the orthonormal type-II.
    Inverse,
}

pub type Block = [[f64; BLOCK]; BLOCK];

/// Orthonormal 2D DCT of one 8×8 block, applied separably.
pub fn dct_block(block: &Block, direction: DctDirection) -> Block {
    let b = dct_basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    let mut out = [[0.0; BLOCK]; BLOCK];
    match direction {
        DctDirection::Forward => {
            // rows: tmp = x·Bᵀ, then columns: out = B·tmp
            for i in 0..BLOCK {
                for k in 0..BLOCK {
                    tmp[i][k] = (0..BLOCK).map(|n| block[i][n] * b[k][n]).sum();
                }
            }
            for k in 0..BLOCK {
                for j in 0..BLOCK {
                    out[k][j] = (0..BLOCK).map(|n| b[k][n] * tmp[n][j]).sum();
                }
            }
        }
        DctDirection::Inverse => {
            for i in 0..BLOCK {
                for n in 0..BLOCK {
                    tmp[i][n] = (0..BLOCK).map(|k| block[i][k] * b[k][n]).sum();
                }
            }
            for n in 0..BLOCK {
                for j in 0..BLOCK {
                    out[n][j] = (0..BLOCK).map(|k| b[k][n] * tmp[k][j]).sum();
                }
            }
        }
    }
    out
}

/// Learned parameters of the frequency attention block for `C` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqScales {
    pub channels: usize,
    /// `[C][8][8]`, multiplies DCT coefficients.
    pub dct_scale: Vec<f64>,
    /// `[C][8][8]`, multiplies spatial positions within each block after the inverse DCT.
    pub idct_scale: Vec<f64>,
    /// `[C][C]` 1×1 channel mix feeding the sigmoid gate.
    pub attention_weight: Vec<f64>,
    pub attention_bias: Vec<f64>,
}

/// `exp(−(√(i²+j²) − 3)²/8)`: a ring of weight 1 at radius 3 around DC.
pub fn mid_frequency_weight(i: usize, j: usize) -> f64 {
    let dist = ((i * i + j * j) as f64).sqrt();
    (-((dist - 3.0) * (dist - 3.0)) / 8.0).exp()
}

/// Mid-frequency initialization: `dct_scale` from [`mid_frequency_weight`],
/// `idct_scale` all ones. The gate starts at zero weights and bias.
pub fn init_freq_weights(channels: usize) -> Result<FreqScales> {
    if channels == 0 {
        return Err(CodecError::Domain(
            "channel count must be at least 1".into(),
        ));
    }
    let mut dct_scale = Vec::with_capacity(channels * BLOCK_AREA);
    for _ in 0..channels {
        for i in 0..BLOCK {
            for j in 0..BLOCK {
                dct_scale.push(mid_frequency_weight(i, j));
            }
        }
    }
    Ok(FreqScales {
        channels,
        dct_scale,
        idct_scale: vec![1.0; channels * BLOCK_AREA],
        attention_weight: vec![0.0; channels * channels],
        attention_bias: vec![0.0; channels],
    })
}

impl FreqScales {
    /// Loads `freq.*` tensors for `channels` channels.
    pub fn from_weights(w: &ModelWeights, channels: usize) -> Result<Self> {
        let c = channels;
        Ok(FreqScales {
            channels: c,
            dct_scale: w.require("freq.dct_scale", &[c, BLOCK, BLOCK])?.to_f64(),
            idct_scale: w.require("freq.idct_scale", &[c, BLOCK, BLOCK])?.to_f64(),
            attention_weight: w.require("freq.attention.weight", &[c, c])?.to_f64(),
            attention_bias: w.require("freq.attention.bias", &[c])?.to_f64(),
        })
    }
}

/// Parameters of the adaptive contrast gate: pool → 1×1 (C→16) → leaky ReLU
/// → 1×1 (16→C) → sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastParams {
    pub channels: usize,
    pub fc1_weight: Vec<f64>,
    pub fc1_bias: Vec<f64>,
    pub fc2_weight: Vec<f64>,
    pub fc2_bias: Vec<f64>,
}

impl ContrastParams {
    /// Parameters whose gate is exactly 0.5, i.e. the identity map.
    pub fn neutral(channels: usize) -> Self {
        ContrastParams {
            channels,
            fc1_weight: vec![0.0; CONTRAST_HIDDEN * channels],
            fc1_bias: vec![0.0; CONTRAST_HIDDEN],
            fc2_weight: vec![0.0; channels * CONTRAST_HIDDEN],
            fc2_bias: vec![0.0; channels],
        }
    }

    pub fn from_weights(w: &ModelWeights, channels: usize) -> Result<Self> {
        let (c, h) = (channels, CONTRAST_HIDDEN);
        Ok(ContrastParams {
            channels: c,
            fc1_weight: w.require("contrast.fc1.weight", &[h, c])?.to_f64(),
            fc1_bias: w.require("contrast.fc1.bias", &[h])?.to_f64(),
            fc2_weight: w.require("contrast.fc2.weight", &[c, h])?.to_f64(),
            fc2_bias: w.require("contrast.fc2.bias", &[c])?.to_f64(),
        })
    }

    /// Per-channel gate `g ∈ (0, 1)^C` for a feature map.
    pub fn gate(&self, x: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
        check_map(x, self.channels, h, w)?;
        let hw = h * w;
        let means: Vec<f64> = x
            .chunks_exact(hw)
            .map(|p| p.iter().sum::<f64>() / hw as f64)
            .collect();
        let hidden: Vec<f64> = (0..CONTRAST_HIDDEN)
            .map(|o| {
                let v = self.fc1_bias[o]
                    + dot(
                        &self.fc1_weight[o * self.channels..(o + 1) * self.channels],
                        &means,
                    );
                if v >= 0.0 {
                    v
                } else {
                    CONTRAST_LEAK * v
                }
            })
            .collect();
        Ok((0..self.channels)
            .map(|o| {
                sigmoid(
                    self.fc2_bias[o]
                        + dot(
                            &self.fc2_weight[o * CONTRAST_HIDDEN..(o + 1) * CONTRAST_HIDDEN],
                            &hidden,
                        ),
                )
            })
            .collect())
    }
}

/// `x ⊙ 2g` per channel, so `g = 0.5` leaves features unchanged.
pub fn adaptive_contrast_forward(
    x: &[f64],
    h: usize,
    w: usize,
    params: &ContrastParams,
) -> Result<Vec<f64>> {
    let g = params.gate(x, h, w)?;
    let hw = h * w;
    Ok(x.chunks_exact(hw)
        .zip(&g)
        .flat_map(|(plane, &gc)| plane.iter().map(move |v| v * 2.0 * gc))
        .collect())
}

/// Result of the frequency stage before gating, `[C][H][W]`.
pub fn frequency_scale(x: &[f64], h: usize, w: usize, s: &FreqScales) -> Result<Vec<f64>> {
    check_map(x, s.channels, h, w)?;
    let hp = h.div_ceil(BLOCK) * BLOCK;
    let wp = w.div_ceil(BLOCK) * BLOCK;
    let hw = h * w;
    let mut out = vec![0.0; s.channels * hw];
    for c in 0..s.channels {
        let plane = &x[c * hw..(c + 1) * hw];
        let dscale = &s.dct_scale[c * BLOCK_AREA..(c + 1) * BLOCK_AREA];
        let iscale = &s.idct_scale[c * BLOCK_AREA..(c + 1) * BLOCK_AREA];
        for by in (0..hp).step_by(BLOCK) {
            for bx in (0..wp).step_by(BLOCK) {
                let mut block = [[0.0; BLOCK]; BLOCK];
                for (i, row) in block.iter_mut().enumerate() {
                    let sy = reflect(by + i, h);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = plane[sy * w + reflect(bx + j, w)];
                    }
                }
                let mut coeffs = dct_block(&block, DctDirection::Forward);
                for (i, row) in coeffs.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v *= dscale[i * BLOCK + j];
                    }
                }
                let spatial = dct_block(&coeffs, DctDirection::Inverse);
                for (i, row) in spatial.iter().enumerate() {
                    let y = by + i;
                    if y >= h {
                        break;
                    }
                    for (j, v) in row.iter().enumerate() {
                        let xx = bx + j;
                        if xx >= w {
                            break;
                        }
                        out[c * hw + y * w + xx] = v * iscale[i * BLOCK + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reflect-pad to multiples of 8 → block DCT → `× dct_scale` → inverse DCT →
/// `× idct_scale` → `⊙ sigmoid(1×1 mix)` → crop.
pub fn frequency_attention_forward(
    x: &[f64],
    h: usize,
    w: usize,
    s: &FreqScales,
) -> Result<Vec<f64>> {
    let r = frequency_scale(x, h, w, s)?;
    let hw = h * w;
    let c = s.channels;
    let mut out = vec![0.0; r.len()];
    for p in 0..hw {
        for o in 0..c {
            let mix = s.attention_bias[o]
                + (0..c)
                    .map(|i| s.attention_weight[o * c + i] * r[i * hw + p])
                    .sum::<f64>();
            out[o * hw + p] = r[o * hw + p] * sigmoid(mix);
        }
    }
    Ok(out)
}

pub(crate) fn insert_generated_weights(
    w: &mut ModelWeights,
    channels: usize,
    xavier: &mut dyn FnMut(Vec<usize>, usize, usize) -> Tensor,
) {
    let init = init_freq_weights(channels).expect("channels > 0");
    let c = channels;
    let f32s = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
    w.insert(
        "freq.dct_scale",
        Tensor::new(vec![c, BLOCK, BLOCK], f32s(&init.dct_scale)).expect("shape"),
    );
    w.insert(
        "freq.idct_scale",
        Tensor::new(vec![c, BLOCK, BLOCK], f32s(&init.idct_scale)).expect("shape"),
    );
    w.insert("freq.attention.weight", xavier(vec![c, c], c, c));
    w.insert("freq.attention.bias", Tensor::zeros(vec![c]));
    w.insert(
        "contrast.fc1.weight",
        xavier(vec![CONTRAST_HIDDEN, c], c, CONTRAST_HIDDEN),
    );
    w.insert("contrast.fc1.bias", Tensor::zeros(vec![CONTRAST_HIDDEN]));
    w.insert(
        "contrast.fc2.weight",
        xavier(vec![c, CONTRAST_HIDDEN], CONTRAST_HIDDEN, c),
    );
    w.insert("contrast.fc2.bias", Tensor::zeros(vec![c]));
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn check_map(x: &[f64], channels: usize, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(CodecError::Shape("feature map must be non-empty".into()));
    }
    if x.len() != channels * h * w {
        return Err(CodecError::Shape(format!(
            "{} values for a {channels}x{h}x{w} feature map",
            x.len()
        )));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
