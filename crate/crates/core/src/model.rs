//! Patch tokenizer: a transformer encoder feeding the BSQ bottleneck, and
//! the matching decoder with a convolutional enhancement skip.
//!
//! Tensor names inside a weights file:
//!
//! | name | shape |
//! |------|-------|
//! | `meta.config` | `[5]`: patch, latent dim, heads, depth, bits |
//! | `embed.weight`, `embed.bias` | `[d, 3p²]`, `[d]` |
//! | `pos` (optional) | `[N, d]` |
//! | `{enc,dec}.{i}.*` | one transformer block each |
//! | `{enc,dec}.norm.{gain,bias}` | `[d]` |
//! | `bsq.down`, `bsq.up` | `[L, d]`, `[d, L]` |
//! | `head.weight`, `head.bias` | `[3p², d]`, `[3p²]` |
//! | `enhance.{block,mid,out}.{weight,bias}` | conv kernels `[out, in, k, k]` |
//! | `freq.*`, `contrast.*` | see [`crate::freq`] |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bsq::{self, LatentVector, ProjectionWeights, TokenIndex};
use crate::error::{CodecError, Result};
use crate::freq;
use crate::grid::TokenGrid;
use crate::image::{check_divisible, patchify, unpatchify, Image, PatchGrid, CHANNELS};
use crate::transformer::{
    build_block_causal_mask, gelu, layer_norm, linear, AttentionMask, BlockWeights, Matrix,
    MLP_EXPANSION,
};
use crate::weights::{ModelWeights, Tensor};

/// Weight on the enhancement branch: `out = base + 0.15·enhance(base)`.
pub const SKIP_WEIGHT: f64 = 0.15;

/// Hidden channels of the enhancement network.
pub const ENHANCE_CHANNELS: usize = 16;

/// Architecture hyperparameters, stored in the weights file as `meta.config`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub patch: usize,
    pub latent_dim: usize,
    pub heads: usize,
    pub depth: usize,
    pub bits: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch: 8,
            latent_dim: 64,
            heads: 4,
            depth: 4,
            bits: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.patch > 255 {
            return Err(CodecError::Domain(format!(
                "patch size {} outside [1, 255]",
                self.patch
            )));
        }
        if self.bits == 0 || self.bits > bsq::MAX_BITS {
            return Err(CodecError::Domain(format!(
                "code width {} outside [1, {}]",
                self.bits,
                bsq::MAX_BITS
            )));
        }
        if self.heads == 0 || self.latent_dim == 0 || !self.latent_dim.is_multiple_of(self.heads) {
            return Err(CodecError::Domain(format!(
                "{} heads do not divide latent dim {}",
                self.heads, self.latent_dim
            )));
        }
        Ok(())
    }

    fn patch_len(&self) -> usize {
        self.patch * self.patch * CHANNELS
    }
}

/// Deterministic Xavier-uniform weights for `cfg`.
///
/// Layer-norm gains start at 1 and all biases at 0. When `positional_grid`
/// is given, a learned-style positional table for that many patch rows and
/// columns is included; otherwise the sinusoidal fallback applies.
pub fn generate_weights(
    cfg: &ModelConfig,
    seed: u64,
    positional_grid: Option<(usize, usize)>,
) -> Result<ModelWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.latent_dim;
    let l = cfg.bits as usize;
    let pl = cfg.patch_len();
    let mut w = ModelWeights::new();

    w.insert(
        "meta.config",
        Tensor::new(
            vec![5],
            vec![
                cfg.patch as f32,
                d as f32,
                cfg.heads as f32,
                cfg.depth as f32,
                cfg.bits as f32,
            ],
        )?,
    );
    w.insert("embed.weight", xavier(&mut rng, vec![d, pl], pl, d));
    w.insert("embed.bias", Tensor::zeros(vec![d]));
    if let Some((rows, cols)) = positional_grid {
        w.insert(
            "pos",
            xavier(&mut rng, vec![rows * cols, d], rows * cols, d),
        );
    }
    for side in ["enc", "dec"] {
        for i in 0..cfg.depth {
            let p = format!("{side}.{i}");
            let hid = MLP_EXPANSION * d;
            w.insert(format!("{p}.ln1.gain"), Tensor::filled(vec![d], 1.0));
            w.insert(format!("{p}.ln1.bias"), Tensor::zeros(vec![d]));
            w.insert(
                format!("{p}.attn.qkv.weight"),
                xavier(&mut rng, vec![3 * d, d], d, 3 * d),
            );
            w.insert(format!("{p}.attn.qkv.bias"), Tensor::zeros(vec![3 * d]));
            w.insert(
                format!("{p}.attn.out.weight"),
                xavier(&mut rng, vec![d, d], d, d),
            );
            w.insert(format!("{p}.attn.out.bias"), Tensor::zeros(vec![d]));
            w.insert(format!("{p}.ln2.gain"), Tensor::filled(vec![d], 1.0));
            w.insert(format!("{p}.ln2.bias"), Tensor::zeros(vec![d]));
            w.insert(
                format!("{p}.mlp.fc1.weight"),
                xavier(&mut rng, vec![hid, d], d, hid),
            );
            w.insert(format!("{p}.mlp.fc1.bias"), Tensor::zeros(vec![hid]));
            w.insert(
                format!("{p}.mlp.fc2.weight"),
                xavier(&mut rng, vec![d, hid], hid, d),
            );
            w.insert(format!("{p}.mlp.fc2.bias"), Tensor::zeros(vec![d]));
        }
        w.insert(format!("{side}.norm.gain"), Tensor::filled(vec![d], 1.0));
        w.insert(format!("{side}.norm.bias"), Tensor::zeros(vec![d]));
    }
    w.insert("bsq.down", xavier(&mut rng, vec![l, d], d, l));
    w.insert("bsq.up", xavier(&mut rng, vec![d, l], l, d));
    w.insert("head.weight", xavier(&mut rng, vec![pl, d], d, pl));
    w.insert("head.bias", Tensor::zeros(vec![pl]));

    let e = ENHANCE_CHANNELS;
    let conv = |rng: &mut ChaCha8Rng, out: usize, inp: usize, k: usize| {
        xavier(rng, vec![out, inp, k, k], inp * k * k, out * k * k)
    };
    w.insert("enhance.block.weight", conv(&mut rng, e, CHANNELS, 3));
    w.insert("enhance.block.bias", Tensor::zeros(vec![e]));
    w.insert("enhance.mid.weight", conv(&mut rng, e, e, 3));
    w.insert("enhance.mid.bias", Tensor::zeros(vec![e]));
    w.insert("enhance.out.weight", conv(&mut rng, CHANNELS, e, 1));
    w.insert("enhance.out.bias", Tensor::zeros(vec![CHANNELS]));

    freq::insert_generated_weights(&mut w, CHANNELS, &mut |dims, fan_in, fan_out| {
        xavier(&mut rng, dims, fan_in, fan_out)
    });
    Ok(w)
}

/// Uniform(−a, a) with `a = √(6/(fan_in + fan_out))`.
fn xavier(rng: &mut ChaCha8Rng, dims: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..a) as f32).collect();
    Tensor::new(dims, data).expect("generated tensor matches its shape")
}

/// 2D convolution kernel `[out, in, k, k]` applied with zero padding `k/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    fn load(w: &ModelWeights, prefix: &str, out: usize, inp: usize, k: usize) -> Result<Self> {
        Ok(Conv2d {
            out_channels: out,
            in_channels: inp,
            kernel: k,
            weight: w
                .require(&format!("{prefix}.weight"), &[out, inp, k, k])?
                .to_f64(),
            bias: w.require(&format!("{prefix}.bias"), &[out])?.to_f64(),
        })
    }

    /// `input` is planar `[in][h][w]`; returns planar `[out][h][w]`.
    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let hw = h * w;
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let mut out = vec![0.0; self.out_channels * hw];
        out.par_chunks_mut(hw).enumerate().for_each(|(o, plane)| {
            plane.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = &input[i * hw..(i + 1) * hw];
                let kern = &self.weight[(o * self.in_channels + i) * k * k..][..k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kern[ky * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let dy = ky as isize - pad;
                        let dx = kx as isize - pad;
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let x0 = (-dx).max(0) as usize;
                            let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                            let srow = &src[sy as usize * w..];
                            let drow = &mut plane[y * w..(y + 1) * w];
                            for x in x0..x1 {
                                drow[x] += wv * srow[(x as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
        });
        out
    }
}

/// The post-decode refinement network: conv3×3 → GELU → conv3×3 → GELU → conv1×1.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceNet {
    pub block: Conv2d,
    pub mid: Conv2d,
    pub out: Conv2d,
}

impl EnhanceNet {
    pub fn from_weights(w: &ModelWeights) -> Result<Self> {
        let e = ENHANCE_CHANNELS;
        Ok(EnhanceNet {
            block: Conv2d::load(w, "enhance.block", e, CHANNELS, 3)?,
            mid: Conv2d::load(w, "enhance.mid", e, e, 3)?,
            out: Conv2d::load(w, "enhance.out", CHANNELS, e, 1)?,
        })
    }

    pub fn forward(&self, base: &Image) -> Vec<f64> {
        let (h, w) = (base.height(), base.width());
        let mut x = self.block.forward(&base.to_planar(), h, w);
        x.iter_mut().for_each(|v| *v = gelu(*v));
        let mut x = self.mid.forward(&x, h, w);
        x.iter_mut().for_each(|v| *v = gelu(*v));
        self.out.forward(&x, h, w)
    }

    /// `clamp(base + 0.15·enhance(base))`.
    pub fn apply(&self, base: &Image) -> Result<Image> {
        let delta = self.forward(base);
        let planar: Vec<f64> = base
            .to_planar()
            .iter()
            .zip(&delta)
            .map(|(b, d)| b + SKIP_WEIGHT * d)
            .collect();
        Image::from_planar(base.height(), base.width(), &planar)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stack {
    blocks: Vec<BlockWeights>,
    norm_gain: Vec<f64>,
    norm_bias: Vec<f64>,
}

impl Stack {
    fn load(w: &ModelWeights, side: &str, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.latent_dim;
        let hid = MLP_EXPANSION * d;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let p = format!("{side}.{i}");
            let get = |n: &str, dims: &[usize]| -> Result<Vec<f64>> {
                Ok(w.require(&format!("{p}.{n}"), dims)?.to_f64())
            };
            blocks.push(BlockWeights {
                dim: d,
                heads: cfg.heads,
                ln1_gain: get("ln1.gain", &[d])?,
                ln1_bias: get("ln1.bias", &[d])?,
                qkv_weight: get("attn.qkv.weight", &[3 * d, d])?,
                qkv_bias: get("attn.qkv.bias", &[3 * d])?,
                out_weight: get("attn.out.weight", &[d, d])?,
                out_bias: get("attn.out.bias", &[d])?,
                ln2_gain: get("ln2.gain", &[d])?,
                ln2_bias: get("ln2.bias", &[d])?,
                fc1_weight: get("mlp.fc1.weight", &[hid, d])?,
                fc1_bias: get("mlp.fc1.bias", &[hid])?,
                fc2_weight: get("mlp.fc2.weight", &[d, hid])?,
                fc2_bias: get("mlp.fc2.bias", &[d])?,
            });
        }
        Ok(Stack {
            blocks,
            norm_gain: w.require(&format!("{side}.norm.gain"), &[d])?.to_f64(),
            norm_bias: w.require(&format!("{side}.norm.bias"), &[d])?.to_f64(),
        })
    }

    fn forward(&self, x: Matrix, mask: Option<&AttentionMask>) -> Result<Matrix> {
        let mut x = x;
        for b in &self.blocks {
            x = b.forward(&x, mask)?;
        }
        Ok(layer_norm(&x, &self.norm_gain, &self.norm_bias))
    }
}

/// Runtime form of a weights file: image ↔ token grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    cfg: ModelConfig,
    embed_weight: Vec<f64>,
    embed_bias: Vec<f64>,
    positional: Option<Matrix>,
    encoder: Stack,
    decoder: Stack,
    projection: ProjectionWeights,
    head_weight: Vec<f64>,
    head_bias: Vec<f64>,
    enhance: EnhanceNet,
}

impl Tokenizer {
    pub fn from_weights(w: &ModelWeights) -> Result<Self> {
        let cfg = read_config(w)?;
        let d = cfg.latent_dim;
        let l = cfg.bits as usize;
        let pl = cfg.patch_len();
        let positional = match w.get("pos") {
            Some(t) if t.dims().len() == 2 && t.dims()[1] == d => {
                Some(Matrix::new(t.dims()[0], d, t.to_f64())?)
            }
            Some(t) => {
                return Err(CodecError::Shape(format!(
                    "positional table has shape {:?}, expected [N, {d}]",
                    t.dims()
                )))
            }
            None => None,
        };
        Ok(Tokenizer {
            cfg,
            embed_weight: w.require("embed.weight", &[d, pl])?.to_f64(),
            embed_bias: w.require("embed.bias", &[d])?.to_f64(),
            positional,
            encoder: Stack::load(w, "enc", &cfg)?,
            decoder: Stack::load(w, "dec", &cfg)?,
            projection: ProjectionWeights::new(
                d,
                l,
                w.require("bsq.down", &[l, d])?.to_f64(),
                w.require("bsq.up", &[d, l])?.to_f64(),
            )?,
            head_weight: w.require("head.weight", &[pl, d])?.to_f64(),
            head_bias: w.require("head.bias", &[pl])?.to_f64(),
            enhance: EnhanceNet::from_weights(w)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn projection(&self) -> &ProjectionWeights {
        &self.projection
    }

    pub fn enhance_net(&self) -> &EnhanceNet {
        &self.enhance
    }

    /// Replaces the enhancement network, e.g. to disable it with zero weights.
    pub fn set_enhance_net(&mut self, net: EnhanceNet) {
        self.enhance = net;
    }

    /// Positional embeddings for a `rows × cols` patch grid.
    fn positions(&self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows * cols;
        match &self.positional {
            Some(p) if p.rows == n => Ok(p.clone()),
            Some(p) => Err(CodecError::Shape(format!(
                "positional table covers {} patches, image has {n}",
                p.rows
            ))),
            None => Ok(sinusoidal_positions(rows, cols, self.cfg.latent_dim)),
        }
    }

    fn embed(&self, img: &Image) -> Result<(PatchGrid, Matrix)> {
        let grid = patchify(img, self.cfg.patch)?;
        let x = Matrix::new(grid.len(), grid.patch_len(), grid.data().to_vec())?;
        let mut e = linear(
            &x,
            &self.embed_weight,
            &self.embed_bias,
            self.cfg.latent_dim,
        )?;
        let pos = self.positions(grid.rows(), grid.cols())?;
        add_in_place(&mut e, &pos);
        Ok((grid, e))
    }

    fn quantize_rows(&self, latents: &Matrix) -> Result<Vec<u64>> {
        (0..latents.rows)
            .into_par_iter()
            .map(|r| {
                bsq::quantize_latent(&LatentVector(latents.row(r).to_vec()), &self.projection)
                    .map(|t| t.0)
            })
            .collect()
    }

    /// patchify → embed + positions → encoder → BSQ per position.
    pub fn tokenize(&self, img: &Image) -> Result<TokenGrid> {
        let (grid, x) = self.embed(img)?;
        let z = self.encoder.forward(x, None)?;
        TokenGrid::new(
            grid.rows(),
            grid.cols(),
            self.cfg.bits,
            self.quantize_rows(&z)?,
        )
    }

    /// Tokenizes frames jointly under a block-causal mask, so frame `t`
    /// only sees frames `0..=t`.
    pub fn tokenize_sequence(&self, frames: &[Image]) -> Result<Vec<TokenGrid>> {
        let Some(first) = frames.first() else {
            return Ok(Vec::new());
        };
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| !f.same_shape(first))
        {
            return Err(CodecError::Shape(format!(
                "frame {i} is {}x{}, frame 0 is {}x{}",
                f.height(),
                f.width(),
                first.height(),
                first.width()
            )));
        }
        let mut embedded = Vec::with_capacity(frames.len());
        let mut layout = (0, 0);
        for f in frames {
            let (grid, e) = self.embed(f)?;
            layout = (grid.rows(), grid.cols());
            embedded.push(e);
        }
        let per_frame = layout.0 * layout.1;
        let mask = build_block_causal_mask(frames.len(), per_frame);
        let z = self
            .encoder
            .forward(Matrix::vstack(&embedded)?, Some(&mask))?;
        (0..frames.len())
            .map(|t| {
                let rows = z.rows_slice(t * per_frame, per_frame);
                TokenGrid::new(
                    layout.0,
                    layout.1,
                    self.cfg.bits,
                    self.quantize_rows(&rows)?,
                )
            })
            .collect()
    }

    /// Decoder output before enhancement (clamped to the pixel range).
    pub fn decode_base(&self, tokens: &TokenGrid) -> Result<Image> {
        if tokens.bits() != self.cfg.bits {
            return Err(CodecError::Domain(format!(
                "token grid uses {} bits, model uses {}",
                tokens.bits(),
                self.cfg.bits
            )));
        }
        let d = self.cfg.latent_dim;
        let latents: Vec<Vec<f64>> = tokens
            .tokens()
            .par_iter()
            .map(|&t| bsq::dequantize_token(TokenIndex(t), &self.projection).map(|z| z.0))
            .collect::<Result<_>>()?;
        let mut x = Matrix::new(tokens.len(), d, latents.concat())?;
        add_in_place(&mut x, &self.positions(tokens.rows(), tokens.cols())?);
        let y = self.decoder.forward(x, None)?;
        let patches = linear(&y, &self.head_weight, &self.head_bias, self.cfg.patch_len())?;
        let grid =
            PatchGrid::from_data(self.cfg.patch, tokens.rows(), tokens.cols(), patches.data)?;
        unpatchify(
            &grid,
            tokens.rows() * self.cfg.patch,
            tokens.cols() * self.cfg.patch,
        )
    }

    /// Full reconstruction: `clamp(base + 0.15·enhance(base))`.
    pub fn detokenize(&self, tokens: &TokenGrid) -> Result<Image> {
        self.enhance.apply(&self.decode_base(tokens)?)
    }

    pub fn check_image(&self, img: &Image) -> Result<()> {
        check_divisible(img.height(), img.width(), self.cfg.patch)
    }
}

pub fn read_config(w: &ModelWeights) -> Result<ModelConfig> {
    let t = w.require("meta.config", &[5])?;
    let v = t.data();
    let as_count = |x: f32, what: &str| -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 && x < 1e6 {
            Ok(x as usize)
        } else {
            Err(CodecError::Format(format!(
                "invalid {what} {x} in meta.config"
            )))
        }
    };
    let cfg = ModelConfig {
        patch: as_count(v[0], "patch size")?,
        latent_dim: as_count(v[1], "latent dim")?,
        heads: as_count(v[2], "head count")?,
        depth: as_count(v[3], "depth")?,
        bits: as_count(v[4], "code width")? as u32,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// 2D sinusoidal table: the first half of the features encodes the patch
/// row, the second half the column.
pub fn sinusoidal_positions(rows: usize, cols: usize, dim: usize) -> Matrix {
    let half = dim / 2;
    let pairs = half / 2;
    let mut m = Matrix::zeros(rows * cols, dim);
    for r in 0..rows {
        for c in 0..cols {
            let row = &mut m.data[(r * cols + c) * dim..(r * cols + c + 1) * dim];
            for (offset, pos) in [(0, r), (half, c)] {
                for k in 0..pairs {
                    let freq = 1.0 / 10000f64.powf(k as f64 / pairs as f64);
                    row[offset + 2 * k] = (pos as f64 * freq).sin();
                    row[offset + 2 * k + 1] = (pos as f64 * freq).cos();
                }
            }
        }
    }
    m
}

fn add_in_place(a: &mut Matrix, b: &Matrix) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}
