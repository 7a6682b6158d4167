//! Image quality metrics and the reconstruction loss terms.
//!
//! All metrics take images in the `[-0.5, 0.5]` range and use a data range of 1.

use crate::error::{CodecError, Result};
use crate::image::{Image, CHANNELS};

pub const DATA_RANGE: f64 = 1.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Per-scale exponents of five-scale MS-SSIM, finest scale first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

pub const RECONSTRUCTION_WEIGHT: f64 = 1.0;
pub const PERCEPTUAL_WEIGHT: f64 = 0.2;
pub const MS_SSIM_LOSS_WEIGHT: f64 = 0.3;
pub const COLOR_WEIGHT: f64 = 0.15;
pub const GENERATOR_WEIGHT: f64 = 0.05;

/// Luma coefficients used for the edge map.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// RGB → YUV rows.
pub const RGB_TO_YUV: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.14713, -0.28886, 0.436],
    [0.615, -0.51499, -0.10001],
];

/// Chrominance is weighted 4× luminance.
pub const YUV_CHANNEL_WEIGHTS: [f64; 3] = [0.5, 2.0, 2.0];

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// `10·log₁₀(range²/MSE)`; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (DATA_RANGE * DATA_RANGE / m).log10())
}

/// PSNR from an MSE value.
pub fn psnr_from_mse(m: f64) -> f64 {
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (DATA_RANGE * DATA_RANGE / m).log10()
    }
}

/// Formats a metric, writing infinities as `inf`.
pub fn format_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_owned()
    } else {
        format!("{v:.6}")
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" Gaussian filter of one plane.
fn filter_valid(
    plane: &[f64],
    h: usize,
    w: usize,
    g: &[f64; SSIM_WINDOW],
) -> (Vec<f64>, usize, usize) {
    let k = SSIM_WINDOW;
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| g[i] * row[x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM and mean contrast-structure term of one channel plane.
fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> (f64, f64) {
    let g = gaussian_window();
    let c1 = (SSIM_K1 * DATA_RANGE).powi(2);
    let c2 = (SSIM_K2 * DATA_RANGE).powi(2);
    let aa: Vec<f64> = a.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|x| x * x).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, oh, ow) = filter_valid(a, h, w, &g);
    let (mu_b, _, _) = filter_valid(b, h, w, &g);
    let (e_aa, _, _) = filter_valid(&aa, h, w, &g);
    let (e_bb, _, _) = filter_valid(&bb, h, w, &g);
    let (e_ab, _, _) = filter_valid(&ab, h, w, &g);
    let n = (oh * ow) as f64;
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
        let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    (ssim_sum / n, cs_sum / n)
}

/// 2×2 average pooling; odd sizes are zero padded on both sides first.
fn downsample(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ph, pw) = (h % 2, w % 2);
    let oh = (h + 2 * ph - 2) / 2 + 1;
    let ow = (w + 2 * pw - 2) / 2 + 1;
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let sy = (2 * y) as isize - ph as isize;
            let sx = (2 * x) as isize - pw as isize;
            out[y * ow + x] =
                (at(sy, sx) + at(sy, sx + 1) + at(sy + 1, sx) + at(sy + 1, sx + 1)) / 4.0;
        }
    }
    (out, oh, ow)
}

/// Single-scale Gaussian SSIM averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h.min(w) < SSIM_WINDOW {
        return Err(CodecError::Domain(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let (pa, pb) = (a.to_planar(), b.to_planar());
    let hw = h * w;
    let total: f64 = (0..CHANNELS)
        .map(|c| ssim_plane(&pa[c * hw..(c + 1) * hw], &pb[c * hw..(c + 1) * hw], h, w).0)
        .sum();
    Ok(total / CHANNELS as f64)
}

/// Number of scales MS-SSIM can use at this size: the largest `s ≤ 5` with
/// `min(H, W) ≥ 11·2^(s−1)`.
pub fn ms_ssim_scales(height: usize, width: usize) -> Option<usize> {
    let m = height.min(width);
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| m >= SSIM_WINDOW << (s - 1))
}

/// Multi-scale SSIM. Small images use fewer scales with the leading weights
/// renormalized to sum to one; below 11×11 it is a domain error.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    let scales = ms_ssim_scales(h, w).ok_or_else(|| {
        CodecError::Domain(format!(
            "MS-SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        ))
    })?;
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let wsum: f64 = weights.iter().sum();
    let (pa, pb) = (a.to_planar(), b.to_planar());
    let hw = h * w;
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let mut x = pa[c * hw..(c + 1) * hw].to_vec();
        let mut y = pb[c * hw..(c + 1) * hw].to_vec();
        let (mut ch, mut cw) = (h, w);
        let mut value = 1.0;
        for (level, &wt) in weights.iter().enumerate() {
            let (s, cs) = ssim_plane(&x, &y, ch, cw);
            let term = if level + 1 == scales { s } else { cs };
            value *= term.max(0.0).powf(wt / wsum);
            if level + 1 < scales {
                let (nx, nh, nw) = downsample(&x, ch, cw);
                let (ny, _, _) = downsample(&y, ch, cw);
                x = nx;
                y = ny;
                ch = nh;
                cw = nw;
            }
        }
        total += value;
    }
    Ok(total / CHANNELS as f64)
}

/// Loss term `1 − MS-SSIM`, or `0.5·MSE` when MS-SSIM cannot be computed.
pub fn ms_ssim_loss_term(reconstructed: &Image, target: &Image) -> Result<f64> {
    match ms_ssim(reconstructed, target) {
        Ok(v) => Ok(1.0 - v),
        Err(CodecError::Domain(_)) => Ok(0.5 * mse(reconstructed, target)?),
        Err(e) => Err(e),
    }
}

/// Edge importance `sigmoid(5·|∇gray|)·2 + 1` per pixel, row-major `H × W`.
/// The Sobel filters see zero padding outside the image.
pub fn edge_weights(img: &Image) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let gray: Vec<f64> = img
        .pixels()
        .chunks_exact(CHANNELS)
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect();
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            gray[y as usize * w + x as usize]
        }
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for ky in 0..3 {
                for kx in 0..3 {
                    let v = at(y + ky as isize - 1, x + kx as isize - 1);
                    gx += SOBEL_X[ky][kx] * v;
                    gy += SOBEL_Y[ky][kx] * v;
                }
            }
            let mag = (gx * gx + gy * gy).sqrt();
            out.push(sigmoid(mag * 5.0) * 2.0 + 1.0);
        }
    }
    out
}

/// Mean over pixels and channels of `edge_weights(b)·|a − b|`.
pub fn edge_weighted_l1(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let wts = edge_weights(b);
    let total: f64 = a
        .pixels()
        .chunks_exact(CHANNELS)
        .zip(b.pixels().chunks_exact(CHANNELS))
        .zip(&wts)
        .map(|((pa, pb), wt)| wt * pa.iter().zip(pb).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum();
    Ok(total / a.pixels().len() as f64)
}

/// Plain mean absolute error.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.pixels().len() as f64)
}

pub fn rgb_to_yuv(p: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(&RGB_TO_YUV) {
        *o = row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
    }
    out
}

/// Mean over all YUV elements of `|ΔYUV|` times the channel weights (0.5, 2, 2).
pub fn yuv_color_loss(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let total: f64 = a
        .pixels()
        .chunks_exact(CHANNELS)
        .zip(b.pixels().chunks_exact(CHANNELS))
        .map(|(pa, pb)| {
            let (ya, yb) = (rgb_to_yuv(pa), rgb_to_yuv(pb));
            (0..3)
                .map(|c| (ya[c] - yb[c]).abs() * YUV_CHANNEL_WEIGHTS[c])
                .sum::<f64>()
        })
        .sum();
    Ok(total / a.pixels().len() as f64)
}

/// Hinge adversarial losses: `g = −mean(fake)`,
/// `d = mean(relu(1 − real)) + mean(relu(1 + fake))`.
pub fn hinge_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(CodecError::Domain(
            "discriminator outputs must be non-empty".into(),
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let g = -mean(d_fake);
    let real: Vec<f64> = d_real.iter().map(|x| (1.0 - x).max(0.0)).collect();
    let fake: Vec<f64> = d_fake.iter().map(|x| (1.0 + x).max(0.0)).collect();
    Ok((g, mean(&real) + mean(&fake)))
}

/// Unweighted loss terms; optional ones contribute nothing when absent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    pub reconstruction: f64,
    /// Computed externally (e.g. a VGG feature loss).
    pub perceptual: Option<f64>,
    pub ms_ssim_term: f64,
    pub color: f64,
    pub generator: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub reconstruction: f64,
    pub perceptual: Option<f64>,
    pub ms_ssim_term: f64,
    pub color: f64,
    pub generator: Option<f64>,
    pub total: f64,
}

/// `total = recon + 0.2·perceptual + 0.3·ms_ssim + 0.15·color + 0.05·generator`.
pub fn aggregate_losses(c: LossComponents) -> Result<LossReport> {
    let checks = [
        ("reconstruction", Some(c.reconstruction)),
        ("perceptual", c.perceptual),
        ("ms_ssim", Some(c.ms_ssim_term)),
        ("color", Some(c.color)),
    ];
    for (name, v) in checks {
        if let Some(v) = v {
            if v.is_nan() || v < 0.0 {
                return Err(CodecError::Domain(format!(
                    "{name} loss {v} must be non-negative"
                )));
            }
        }
    }
    let total = RECONSTRUCTION_WEIGHT * c.reconstruction
        + PERCEPTUAL_WEIGHT * c.perceptual.unwrap_or(0.0)
        + MS_SSIM_LOSS_WEIGHT * c.ms_ssim_term
        + COLOR_WEIGHT * c.color
        + GENERATOR_WEIGHT * c.generator.unwrap_or(0.0);
    Ok(LossReport {
        reconstruction: c.reconstruction,
        perceptual: c.perceptual,
        ms_ssim_term: c.ms_ssim_term,
        color: c.color,
        generator: c.generator,
        total,
    })
}

/// Computes every image-derived loss term between a reconstruction and its target.
pub fn reconstruction_losses(
    reconstructed: &Image,
    target: &Image,
    perceptual: Option<f64>,
    d_fake: Option<&[f64]>,
) -> Result<LossReport> {
    let generator = match d_fake {
        Some(f) if !f.is_empty() => Some(-f.iter().sum::<f64>() / f.len() as f64),
        Some(_) => {
            return Err(CodecError::Domain(
                "discriminator outputs must be non-empty".into(),
            ))
        }
        None => None,
    };
    aggregate_losses(LossComponents {
        reconstruction: edge_weighted_l1(reconstructed, target)?,
        perceptual,
        ms_ssim_term: ms_ssim_loss_term(reconstructed, target)?,
        color: yuv_color_loss(reconstructed, target)?,
        generator,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
