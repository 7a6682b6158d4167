//! Images in the codec's centered pixel range and their patch decomposition.

use crate::error::{CodecError, Result};

pub const CHANNELS: usize = 3;
pub const PIXEL_MIN: f64 = -0.5;
pub const PIXEL_MAX: f64 = 0.5;

/// `H × W × 3` image with values in `[-0.5, 0.5]`, stored row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, clamping every value into `[-0.5, 0.5]`.
    /// NaN maps to 0.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CodecError::Shape(format!(
                "image dimensions {height}x{width} must be non-zero"
            )));
        }
        if pixels.len() != height * width * CHANNELS {
            return Err(CodecError::Shape(format!(
                "{} pixel values for a {height}x{width}x{CHANNELS} image",
                pixels.len()
            )));
        }
        let pixels = pixels.into_iter().map(clamp_pixel).collect();
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(height, width, vec![value; height * width * CHANNELS])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Image::new(height, width, pixels)
    }

    /// Maps 8-bit samples via `v/255 − 0.5`.
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(
            height,
            width,
            bytes.iter().map(|&b| b as f64 / 255.0 - 0.5).collect(),
        )
    }

    /// Maps back via `(v + 0.5)·255`, rounded and clamped to `[0, 255]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| ((v + 0.5) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * CHANNELS + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(CodecError::Shape(format!(
                "image shapes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    /// Channel-planar copy, `[C][H][W]`.
    pub fn to_planar(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; hw * CHANNELS];
        for (i, px) in self.pixels.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                out[c * hw + i] = px[c];
            }
        }
        out
    }

    pub fn from_planar(height: usize, width: usize, planar: &[f64]) -> Result<Self> {
        let hw = height * width;
        if planar.len() != hw * CHANNELS {
            return Err(CodecError::Shape(format!(
                "{} planar values for a {height}x{width}x{CHANNELS} image",
                planar.len()
            )));
        }
        let mut pixels = vec![0.0; hw * CHANNELS];
        for i in 0..hw {
            for c in 0..CHANNELS {
                pixels[i * CHANNELS + c] = planar[c * hw + i];
            }
        }
        Image::new(height, width, pixels)
    }
}

fn clamp_pixel(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(PIXEL_MIN, PIXEL_MAX)
    }
}

/// Non-overlapping `p × p` patches, each flattened in (row, col, channel) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patch: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PatchGrid {
    pub fn patch_size(&self) -> usize {
        self.patch
    }

    /// Patches along the image height.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Patches along the image width.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of one flattened patch, `3p²`.
    pub fn patch_len(&self) -> usize {
        self.patch * self.patch * CHANNELS
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let n = self.patch_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn from_data(patch: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if patch == 0 || data.len() != rows * cols * patch * patch * CHANNELS {
            return Err(CodecError::Shape(format!(
                "{} values do not form a {rows}x{cols} grid of {patch}x{patch} patches",
                data.len()
            )));
        }
        Ok(PatchGrid {
            patch,
            rows,
            cols,
            data,
        })
    }
}

pub fn check_divisible(height: usize, width: usize, patch: usize) -> Result<()> {
    if patch == 0 || !height.is_multiple_of(patch) || !width.is_multiple_of(patch) {
        return Err(CodecError::Shape(format!(
            "image {height}x{width} is not divisible by patch size {patch}"
        )));
    }
    Ok(())
}

/// Splits an image into row-major patches.
pub fn patchify(img: &Image, patch: usize) -> Result<PatchGrid> {
    check_divisible(img.height, img.width, patch)?;
    let rows = img.height / patch;
    let cols = img.width / patch;
    let row_len = patch * CHANNELS;
    let mut data = Vec::with_capacity(img.pixels.len());
    for pr in 0..rows {
        for pc in 0..cols {
            for dy in 0..patch {
                let start = ((pr * patch + dy) * img.width + pc * patch) * CHANNELS;
                data.extend_from_slice(&img.pixels[start..start + row_len]);
            }
        }
    }
    Ok(PatchGrid {
        patch,
        rows,
        cols,
        data,
    })
}

/// Reassembles an image from its patches. Values are clamped on construction.
pub fn unpatchify(grid: &PatchGrid, height: usize, width: usize) -> Result<Image> {
    let p = grid.patch;
    if grid.rows * p != height || grid.cols * p != width {
        return Err(CodecError::Shape(format!(
            "{}x{} grid of {p}x{p} patches does not cover {height}x{width}",
            grid.rows, grid.cols
        )));
    }
    let row_len = p * CHANNELS;
    let mut pixels = vec![0.0; height * width * CHANNELS];
    for (i, patch) in grid.data.chunks_exact(grid.patch_len()).enumerate() {
        let pr = i / grid.cols;
        let pc = i % grid.cols;
        for dy in 0..p {
            let start = ((pr * p + dy) * width + pc * p) * CHANNELS;
            pixels[start..start + row_len]
                .copy_from_slice(&patch[dy * row_len..(dy + 1) * row_len]);
        }
    }
    Image::new(height, width, pixels)
}
