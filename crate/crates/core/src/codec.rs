//! End-to-end encode and decode: image ↔ container bytes.

use crate::container::{
    append_fallback, blend_decode, deserialize, jpeg_fallback_select, serialize_body, CodingMode,
    Container, Fallback,
};
use crate::error::{CodecError, Result};
use crate::grid::TokenGrid;
use crate::image::{Image, CHANNELS};
use crate::model::Tokenizer;

/// A baseline JPEG encoder/decoder used for the fallback section.
pub trait JpegCodec {
    fn encode(&self, img: &Image, quality: u8) -> Result<Vec<u8>>;
    fn decode(&self, bytes: &[u8]) -> Result<Image>;
}

/// JPEG through the `image` crate.
#[cfg(feature = "jpeg")]
#[derive(Debug, Clone, Copy, Default)]
pub struct ImageJpeg;

#[cfg(feature = "jpeg")]
impl JpegCodec for ImageJpeg {
    fn encode(&self, img: &Image, quality: u8) -> Result<Vec<u8>> {
        use image::codecs::jpeg::JpegEncoder;
        let mut out = Vec::new();
        JpegEncoder::new_with_quality(&mut out, quality.max(1))
            .encode(
                &img.to_rgb8(),
                img.width() as u32,
                img.height() as u32,
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| CodecError::Format(format!("JPEG encode: {e}")))?;
        Ok(out)
    }

    fn decode(&self, bytes: &[u8]) -> Result<Image> {
        let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
            .map_err(|e| CodecError::Format(format!("JPEG decode: {e}")))?;
        let rgb = dynamic.to_rgb8();
        Image::from_rgb8(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())
    }
}

/// The JPEG backend compiled into this build, if any.
pub fn default_jpeg() -> Option<Box<dyn JpegCodec + Send + Sync>> {
    #[cfg(feature = "jpeg")]
    {
        Some(Box::new(ImageJpeg))
    }
    #[cfg(not(feature = "jpeg"))]
    {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub grid: TokenGrid,
    /// Header plus payload.
    pub body_len: usize,
    pub fallback_len: usize,
    pub height: usize,
    pub width: usize,
}

impl Encoded {
    /// `H·W·3 / container bytes`.
    pub fn compression_ratio(&self) -> f64 {
        compression_ratio(self.height, self.width, self.bytes.len())
    }

    pub fn bpp(&self) -> f64 {
        bits_per_pixel(self.height, self.width, self.bytes.len())
    }
}

pub fn compression_ratio(height: usize, width: usize, size: usize) -> f64 {
    (height * width * CHANNELS) as f64 / size as f64
}

pub fn bits_per_pixel(height: usize, width: usize, size: usize) -> f64 {
    (size * 8) as f64 / (height * width) as f64
}

/// Tokenizes `img` and packs it into a container. With a JPEG backend, a
/// fallback is appended when the size policy allows it.
pub fn encode_image(
    tokenizer: &Tokenizer,
    img: &Image,
    mode: CodingMode,
    jpeg: Option<&dyn JpegCodec>,
) -> Result<Encoded> {
    tokenizer.check_image(img)?;
    let grid = tokenizer.tokenize(img)?;
    encode_grid(&grid, tokenizer.config().patch, mode, Some(img).zip(jpeg))
}

/// Packs an existing token grid. `fallback` carries the source image and
/// JPEG backend when a fallback may be attached.
pub fn encode_grid(
    grid: &TokenGrid,
    patch: usize,
    mode: CodingMode,
    fallback: Option<(&Image, &dyn JpegCodec)>,
) -> Result<Encoded> {
    let (height, width) = (grid.rows() * patch, grid.cols() * patch);
    let mut bytes = serialize_body(grid, patch, mode)?;
    let body_len = bytes.len();
    let jpeg = fallback.and_then(|(img, codec)| {
        jpeg_fallback_select(body_len, height, width, |q| codec.encode(img, q))
    });
    append_fallback(&mut bytes, jpeg.as_deref())?;
    Ok(Encoded {
        bytes,
        grid: grid.clone(),
        body_len,
        fallback_len: jpeg.map_or(0, |j| j.len()),
        height,
        width,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub image: Image,
    pub container: Container,
    /// Whether the JPEG fallback was blended in.
    pub blended: bool,
    /// Why a present fallback was not used.
    pub warning: Option<String>,
}

/// Parses a container and reconstructs the image, blending with the JPEG
/// fallback when it is present and decodable at the right size.
pub fn decode_bytes(
    tokenizer: &Tokenizer,
    bytes: &[u8],
    jpeg: Option<&dyn JpegCodec>,
) -> Result<Decoded> {
    let container = deserialize(bytes)?;
    let cfg = tokenizer.config();
    if container.patch() != cfg.patch || container.grid.bits() != cfg.bits {
        return Err(CodecError::Shape(format!(
            "container uses patch {} and {} bits, model uses patch {} and {} bits",
            container.patch(),
            container.grid.bits(),
            cfg.patch,
            cfg.bits
        )));
    }
    let neural = tokenizer.detokenize(&container.grid)?;
    let (image, blended, warning) = match (&container.fallback, jpeg) {
        (Fallback::Absent, _) => (neural, false, None),
        (Fallback::Malformed(why), _) => (
            neural,
            false,
            Some(format!("ignoring damaged JPEG fallback: {why}")),
        ),
        (Fallback::Present(_), None) => (
            neural,
            false,
            Some("JPEG fallback present but no JPEG decoder available".to_owned()),
        ),
        (Fallback::Present(data), Some(codec)) => match codec.decode(data) {
            Ok(base) if base.same_shape(&neural) => (blend_decode(&neural, &base)?, true, None),
            Ok(base) => (
                neural,
                false,
                Some(format!(
                    "ignoring JPEG fallback of size {}x{}",
                    base.height(),
                    base.width()
                )),
            ),
            Err(e) => (neural, false, Some(format!("ignoring JPEG fallback: {e}"))),
        },
    };
    Ok(Decoded {
        image,
        container,
        blended,
        warning,
    })
}
