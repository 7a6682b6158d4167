//! Size-budgeted JPEG fallback and the decode-time blend.
//!
//! Run with `cargo run --release --example jpeg_fallback`.

use ganc::codec::{decode_bytes, encode_image, JpegCodec};
use ganc::container::{fallback_target, jpeg_fallback_select, CodingMode};
use ganc::metrics::psnr;
use ganc::model::{generate_weights, ModelConfig, Tokenizer};
use ganc::Image;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("budget for 256x256: {} B", fallback_target(256, 256));

    // stub encoder: quality q costs 2000·q bytes
    let chosen = jpeg_fallback_select(4628, 256, 256, |q| {
        Ok::<_, ()>(vec![0u8; 2000 * q as usize])
    });
    println!("stub sweep picks {} B", chosen.map_or(0, |j| j.len()));

    let cfg = ModelConfig {
        latent_dim: 32,
        depth: 2,
        ..ModelConfig::default()
    };
    let tok = Tokenizer::from_weights(&generate_weights(&cfg, 1, None)?)?;
    let img = Image::from_fn(128, 128, |y, x, c| {
        0.45 * ((x as f64 / 13.0).sin() * (y as f64 / 9.0).cos()) - 0.1 * c as f64
    })?;

    let Some(jpeg) = ganc::codec::default_jpeg() else {
        println!("built without the jpeg feature");
        return Ok(());
    };
    let enc = encode_image(
        &tok,
        &img,
        CodingMode::Raw,
        Some(jpeg.as_ref() as &dyn JpegCodec),
    )?;
    println!(
        "container {} B, of which fallback {} B",
        enc.bytes.len(),
        enc.fallback_len
    );

    let plain = decode_bytes(&tok, &enc.bytes, None)?;
    let blended = decode_bytes(&tok, &enc.bytes, Some(jpeg.as_ref() as &dyn JpegCodec))?;
    println!("neural only: {:.2} dB", psnr(&plain.image, &img)?);
    println!(
        "blended:     {:.2} dB (blended = {})",
        psnr(&blended.image, &img)?,
        blended.blended
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
