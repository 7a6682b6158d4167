//! Tokenize an image with seeded weights and reconstruct it.
//!
//! Run with `cargo run --release --example tokenize_image`.

use ganc::metrics::{format_metric, psnr};
use ganc::model::{generate_weights, ModelConfig, Tokenizer};
use ganc::{Image, ModelWeights};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig {
        patch: 8,
        latent_dim: 32,
        heads: 4,
        depth: 2,
        bits: 16,
    };
    let weights = generate_weights(&cfg, 7, None)?;

    // weights survive the GANW byte format unchanged
    let restored = ModelWeights::from_bytes(&weights.to_bytes())?;
    assert_eq!(restored, weights);
    let tok = Tokenizer::from_weights(&restored)?;

    let img = Image::from_fn(64, 96, |y, x, c| {
        0.4 * ((x as f64 / 11.0).sin() * (y as f64 / 7.0 + c as f64).cos())
    })?;
    let grid = tok.tokenize(&img)?;
    println!(
        "{}x{} image -> {}x{} grid of {}-bit tokens",
        img.height(),
        img.width(),
        grid.rows(),
        grid.cols(),
        grid.bits()
    );
    println!("first row: {:?}", &grid.tokens()[..grid.cols()]);

    let recon = tok.detokenize(&grid)?;
    println!(
        "psnr of untrained reconstruction: {} dB",
        format_metric(psnr(&recon, &img)?)
    );
    assert_eq!(tok.tokenize(&img)?, grid);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
