//! Block-causal tokenization of a frame sequence.
//!
//! Run with `cargo run --release --example causal_video`.

use ganc::model::{generate_weights, ModelConfig, Tokenizer};
use ganc::transformer::build_block_causal_mask;
use ganc::Image;

fn frame(t: usize) -> Result<Image, ganc::CodecError> {
    Image::from_fn(16, 16, move |y, x, c| {
        0.4 * (((x + 2 * t) as f64 / 3.0).sin() * (y as f64 / 4.0).cos()) + 0.05 * c as f64
    })
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mask = build_block_causal_mask(3, 2);
    for i in 0..mask.size() {
        let row: String = (0..mask.size())
            .map(|j| if mask.allows(i, j) { '1' } else { '.' })
            .collect();
        println!("{row}");
    }

    let cfg = ModelConfig {
        patch: 4,
        latent_dim: 16,
        heads: 2,
        depth: 2,
        bits: 12,
    };
    let tok = Tokenizer::from_weights(&generate_weights(&cfg, 2, None)?)?;
    let frames: Vec<Image> = (0..4).map(frame).collect::<Result<_, _>>()?;
    let before = tok.tokenize_sequence(&frames)?;

    let mut edited = frames.clone();
    edited[3] = Image::filled(16, 16, 0.5)?;
    let after = tok.tokenize_sequence(&edited)?;
    for t in 0..4 {
        println!("frame {t}: tokens unchanged = {}", before[t] == after[t]);
    }
    assert!(before[..3] == after[..3]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
