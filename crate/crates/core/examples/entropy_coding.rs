//! Range coding of token streams under raw, uniform and adaptive models.
//!
//! Run with `cargo run --example entropy_coding`.

use ganc::container::pack_raw;
use ganc::entropy::{ac_decode, ac_encode, CodedStream, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // 8-bit tokens whose bits each repeat the previous token's bit w.p. 0.9
    let bits = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut prev: u64 = rng.gen_range(0..256);
    let tokens: Vec<u64> = (0..4096)
        .map(|_| {
            let flips: u64 = (0..bits)
                .filter(|_| rng.gen_bool(0.1))
                .map(|i| 1 << i)
                .sum();
            prev ^= flips;
            prev
        })
        .collect();

    let raw = pack_raw(&tokens, bits);
    println!("raw:           {:6} bytes", raw.len());
    for spec in [
        ModelSpec::Uniform,
        ModelSpec::Adaptive { order: 0 },
        ModelSpec::Adaptive { order: 1 },
        ModelSpec::Adaptive { order: 2 },
    ] {
        let stream = ac_encode(&tokens, bits, spec)?;
        let bytes = stream.to_bytes();
        let back = ac_decode(&CodedStream::from_bytes(&bytes)?)?;
        assert_eq!(back, tokens);
        println!(
            "{:<14} {:6} bytes ({:+.1}% vs raw)",
            format!("{spec:?}:"),
            bytes.len(),
            100.0 * (bytes.len() as f64 / raw.len() as f64 - 1.0)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
