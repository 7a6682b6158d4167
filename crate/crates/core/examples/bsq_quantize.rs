//! Binary spherical quantization of random latent vectors.
//!
//! Run with `cargo run --example bsq_quantize`.

use ganc::bsq::{
    binary_quantize, code_to_token, spherical_normalize, token_to_code, ProjectedVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for bits in [4usize, 16, 36] {
        let bound = 2.0 - 2.0 / (bits as f64).sqrt();
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let v: Vec<f64> = (0..bits).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = spherical_normalize(&ProjectedVector(v))?;
            let q = binary_quantize(&u)?;
            let err: f64 = u
                .values()
                .iter()
                .zip(q.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            worst = worst.max(err);
            let t = code_to_token(&q)?;
            assert_eq!(token_to_code(t, bits as u32)?, q);
        }
        println!("L={bits:2}  worst ‖u−û‖² = {worst:.4}  bound = {bound:.4}");
    }

    let u = spherical_normalize(&ProjectedVector(vec![0.3, -0.1, 0.0, 2.0]))?;
    let t = code_to_token(&binary_quantize(&u)?)?;
    println!("[0.3, -0.1, 0.0, 2.0] -> token {} (0b{:04b})", t.0, t.0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
