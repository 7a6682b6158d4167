//! The `.gnc` container: header, token payload, fallback section.
//!
//! Run with `cargo run --example container_format`.

use ganc::codec::{bits_per_pixel, compression_ratio};
use ganc::container::{deserialize, serialize, CodingMode, Fallback, HEADER_LEN};
use ganc::entropy::ModelSpec;
use ganc::TokenGrid;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // a 256x256 image at patch 8 is a 32x32 grid; L = 36 bits per token
    let mask = (1u64 << 36) - 1;
    let tokens: Vec<u64> = (0..1024u64)
        .map(|i| i.wrapping_mul(0x9E37_79B9_7F4A_7C15) & mask)
        .collect();
    let grid = TokenGrid::new(32, 32, 36, tokens)?;

    let bytes = serialize(&grid, 8, CodingMode::Raw, None)?;
    println!("header {HEADER_LEN} B, total {} B", bytes.len());
    println!(
        "ratio {:.2}x at {:.4} bpp",
        compression_ratio(256, 256, bytes.len()),
        bits_per_pixel(256, 256, bytes.len())
    );
    println!("header bytes: {:02x?}", &bytes[..HEADER_LEN]);

    let c = deserialize(&bytes)?;
    assert_eq!(c.grid, grid);
    assert_eq!(c.fallback, Fallback::Absent);

    let arith = serialize(
        &grid,
        8,
        CodingMode::Arithmetic(ModelSpec::Adaptive { order: 1 }),
        None,
    )?;
    println!("arithmetic mode, order-1 contexts: {} B", arith.len());

    let cut = &bytes[..bytes.len() - 10];
    println!("truncated container: {}", deserialize(cut).unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
