//! Block DCT, mid-frequency attention and adaptive contrast on feature maps.
//!
//! Run with `cargo run --example frequency_attention`.

use ganc::freq::{
    adaptive_contrast_forward, dct_block, frequency_attention_forward, init_freq_weights,
    mid_frequency_weight, ContrastParams, DctDirection, BLOCK,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("initial frequency weights (row i, column j):");
    for i in 0..BLOCK {
        let row: Vec<String> = (0..BLOCK)
            .map(|j| format!("{:.3}", mid_frequency_weight(i, j)))
            .collect();
        println!("  {}", row.join(" "));
    }

    let mut block = [[0.0; BLOCK]; BLOCK];
    for (i, row) in block.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = ((i * 3 + j * 5) % 7) as f64 / 7.0;
        }
    }
    let coeffs = dct_block(&block, DctDirection::Forward);
    let back = dct_block(&coeffs, DctDirection::Inverse);
    let energy = |b: &[[f64; BLOCK]; BLOCK]| b.iter().flatten().map(|v| v * v).sum::<f64>();
    println!(
        "energy: spatial {:.6}, frequency {:.6}",
        energy(&block),
        energy(&coeffs)
    );
    let err = block
        .iter()
        .flatten()
        .zip(back.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round-trip max error {err:.2e}");

    // a 2-channel 12x20 map: DC in channel 0, a fine grating in channel 1
    let (c, h, w) = (2, 12, 20);
    let mut x = vec![0.5; h * w];
    x.extend((0..h * w).map(|p| if (p % w) % 2 == 0 { 0.5 } else { -0.5 }));
    let scales = init_freq_weights(c)?;
    let y = frequency_attention_forward(&x, h, w, &scales)?;
    let mean_abs = |s: &[f64]| s.iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64;
    println!(
        "DC channel kept {:.3}, grating kept {:.3}",
        mean_abs(&y[..h * w]) / 0.5,
        mean_abs(&y[h * w..]) / 0.5
    );

    let z = adaptive_contrast_forward(&x, h, w, &ContrastParams::neutral(c))?;
    assert_eq!(z, x);
    println!("neutral contrast gate leaves features unchanged");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
