//! Quality metrics and the weighted reconstruction loss.
//!
//! Run with `cargo run --release --example quality_metrics`.

use ganc::metrics::{
    edge_weighted_l1, format_metric, hinge_losses, ms_ssim, psnr, reconstruction_losses, ssim,
    yuv_color_loss,
};
use ganc::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let target = Image::from_fn(192, 192, |y, x, c| {
        let edge = if x > 96 { 0.3 } else { -0.3 };
        edge + 0.1 * ((y as f64 / 5.0).sin() + c as f64 * 0.1)
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    println!("noise   psnr      ssim    ms_ssim  edge_l1  yuv");
    for sigma in [0.0, 0.02, 0.05, 0.1] {
        let noisy = Image::new(
            192,
            192,
            target
                .pixels()
                .iter()
                .map(|v| v + sigma * rng.gen_range(-1.0..1.0))
                .collect(),
        )?;
        println!(
            "{sigma:<6}  {:<8}  {:.4}  {:.4}   {:.4}   {:.4}",
            format_metric(psnr(&noisy, &target)?),
            ssim(&noisy, &target)?,
            ms_ssim(&noisy, &target)?,
            edge_weighted_l1(&noisy, &target)?,
            yuv_color_loss(&noisy, &target)?
        );
    }

    let (g, d) = hinge_losses(&[2.0, 1.5], &[-2.0, -1.0])?;
    println!("hinge: generator {g}, discriminator {d}");

    let blurred = Image::from_fn(192, 192, |y, x, c| 0.9 * target.get(y, x, c))?;
    let report = reconstruction_losses(&blurred, &target, None, Some(&[0.2, -0.4]))?;
    println!("{report:#?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
