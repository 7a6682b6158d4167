//! Drives the `ganc` command line in-process: init-weights, encode, decode,
//! roundtrip and stats on a generated PPM.
//!
//! Run with `cargo run --release --example cli_pipeline`.

use ganc::cli::run_with;
use ganc::io::write_ppm;
use ganc::Image;

fn ganc(args: &[&str]) -> Result<String, Box<dyn std::error::Error>> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(
        std::iter::once("ganc").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    if code != 0 {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)).into());
    }
    Ok(String::from_utf8(out)?)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = |name: &str| dir.path().join(name).display().to_string();

    let img = Image::from_fn(64, 64, |y, x, c| {
        0.4 * ((x as f64 / 6.0).sin() * (y as f64 / 5.0).cos()) - 0.05 * c as f64
    })?;
    write_ppm(&dir.path().join("in.ppm"), &img)?;

    let weights = path("small.ganw");
    print!(
        "{}",
        ganc(&[
            "init-weights",
            "-o",
            &weights,
            "--latent-dim",
            "32",
            "--depth",
            "2",
            "--seed",
            "4"
        ])?
    );
    print!(
        "{}",
        ganc(&[
            "encode",
            &path("in.ppm"),
            "-o",
            &path("in.gnc"),
            "--weights",
            &weights,
            "--mode",
            "arith"
        ])?
    );
    print!(
        "{}",
        ganc(&[
            "decode",
            &path("in.gnc"),
            "-o",
            &path("out.ppm"),
            "--weights",
            &weights
        ])?
    );
    print!(
        "{}",
        ganc(&["roundtrip", &path("in.ppm"), "--weights", &weights])?
    );
    print!(
        "{}",
        ganc(&["stats", &path("in.gnc"), "-o", &path("report.csv")])?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
