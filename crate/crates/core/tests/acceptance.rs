//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Expected values come from the independent oracles
//! below, never from the code under test.

use std::time::{Duration, Instant};

use ganc::bsq::{
    binary_quantize, code_to_token, spherical_normalize, token_to_code, ProjectedVector, TokenIndex,
};
use ganc::codec::{encode_image, JpegCodec};
use ganc::container::{blend_decode, fallback_target, jpeg_fallback_select, CodingMode};
use ganc::entropy::{ac_decode, ac_encode, CodedStream, ModelSpec};
use ganc::freq::{dct_block, init_freq_weights, DctDirection, BLOCK};
use ganc::metrics::{
    aggregate_losses, edge_weights, hinge_losses, ms_ssim, psnr, yuv_color_loss, LossComponents,
};
use ganc::model::{generate_weights, ModelConfig, Tokenizer};
use ganc::stats::{compute_stats, corpus_utilization};
use ganc::{CodecError, Image, TokenGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Check>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: CodecError) -> String {
    e.to_string()
}

// ---- oracles ----

fn binary_entropy_oracle(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Direct double-sum orthonormal 2D DCT-II.
fn dct_oracle(x: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let n: f64 = 8.0;
    let alpha = |k: usize| {
        if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        }
    };
    let mut out = [[0.0; 8]; 8];
    for (u, row) in out.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, xr) in x.iter().enumerate() {
                for (j, xv) in xr.iter().enumerate() {
                    s += xv
                        * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / 16.0).cos()
                        * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64 / 16.0).cos();
                }
            }
            *cell = alpha(u) * alpha(v) * s;
        }
    }
    out
}

/// Code entry `i` is `+1/√L` exactly when bit `i` of the token is set.
fn code_oracle(token: u64, bits: usize) -> Vec<f64> {
    let a = 1.0 / (bits as f64).sqrt();
    (0..bits)
        .map(|i| if token >> i & 1 == 1 { a } else { -a })
        .collect()
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

// ---- criteria ----

fn bsq_bound_suite() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = Vec::new();
    for bits in [4usize, 16, 18, 36] {
        let bound = 2.0 - 2.0 / (bits as f64).sqrt();
        let mut max_err: f64 = 0.0;
        for _ in 0..100_000 {
            let u = spherical_normalize(&ProjectedVector(gaussian_unit(&mut rng, bits)))
                .map_err(err)?;
            let norm: f64 = u.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            ensure((norm - 1.0).abs() <= 1e-6, || {
                format!("L={bits}: norm {norm}")
            })?;
            let q = binary_quantize(&u).map_err(err)?;
            let qn: f64 = q.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            ensure((qn - 1.0).abs() <= 1e-6, || {
                format!("L={bits}: quantized norm {qn}")
            })?;
            let e: f64 = u
                .values()
                .iter()
                .zip(q.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            ensure(e <= bound + 1e-12, || {
                format!("L={bits}: error {e} > {bound}")
            })?;
            max_err = max_err.max(e);
            ensure(binary_quantize(&q).map_err(err)? == q, || {
                format!("L={bits}: not idempotent")
            })?;
        }
        worst.push(format!("L={bits} max {max_err:.3}/{bound:.3}"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "4x10^5 vectors in {:.2}s; {}",
        elapsed.as_secs_f64(),
        worst.join(", ")
    ))
}

fn token_bijection() -> Check {
    let bits = 16usize;
    for t in 0..(1u64 << bits) {
        let code = token_to_code(TokenIndex(t), bits as u32).map_err(err)?;
        ensure(code.values() == code_oracle(t, bits).as_slice(), || {
            format!("token {t}: wrong code")
        })?;
        let back = code_to_token(&code).map_err(err)?;
        ensure(back.0 == t, || format!("token {t} came back as {}", back.0))?;
    }
    Ok("65536 codes, zero failures".into())
}

fn arithmetic_coder() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let bits: u32 = rng.gen_range(1..=64);
        let mask = if bits == 64 {
            u64::MAX
        } else {
            (1u64 << bits) - 1
        };
        let n = rng.gen_range(0..120);
        let skew = rng.gen_range(0.0..1.0);
        let tokens: Vec<u64> = (0..n)
            .map(|_| {
                if rng.gen_bool(skew) {
                    rng.gen::<u64>() & mask & 0x0f0f
                } else {
                    rng.gen::<u64>() & mask
                }
            })
            .collect();
        let spec = match case % 4 {
            0 => ModelSpec::Uniform,
            k => ModelSpec::Adaptive { order: k - 1 },
        };
        let bytes = ac_encode(&tokens, bits, spec).map_err(err)?.to_bytes();
        let back = ac_decode(&CodedStream::from_bytes(&bytes).map_err(err)?).map_err(err)?;
        ensure(back == tokens, || {
            format!("fuzz case {case} ({spec:?}, L={bits}) failed")
        })?;
    }

    // Bernoulli(0.2) source, one bit per token
    let n = 1_000_000;
    let source: Vec<u64> = (0..n).map(|_| rng.gen_bool(0.2) as u64).collect();
    let stream = ac_encode(&source, 1, ModelSpec::Adaptive { order: 0 }).map_err(err)?;
    let rate = stream.to_bytes().len() as f64 * 8.0 / n as f64;
    let h = binary_entropy_oracle(0.2);
    ensure((rate - h).abs() / h <= 0.02, || {
        format!("Bernoulli rate {rate:.5} vs {h:.5}")
    })?;

    // Markov source (stay 0.9), packed 16 bits per token, least significant first
    let mut bit = false;
    let stream_bits: Vec<bool> = (0..16 * 20_000)
        .map(|_| {
            if !rng.gen_bool(0.9) {
                bit = !bit;
            }
            bit
        })
        .collect();
    let tokens: Vec<u64> = stream_bits
        .chunks(16)
        .map(|c| c.iter().enumerate().map(|(i, &b)| (b as u64) << i).sum())
        .collect();
    let coded = ac_encode(&tokens, 16, ModelSpec::Adaptive { order: 1 })
        .map_err(err)?
        .to_bytes();
    let raw_bytes = stream_bits.len() / 8;
    let reduction = 1.0 - coded.len() as f64 / raw_bytes as f64;
    ensure(reduction >= 0.30, || {
        format!("Markov reduction {:.1}%", reduction * 100.0)
    })?;
    Ok(format!(
        "1000 fuzz round trips; Bernoulli(0.2) {rate:.5} bits/bit (oracle {h:.5}); Markov order-1 saves {:.1}%",
        reduction * 100.0
    ))
}

fn test_image(h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |y, x, c| {
        let r = ((y as f64 - 100.0).powi(2) + (x as f64 - 140.0).powi(2)).sqrt();
        0.35 * (r / 11.0).sin() + 0.1 * ((x + y) as f64 / 40.0).cos() - 0.05 * c as f64
    })
    .unwrap()
}

fn seeded_tokenizer(bits: u32) -> Result<Tokenizer, String> {
    let cfg = ModelConfig {
        bits,
        ..ModelConfig::default()
    };
    Tokenizer::from_weights(&generate_weights(&cfg, 0, None).map_err(err)?).map_err(err)
}

fn container_math() -> Check {
    let tok = seeded_tokenizer(36)?;
    let img = test_image(256, 256);
    let enc = encode_image(&tok, &img, CodingMode::Raw, None).map_err(err)?;
    // oracle: 16-byte header + ⌈1024·36/8⌉ payload + 4-byte fallback length
    let oracle = 16 + (32 * 32 * 36usize).div_ceil(8) + 4;
    let total = enc.bytes.len();
    let ratio = (256 * 256 * 3) as f64 / total as f64;
    ensure(total == oracle, || {
        format!("{total} bytes, oracle {oracle}")
    })?;
    ensure(total <= 4628, || format!("{total} > 4628 bytes"))?;
    ensure(ratio >= 42.0, || format!("ratio {ratio:.2}"))?;
    Ok(format!("{total} bytes, ratio {ratio:.2}x"))
}

fn fallback_policy() -> Check {
    let target = fallback_target(256, 256);
    let oracle_target = (256usize * 256 * 3) / 8;
    ensure(target == oracle_target, || {
        format!("target {target}, oracle {oracle_target}")
    })?;

    let size_for = |q: u8| 4000 * q as usize;
    let qualities = [1u8, 5, 10, 15];
    let mut cases = 0;
    for current in [
        50usize, 100, 101, 4628, 10_000, 20_000, 24_000, 24_575, 24_576, 30_000,
    ] {
        let mut tried = Vec::new();
        let got = jpeg_fallback_select(current, 256, 256, |q| {
            tried.push(q);
            Ok::<_, ()>(vec![q; size_for(q)])
        });
        let expect = if current > 100 && current < target {
            qualities
                .iter()
                .copied()
                .find(|&q| size_for(q) <= target - current)
        } else {
            None
        };
        ensure(got.as_ref().map(|j| j[0]) == expect, || {
            format!(
                "size {current}: picked {:?}, oracle {expect:?}",
                got.map(|j| j[0])
            )
        })?;
        if let Some(q) = expect {
            let prefix: Vec<u8> = qualities
                .iter()
                .copied()
                .take_while(|&x| x != q)
                .chain([q])
                .collect();
            ensure(tried == prefix, || {
                format!("size {current}: tried {tried:?}")
            })?;
        }
        cases += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (h, w) = (16, 16);
    let neural: Vec<f64> = (0..h * w * 3).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let base: Vec<f64> = (0..h * w * 3).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let blended = blend_decode(
        &Image::new(h, w, neural.clone()).map_err(err)?,
        &Image::new(h, w, base.clone()).map_err(err)?,
    )
    .map_err(err)?;
    let max_dev = blended
        .pixels()
        .iter()
        .zip(neural.iter().zip(&base))
        .map(|(b, (n, j))| (b - (0.7 * n + 0.3 * j)).abs())
        .fold(0.0, f64::max);
    ensure(max_dev <= 1e-9, || format!("blend deviates by {max_dev:e}"))?;
    Ok(format!(
        "target {target} B; {cases} first-fit cases; blend max deviation {max_dev:.1e}"
    ))
}

fn causality() -> Check {
    let cfg = ModelConfig {
        patch: 8,
        latent_dim: 32,
        heads: 4,
        depth: 2,
        bits: 16,
    };
    let tok =
        Tokenizer::from_weights(&generate_weights(&cfg, 5, None).map_err(err)?).map_err(err)?;
    let frames: Vec<Image> = (0..4)
        .map(|t| {
            Image::from_fn(32, 32, move |y, x, c| {
                0.4 * (((x + 3 * t) as f64 / 5.0).sin() * (y as f64 / 6.0).cos()) + 0.02 * c as f64
            })
        })
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let before = tok.tokenize_sequence(&frames).map_err(err)?;
    let mut mutated = frames.clone();
    mutated[3] =
        Image::from_fn(32, 32, |y, x, _| if (x + y) % 2 == 0 { 0.5 } else { -0.5 }).map_err(err)?;
    let after = tok.tokenize_sequence(&mutated).map_err(err)?;
    for t in 0..3 {
        ensure(before[t] == after[t], || format!("frame {t} changed"))?;
    }
    ensure(before[3] != after[3], || {
        "mutated frame 3 kept its tokens".into()
    })?;

    // the mask is not vacuous: editing frame 0 reaches later frames
    let mut early = frames.clone();
    early[0] = mutated[3].clone();
    let moved = tok.tokenize_sequence(&early).map_err(err)?;
    ensure((1..4).any(|t| moved[t] != before[t]), || {
        "frame 0 does not influence later frames".into()
    })?;
    Ok("frames 0-2 bit-identical after mutating frame 3".into())
}

fn metric_identities() -> Check {
    let x = test_image(64, 64);
    let p = psnr(&x, &x).map_err(err)?;
    ensure(p == f64::INFINITY, || format!("psnr(x,x) = {p}"))?;
    let m = ms_ssim(&x, &x).map_err(err)?;
    ensure((m - 1.0).abs() <= 1e-6, || format!("ms_ssim(x,x) = {m}"))?;

    let ew = edge_weights(&x);
    ensure(ew.iter().all(|&w| w > 1.0 && w < 3.0), || {
        "edge weight outside (1,3)".into()
    })?;
    let zero = Image::filled(9, 9, 0.0).map_err(err)?;
    ensure(edge_weights(&zero).iter().all(|&w| w == 2.0), || {
        "zero image weight != 2".into()
    })?;
    let gray = Image::filled(9, 9, 0.25).map_err(err)?;
    let gw = edge_weights(&gray);
    for y in 1..8 {
        for xx in 1..8 {
            ensure(gw[y * 9 + xx] == 2.0, || {
                format!("constant image interior weight {}", gw[y * 9 + xx])
            })?;
        }
    }

    let y = yuv_color_loss(&x, &x).map_err(err)?;
    ensure(y == 0.0, || format!("yuv(x,x) = {y}"))?;
    let (g, d) = hinge_losses(&[2.0], &[-2.0]).map_err(err)?;
    ensure(g == 2.0 && d == 0.0, || format!("hinge ({g}, {d})"))?;
    let ones = LossComponents {
        reconstruction: 1.0,
        perceptual: Some(1.0),
        ms_ssim_term: 1.0,
        color: 1.0,
        generator: Some(1.0),
    };
    let total = aggregate_losses(ones).map_err(err)?.total;
    let oracle = 1.0 + 0.2 + 0.3 + 0.15 + 0.05;
    ensure((total - oracle).abs() < 1e-12, || {
        format!("aggregate {total}")
    })?;
    Ok(format!(
        "psnr inf, ms_ssim {m:.9}, edge weights in (1,3), yuv 0, hinge (2,0), aggregate {total:.2}"
    ))
}

fn dct_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut max_rt, mut max_parseval, mut max_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let mut block = [[0.0; BLOCK]; BLOCK];
        block
            .iter_mut()
            .flatten()
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let f = dct_block(&block, DctDirection::Forward);
        let back = dct_block(&f, DctDirection::Inverse);
        let o = dct_oracle(&block);
        let e_x: f64 = block.iter().flatten().map(|v| v * v).sum();
        let e_f: f64 = f.iter().flatten().map(|v| v * v).sum();
        max_parseval = max_parseval.max((e_x - e_f).abs());
        for i in 0..BLOCK {
            for j in 0..BLOCK {
                max_rt = max_rt.max((back[i][j] - block[i][j]).abs());
                max_oracle = max_oracle.max((f[i][j] - o[i][j]).abs());
            }
        }
    }
    ensure(
        max_rt <= 1e-5 && max_parseval <= 1e-5 && max_oracle <= 1e-5,
        || format!("round trip {max_rt:e}, Parseval {max_parseval:e}, oracle {max_oracle:e}"),
    )?;

    let init = init_freq_weights(1).map_err(err)?;
    let w00 = init.dct_scale[0];
    let oracle = (-9.0f64 / 8.0).exp();
    ensure(
        (w00 - oracle).abs() < 1e-12 && (w00 - 0.3247).abs() < 1e-4,
        || format!("w(0,0) = {w00}"),
    )?;
    let max = init.dct_scale.iter().copied().fold(f64::MIN, f64::max);
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            let on_ring = i * i + j * j == 9;
            let v = init.dct_scale[i * BLOCK + j];
            ensure(!on_ring || v == max, || {
                format!("ring entry ({i},{j}) = {v} below max {max}")
            })?;
            ensure(on_ring || v < max, || {
                format!("off-ring entry ({i},{j}) reaches the max")
            })?;
        }
    }
    Ok(format!(
        "1000 blocks: round trip {max_rt:.1e}, Parseval {max_parseval:.1e}, direct-sum {max_oracle:.1e}; w(0,0) {w00:.4}; max {max} on dist=3"
    ))
}

fn stats_checks() -> Check {
    let grid = TokenGrid::new(8, 8, 16, (0..64u64).map(|t| t * 1021).collect()).map_err(err)?;
    let r = compute_stats("uniform64", &grid).map_err(err)?;
    ensure((r.entropy_bits - 64f64.log2()).abs() < 1e-9, || {
        format!("entropy {}", r.entropy_bits)
    })?;

    // 6142 distinct tokens spread over overlapping grids
    let distinct = 6142u64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pool: Vec<u64> = {
        let mut all: Vec<u64> = (0..65_536).collect();
        for i in 0..distinct as usize {
            let j = rng.gen_range(i..all.len());
            all.swap(i, j);
        }
        all.truncate(distinct as usize);
        all
    };
    let mut grids = Vec::new();
    for chunk in pool.chunks(1024) {
        let mut tokens = chunk.to_vec();
        // overlap with earlier tokens, which must not count twice
        tokens.extend(pool[..64].iter().copied());
        tokens.resize(32 * 34, pool[0]);
        grids.push(TokenGrid::new(32, 34, 16, tokens).map_err(err)?);
    }
    let u = corpus_utilization(&grids).map_err(err)?;
    let oracle = distinct as f64 / 65_536.0;
    ensure(u == oracle, || format!("utilization {u} vs {oracle}"))?;
    ensure(format!("{:.2}", u * 100.0) == "9.37", || {
        format!("{:.2}%", u * 100.0)
    })?;
    Ok(format!(
        "uniform-64 entropy {:.3} bits; corpus utilization {:.2}%",
        r.entropy_bits,
        u * 100.0
    ))
}

struct NoJpeg;

impl JpegCodec for NoJpeg {
    fn encode(&self, _: &Image, _: u8) -> ganc::Result<Vec<u8>> {
        Err(CodecError::Format("disabled".into()))
    }
    fn decode(&self, _: &[u8]) -> ganc::Result<Image> {
        Err(CodecError::Format("disabled".into()))
    }
}

fn determinism(suite_start: Instant) -> Check {
    let img = test_image(128, 128);
    let mode = CodingMode::Arithmetic(ModelSpec::Adaptive { order: 1 });
    let a = encode_image(
        &seeded_tokenizer(16)?,
        &img,
        mode,
        ganc::codec::default_jpeg().as_deref().map(|j| j as _),
    )
    .map_err(err)?;
    let b = encode_image(
        &seeded_tokenizer(16)?,
        &img,
        mode,
        ganc::codec::default_jpeg().as_deref().map(|j| j as _),
    )
    .map_err(err)?;
    ensure(a.bytes == b.bytes, || {
        "containers differ between runs".into()
    })?;
    let c =
        encode_image(&seeded_tokenizer(16)?, &img, CodingMode::Raw, Some(&NoJpeg)).map_err(err)?;
    let d =
        encode_image(&seeded_tokenizer(16)?, &img, CodingMode::Raw, Some(&NoJpeg)).map_err(err)?;
    ensure(c.bytes == d.bytes, || {
        "raw containers differ between runs".into()
    })?;
    let elapsed = suite_start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || {
        format!("suite took {elapsed:?}")
    })?;
    Ok(format!(
        "two encodes byte-identical ({} B with fallback); suite ran in {:.1}s",
        a.bytes.len(),
        elapsed.as_secs_f64()
    ))
}

fn main() {
    let start = Instant::now();
    let criteria: Vec<Criterion> = vec![
        ("bsq error bound", Box::new(bsq_bound_suite)),
        ("token bijection L=16", Box::new(token_bijection)),
        ("arithmetic coder", Box::new(arithmetic_coder)),
        ("container math", Box::new(container_math)),
        ("fallback policy", Box::new(fallback_policy)),
        ("block-causal tokenization", Box::new(causality)),
        ("metric identities", Box::new(metric_identities)),
        ("dct and frequency init", Box::new(dct_checks)),
        ("token statistics", Box::new(stats_checks)),
        (
            "end-to-end determinism",
            Box::new(move || determinism(start)),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
