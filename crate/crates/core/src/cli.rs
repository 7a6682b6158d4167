//! The `ganc` command line: encode, decode, roundtrip, stats, init-weights.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 format or
//! shape error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::codec::{self, default_jpeg, JpegCodec};
use crate::config::{CodecConfig, ConfigLayer, ModeName, WEIGHTS_ENV};
use crate::container::{deserialize, serialize_body};
use crate::error::CodecError;
use crate::io::{read_file, read_ppm, write_atomic, write_ppm};
use crate::metrics;
use crate::model::{generate_weights, ModelConfig, Tokenizer};
use crate::stats::{self, StatsReport, CORRELATED_STATS};
use crate::weights::ModelWeights;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ganc",
    version,
    about = "Binary spherical quantization image codec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct CodecArgs {
    /// Patch size in pixels.
    #[arg(long)]
    patch: Option<usize>,
    /// Code width L in bits.
    #[arg(long)]
    bits: Option<u32>,
    /// Payload coding.
    #[arg(long, value_parser = ["raw", "arith"])]
    mode: Option<String>,
    /// Context order of the adaptive model.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
    order: Option<u8>,
    /// Weights file (falls back to $GANC_WEIGHTS, then to generated weights).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Attach a JPEG fallback when the size budget allows.
    #[arg(long)]
    jpeg_fallback: bool,
    /// Seed for generated weights.
    #[arg(long)]
    seed: Option<u64>,
    /// key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a PPM image into a .gnc container.
    Encode {
        input: PathBuf,
        #[arg(short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Decode a .gnc container into a PPM image.
    Decode {
        input: PathBuf,
        #[arg(short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Encode and decode in memory and report quality metrics.
    Roundtrip {
        input: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Token statistics over one or more containers.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV report destination.
        #[arg(short)]
        output: Option<PathBuf>,
        /// Skip unreadable containers instead of failing.
        #[arg(long)]
        keep_going: bool,
    },
    /// Write a deterministic seeded weights file.
    InitWeights {
        #[arg(short)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[arg(long, default_value_t = 16)]
        bits: u32,
        #[arg(long, default_value_t = 64)]
        latent_dim: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Codec(CodecError),
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        Failure::Codec(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Codec(e) => e.exit_code(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Codec(e) => write!(f, "{e}"),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "ganc: {f}");
            f.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Encode {
            input,
            output,
            codec,
        } => cmd_encode(&input, output, &codec, out),
        Command::Decode {
            input,
            output,
            codec,
        } => cmd_decode(&input, output, &codec, out, err),
        Command::Roundtrip { input, codec } => cmd_roundtrip(&input, &codec, out),
        Command::Stats {
            inputs,
            output,
            keep_going,
        } => cmd_stats(&inputs, output.as_deref(), keep_going, out, err),
        Command::InitWeights {
            output,
            patch,
            bits,
            latent_dim,
            heads,
            depth,
            seed,
        } => {
            let cfg = ModelConfig {
                patch,
                latent_dim,
                heads,
                depth,
                bits,
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            generate_weights(&cfg, seed, None)?.save(&output)?;
            outln(out, format!("wrote {}", output.display()))
        }
    }
}

fn outln(out: &mut dyn Write, line: impl std::fmt::Display) -> Outcome {
    writeln!(out, "{line}").map_err(|e| Failure::Codec(CodecError::io("<stdout>", e)))
}

fn resolve_config(args: &CodecArgs) -> Outcome<CodecConfig> {
    let file = match &args.config {
        Some(path) => ConfigLayer::load(path)?.map_err(Failure::Usage)?,
        None => ConfigLayer::default(),
    };
    let flags = ConfigLayer {
        patch: args.patch,
        bits: args.bits,
        mode: args
            .mode
            .as_deref()
            .map(str::parse::<ModeName>)
            .transpose()
            .map_err(Failure::Usage)?,
        order: args.order,
        weights: args.weights.clone(),
        jpeg_fallback: args.jpeg_fallback.then_some(true),
        seed: args.seed,
    };
    let env = std::env::var_os(WEIGHTS_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    CodecConfig::resolve(flags, file, env).map_err(Failure::Usage)
}

/// Loads the configured weights, or generates seeded ones sized by the
/// config. Explicit patch/bits settings must agree with a weights file.
fn load_tokenizer(cfg: &CodecConfig) -> Outcome<Tokenizer> {
    let Some(path) = &cfg.weights_path else {
        let model = ModelConfig {
            patch: cfg.patch,
            bits: cfg.bits,
            ..ModelConfig::default()
        };
        return Ok(Tokenizer::from_weights(&generate_weights(
            &model, cfg.seed, None,
        )?)?);
    };
    let tok = Tokenizer::from_weights(&ModelWeights::load(path)?)?;
    let model = tok.config();
    if cfg.patch_pinned && cfg.patch != model.patch {
        return Err(Failure::Usage(format!(
            "--patch {} conflicts with {} (patch {})",
            cfg.patch,
            path.display(),
            model.patch
        )));
    }
    if cfg.bits_pinned && cfg.bits != model.bits {
        return Err(Failure::Usage(format!(
            "--bits {} conflicts with {} ({} bits)",
            cfg.bits,
            path.display(),
            model.bits
        )));
    }
    Ok(tok)
}

fn jpeg_backend(cfg: &CodecConfig) -> Outcome<Option<Box<dyn JpegCodec + Send + Sync>>> {
    if !cfg.enable_jpeg_fallback {
        return Ok(None);
    }
    match default_jpeg() {
        Some(j) => Ok(Some(j)),
        None => Err(Failure::Usage(
            "--jpeg-fallback needs a build with the `jpeg` feature".into(),
        )),
    }
}

fn cmd_encode(
    input: &Path,
    output: Option<PathBuf>,
    args: &CodecArgs,
    out: &mut dyn Write,
) -> Outcome {
    let cfg = resolve_config(args)?;
    let tok = load_tokenizer(&cfg)?;
    let jpeg = jpeg_backend(&cfg)?;
    let img = read_ppm(input)?;
    let enc = codec::encode_image(
        &tok,
        &img,
        cfg.coding_mode(),
        jpeg.as_deref().map(|j| j as _),
    )?;
    let output = output.unwrap_or_else(|| input.with_extension("gnc"));
    write_atomic(&output, &enc.bytes)?;
    outln(out, format!("output: {}", output.display()))?;
    outln(out, format!("size: {} bytes", enc.bytes.len()))?;
    outln(out, format!("fallback: {} bytes", enc.fallback_len))?;
    outln(out, format!("bpp: {:.4}", enc.bpp()))?;
    outln(
        out,
        format!("compression_ratio: {:.2}", enc.compression_ratio()),
    )
}

fn cmd_decode(
    input: &Path,
    output: Option<PathBuf>,
    args: &CodecArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let cfg = resolve_config(args)?;
    let tok = load_tokenizer(&cfg)?;
    let bytes = read_file(input)?;
    let jpeg = default_jpeg();
    let dec = codec::decode_bytes(&tok, &bytes, jpeg.as_deref().map(|j| j as _))?;
    if let Some(w) = &dec.warning {
        let _ = writeln!(err, "warning: {w}");
    }
    let output = output.unwrap_or_else(|| input.with_extension("ppm"));
    write_ppm(&output, &dec.image)?;
    outln(out, format!("output: {}", output.display()))?;
    outln(
        out,
        format!("size: {}x{}", dec.image.width(), dec.image.height()),
    )?;
    outln(out, format!("blended: {}", dec.blended))
}

fn metric_or_na(v: crate::error::Result<f64>) -> String {
    match v {
        Ok(v) => metrics::format_metric(v),
        Err(_) => "n/a".to_owned(),
    }
}

fn cmd_roundtrip(input: &Path, args: &CodecArgs, out: &mut dyn Write) -> Outcome {
    let cfg = resolve_config(args)?;
    let tok = load_tokenizer(&cfg)?;
    let jpeg = jpeg_backend(&cfg)?;
    let img = read_ppm(input)?;
    let mode = cfg.coding_mode();
    let enc = codec::encode_image(&tok, &img, mode, jpeg.as_deref().map(|j| j as _))?;
    let decoder = default_jpeg();
    let dec = codec::decode_bytes(&tok, &enc.bytes, decoder.as_deref().map(|j| j as _))?;
    let reencoded = serialize_body(&dec.container.grid, tok.config().patch, mode)?;
    let exact = dec.container.grid == enc.grid && reencoded[..] == enc.bytes[..enc.body_len];
    let rec = &dec.image;
    outln(
        out,
        format!("psnr: {}", metric_or_na(metrics::psnr(rec, &img))),
    )?;
    outln(
        out,
        format!("ssim: {}", metric_or_na(metrics::ssim(rec, &img))),
    )?;
    outln(
        out,
        format!("ms_ssim: {}", metric_or_na(metrics::ms_ssim(rec, &img))),
    )?;
    outln(
        out,
        format!(
            "edge_l1: {}",
            metric_or_na(metrics::edge_weighted_l1(rec, &img))
        ),
    )?;
    outln(
        out,
        format!(
            "yuv_loss: {}",
            metric_or_na(metrics::yuv_color_loss(rec, &img))
        ),
    )?;
    outln(
        out,
        format!("compression_ratio: {:.4}", enc.compression_ratio()),
    )?;
    outln(out, format!("bpp: {:.4}", enc.bpp()))?;
    outln(out, format!("size: {}", enc.bytes.len()))?;
    outln(out, format!("blended: {}", dec.blended))?;
    if !exact {
        return Err(Failure::Codec(CodecError::Format(
            "token payload did not survive the round trip".into(),
        )));
    }
    outln(out, "tokens: exact")
}

fn cmd_stats(
    inputs: &[PathBuf],
    output: Option<&Path>,
    keep_going: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let mut reports: Vec<StatsReport> = Vec::new();
    for path in inputs {
        let parsed = read_file(path)
            .and_then(|b| deserialize(&b))
            .and_then(|c| stats::compute_stats(&path.display().to_string(), &c.grid));
        match parsed {
            Ok(r) => reports.push(r),
            Err(e) if keep_going => {
                let _ = writeln!(err, "warning: skipping {}: {e}", path.display());
            }
            Err(e) => return Err(e.into()),
        }
    }
    if reports.is_empty() {
        return Err(Failure::Codec(CodecError::Format(
            "no readable containers".into(),
        )));
    }
    outln(
        out,
        "name bits entropy_bits unique_tokens total_tokens sparsity mean_token_value utilization",
    )?;
    for r in &reports {
        outln(
            out,
            format!(
                "{} {} {:.6} {} {} {:.6e} {:.3} {:.6}",
                r.name,
                r.bits,
                r.entropy_bits,
                r.unique_tokens,
                r.total_tokens,
                r.sparsity,
                r.mean_token_value,
                r.utilization
            ),
        )?;
    }
    match stats::report_utilization(&reports) {
        Ok(u) => outln(out, format!("corpus_utilization: {u:.6e}"))?,
        Err(e) => {
            let _ = writeln!(err, "warning: {e}");
        }
    }
    if let Ok(m) = stats::correlation_matrix(&reports) {
        outln(out, format!("correlation: {}", CORRELATED_STATS.join(" ")))?;
        for (name, row) in CORRELATED_STATS.iter().zip(&m) {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or("null".to_owned(), |v| format!("{v:.4}")))
                .collect();
            outln(out, format!("{name} {}", cells.join(" ")))?;
        }
    }
    if let Some(path) = output {
        stats::export_report(&reports, path)?;
        outln(out, format!("report: {}", path.display()))?;
    }
    Ok(())
}
