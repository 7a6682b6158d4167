//! File helpers: atomic writes and binary PPM (P6) images.

use std::io::Write;
use std::path::Path;

use crate::error::{CodecError, Result};
use crate::image::Image;

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
/// On failure nothing is left at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CodecError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CodecError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CodecError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| CodecError::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CodecError::io(path, e))
}

/// Parses a binary PPM with `maxval ≤ 255`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(CodecError::Format("not a binary PPM (P6) file".into()));
    }
    let width = parse_header_int(bytes, &mut pos, "width")?;
    let height = parse_header_int(bytes, &mut pos, "height")?;
    let maxval = parse_header_int(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(CodecError::Format(format!(
            "unsupported PPM maxval {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(CodecError::Truncated("PPM header".into()));
    }
    pos += 1;
    let n = width * height * 3;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| CodecError::Truncated(format!("PPM raster needs {n} bytes")))?;
    if maxval == 255 {
        Image::from_rgb8(height, width, raster)
    } else {
        let m = maxval as f64;
        Image::new(
            height,
            width,
            raster.iter().map(|&b| b as f64 / m - 0.5).collect(),
        )
    }
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_rgb8());
    out
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    decode_ppm(&read_file(path)?)
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_ppm(img))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(CodecError::Truncated("PPM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v > 0 && v <= 1 << 16)
        .ok_or_else(|| CodecError::Format(format!("invalid PPM {what}")))
}
