//! The `.gnc` container.
//!
//! ```text
//! offset size
//!      0    4  magic "GANC"
//!      4    1  version (1)
//!      5    2  image height H, u16 LE
//!      7    2  image width W, u16 LE
//!      9    1  patch size
//!     10    1  bits per token L
//!     11    1  coding mode: 0 raw packed bits, 1 arithmetic-coded stream
//!     12    4  payload length, u32 LE
//!     16    …  payload
//!      …    4  JPEG length, u32 LE (0 = no fallback)
//!      …    …  JPEG bytes
//! ```
//!
//! Raw payloads pack each token in `L` bits, least significant bit first,
//! into a little-endian bit stream padded with zeros to a whole byte.

use crate::entropy::{ac_decode, ac_encode, CodedStream, ModelSpec};
use crate::error::{CodecError, Result};
use crate::grid::TokenGrid;
use crate::image::{Image, CHANNELS};
use crate::weights::ByteReader;

pub const CONTAINER_MAGIC: [u8; 4] = *b"GANC";
pub const CONTAINER_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
pub const FALLBACK_LEN_BYTES: usize = 4;

/// JPEG qualities tried in order when adding a fallback.
pub const FALLBACK_QUALITIES: [u8; 4] = [1, 5, 10, 15];

/// Fallback is only considered above this many bytes of container.
pub const FALLBACK_MIN_SIZE: usize = 100;

pub const NEURAL_BLEND: f64 = 0.7;
pub const BASE_BLEND: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodingMode {
    Raw,
    Arithmetic(ModelSpec),
}

impl CodingMode {
    pub fn byte(&self) -> u8 {
        match self {
            CodingMode::Raw => 0,
            CodingMode::Arithmetic(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub version: u8,
    pub height: u16,
    pub width: u16,
    pub patch: u8,
    pub bits: u8,
    pub coding_mode: u8,
    pub payload_len: u32,
}

impl ContainerHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&CONTAINER_MAGIC);
        b[4] = self.version;
        b[5..7].copy_from_slice(&self.height.to_le_bytes());
        b[7..9].copy_from_slice(&self.width.to_le_bytes());
        b[9] = self.patch;
        b[10] = self.bits;
        b[11] = self.coding_mode;
        b[12..16].copy_from_slice(&self.payload_len.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4, "container magic")?;
        if magic != CONTAINER_MAGIC {
            return Err(CodecError::Format(format!(
                "bad container magic {magic:02x?}"
            )));
        }
        let h = ContainerHeader {
            version: r.u8("container version")?,
            height: r.u16("image height")?,
            width: r.u16("image width")?,
            patch: r.u8("patch size")?,
            bits: r.u8("code width")?,
            coding_mode: r.u8("coding mode")?,
            payload_len: r.u32("payload length")?,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.version != CONTAINER_VERSION {
            return Err(CodecError::Format(format!(
                "unsupported container version {}",
                self.version
            )));
        }
        if self.patch == 0
            || self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(self.patch as u16)
            || !self.width.is_multiple_of(self.patch as u16)
        {
            return Err(CodecError::Format(format!(
                "image {}x{} is not divisible by patch size {}",
                self.height, self.width, self.patch
            )));
        }
        if self.bits == 0 || self.bits > 64 {
            return Err(CodecError::Format(format!(
                "code width {} outside [1, 64]",
                self.bits
            )));
        }
        if self.coding_mode > 1 {
            return Err(CodecError::Format(format!(
                "unknown coding mode {}",
                self.coding_mode
            )));
        }
        Ok(())
    }

    pub fn grid_rows(&self) -> usize {
        (self.height / self.patch as u16) as usize
    }

    pub fn grid_cols(&self) -> usize {
        (self.width / self.patch as u16) as usize
    }

    /// Uncompressed RGB size, `H·W·3`.
    pub fn raw_image_bytes(&self) -> usize {
        self.height as usize * self.width as usize * CHANNELS
    }
}

/// Packs `bits`-wide tokens into `ceil(n·bits/8)` bytes.
pub fn pack_raw(tokens: &[u64], bits: u32) -> Vec<u8> {
    let total_bits = tokens.len() * bits as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut pos = 0usize;
    for &t in tokens {
        for i in 0..bits {
            if (t >> i) & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

/// Inverse of [`pack_raw`]; `bytes` must be exactly `ceil(n·bits/8)` long with
/// zero padding.
pub fn unpack_raw(bytes: &[u8], n: usize, bits: u32) -> Result<Vec<u64>> {
    let total_bits = n * bits as usize;
    let need = total_bits.div_ceil(8);
    if bytes.len() < need {
        return Err(CodecError::Truncated(format!(
            "raw payload needs {need} bytes, has {}",
            bytes.len()
        )));
    }
    if bytes.len() > need {
        return Err(CodecError::Format(format!(
            "raw payload has {} bytes, expected {need}",
            bytes.len()
        )));
    }
    if !total_bits.is_multiple_of(8) && bytes[need - 1] >> (total_bits % 8) != 0 {
        return Err(CodecError::Format(
            "non-zero padding bits in raw payload".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    let mut pos = 0usize;
    for _ in 0..n {
        let mut t = 0u64;
        for i in 0..bits {
            if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                t |= 1u64 << i;
            }
            pos += 1;
        }
        out.push(t);
    }
    Ok(out)
}

/// Header and payload, without the fallback section.
pub fn serialize_body(grid: &TokenGrid, patch: usize, mode: CodingMode) -> Result<Vec<u8>> {
    let to_u16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| CodecError::Format(format!("{what} {v} does not fit in u16")))
    };
    if patch == 0 || patch > u8::MAX as usize {
        return Err(CodecError::Format(format!(
            "patch size {patch} outside [1, 255]"
        )));
    }
    let height = to_u16(grid.rows() * patch, "image height")?;
    let width = to_u16(grid.cols() * patch, "image width")?;
    let payload = match mode {
        CodingMode::Raw => pack_raw(grid.tokens(), grid.bits()),
        CodingMode::Arithmetic(spec) => ac_encode(grid.tokens(), grid.bits(), spec)?.to_bytes(),
    };
    let payload_len = u32::try_from(payload.len())
        .map_err(|_| CodecError::Format(format!("payload of {} bytes", payload.len())))?;
    let header = ContainerHeader {
        version: CONTAINER_VERSION,
        height,
        width,
        patch: patch as u8,
        bits: grid.bits() as u8,
        coding_mode: mode.byte(),
        payload_len,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + FALLBACK_LEN_BYTES);
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// `header ‖ payload ‖ jpeg_len ‖ jpeg`.
pub fn serialize(
    grid: &TokenGrid,
    patch: usize,
    mode: CodingMode,
    jpeg: Option<&[u8]>,
) -> Result<Vec<u8>> {
    let mut out = serialize_body(grid, patch, mode)?;
    append_fallback(&mut out, jpeg)?;
    Ok(out)
}

pub fn append_fallback(out: &mut Vec<u8>, jpeg: Option<&[u8]>) -> Result<()> {
    let jpeg = jpeg.unwrap_or(&[]);
    let len = u32::try_from(jpeg.len())
        .map_err(|_| CodecError::Format(format!("fallback of {} bytes", jpeg.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(jpeg);
    Ok(())
}

/// What was found after the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fallback {
    /// `jpeg_len = 0`.
    Absent,
    Present(Vec<u8>),
    /// The section could not be read; the reason is kept for reporting.
    Malformed(String),
}

impl Fallback {
    pub fn jpeg(&self) -> Option<&[u8]> {
        match self {
            Fallback::Present(b) => Some(b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: ContainerHeader,
    pub grid: TokenGrid,
    pub mode: CodingMode,
    pub fallback: Fallback,
}

impl Container {
    pub fn patch(&self) -> usize {
        self.header.patch as usize
    }
}

/// Parses a container. Header and payload errors are fatal; a damaged
/// fallback section only downgrades to [`Fallback::Malformed`].
pub fn deserialize(bytes: &[u8]) -> Result<Container> {
    let header = ContainerHeader::parse(bytes)?;
    let mut r = ByteReader::new(&bytes[HEADER_LEN..]);
    let payload = r.take(header.payload_len as usize, "payload")?;
    let (rows, cols) = (header.grid_rows(), header.grid_cols());
    let n = rows * cols;
    let bits = header.bits as u32;
    let (tokens, mode) = match header.coding_mode {
        0 => (unpack_raw(payload, n, bits)?, CodingMode::Raw),
        _ => {
            let stream = CodedStream::from_bytes(payload)?;
            if stream.bits != header.bits {
                return Err(CodecError::Format(format!(
                    "stream code width {} disagrees with header {}",
                    stream.bits, header.bits
                )));
            }
            if stream.n_tokens as usize != n {
                return Err(CodecError::Format(format!(
                    "stream holds {} tokens, header implies {n}",
                    stream.n_tokens
                )));
            }
            (ac_decode(&stream)?, CodingMode::Arithmetic(stream.model))
        }
    };
    let grid = TokenGrid::new(rows, cols, bits, tokens)?;
    let fallback = read_fallback(&mut r);
    Ok(Container {
        header,
        grid,
        mode,
        fallback,
    })
}

fn read_fallback(r: &mut ByteReader<'_>) -> Fallback {
    let len = match r.u32("fallback length") {
        Ok(len) => len as usize,
        Err(e) => return Fallback::Malformed(e.to_string()),
    };
    if len == 0 {
        return if r.is_empty() {
            Fallback::Absent
        } else {
            Fallback::Malformed(format!("{} bytes after empty fallback", r.remaining()))
        };
    }
    match r.take(len, "fallback JPEG") {
        Ok(b) if r.is_empty() => Fallback::Present(b.to_vec()),
        Ok(_) => Fallback::Malformed(format!("{} bytes after fallback JPEG", r.remaining())),
        Err(e) => Fallback::Malformed(e.to_string()),
    }
}

/// `(H·W·3) div 8`: the 8:1 size budget.
pub fn fallback_target(height: usize, width: usize) -> usize {
    height * width * CHANNELS / 8
}

/// Picks a JPEG to append when the container is comfortably under budget.
///
/// With `target = (H·W·3) div 8`, a fallback is only tried when
/// `100 < current_size < target`; the first quality in [1, 5, 10, 15] whose
/// encoding fits in `target − current_size` bytes wins. Qualities whose
/// encoding fails are skipped.
pub fn jpeg_fallback_select<F, E>(
    current_size: usize,
    height: usize,
    width: usize,
    mut encode: F,
) -> Option<Vec<u8>>
where
    F: FnMut(u8) -> std::result::Result<Vec<u8>, E>,
{
    let target = fallback_target(height, width);
    if current_size >= target || current_size <= FALLBACK_MIN_SIZE {
        return None;
    }
    let remaining = target - current_size;
    FALLBACK_QUALITIES
        .iter()
        .filter_map(|&q| encode(q).ok())
        .find(|bytes| bytes.len() <= remaining)
}

/// `clamp(0.7·neural + 0.3·base)`.
pub fn blend_decode(neural: &Image, base: &Image) -> Result<Image> {
    neural.check_same_shape(base)?;
    let pixels = neural
        .pixels()
        .iter()
        .zip(base.pixels())
        .map(|(n, b)| NEURAL_BLEND * n + BASE_BLEND * b)
        .collect();
    Image::new(neural.height(), neural.width(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(rows: usize, cols: usize, bits: u32, seed: u64) -> TokenGrid {
        let mut s = seed | 1;
        let mask = if bits == 64 {
            u64::MAX
        } else {
            (1u64 << bits) - 1
        };
        let tokens = (0..rows * cols)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                s & mask
            })
            .collect();
        TokenGrid::new(rows, cols, bits, tokens).unwrap()
    }

    #[test]
    fn bsq36_container_size() {
        let g = grid(32, 32, 36, 9);
        let bytes = serialize(&g, 8, CodingMode::Raw, None).unwrap();
        assert_eq!(bytes.len() - HEADER_LEN - FALLBACK_LEN_BYTES, 4608);
        assert_eq!(bytes.len(), 4628);
        let ratio = 196_608.0 / bytes.len() as f64;
        assert!((ratio - 42.48).abs() < 0.01);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0, 0]);
    }

    #[test]
    fn header_layout() {
        let g = grid(2, 3, 5, 1);
        let bytes = serialize(&g, 4, CodingMode::Raw, None).unwrap();
        assert_eq!(&bytes[..4], b"GANC");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..7], &8u16.to_le_bytes());
        assert_eq!(&bytes[7..9], &12u16.to_le_bytes());
        assert_eq!(bytes[9], 4);
        assert_eq!(bytes[10], 5);
        assert_eq!(bytes[11], 0);
        assert_eq!(&bytes[12..16], &4u32.to_le_bytes()); // ceil(30/8)
    }

    #[test]
    fn raw_packing_is_lsb_first() {
        assert_eq!(pack_raw(&[0b101, 0b011], 3), vec![0b011_101]);
        assert_eq!(unpack_raw(&[0b011_101], 2, 3).unwrap(), vec![0b101, 0b011]);
        assert!(matches!(
            unpack_raw(&[0b1111_1111], 2, 3),
            Err(CodecError::Format(_))
        ));
        assert!(matches!(
            unpack_raw(&[], 2, 3),
            Err(CodecError::Truncated(_))
        ));
    }

    #[test]
    fn arithmetic_roundtrip() {
        let g = grid(4, 6, 18, 3);
        let mode = CodingMode::Arithmetic(ModelSpec::Adaptive { order: 2 });
        let bytes = serialize(&g, 8, mode, Some(b"jpegdata")).unwrap();
        let c = deserialize(&bytes).unwrap();
        assert_eq!(c.grid, g);
        assert_eq!(c.mode, mode);
        assert_eq!(c.fallback, Fallback::Present(b"jpegdata".to_vec()));
    }

    #[test]
    fn oversize_dims_rejected() {
        let g = grid(1, 9000, 4, 3);
        assert!(matches!(
            serialize(&g, 8, CodingMode::Raw, None),
            Err(CodecError::Format(_))
        ));
    }

    #[test]
    fn damaged_fallback_is_tolerated() {
        let g = grid(2, 2, 8, 5);
        let good = serialize(&g, 8, CodingMode::Raw, Some(&[0xFF, 0xD8, 0xFF])).unwrap();

        // length claims more bytes than exist
        let mut bad = good.clone();
        let n = bad.len();
        bad[n - 7..n - 3].copy_from_slice(&100u32.to_le_bytes());
        let c = deserialize(&bad).unwrap();
        assert_eq!(c.grid, g);
        assert!(matches!(c.fallback, Fallback::Malformed(_)));

        // length field cut short
        let body = serialize_body(&g, 8, CodingMode::Raw).unwrap();
        let mut cut = body.clone();
        cut.extend_from_slice(&[1, 0]);
        assert!(matches!(
            deserialize(&cut).unwrap().fallback,
            Fallback::Malformed(_)
        ));
        assert!(matches!(
            deserialize(&body).unwrap().fallback,
            Fallback::Malformed(_)
        ));
    }

    #[test]
    fn header_errors() {
        let g = grid(2, 2, 8, 5);
        let good = serialize(&g, 8, CodingMode::Raw, None).unwrap();
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(deserialize(&b), Err(CodecError::Format(_))));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(deserialize(&b), Err(CodecError::Format(_))));
        let mut b = good.clone();
        b[11] = 7;
        assert!(matches!(deserialize(&b), Err(CodecError::Format(_))));
        let mut b = good.clone();
        b[9] = 5;
        assert!(matches!(deserialize(&b), Err(CodecError::Format(_))));
        assert!(matches!(
            deserialize(&good[..10]),
            Err(CodecError::Truncated(_))
        ));
        assert!(matches!(
            deserialize(&good[..HEADER_LEN + 2]),
            Err(CodecError::Truncated(_))
        ));
    }

    #[test]
    fn stream_disagreeing_with_header() {
        let g = grid(2, 2, 8, 5);
        let mut bytes = serialize(&g, 8, CodingMode::Arithmetic(ModelSpec::Uniform), None).unwrap();
        // n_tokens inside the stream
        bytes[HEADER_LEN] = 3;
        assert!(matches!(deserialize(&bytes), Err(CodecError::Format(_))));
    }

    #[test]
    fn fallback_target_and_policy() {
        assert_eq!(fallback_target(256, 256), 24_576);
        let never = |_q: u8| -> std::result::Result<Vec<u8>, ()> { panic!("encoder called") };
        assert!(jpeg_fallback_select(30_000, 256, 256, never).is_none());
        assert!(jpeg_fallback_select(24_576, 256, 256, never).is_none());
        assert!(jpeg_fallback_select(100, 256, 256, never).is_none());

        let sizes = |q: u8| -> std::result::Result<Vec<u8>, ()> {
            Ok(vec![
                q;
                match q {
                    1 => 25_000,
                    5 => 22_000,
                    10 => 20_000,
                    _ => 19_000,
                }
            ])
        };
        let pick = jpeg_fallback_select(3000, 256, 256, sizes).unwrap();
        assert_eq!((pick.len(), pick[0]), (20_000, 10));

        let failing_low = |q: u8| -> std::result::Result<Vec<u8>, &str> {
            if q < 10 {
                Err("encoder failed")
            } else {
                Ok(vec![q; 10])
            }
        };
        assert_eq!(
            jpeg_fallback_select(3000, 256, 256, failing_low).unwrap()[0],
            10
        );

        let too_big = |_q: u8| -> std::result::Result<Vec<u8>, ()> { Ok(vec![0; 30_000]) };
        assert!(jpeg_fallback_select(3000, 256, 256, too_big).is_none());
    }

    #[test]
    fn blend_values() {
        let a = Image::filled(2, 2, 0.5).unwrap();
        let b = Image::filled(2, 2, -0.5).unwrap();
        let out = blend_decode(&a, &b).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 0.2).abs() < 1e-12));
        assert_eq!(blend_decode(&a, &a).unwrap(), a);
        assert!(blend_decode(&a, &Image::filled(2, 3, 0.0).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn container_roundtrip(rows in 1usize..12, cols in 1usize..12, bits in 1u32..=64,
                               seed in any::<u64>(), arith in any::<bool>(), order in 0u32..3,
                               jpeg in proptest::option::of(proptest::collection::vec(any::<u8>(), 1..40))) {
            let g = grid(rows, cols, bits, seed);
            let mode = if arith { CodingMode::Arithmetic(ModelSpec::Adaptive { order }) } else { CodingMode::Raw };
            let bytes = serialize(&g, 4, mode, jpeg.as_deref()).unwrap();
            let c = deserialize(&bytes).unwrap();
            prop_assert_eq!(&c.grid, &g);
            prop_assert_eq!(c.mode, mode);
            prop_assert_eq!(c.fallback.jpeg(), jpeg.as_deref());
            if !arith {
                prop_assert_eq!(c.header.payload_len as usize, (rows * cols * bits as usize).div_ceil(8));
            }
        }

        #[test]
        fn random_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = deserialize(&bytes);
            let mut with_magic = b"GANC\x01".to_vec();
            with_magic.extend_from_slice(&bytes);
            let _ = deserialize(&with_magic);
        }
    }
}
