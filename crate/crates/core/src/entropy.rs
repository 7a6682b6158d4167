//! Adaptive binary range coding of token streams.
//!
//! Tokens are coded as `L` binary decisions each (bit 0 first, matching the
//! token bijection), so `P(k₁…kₙ) = Π P(kᵢ | k₁…kᵢ₋₁)` is realized one bit at
//! a time. The coder keeps a 64-bit `low` and 32-bit `range`, splits the range
//! with 12-bit probabilities, renormalizes a byte at a time and propagates
//! carries through a pending-byte cache. The interval state is integer-only,
//! so streams are byte-identical on every platform.
//!
//! Serialized stream layout (little-endian):
//!
//! ```text
//! n_tokens u32 | L u8 | model id u8 | model params u16 | coded bytes
//! ```

use crate::bsq::{check_token, MAX_BITS};
use crate::error::{CodecError, Result};
use crate::weights::ByteReader;

pub const PROB_BITS: u32 = 12;
pub const PROB_ONE: u32 = 1 << PROB_BITS;
/// Smallest probability either bit value can receive.
pub const PROB_MIN: u16 = 1;
pub const PROB_MAX: u16 = (PROB_ONE - 1) as u16;

const TOP: u32 = 1 << 24;
/// Bytes the encoder appends at the end; the decoder primes with the same count.
pub const FLUSH_BYTES: usize = 5;
pub const STREAM_HEADER_LEN: usize = 8;

/// Where the next bit sits: its position within the token, the bits of the
/// current token already coded (positions below `position`), and the
/// previous token if there is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitContext {
    pub position: u32,
    pub partial: u64,
    pub previous: Option<u64>,
}

/// Conditional bit probabilities for the coder.
///
/// Encoder and decoder must drive identically constructed models through the
/// same `probability`/`update` sequence; after `reset` a model must behave as
/// freshly built.
pub trait ProbabilityModel {
    /// `P(bit = 1)` in units of `1/4096`, within `[1, 4095]`.
    fn probability(&self, ctx: &BitContext) -> u16;
    fn update(&mut self, ctx: &BitContext, bit: bool);
    fn reset(&mut self);
}

impl<M: ProbabilityModel + ?Sized> ProbabilityModel for Box<M> {
    fn probability(&self, ctx: &BitContext) -> u16 {
        (**self).probability(ctx)
    }
    fn update(&mut self, ctx: &BitContext, bit: bool) {
        (**self).update(ctx, bit)
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Rounds a probability to 12 bits and clamps it to `[1/4096, 4095/4096]`.
pub fn quantize_probability(p: f64) -> u16 {
    let q = (p * PROB_ONE as f64).round();
    q.clamp(PROB_MIN as f64, PROB_MAX as f64) as u16
}

/// Every bit equally likely.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UniformModel;

impl ProbabilityModel for UniformModel {
    fn probability(&self, _ctx: &BitContext) -> u16 {
        (PROB_ONE / 2) as u16
    }
    fn update(&mut self, _ctx: &BitContext, _bit: bool) {}
    fn reset(&mut self) {}
}

/// Counts are halved once a context has seen this many bits.
pub const COUNT_LIMIT: u32 = 1 << 16;

/// Counting context model.
///
/// The context of a bit is its position in the token, the previous `order`
/// bits of the same token (fewer near the start) and the same-position bit of
/// the previous token. Estimates are Laplace smoothed: `(n₁ + 1)/(n + 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveBitModel {
    order: u32,
    bits: u32,
    counts: Vec<[u32; 2]>,
}

impl AdaptiveBitModel {
    pub fn new(order: u32, bits: u32) -> Result<Self> {
        if order > 2 {
            return Err(CodecError::Domain(format!(
                "context order {order} outside [0, 2]"
            )));
        }
        if bits == 0 || bits > MAX_BITS {
            return Err(CodecError::Domain(format!(
                "code width {bits} outside [1, {MAX_BITS}]"
            )));
        }
        let per_position = ((1usize << (order + 1)) - 1) * 3;
        Ok(AdaptiveBitModel {
            order,
            bits,
            counts: vec![[0, 0]; per_position * bits as usize],
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    fn slot(&self, ctx: &BitContext) -> usize {
        let avail = ctx.position.min(self.order);
        let recent = if avail == 0 {
            0
        } else {
            (ctx.partial >> (ctx.position - avail)) & ((1u64 << avail) - 1)
        };
        let history = (1usize << avail) - 1 + recent as usize;
        let above = match ctx.previous {
            None => 2,
            Some(t) => ((t >> ctx.position) & 1) as usize,
        };
        let per_position = ((1usize << (self.order + 1)) - 1) * 3;
        ctx.position as usize * per_position + history * 3 + above
    }

    /// Unquantized Laplace estimate of `P(bit = 1)`.
    pub fn estimate(&self, ctx: &BitContext) -> f64 {
        let [n0, n1] = self.counts[self.slot(ctx)];
        (n1 as f64 + 1.0) / ((n0 + n1) as f64 + 2.0)
    }
}

impl ProbabilityModel for AdaptiveBitModel {
    fn probability(&self, ctx: &BitContext) -> u16 {
        let [n0, n1] = self.counts[self.slot(ctx)];
        // round((n1 + 1)/(n + 2) · 4096) in integers
        let num = 2 * (n1 as u64 + 1) * PROB_ONE as u64 + (n0 + n1) as u64 + 2;
        let den = 2 * ((n0 + n1) as u64 + 2);
        (num / den).clamp(PROB_MIN as u64, PROB_MAX as u64) as u16
    }

    fn update(&mut self, ctx: &BitContext, bit: bool) {
        let slot = self.slot(ctx);
        let c = &mut self.counts[slot];
        c[bit as usize] += 1;
        if c[0] + c[1] >= COUNT_LIMIT {
            c[0] = c[0].div_ceil(2);
            c[1] = c[1].div_ceil(2);
        }
    }

    fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = [0, 0]);
    }
}

/// Identifies the probability model inside a serialized stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    /// id 0, params 0.
    Uniform,
    /// id 1, params = context order.
    Adaptive { order: u32 },
}

impl ModelSpec {
    pub fn id(&self) -> u8 {
        match self {
            ModelSpec::Uniform => 0,
            ModelSpec::Adaptive { .. } => 1,
        }
    }

    pub fn params(&self) -> u16 {
        match self {
            ModelSpec::Uniform => 0,
            ModelSpec::Adaptive { order } => *order as u16,
        }
    }

    pub fn from_parts(id: u8, params: u16) -> Result<Self> {
        match (id, params) {
            (0, 0) => Ok(ModelSpec::Uniform),
            (1, k) if k <= 2 => Ok(ModelSpec::Adaptive { order: k as u32 }),
            _ => Err(CodecError::Format(format!(
                "unknown probability model id {id} with params {params}"
            ))),
        }
    }

    /// A freshly reset model for `bits`-wide tokens.
    pub fn build(&self, bits: u32) -> Result<Box<dyn ProbabilityModel + Send>> {
        Ok(match self {
            ModelSpec::Uniform => Box::new(UniformModel),
            ModelSpec::Adaptive { order } => Box::new(AdaptiveBitModel::new(*order, bits)?),
        })
    }
}

/// `adaptive_bit_model(k, L)`.
pub fn adaptive_bit_model(order: u32, bits: u32) -> Result<AdaptiveBitModel> {
    AdaptiveBitModel::new(order, bits)
}

/// Range encoder over binary decisions.
#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Codes `bit` where `p_one` is `P(bit = 1)` in 1/4096 units.
    pub fn encode_bit(&mut self, bit: bool, p_one: u16) {
        debug_assert!((PROB_MIN..=PROB_MAX).contains(&p_one));
        let bound = (self.range >> PROB_BITS) * p_one as u32;
        if bit {
            self.range = bound;
        } else {
            self.low += bound as u64;
            self.range -= bound;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut pending = self.cache;
            loop {
                self.out.push(pending.wrapping_add(carry));
                pending = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..FLUSH_BYTES {
            self.shift_low();
        }
        self.out
    }
}

/// Range decoder; reports truncation instead of reading past the input.
#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder {
            input,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        for _ in 0..FLUSH_BYTES {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.input.get(self.pos).ok_or_else(|| {
            CodecError::Truncated(format!("coded stream ended after {} bytes", self.pos))
        })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode_bit(&mut self, p_one: u16) -> Result<bool> {
        let bound = (self.range >> PROB_BITS) * p_one as u32;
        let bit = if self.code < bound {
            self.range = bound;
            true
        } else {
            self.code -= bound;
            self.range -= bound;
            false
        };
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(bit)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }
}

/// Visits every bit decision of `tokens` in coding order.
fn for_each_bit(tokens: &[u64], bits: u32, mut f: impl FnMut(&BitContext, bool)) {
    let mut previous = None;
    for &t in tokens {
        for position in 0..bits {
            let ctx = BitContext {
                position,
                partial: t & low_mask(position),
                previous,
            };
            f(&ctx, (t >> position) & 1 == 1);
        }
        previous = Some(t);
    }
}

fn low_mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn check_tokens(tokens: &[u64], bits: u32) -> Result<()> {
    for &t in tokens {
        check_token(t, bits)?;
    }
    Ok(())
}

/// Codes `tokens` with `model`, which must be freshly reset. Returns the coded
/// bytes only (no stream header).
pub fn encode_with_model(
    tokens: &[u64],
    bits: u32,
    model: &mut dyn ProbabilityModel,
) -> Result<Vec<u8>> {
    check_tokens(tokens, bits)?;
    let mut enc = RangeEncoder::new();
    for_each_bit(tokens, bits, |ctx, bit| {
        enc.encode_bit(bit, model.probability(ctx));
        model.update(ctx, bit);
    });
    Ok(enc.finish())
}

/// Upper bound on bit decisions a coded buffer of `len` bytes can hold; each
/// decision narrows the range by at least a factor of `1 − 2⁻¹²`.
fn max_decisions(len: usize) -> u128 {
    (len as u128 + 1) * 8 * 3000
}

/// Inverse of [`encode_with_model`]. Every byte must be consumed.
pub fn decode_with_model(
    coded: &[u8],
    n_tokens: usize,
    bits: u32,
    model: &mut dyn ProbabilityModel,
) -> Result<Vec<u64>> {
    if bits == 0 || bits > MAX_BITS {
        return Err(CodecError::Format(format!(
            "code width {bits} outside [1, {MAX_BITS}]"
        )));
    }
    if n_tokens as u128 * bits as u128 > max_decisions(coded.len()) {
        return Err(CodecError::Format(format!(
            "{n_tokens} tokens cannot fit in {} coded bytes",
            coded.len()
        )));
    }
    let mut dec = RangeDecoder::new(coded)?;
    let mut out = Vec::with_capacity(n_tokens);
    let mut previous = None;
    for _ in 0..n_tokens {
        let mut t = 0u64;
        for position in 0..bits {
            let ctx = BitContext {
                position,
                partial: t,
                previous,
            };
            let bit = dec.decode_bit(model.probability(&ctx))?;
            model.update(&ctx, bit);
            if bit {
                t |= 1u64 << position;
            }
        }
        out.push(t);
        previous = Some(t);
    }
    if dec.remaining() != 0 {
        return Err(CodecError::Format(format!(
            "{} coded bytes left after {n_tokens} tokens",
            dec.remaining()
        )));
    }
    Ok(out)
}

/// Ideal code length `Σ −log₂ p(observed bit)` under the same quantized
/// probabilities the coder uses.
pub fn cross_entropy_bits(
    tokens: &[u64],
    bits: u32,
    model: &mut dyn ProbabilityModel,
) -> Result<f64> {
    check_tokens(tokens, bits)?;
    let mut total = 0.0;
    for_each_bit(tokens, bits, |ctx, bit| {
        let p1 = model.probability(ctx) as f64 / PROB_ONE as f64;
        total -= if bit { p1 } else { 1.0 - p1 }.log2();
        model.update(ctx, bit);
    });
    Ok(total)
}

/// Self-describing arithmetic-coded token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedStream {
    pub n_tokens: u32,
    pub bits: u8,
    pub model: ModelSpec,
    pub coded: Vec<u8>,
}

impl CodedStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(STREAM_HEADER_LEN + self.coded.len());
        out.extend_from_slice(&self.n_tokens.to_le_bytes());
        out.push(self.bits);
        out.push(self.model.id());
        out.extend_from_slice(&self.model.params().to_le_bytes());
        out.extend_from_slice(&self.coded);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let n_tokens = r.u32("stream token count")?;
        let bits = r.u8("stream code width")?;
        if bits == 0 || bits as u32 > MAX_BITS {
            return Err(CodecError::Format(format!(
                "stream code width {bits} outside [1, {MAX_BITS}]"
            )));
        }
        let id = r.u8("stream model id")?;
        let params = r.u16("stream model params")?;
        let model = ModelSpec::from_parts(id, params)?;
        Ok(CodedStream {
            n_tokens,
            bits,
            model,
            coded: r.rest().to_vec(),
        })
    }

    /// Total serialized size in bytes.
    pub fn len(&self) -> usize {
        STREAM_HEADER_LEN + self.coded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_tokens == 0
    }
}

/// Encodes tokens with a fresh model built from `spec`.
pub fn ac_encode(tokens: &[u64], bits: u32, spec: ModelSpec) -> Result<CodedStream> {
    let n_tokens = u32::try_from(tokens.len())
        .map_err(|_| CodecError::Domain(format!("{} tokens exceed u32", tokens.len())))?;
    let mut model = spec.build(bits)?;
    let coded = encode_with_model(tokens, bits, &mut model)?;
    Ok(CodedStream {
        n_tokens,
        bits: bits as u8,
        model: spec,
        coded,
    })
}

/// Decodes a stream with a fresh model built from its own model spec.
pub fn ac_decode(stream: &CodedStream) -> Result<Vec<u64>> {
    let bits = stream.bits as u32;
    let mut model = stream.model.build(bits)?;
    decode_with_model(&stream.coded, stream.n_tokens as usize, bits, &mut model)
}
