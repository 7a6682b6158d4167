//! Binary spherical quantization.
//!
//! A latent vector is projected down to `L` dimensions, normalized onto the
//! unit hypersphere and sign-quantized to `±1/√L` per coordinate. The sign
//! pattern is the token: the codebook of `2^L` entries is implicit and
//! carries no parameters.
//!
//! Because both `u` and `û` lie on the unit sphere,
//! `‖u − û‖² = 2 − 2⟨u, û⟩ = 2 − (2/√L)·Σ|uᵢ| ≤ 2 − 2/√L`.

use crate::error::{CodecError, Result};

/// Norms below this are rejected by [`spherical_normalize`].
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Tolerance on `‖u‖₂ = 1` accepted by [`binary_quantize`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Tolerance on `|uᵢ| = 1/√L` accepted by the token bijection.
pub const CODE_TOLERANCE: f64 = 1e-9;

/// Largest supported code width.
pub const MAX_BITS: u32 = 64;

/// Encoder output at one spatial position, length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

/// Down-projected latent, length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedVector(pub Vec<f64>);

/// A point on the unit hypersphere in `L` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCode(Vec<f64>);

impl SphericalCode {
    /// Wraps `values`, checking that they have unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "spherical code")?;
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(CodecError::Domain(format!(
                "spherical code has norm {norm}, expected 1"
            )));
        }
        Ok(SphericalCode(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// True when every entry is `±1/√L` within [`CODE_TOLERANCE`].
    pub fn is_quantized(&self) -> bool {
        let s = code_magnitude(self.dim());
        self.0.iter().all(|v| (v.abs() - s).abs() <= CODE_TOLERANCE)
    }
}

/// Index into the implicit `2^L` codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenIndex(pub u64);

/// Linear maps into and out of the spherical code space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    latent_dim: usize,
    bits: usize,
    /// `bits × latent_dim`, row-major.
    down: Vec<f64>,
    /// `latent_dim × bits`, row-major.
    up: Vec<f64>,
}

impl ProjectionWeights {
    pub fn new(latent_dim: usize, bits: usize, down: Vec<f64>, up: Vec<f64>) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS as usize {
            return Err(CodecError::Shape(format!(
                "code width {bits} outside [1, {MAX_BITS}]"
            )));
        }
        if down.len() != bits * latent_dim {
            return Err(CodecError::Shape(format!(
                "down projection has {} entries, expected {bits}x{latent_dim}",
                down.len()
            )));
        }
        if up.len() != latent_dim * bits {
            return Err(CodecError::Shape(format!(
                "up projection has {} entries, expected {latent_dim}x{bits}",
                up.len()
            )));
        }
        Ok(ProjectionWeights {
            latent_dim,
            bits,
            down,
            up,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn down(&self) -> &[f64] {
        &self.down
    }

    pub fn up(&self) -> &[f64] {
        &self.up
    }
}

/// `v = down · z`.
pub fn project(z: &LatentVector, w: &ProjectionWeights) -> Result<ProjectedVector> {
    if z.0.len() != w.latent_dim {
        return Err(CodecError::Shape(format!(
            "latent has length {}, projection expects {}",
            z.0.len(),
            w.latent_dim
        )));
    }
    Ok(ProjectedVector(mat_vec(
        &w.down,
        w.bits,
        w.latent_dim,
        &z.0,
    )))
}

/// `u = v / ‖v‖₂`.
pub fn spherical_normalize(v: &ProjectedVector) -> Result<SphericalCode> {
    check_finite(&v.0, "projected vector")?;
    let norm = l2_norm(&v.0);
    if norm < DEGENERATE_NORM {
        return Err(CodecError::Degenerate(format!(
            "projected vector norm {norm:e} is below {DEGENERATE_NORM:e}"
        )));
    }
    Ok(SphericalCode(v.0.iter().map(|x| x / norm).collect()))
}

/// `û = sign(u)/√L` with `sign(0) = +1`.
pub fn binary_quantize(u: &SphericalCode) -> Result<SphericalCode> {
    if u.0.is_empty() {
        return Err(CodecError::Shape("empty spherical code".into()));
    }
    let s = code_magnitude(u.dim());
    Ok(SphericalCode(
        u.0.iter().map(|&x| if x >= 0.0 { s } else { -s }).collect(),
    ))
}

/// `ẑ = up · û`.
pub fn back_project(uq: &SphericalCode, w: &ProjectionWeights) -> Result<LatentVector> {
    if uq.dim() != w.bits {
        return Err(CodecError::Shape(format!(
            "code has length {}, projection expects {}",
            uq.dim(),
            w.bits
        )));
    }
    Ok(LatentVector(mat_vec(&w.up, w.latent_dim, w.bits, &uq.0)))
}

/// Maps a quantized code to its token: bit `i` is set iff `ûᵢ > 0`.
pub fn code_to_token(uq: &SphericalCode) -> Result<TokenIndex> {
    let bits = uq.dim();
    if bits == 0 || bits > MAX_BITS as usize {
        return Err(CodecError::InvalidCode(format!(
            "code width {bits} outside [1, {MAX_BITS}]"
        )));
    }
    let s = code_magnitude(bits);
    let mut token = 0u64;
    for (i, &v) in uq.0.iter().enumerate() {
        if v.is_nan() || (v.abs() - s).abs() > CODE_TOLERANCE {
            return Err(CodecError::InvalidCode(format!(
                "entry {i} = {v} is not ±1/√{bits}"
            )));
        }
        if v > 0.0 {
            token |= 1u64 << i;
        }
    }
    Ok(TokenIndex(token))
}

/// Inverse of [`code_to_token`].
pub fn token_to_code(t: TokenIndex, bits: u32) -> Result<SphericalCode> {
    check_token(t.0, bits)?;
    let s = code_magnitude(bits as usize);
    Ok(SphericalCode(
        (0..bits)
            .map(|i| if (t.0 >> i) & 1 == 1 { s } else { -s })
            .collect(),
    ))
}

/// Fails unless `token < 2^bits`.
pub fn check_token(token: u64, bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(CodecError::Domain(format!(
            "code width {bits} outside [1, {MAX_BITS}]"
        )));
    }
    if bits < 64 && token >> bits != 0 {
        return Err(CodecError::InvalidToken { token, bits });
    }
    Ok(())
}

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Factorized rate in bits per token: `Σ h(pᵢ)` over per-bit probabilities.
pub fn rate_estimate(bit_probs: &[f64]) -> Result<f64> {
    for (i, &p) in bit_probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(CodecError::Domain(format!(
                "bit probability {i} = {p} outside [0, 1]"
            )));
        }
    }
    Ok(bit_probs.iter().map(|&p| binary_entropy(p)).sum())
}

/// Empirical frequency of a set bit at each of the `bits` positions.
pub fn bit_frequencies(tokens: &[u64], bits: u32) -> Vec<f64> {
    let mut ones = vec![0u64; bits as usize];
    for &t in tokens {
        for (i, count) in ones.iter_mut().enumerate() {
            *count += (t >> i) & 1;
        }
    }
    let n = tokens.len().max(1) as f64;
    ones.into_iter().map(|c| c as f64 / n).collect()
}

/// Runs the full bottleneck for one latent: project, normalize, quantize, index.
pub fn quantize_latent(z: &LatentVector, w: &ProjectionWeights) -> Result<TokenIndex> {
    let u = spherical_normalize(&project(z, w)?)?;
    code_to_token(&binary_quantize(&u)?)
}

/// Reconstructs the latent for a token.
pub fn dequantize_token(t: TokenIndex, w: &ProjectionWeights) -> Result<LatentVector> {
    back_project(&token_to_code(t, w.bits as u32)?, w)
}

fn code_magnitude(bits: usize) -> f64 {
    1.0 / (bits as f64).sqrt()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CodecError::Domain(format!(
            "{what} entry {i} is not finite"
        ))),
        None => Ok(()),
    }
}

fn mat_vec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            m[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}
