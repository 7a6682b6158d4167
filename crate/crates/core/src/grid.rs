use crate::bsq::{check_token, MAX_BITS};
use crate::error::{CodecError, Result};

/// `rows × cols` grid of token indices from a `bits`-wide implicit codebook,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenGrid {
    rows: usize,
    cols: usize,
    bits: u32,
    tokens: Vec<u64>,
}

impl TokenGrid {
    pub fn new(rows: usize, cols: usize, bits: u32, tokens: Vec<u64>) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(CodecError::Domain(format!(
                "code width {bits} outside [1, {MAX_BITS}]"
            )));
        }
        if tokens.len() != rows * cols {
            return Err(CodecError::Shape(format!(
                "{} tokens for a {rows}x{cols} grid",
                tokens.len()
            )));
        }
        for &t in &tokens {
            check_token(t, bits)?;
        }
        Ok(TokenGrid {
            rows,
            cols,
            bits,
            tokens,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn tokens(&self) -> &[u64] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.tokens[r * self.cols + c]
    }

    /// Size of the implicit codebook as a float (`2^64` is not a `u64`).
    pub fn codebook_size(&self) -> f64 {
        2f64.powi(self.bits as i32)
    }
}
