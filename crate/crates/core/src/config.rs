//! Codec settings: defaults, `key = value` config files, and flag overrides.

use std::path::{Path, PathBuf};

use crate::container::CodingMode;
use crate::entropy::ModelSpec;
use crate::error::{CodecError, Result};

/// Environment variable consulted for the weights path when neither a flag
/// nor the config file names one.
pub const WEIGHTS_ENV: &str = "GANC_WEIGHTS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeName {
    #[default]
    Raw,
    Arith,
}

impl std::str::FromStr for ModeName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "raw" => Ok(ModeName::Raw),
            "arith" => Ok(ModeName::Arith),
            _ => Err(format!("mode must be raw or arith, got {s:?}")),
        }
    }
}

/// One source of settings; unset fields defer to lower layers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigLayer {
    pub patch: Option<usize>,
    pub bits: Option<u32>,
    pub mode: Option<ModeName>,
    pub order: Option<u8>,
    pub weights: Option<PathBuf>,
    pub jpeg_fallback: Option<bool>,
    pub seed: Option<u64>,
}

impl ConfigLayer {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are
    /// skipped. Keys: patch, bits, mode, order, weights, jpeg_fallback, seed.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut layer = ConfigLayer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {lineno}: expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| format!("line {lineno}: invalid {what} {value:?}");
            match key {
                "patch" => layer.patch = Some(value.parse().map_err(|_| bad("patch"))?),
                "bits" => layer.bits = Some(value.parse().map_err(|_| bad("bits"))?),
                "mode" => {
                    layer.mode = Some(value.parse().map_err(|e| format!("line {lineno}: {e}"))?)
                }
                "order" => layer.order = Some(value.parse().map_err(|_| bad("order"))?),
                "weights" => layer.weights = Some(PathBuf::from(value)),
                "jpeg_fallback" => {
                    layer.jpeg_fallback = Some(match value {
                        "true" | "1" | "yes" | "on" => true,
                        "false" | "0" | "no" | "off" => false,
                        _ => return Err(bad("jpeg_fallback")),
                    })
                }
                "seed" => layer.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                _ => return Err(format!("line {lineno}: unknown key {key:?}")),
            }
        }
        Ok(layer)
    }

    pub fn load(path: &Path) -> Result<std::result::Result<Self, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| CodecError::io(path, e))?;
        Ok(Self::parse(&text).map_err(|e| format!("{}: {e}", path.display())))
    }

    /// `self` where set, otherwise `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            patch: self.patch.or(lower.patch),
            bits: self.bits.or(lower.bits),
            mode: self.mode.or(lower.mode),
            order: self.order.or(lower.order),
            weights: self.weights.or(lower.weights),
            jpeg_fallback: self.jpeg_fallback.or(lower.jpeg_fallback),
            seed: self.seed.or(lower.seed),
        }
    }
}

/// Resolved settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecConfig {
    pub patch: usize,
    pub bits: u32,
    pub mode: ModeName,
    pub order: u8,
    pub weights_path: Option<PathBuf>,
    pub enable_jpeg_fallback: bool,
    /// Seed for generated weights when no weights file is configured.
    pub seed: u64,
    /// Whether `patch` / `bits` were set explicitly rather than defaulted.
    pub patch_pinned: bool,
    pub bits_pinned: bool,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            patch: 8,
            bits: 16,
            mode: ModeName::Raw,
            order: 1,
            weights_path: None,
            enable_jpeg_fallback: false,
            seed: 0,
            patch_pinned: false,
            bits_pinned: false,
        }
    }
}

impl CodecConfig {
    /// Flags over file over defaults; the weights path further falls back
    /// to `env_weights`.
    pub fn resolve(
        flags: ConfigLayer,
        file: ConfigLayer,
        env_weights: Option<PathBuf>,
    ) -> std::result::Result<Self, String> {
        let m = flags.over(file);
        let d = CodecConfig::default();
        let cfg = CodecConfig {
            patch: m.patch.unwrap_or(d.patch),
            bits: m.bits.unwrap_or(d.bits),
            mode: m.mode.unwrap_or(d.mode),
            order: m.order.unwrap_or(d.order),
            weights_path: m.weights.or(env_weights),
            enable_jpeg_fallback: m.jpeg_fallback.unwrap_or(d.enable_jpeg_fallback),
            seed: m.seed.unwrap_or(d.seed),
            patch_pinned: m.patch.is_some(),
            bits_pinned: m.bits.is_some(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.patch == 0 || self.patch > 255 {
            return Err(format!("patch {} outside [1, 255]", self.patch));
        }
        if self.bits == 0 || self.bits > 64 {
            return Err(format!("bits {} outside [1, 64]", self.bits));
        }
        if self.order > 2 {
            return Err(format!("order {} outside [0, 2]", self.order));
        }
        Ok(())
    }

    pub fn coding_mode(&self) -> CodingMode {
        match self.mode {
            ModeName::Raw => CodingMode::Raw,
            ModeName::Arith => CodingMode::Arithmetic(ModelSpec::Adaptive {
                order: self.order as u32,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_file() {
        let layer = ConfigLayer::parse(
            "# settings\npatch = 4\nbits=36\n\nmode = arith # inline\norder = 2\nweights = /w.ganw\njpeg_fallback = yes\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(layer.patch, Some(4));
        assert_eq!(layer.bits, Some(36));
        assert_eq!(layer.mode, Some(ModeName::Arith));
        assert_eq!(layer.order, Some(2));
        assert_eq!(layer.weights, Some(PathBuf::from("/w.ganw")));
        assert_eq!(layer.jpeg_fallback, Some(true));
        assert_eq!(layer.seed, Some(9));
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert!(ConfigLayer::parse("patch 4")
            .unwrap_err()
            .contains("line 1"));
        assert!(ConfigLayer::parse("\ncolour = red")
            .unwrap_err()
            .contains("line 2"));
        assert!(ConfigLayer::parse("mode = zip").is_err());
        assert!(ConfigLayer::parse("bits = -1").is_err());
    }

    #[test]
    fn precedence() {
        let flags = ConfigLayer {
            bits: Some(36),
            ..Default::default()
        };
        let file = ConfigLayer {
            bits: Some(12),
            patch: Some(4),
            weights: Some("file.ganw".into()),
            ..Default::default()
        };
        let cfg = CodecConfig::resolve(flags, file, Some("env.ganw".into())).unwrap();
        assert_eq!((cfg.patch, cfg.bits), (4, 36));
        assert!(cfg.patch_pinned && cfg.bits_pinned);
        assert_eq!(cfg.weights_path, Some(PathBuf::from("file.ganw")));

        let cfg = CodecConfig::resolve(
            Default::default(),
            Default::default(),
            Some("env.ganw".into()),
        )
        .unwrap();
        assert_eq!(cfg.weights_path, Some(PathBuf::from("env.ganw")));
        assert_eq!((cfg.patch, cfg.bits), (8, 16));
        assert!(!cfg.patch_pinned);
    }

    #[test]
    fn validation() {
        let bad = ConfigLayer {
            bits: Some(65),
            ..Default::default()
        };
        assert!(CodecConfig::resolve(bad, Default::default(), None).is_err());
        let bad = ConfigLayer {
            order: Some(3),
            ..Default::default()
        };
        assert!(CodecConfig::resolve(bad, Default::default(), None).is_err());
    }
}
