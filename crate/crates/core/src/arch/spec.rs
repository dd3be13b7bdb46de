use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{GradMode, DEFAULT_TAU};
use crate::error::{Error, Result};

/// The five networks of the ablation/replacement study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Unet,
    UnetSe,
    FanetS,
    FanetI,
    Fanet,
}

impl Variant {
    /// Row order of the ablation table.
    pub const ALL: [Variant; 5] = [
        Variant::UnetSe,
        Variant::Unet,
        Variant::FanetI,
        Variant::FanetS,
        Variant::Fanet,
    ];

    pub fn has_fiam(self) -> bool {
        matches!(self, Variant::FanetI | Variant::Fanet)
    }

    pub fn has_fsam(self) -> bool {
        matches!(self, Variant::FanetS | Variant::Fanet)
    }

    pub fn has_se(self) -> bool {
        self == Variant::UnetSe
    }

    pub fn id(self) -> &'static str {
        match self {
            Variant::Unet => "unet",
            Variant::UnetSe => "unet-se",
            Variant::FanetS => "fanet-s",
            Variant::FanetI => "fanet-i",
            Variant::Fanet => "fanet",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Unet => "U-Net",
            Variant::UnetSe => "U-Net-SE",
            Variant::FanetS => "FANet-S",
            Variant::FanetI => "FANet-I",
            Variant::Fanet => "FANet",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.to_ascii_lowercase().as_str() {
            "unet" | "u-net" => Variant::Unet,
            "unet-se" | "u-net-se" => Variant::UnetSe,
            "fanet-s" => Variant::FanetS,
            "fanet-i" => Variant::FanetI,
            "fanet" => Variant::Fanet,
            other => {
                return Err(Error::Config(format!(
                    "unknown variant {other:?} (expected unet, unet-se, fanet-s, fanet-i or fanet)"
                )))
            }
        };
        Ok(v)
    }
}

fn default_base_width() -> usize {
    64
}
fn default_depth() -> usize {
    4
}
fn default_classes() -> usize {
    5
}
fn default_input_size() -> usize {
    288
}
fn default_r() -> usize {
    3
}
fn default_factor() -> f64 {
    1.2
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Everything needed to build a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    #[serde(default = "default_base_width")]
    pub base_width: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default = "default_r")]
    pub fsam_r: usize,
    #[serde(default = "default_factor")]
    pub fiam_factor: f64,
    #[serde(default)]
    pub grad_mode: GradMode,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Bias terms in the attention FC layers.
    #[serde(default)]
    pub fc_bias: bool,
}

impl ArchitectureSpec {
    /// Full-size configuration: base width 64, 288×288 input.
    pub fn full_scale(variant: Variant) -> Self {
        ArchitectureSpec {
            variant,
            base_width: default_base_width(),
            depth: default_depth(),
            num_classes: default_classes(),
            input_size: default_input_size(),
            fsam_r: default_r(),
            fiam_factor: default_factor(),
            grad_mode: GradMode::Surrogate,
            tau: DEFAULT_TAU,
            fc_bias: false,
        }
    }

    /// CPU-sized configuration: base width 8, 96×96 input.
    pub fn desk(variant: Variant) -> Self {
        ArchitectureSpec {
            base_width: 8,
            input_size: 96,
            ..Self::full_scale(variant)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.base_width == 0 {
            return bad("base_width must be positive".into());
        }
        if self.depth == 0 || self.depth > 8 {
            return bad(format!("depth must be in 1..=8, got {}", self.depth));
        }
        if self.num_classes < 2 || self.num_classes > 256 {
            return bad(format!("num_classes must be in 2..=256, got {}", self.num_classes));
        }
        let stride = 1usize << self.depth;
        if self.input_size == 0 || !self.input_size.is_multiple_of(stride) {
            return bad(format!(
                "input_size {} is not divisible by 2^{} = {stride}",
                self.input_size, self.depth
            ));
        }
        if self.fsam_r == 0 {
            return bad("fsam_r must be positive".into());
        }
        if !(self.fiam_factor.is_finite() && self.fiam_factor > 0.0) {
            return bad(format!("fiam_factor must be positive, got {}", self.fiam_factor));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        Ok(())
    }

    /// Encoder widths, shallowest first: `base · 2^ℓ` for ℓ = 0..=depth.
    pub fn encoder_widths(&self) -> Vec<usize> {
        (0..=self.depth).map(|l| self.base_width << l).collect()
    }

    /// Merge-Conv output widths, deepest first.
    pub fn decoder_widths(&self) -> Vec<usize> {
        (0..self.depth).rev().map(|l| self.base_width << l).collect()
    }

    pub fn bottleneck_width(&self) -> usize {
        self.base_width << self.depth
    }
}
