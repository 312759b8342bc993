use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dat_rnn::MaskTarget;
use crate::error::{Error, Result};
use crate::ftb::FtbOrder;
use crate::stft::StftConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Frequency transformation block after every encoder block.
    #[default]
    Base,
    /// Frequency transformation blocks after the first and last encoder blocks only.
    F,
    /// `F` wiring with every spatial convolution depthwise separable.
    L,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::F, Variant::L];

    pub fn has_ftb(self, level: usize, depth: usize) -> bool {
        match self {
            Variant::Base => true,
            Variant::F | Variant::L => level == 0 || level + 1 == depth,
        }
    }

    pub fn separable(self) -> bool {
        self == Variant::L
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::F => "f",
            Variant::L => "l",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "f" => Ok(Variant::F),
            "l" => Ok(Variant::L),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

/// What the decoder's output head produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// The enhanced spectrum itself.
    #[default]
    Direct,
    /// A complex ratio mask multiplied onto the noisy spectrum.
    Crm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder_channels: Vec<usize>,
    /// `(freq, time)`
    pub kernel: (usize, usize),
    /// `(freq, time)`; time stride must be 1.
    pub stride: (usize, usize),
    pub datrnn_blocks: usize,
    /// Feature width inside the dual-path blocks.
    pub datrnn_dim: usize,
    pub chunk_len: usize,
    pub lstm_hidden: usize,
    pub ftb_order: FtbOrder,
    pub mask_target: MaskTarget,
    pub output_mode: OutputMode,
    pub stft: StftConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Base,
            encoder_channels: vec![16, 32, 64, 128, 128, 128],
            kernel: (5, 2),
            stride: (2, 1),
            datrnn_blocks: 2,
            datrnn_dim: 128,
            chunk_len: 32,
            lstm_hidden: 64,
            ftb_order: FtbOrder::default(),
            mask_target: MaskTarget::default(),
            output_mode: OutputMode::default(),
            stft: StftConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-size configuration (about 12.4 M parameters for `Base`).
    pub fn reference(variant: Variant) -> Self {
        Self {
            variant,
            encoder_channels: vec![32, 64, 128, 128, 256, 256],
            datrnn_dim: 256,
            lstm_hidden: 128,
            ..Self::default()
        }
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn pad_freq(&self) -> (usize, usize) {
        let k = self.kernel.0 - 1;
        (k / 2, k - k / 2)
    }

    /// Frequency bins at the input and after each encoder block.
    pub fn freq_ladder(&self) -> Vec<usize> {
        let (lo, hi) = self.pad_freq();
        let mut f = vec![self.stft.n_bins()];
        for _ in 0..self.depth() {
            let prev = *f.last().unwrap();
            let padded = prev + lo + hi;
            f.push(if padded < self.kernel.0 {
                0
            } else {
                (padded - self.kernel.0) / self.stride.0 + 1
            });
        }
        f
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.stft.validate()?;
        if self.depth() < 2 {
            return bad(format!("need at least 2 encoder blocks, got {}", self.depth()));
        }
        if self.encoder_channels.contains(&0) {
            return bad("encoder channel counts must be positive".into());
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride.0 == 0 {
            return bad(format!("invalid kernel {:?} / stride {:?}", self.kernel, self.stride));
        }
        if self.stride.1 != 1 {
            return bad(format!("time stride must be 1, got {}", self.stride.1));
        }
        if self.chunk_len < 2 || self.chunk_len % 2 != 0 {
            return bad(format!("chunk_len must be even and at least 2, got {}", self.chunk_len));
        }
        if self.datrnn_blocks == 0 || self.datrnn_dim == 0 || self.lstm_hidden == 0 {
            return bad("dual-path blocks, width and hidden size must be positive".into());
        }
        let (lo, hi) = self.pad_freq();
        for w in self.freq_ladder().windows(2) {
            let (f_in, f_out) = (w[0], w[1]);
            let back = (f_out.max(1) - 1) * self.stride.0 + self.kernel.0;
            if f_out == 0 || back < lo + hi || back - lo - hi != f_in {
                return bad(format!(
                    "{} frequency bins cannot be downsampled and restored symmetrically at this depth",
                    self.stft.n_bins()
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
