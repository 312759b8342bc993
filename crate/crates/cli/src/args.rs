use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use datnet::dat_rnn::MaskTarget;
use datnet::ftb::FtbOrder;
use datnet::network::{OutputMode, Variant};
use datnet::signal_io::WavEncoding;
use datnet::training::{AuditDims, LossKind};

#[derive(Debug, Clone, Parser)]
#[command(name = "datnet", version, about = "Complex-spectrogram speech enhancement toolkit")]
pub struct Cli {
    /// Worker threads for data-parallel stages (mixing, enhancement, evaluation).
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a deterministic pseudo-speech corpus.
    Synth(SynthArgs),
    /// Mix clean utterances with noise over an SNR grid.
    Mix(MixArgs),
    /// Train a model on a mixed set.
    Train(TrainArgs),
    /// Enhance one WAV file or every WAV file in a directory.
    Enhance(EnhanceArgs),
    /// Score a checkpoint on a test manifest.
    Eval(EvalArgs),
    /// Simulate cochlear-implant stimulation for a WAV file.
    Electrodogram(ElectrodogramArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Per-layer parameter counts and the base-to-light ratio.
    Params(ParamsArgs),
    /// Repeat a previous run from its run manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Mix(_) => "mix",
            Command::Train(_) => "train",
            Command::Enhance(_) => "enhance",
            Command::Eval(_) => "eval",
            Command::Electrodogram(_) => "electrodogram",
            Command::Gradcheck(_) => "gradcheck",
            Command::Params(_) => "params",
            Command::Rerun(_) => "rerun",
        }
    }

    /// Redirects the command's run directory.
    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Synth(a) => a.out = out,
            Command::Mix(a) => a.out = out,
            Command::Train(a) => a.out = Some(out),
            Command::Enhance(a) => a.out = out,
            Command::Eval(a) => a.out = out,
            Command::Electrodogram(a) => a.out = out,
            Command::Gradcheck(a) => a.out = Some(out),
            Command::Params(a) => a.out = Some(out),
            Command::Rerun(_) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Encoding {
    Pcm16,
    Float32,
}

impl From<Encoding> for WavEncoding {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Pcm16 => WavEncoding::Pcm16,
            Encoding::Float32 => WavEncoding::Float32,
        }
    }
}

/// Parses a flag through the type's JSON spelling, e.g. `attention_first`.
pub fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_dims(s: &str) -> Result<AuditDims, String> {
    s.parse().map_err(|e: datnet::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Number of utterances.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Encoding::Float32)]
    pub encoding: Encoding,
}

#[derive(Debug, Clone, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub clean_dir: PathBuf,
    /// Noise kinds: white, speech_shaped, babble_synth, car_synth or file:PATH.
    #[arg(long, value_delimiter = ',', default_value = "white")]
    pub noise: Vec<String>,
    /// `train` (-2..14 dB), `test` (-5, 0, 5 dB) or a comma-separated list in dB.
    #[arg(long, default_value = "train", allow_hyphen_values = true)]
    pub snr_grid: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Encoding::Float32)]
    pub encoding: Encoding,
}

/// Model settings that override the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelOverrides {
    #[arg(long, value_parser = parse_serde::<Variant>)]
    pub variant: Option<Variant>,
    /// Chunk length of the dual-path segmentation.
    #[arg(long)]
    pub chunk_len: Option<usize>,
    #[arg(long, value_parser = parse_serde::<FtbOrder>)]
    pub ftb_order: Option<FtbOrder>,
    #[arg(long, value_parser = parse_serde::<MaskTarget>)]
    pub mask_target: Option<MaskTarget>,
    #[arg(long, value_parser = parse_serde::<OutputMode>)]
    pub output_mode: Option<OutputMode>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// JSON file with `model`, `train` and `valid_fraction` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mixed-set directory written by `mix`.
    #[arg(long, required_unless_present = "print_config")]
    pub data: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_config")]
    pub out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Continue from the run directory's last checkpoint if present.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub loss_alpha: Option<f64>,
    #[arg(long, value_parser = parse_serde::<LossKind>)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// Seeds both initialization and data order.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// A WAV file or a directory of WAV files.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Encoding::Float32)]
    pub encoding: Encoding,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "oracle")]
    pub ckpt: Option<PathBuf>,
    /// Score the clean reference as the estimate instead of a model.
    #[arg(long, conflicts_with = "ckpt")]
    pub oracle: bool,
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// System name used in the report.
    #[arg(long, default_value = "datnet")]
    pub system: String,
}

#[derive(Debug, Clone, Args)]
pub struct ElectrodogramArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a noise-vocoded rendition of the stimulation.
    #[arg(long)]
    pub vocode: bool,
    /// JSON file with strategy settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_maxima: Option<usize>,
    #[arg(long)]
    pub print_config: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 900)]
    pub width: u32,
    #[arg(long, default_value_t = 352)]
    pub height: u32,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Module name or `all`.
    #[arg(long, default_value = "all")]
    pub module: String,
    /// Instance size as CxFxT.
    #[arg(long, default_value = "3x5x4", value_parser = parse_dims)]
    pub dims: AuditDims,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    /// Model configuration JSON; defaults to the full-size reference model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
