use datnet::electrodogram::{ace_process, render_electrodogram, vocode, AceConfig};
use datnet::signal_io::{load_wav, resample, write_wav, WavEncoding, SAMPLE_RATE};
use datnet::stft::{render_spectrogram_png, stft, StftConfig};

use crate::args::ElectrodogramArgs;
use crate::cmd::train::read_json;
use crate::exit::CliResult;
use crate::manifest::RunContext;

pub const PULSES_CSV: &str = "electrodogram.csv";
pub const PULSES_PNG: &str = "electrodogram.png";
pub const INPUT_SPECTROGRAM: &str = "spectrogram.png";
pub const VOCODED_WAV: &str = "vocoded.wav";
pub const VOCODED_SPECTROGRAM: &str = "vocoded_spectrogram.png";

pub fn resolve(a: &ElectrodogramArgs) -> CliResult<AceConfig> {
    let mut cfg: AceConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AceConfig::default(),
    };
    if let Some(n) = a.n_maxima {
        cfg.n_maxima = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(ctx: &RunContext, a: &ElectrodogramArgs) -> CliResult<()> {
    let cfg = resolve(a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let mut input = load_wav(&a.input)?;
    if input.sample_rate != SAMPLE_RATE {
        input = resample(&input, SAMPLE_RATE)?;
    }
    ctx.begin("electrodogram", &a.out, serde_json::to_value(&cfg)?, Some(a.seed))?;

    let eg = ace_process(&input, &cfg)?;
    eg.write_csv(a.out.join(PULSES_CSV))?;
    render_electrodogram(&eg, a.out.join(PULSES_PNG), a.width, a.height)?;
    let spec_cfg = StftConfig::default();
    render_spectrogram_png(&stft(&input, &spec_cfg)?, a.out.join(INPUT_SPECTROGRAM))?;
    println!(
        "{} pulses over {} frames ({:.2} per frame)",
        eg.pulses.len(),
        eg.n_frames,
        eg.pulses.len() as f64 / eg.n_frames.max(1) as f64
    );
    if a.vocode {
        let v = vocode(&eg, a.seed)?;
        write_wav(a.out.join(VOCODED_WAV), &v, WavEncoding::Float32)?;
        render_spectrogram_png(&stft(&v, &spec_cfg)?, a.out.join(VOCODED_SPECTROGRAM))?;
        println!("vocoded {:.2} s", v.duration_secs());
    }
    Ok(())
}
