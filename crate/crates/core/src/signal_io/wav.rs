use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// Reads a mono PCM16 or float32 WAV file, normalizing PCM samples by 32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| Error::Wav(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Multichannel {
            channels: spec.channels,
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{fmt:?} with {bits} bits per sample"
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono WAV file. PCM16 output is clipped to [-1, 1).
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, encoding: WavEncoding) -> Result<()> {
    let spec = match encoding {
        WavEncoding::Pcm16 => WavSpec {
            channels: 1,
            sample_rate: w.sample_rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
        WavEncoding::Float32 => WavSpec {
            channels: 1,
            sample_rate: w.sample_rate,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| Error::Wav(e.to_string()))?;
    for &s in &w.samples {
        let res = match encoding {
            WavEncoding::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v)
            }
            WavEncoding::Float32 => writer.write_sample(s as f32),
        };
        res.map_err(|e| Error::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw<S: hound::Sample + Copy>(path: &Path, spec: WavSpec, samples: &[S]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn pcm16_spec(channels: u16) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        }
    }

    #[test]
    fn silence_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("silence.wav");
        write_raw(&p, pcm16_spec(1), &vec![0i16; 16000]);
        let w = load_wav(&p).unwrap();
        assert_eq!(w.sample_rate, 16000);
        assert_eq!(w.len(), 16000);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_pcm16_normalizes_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fs.wav");
        write_raw(&p, pcm16_spec(1), &[32767i16; 8]);
        let w = load_wav(&p).unwrap();
        for s in w.samples {
            assert!((s - 32767.0 / 32768.0).abs() < 1e-12);
            assert!((s - 0.99997).abs() < 1e-5);
        }
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.wav");
        assert!(matches!(load_wav(&missing), Err(Error::MissingFile(_))));

        let stereo = dir.path().join("stereo.wav");
        write_raw(&stereo, pcm16_spec(2), &[0i16; 32]);
        assert!(matches!(load_wav(&stereo), Err(Error::Multichannel { channels: 2 })));

        let pcm24 = dir.path().join("pcm24.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        write_raw(&pcm24, spec, &[0i32; 16]);
        assert!(matches!(load_wav(&pcm24), Err(Error::UnsupportedEncoding(_))));
    }

    #[test]
    fn float32_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let w = Waveform::new(vec![0.25, -0.5, 0.125], 16000).unwrap();
        write_wav(&p, &w, WavEncoding::Float32).unwrap();
        assert_eq!(load_wav(&p).unwrap(), w);
    }
}
