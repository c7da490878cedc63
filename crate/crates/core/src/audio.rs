//! 16-bit mono PCM WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Decoded clip, samples scaled to [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Clip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedAudio(format!(
            "{}: need mono 16-bit PCM, got {} ch / {} bit / {:?}",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Clip {
        sample_rate_hz: spec.sample_rate,
        samples,
    })
}

pub fn write_wav(path: impl AsRef<Path>, sample_rate_hz: u32, pcm: &[i16]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in pcm {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}

/// Clamps and rounds to 16-bit.
pub fn quantize(samples: &[f64]) -> Vec<i16> {
    samples
        .iter()
        .map(|&x| (x * 32767.0).round().clamp(-32768.0, 32767.0) as i16)
        .collect()
}
