//! 16-bit PCM mono WAV read/write.

use std::path::Path;

use super::SignalBuffer;
use crate::error::{Error, Result};

/// Writes a buffer as 16-bit PCM mono. Samples are scaled by 32768 and
/// rounded, so values already on the i16 grid round-trip exactly.
pub fn write_wav(path: impl AsRef<Path>, signal: &SignalBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::wav(path.display().to_string(), e))?;
    for &s in &signal.samples {
        writer
            .write_sample(quantize(s))
            .map_err(|e| Error::wav(path.display().to_string(), e))?;
    }
    writer.finalize().map_err(|e| Error::wav(path.display().to_string(), e))
}

/// Reads a 16-bit PCM mono WAV; sample rate comes from the header.
pub fn read_wav(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::wav(path.display().to_string(), e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::Data(format!(
            "{}: expected 16-bit PCM mono, got {} ch / {} bit",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| Error::wav(path.display().to_string(), e))?;
    SignalBuffer::new(samples.iter().map(|&v| v as f64 / 32768.0).collect(), spec.sample_rate)
}

/// f64 sample to the i16 grid used on disk.
pub fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// The f64 value a quantized sample reads back as.
pub fn dequantize(v: i16) -> f64 {
    v as f64 / 32768.0
}
