//! Multichannel WAV reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::sim::MultichannelRecording;

/// Writes interleaved samples, either 32-bit float or 16-bit PCM (clipped to [-1, 1]).
pub fn write(path: &Path, rec: &MultichannelRecording, float32: bool) -> Result<()> {
    let channels = rec.num_channels();
    if channels == 0 || channels > u16::MAX as usize {
        return Err(Error::Input(format!("cannot write {channels} channels")));
    }
    let spec = WavSpec {
        channels: channels as u16,
        sample_rate: rec.sample_rate.round() as u32,
        bits_per_sample: if float32 { 32 } else { 16 },
        sample_format: if float32 { SampleFormat::Float } else { SampleFormat::Int },
    };
    let mut w = WavWriter::create(path, spec)?;
    for t in 0..rec.len() {
        for ch in &rec.samples {
            if float32 {
                w.write_sample(ch[t] as f32)?;
            } else {
                let v = (ch[t].clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
                w.write_sample(v)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<MultichannelRecording> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut samples = vec![Vec::with_capacity(interleaved.len() / channels.max(1)); channels];
    for frame in interleaved.chunks(channels) {
        for (ch, v) in samples.iter_mut().zip(frame) {
            ch.push(*v);
        }
    }
    Ok(MultichannelRecording {
        samples,
        sample_rate: spec.sample_rate as f64,
    })
}
