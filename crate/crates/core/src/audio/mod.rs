//! Offline audio path: WAV I/O, sample-rate conversion and the
//! music/ambient/effect mixer.

mod mix;
mod resample;
mod wav;

pub use mix::{
    loop_to_length, mix_timeline, samples_for_ms, AssetResolver, RenderError, RenderOptions,
    ResolveError, NORMALIZE_PEAK, SUPPORTED_RATES,
};
pub use resample::resample_linear;
pub use wav::{decode_wav, encode_wav_pcm16, probe_wav, SampleEncoding, WavError, WavInfo};

/// Planar floating-point audio. Every channel holds the same number of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmBuffer {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl PcmBuffer {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        assert!(
            (1..=2).contains(&channels.len()),
            "only mono and stereo buffers are supported"
        );
        assert!(
            channels.iter().all(|c| c.len() == channels[0].len()),
            "channel lengths differ"
        );
        PcmBuffer { sample_rate, channels }
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        PcmBuffer::new(sample_rate, vec![samples])
    }

    pub fn silent_stereo(sample_rate: u32, frames: usize) -> Self {
        PcmBuffer::new(sample_rate, vec![vec![0.0; frames], vec![0.0; frames]])
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn frames(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames() == 0
    }

    /// Channel `index`, with mono sources reused for every output channel.
    pub fn channel_or_mono(&self, index: usize) -> &[f64] {
        if self.channels.len() == 1 {
            &self.channels[0]
        } else {
            &self.channels[index]
        }
    }

    /// Whole-millisecond duration, rounded to nearest.
    pub fn duration_ms(&self) -> u64 {
        let frames = self.frames() as u64;
        let rate = u64::from(self.sample_rate);
        (frames * 1000 + rate / 2) / rate
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, s| acc.max(s.abs()))
    }
}
