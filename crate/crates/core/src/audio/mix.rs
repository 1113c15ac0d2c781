use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{resample_linear, PcmBuffer};
use crate::gain::Gain;
use crate::timeline::Timeline;

/// Peak target for optional normalization (-1 dBFS).
pub const NORMALIZE_PEAK: f64 = 0.891;

pub const SUPPORTED_RATES: [u32; 2] = [44_100, 48_000];

const OUTPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("not found")]
    Missing,
    #[error("{0}")]
    Invalid(String),
}

/// Source of decoded asset audio for the mixer.
pub trait AssetResolver {
    fn resolve(&self, asset_id: &str) -> Result<PcmBuffer, ResolveError>;
}

impl<F> AssetResolver for F
where
    F: Fn(&str) -> Result<PcmBuffer, ResolveError>,
{
    fn resolve(&self, asset_id: &str) -> Result<PcmBuffer, ResolveError> {
        self(asset_id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("asset {0} is missing")]
    MissingAsset(String),
    #[error("asset {id} could not be decoded: {message}")]
    InvalidAsset { id: String, message: String },
    #[error("ambient asset {0} has no samples to loop")]
    EmptySource(String),
    #[error("timeline has zero duration")]
    EmptyTimeline,
    #[error("unsupported target rate {0} Hz")]
    UnsupportedRate(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub target_rate: u32,
    pub master_gain: Gain,
    pub normalize: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            target_rate: 48_000,
            master_gain: Gain::UNITY,
            normalize: false,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<(), RenderError> {
        if SUPPORTED_RATES.contains(&self.target_rate) {
            Ok(())
        } else {
            Err(RenderError::UnsupportedRate(self.target_rate))
        }
    }
}

/// Frames covering `ms` milliseconds at `rate`, rounded to nearest.
pub fn samples_for_ms(ms: u64, rate: u32) -> usize {
    ((ms * u64::from(rate) + 500) / 1000) as usize
}

/// Repeats `buf` until it is `length` frames long: `out[n] = buf[n % len]`.
pub fn loop_to_length(buf: &PcmBuffer, length: usize) -> Result<PcmBuffer, RenderError> {
    if length == 0 {
        return Ok(PcmBuffer::new(
            buf.sample_rate,
            vec![Vec::new(); buf.channel_count()],
        ));
    }
    let len = buf.frames();
    if len == 0 {
        return Err(RenderError::EmptySource(String::new()));
    }
    let channels = buf
        .channels
        .iter()
        .map(|c| (0..length).map(|n| c[n % len]).collect())
        .collect();
    Ok(PcmBuffer::new(buf.sample_rate, channels))
}

/// Decodes and resamples each asset once per render.
struct Layers<'a> {
    resolver: &'a dyn AssetResolver,
    rate: u32,
    cache: HashMap<String, PcmBuffer>,
}

impl Layers<'_> {
    fn get(&mut self, id: &str) -> Result<&PcmBuffer, RenderError> {
        if !self.cache.contains_key(id) {
            let raw = self.resolver.resolve(id).map_err(|e| match e {
                ResolveError::Missing => RenderError::MissingAsset(id.to_string()),
                ResolveError::Invalid(message) => RenderError::InvalidAsset {
                    id: id.to_string(),
                    message,
                },
            })?;
            self.cache.insert(id.to_string(), resample_linear(&raw, self.rate));
        }
        Ok(&self.cache[id])
    }
}

/// Bounces the three layers to a stereo buffer at `options.target_rate`.
///
/// Per channel the pre-gain sum is music, then the looped ambient bed, then
/// every event in timeline order, each scaled by its own gain. Normalization
/// (when enabled and the peak exceeds [`NORMALIZE_PEAK`]) rescales the whole
/// sum; master gain and a hard clamp to `[-1, 1]` follow.
pub fn mix_timeline(
    timeline: &Timeline,
    resolver: &dyn AssetResolver,
    options: &RenderOptions,
) -> Result<PcmBuffer, RenderError> {
    options.validate()?;
    if timeline.duration_ms == 0 {
        return Err(RenderError::EmptyTimeline);
    }
    let rate = options.target_rate;
    let length = samples_for_ms(timeline.duration_ms, rate);
    let mut layers = Layers {
        resolver,
        rate,
        cache: HashMap::new(),
    };
    let mut out = vec![vec![0.0_f64; length]; OUTPUT_CHANNELS];

    if let Some(id) = &timeline.music_asset {
        let music = layers.get(id)?;
        let gain = timeline.music_gain.get();
        for (ch, dst) in out.iter_mut().enumerate() {
            for (d, s) in dst.iter_mut().zip(music.channel_or_mono(ch)) {
                *d += gain * s;
            }
        }
    }

    if let Some(id) = &timeline.ambient_asset {
        let ambient = layers.get(id)?;
        if ambient.is_empty() {
            return Err(RenderError::EmptySource(id.clone()));
        }
        let gain = timeline.ambient_gain.get();
        for (ch, dst) in out.iter_mut().enumerate() {
            let bed = ambient.channel_or_mono(ch);
            for (n, d) in dst.iter_mut().enumerate() {
                *d += gain * bed[n % bed.len()];
            }
        }
    }

    for event in &timeline.events {
        let effect = layers.get(&event.asset_id)?;
        let start = samples_for_ms(event.offset_ms, rate);
        if start >= length {
            continue;
        }
        let gain = event.gain.get();
        for (ch, dst) in out.iter_mut().enumerate() {
            for (d, s) in dst[start..].iter_mut().zip(effect.channel_or_mono(ch)) {
                *d += gain * s;
            }
        }
    }

    let peak = out.iter().flatten().fold(0.0_f64, |acc, s| acc.max(s.abs()));
    let scale = if options.normalize && peak > NORMALIZE_PEAK {
        NORMALIZE_PEAK / peak
    } else {
        1.0
    };
    let master = options.master_gain.get();
    for sample in out.iter_mut().flatten() {
        *sample = (master * (*sample * scale)).clamp(-1.0, 1.0);
    }
    Ok(PcmBuffer::new(rate, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::TriggerEvent;

    fn constant(rate: u32, frames: usize, value: f64) -> PcmBuffer {
        PcmBuffer::mono(rate, vec![value; frames])
    }

    fn resolver(
        assets: Vec<(&'static str, PcmBuffer)>,
    ) -> impl Fn(&str) -> Result<PcmBuffer, ResolveError> {
        let map: HashMap<&'static str, PcmBuffer> = assets.into_iter().collect();
        move |id: &str| map.get(id).cloned().ok_or(ResolveError::Missing)
    }

    fn timeline(duration_ms: u64) -> Timeline {
        Timeline {
            music_asset: Some("m".into()),
            duration_ms,
            ..Timeline::default()
        }
    }

    #[test]
    fn loop_examples() {
        let buf = PcmBuffer::mono(10, vec![1.0, 2.0, 3.0]);
        assert_eq!(loop_to_length(&buf, 3).unwrap(), buf);
        assert_eq!(
            loop_to_length(&buf, 7).unwrap().channels[0],
            vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]
        );
        assert!(loop_to_length(&buf, 0).unwrap().is_empty());
        let empty = PcmBuffer::mono(10, vec![]);
        assert!(matches!(loop_to_length(&empty, 4), Err(RenderError::EmptySource(_))));
        assert!(loop_to_length(&empty, 0).unwrap().is_empty());
    }

    #[test]
    fn music_only_equals_resampled_music() {
        let music = PcmBuffer::mono(
            22_050,
            (0..22_050).map(|i| ((i % 100) as f64 - 50.0) / 100.0).collect(),
        );
        let r = resolver(vec![("m", music.clone())]);
        let out = mix_timeline(&timeline(1000), &r, &RenderOptions::default()).unwrap();
        let expected = resample_linear(&music, 48_000);
        assert_eq!(out.frames(), 48_000);
        assert_eq!(out.channels[0], expected.channels[0]);
        assert_eq!(out.channels[1], expected.channels[0]);
    }

    #[test]
    fn overlapping_layers_add() {
        let r = resolver(vec![
            ("m", constant(48_000, 480, 0.25)),
            ("a", constant(48_000, 100, 0.25)),
        ]);
        let mut t = timeline(10);
        t.ambient_asset = Some("a".into());
        let out = mix_timeline(&t, &r, &RenderOptions::default()).unwrap();
        assert!(out.channels.iter().flatten().all(|s| *s == 0.5));
    }

    #[test]
    fn clamp_and_normalize() {
        let r = resolver(vec![
            ("m", constant(48_000, 480, 0.8)),
            ("a", constant(48_000, 480, 0.8)),
        ]);
        let mut t = timeline(10);
        t.ambient_asset = Some("a".into());
        let clamped = mix_timeline(&t, &r, &RenderOptions::default()).unwrap();
        assert!(clamped.channels.iter().flatten().all(|s| *s == 1.0));

        let options = RenderOptions { normalize: true, ..RenderOptions::default() };
        let normalized = mix_timeline(&t, &r, &options).unwrap();
        let factor = 0.891 / 1.6;
        assert!((factor - 0.556875_f64).abs() < 1e-15);
        for s in normalized.channels.iter().flatten() {
            assert!((s - 0.891).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn normalize_leaves_quiet_mix_alone() {
        let r = resolver(vec![("m", constant(48_000, 480, 0.5))]);
        let options = RenderOptions { normalize: true, ..RenderOptions::default() };
        let out = mix_timeline(&timeline(10), &r, &options).unwrap();
        assert!(out.channels.iter().flatten().all(|s| *s == 0.5));
    }

    #[test]
    fn event_placement_and_tail() {
        let r = resolver(vec![
            ("m", constant(48_000, 48, 0.0)),
            ("fx", PcmBuffer::new(48_000, vec![vec![1.0, 0.5], vec![0.25, 0.125]])),
        ]);
        let mut t = timeline(2000);
        t.events.push(TriggerEvent {
            offset_ms: 1500,
            object_id: "o".into(),
            asset_id: "fx".into(),
            gain: Gain::new(0.5).unwrap(),
        });
        let out = mix_timeline(&t, &r, &RenderOptions::default()).unwrap();
        assert_eq!(out.channels[0][72_000], 0.5);
        assert_eq!(out.channels[0][72_001], 0.25);
        assert_eq!(out.channels[1][72_000], 0.125);
        assert_eq!(out.channels[0][71_999], 0.0);
        assert_eq!(out.frames(), 96_000);
    }

    #[test]
    fn errors() {
        let r = resolver(vec![("m", constant(48_000, 48, 0.1))]);
        assert_eq!(
            mix_timeline(&timeline(0), &r, &RenderOptions::default()).unwrap_err(),
            RenderError::EmptyTimeline
        );
        let mut t = timeline(5);
        t.ambient_asset = Some("ghost".into());
        assert_eq!(
            mix_timeline(&t, &r, &RenderOptions::default()).unwrap_err(),
            RenderError::MissingAsset("ghost".into())
        );
        let options = RenderOptions { target_rate: 22_050, ..RenderOptions::default() };
        assert_eq!(
            mix_timeline(&timeline(5), &r, &options).unwrap_err(),
            RenderError::UnsupportedRate(22_050)
        );
    }

    #[test]
    fn rate_44100_length_rounds() {
        let r = resolver(vec![("m", constant(44_100, 10, 0.1))]);
        let options = RenderOptions { target_rate: 44_100, ..RenderOptions::default() };
        // 7 ms * 44.1 = 308.7 -> 309
        assert_eq!(mix_timeline(&timeline(7), &r, &options).unwrap().frames(), 309);
    }

    #[test]
    fn options_json_defaults() {
        let o: RenderOptions = serde_json::from_str("{}").unwrap();
        assert_eq!(o, RenderOptions::default());
        let o: RenderOptions = serde_json::from_str(r#"{"normalize": true, "target_rate": 44100}"#).unwrap();
        assert!(o.normalize);
        assert_eq!(o.target_rate, 44_100);
        assert!(serde_json::from_str::<RenderOptions>(r#"{"master_gain": 9}"#).is_err());
    }
}
