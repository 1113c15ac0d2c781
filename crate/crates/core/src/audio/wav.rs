//! RIFF/WAVE reading (integer and float PCM) and canonical 16-bit writing.

use thiserror::Error;

use super::PcmBuffer;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("invalid WAV: {0}")]
    InvalidWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
}

fn invalid(msg: impl Into<String>) -> WavError {
    WavError::InvalidWav(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleEncoding {
    UnsignedInt8,
    Int16,
    Int24,
    Int32,
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub encoding: SampleEncoding,
    pub channels: u16,
    pub sample_rate: u32,
    pub frames: usize,
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Format, WavError> {
    if body.len() < 16 {
        return Err(invalid(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut tag = u16_at(body, 0);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(invalid("extensible fmt chunk too short"));
        }
        // first two bytes of the sub-format GUID carry the real tag
        tag = u16_at(body, 24);
    }
    Ok(Format {
        tag,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits: u16_at(body, 14),
    })
}

fn encoding_of(fmt: &Format) -> Result<SampleEncoding, WavError> {
    match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 8) => Ok(SampleEncoding::UnsignedInt8),
        (FORMAT_PCM, 16) => Ok(SampleEncoding::Int16),
        (FORMAT_PCM, 24) => Ok(SampleEncoding::Int24),
        (FORMAT_PCM, 32) => Ok(SampleEncoding::Int32),
        (FORMAT_IEEE_FLOAT, 32) => Ok(SampleEncoding::Float32),
        (FORMAT_PCM, bits) | (FORMAT_IEEE_FLOAT, bits) => Err(WavError::UnsupportedEncoding(
            format!("{bits}-bit samples (format tag {:#06x})", fmt.tag),
        )),
        (tag, _) => Err(WavError::UnsupportedEncoding(format!(
            "compressed or unknown format tag {tag:#06x}"
        ))),
    }
}

fn bytes_per_sample(encoding: SampleEncoding) -> usize {
    match encoding {
        SampleEncoding::UnsignedInt8 => 1,
        SampleEncoding::Int16 => 2,
        SampleEncoding::Int24 => 3,
        SampleEncoding::Int32 | SampleEncoding::Float32 => 4,
    }
}

fn decode_sample(encoding: SampleEncoding, b: &[u8]) -> f64 {
    match encoding {
        SampleEncoding::UnsignedInt8 => (f64::from(b[0]) - 128.0) / 128.0,
        SampleEncoding::Int16 => f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0,
        SampleEncoding::Int24 => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            f64::from(v) / 8_388_608.0
        }
        SampleEncoding::Int32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0,
        SampleEncoding::Float32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
    }
}

/// Walks the RIFF chunk list and returns the format plus the raw sample bytes.
fn split_chunks(bytes: &[u8]) -> Result<(Format, &[u8]), WavError> {
    if bytes.len() < 12 {
        return Err(invalid(format!("{} bytes is shorter than a RIFF header", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(invalid("missing RIFF/WAVE signature"));
    }
    let mut fmt = None;
    let mut data = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body_start = at + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < size {
                    return Err(invalid("truncated fmt chunk"));
                }
                fmt = Some(parse_fmt(body)?);
            }
            // a short data chunk is accepted up to the last whole frame
            b"data" => data = Some(body),
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        at = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| invalid("no fmt chunk"))?;
    let data = data.ok_or_else(|| invalid("no data chunk"))?;
    Ok((fmt, data))
}

fn checked_layout(fmt: &Format) -> Result<(SampleEncoding, usize), WavError> {
    let encoding = encoding_of(fmt)?;
    if !(1..=2).contains(&fmt.channels) {
        return Err(WavError::UnsupportedEncoding(format!(
            "{} channels (only mono and stereo)",
            fmt.channels
        )));
    }
    if fmt.sample_rate == 0 {
        return Err(invalid("sample rate 0"));
    }
    let frame_bytes = bytes_per_sample(encoding) * usize::from(fmt.channels);
    if usize::from(fmt.block_align) != frame_bytes {
        return Err(invalid(format!(
            "block align {} does not match {} bytes per frame",
            fmt.block_align, frame_bytes
        )));
    }
    Ok((encoding, frame_bytes))
}

/// Header-level facts about a WAV file without decoding its samples.
pub fn probe_wav(bytes: &[u8]) -> Result<WavInfo, WavError> {
    let (fmt, data) = split_chunks(bytes)?;
    let (encoding, frame_bytes) = checked_layout(&fmt)?;
    Ok(WavInfo {
        encoding,
        channels: fmt.channels,
        sample_rate: fmt.sample_rate,
        frames: data.len() / frame_bytes,
    })
}

/// Decodes PCM or float WAV into planar samples scaled to `[-1, 1]`.
pub fn decode_wav(bytes: &[u8]) -> Result<PcmBuffer, WavError> {
    let (fmt, data) = split_chunks(bytes)?;
    let (encoding, frame_bytes) = checked_layout(&fmt)?;
    let width = bytes_per_sample(encoding);
    let channel_count = usize::from(fmt.channels);
    let frames = data.len() / frame_bytes;
    let mut channels = vec![Vec::with_capacity(frames); channel_count];
    for frame in data.chunks_exact(frame_bytes) {
        for (ch, raw) in frame.chunks_exact(width).enumerate() {
            channels[ch].push(decode_sample(encoding, raw));
        }
    }
    Ok(PcmBuffer::new(fmt.sample_rate, channels))
}

/// Rounds half away from zero after clamping to `[-1, 1]`; `1.0 -> 32767`,
/// `-1.0 -> -32767`.
fn quantize(sample: f64) -> i16 {
    let clamped = if sample.is_nan() { 0.0 } else { sample.clamp(-1.0, 1.0) };
    (clamped * 32767.0).round() as i16
}

/// Deterministic triangular dither of +/-1 LSB from a fixed-seed xorshift.
struct Tpdf(u64);

impl Tpdf {
    fn next_unit(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn offset(&mut self) -> f64 {
        (self.next_unit() - self.next_unit()) / 32767.0
    }
}

/// Canonical 44-byte header followed by interleaved little-endian `i16`.
pub fn encode_wav_pcm16(buf: &PcmBuffer, dither: bool) -> Vec<u8> {
    let channels = buf.channel_count() as u16;
    let frames = buf.frames();
    let block_align = channels * 2;
    let data_len = (frames * usize::from(block_align)) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    let mut noise = Tpdf(0x9E37_79B9_7F4A_7C15);
    for n in 0..frames {
        for channel in &buf.channels {
            let s = if dither { channel[n] + noise.offset() } else { channel[n] };
            out.extend_from_slice(&quantize(s).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Hand-assembled WAV with an arbitrary fmt body, for decoder tests.
    pub(crate) fn raw_wav(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * u32::from(block)).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    fn i16_bytes(samples: &[i16]) -> Vec<u8> {
        samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    #[test]
    fn decodes_16_bit() {
        let wav = raw_wav(1, 1, 48000, 16, &i16_bytes(&[0, 16384, -32768]));
        let buf = decode_wav(&wav).unwrap();
        assert_eq!(buf.channels, vec![vec![0.0, 0.5, -1.0]]);
        assert_eq!(buf.sample_rate, 48000);
    }

    #[test]
    fn decodes_float_passthrough() {
        let wav = raw_wav(3, 1, 44100, 32, &0.25f32.to_le_bytes());
        assert_eq!(decode_wav(&wav).unwrap().channels, vec![vec![0.25]]);
    }

    #[test]
    fn decodes_8_and_24_bit_and_stereo() {
        let wav = raw_wav(1, 1, 8000, 8, &[128, 192, 0]);
        assert_eq!(decode_wav(&wav).unwrap().channels[0], vec![0.0, 0.5, -1.0]);

        // 0x400000 = 2^22 -> 0.5 ; 0x800000 -> -1.0
        let wav = raw_wav(1, 1, 8000, 24, &[0x00, 0x00, 0x40, 0x00, 0x00, 0x80]);
        assert_eq!(decode_wav(&wav).unwrap().channels[0], vec![0.5, -1.0]);

        let wav = raw_wav(1, 2, 8000, 16, &i16_bytes(&[16384, -16384, 0, 8192]));
        let buf = decode_wav(&wav).unwrap();
        assert_eq!(buf.channels, vec![vec![0.5, 0.0], vec![-0.5, 0.25]]);
    }

    #[test]
    fn rejects_adpcm_and_surround() {
        let adpcm = raw_wav(0x0011, 1, 8000, 4, &[0; 8]);
        assert!(matches!(decode_wav(&adpcm), Err(WavError::UnsupportedEncoding(_))));
        let ms_adpcm = raw_wav(0x0002, 1, 8000, 4, &[0; 8]);
        assert!(matches!(decode_wav(&ms_adpcm), Err(WavError::UnsupportedEncoding(_))));
        let six = raw_wav(1, 6, 8000, 16, &[0; 12]);
        assert!(matches!(decode_wav(&six), Err(WavError::UnsupportedEncoding(_))));
    }

    #[test]
    fn rejects_truncated_header() {
        let wav = raw_wav(1, 1, 48000, 16, &[0; 4]);
        assert!(matches!(decode_wav(&wav[..20]), Err(WavError::InvalidWav(_))));
        assert!(matches!(decode_wav(&[]), Err(WavError::InvalidWav(_))));
        assert!(matches!(decode_wav(b"RIFX\0\0\0\0WAVE"), Err(WavError::InvalidWav(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut wav = raw_wav(1, 1, 48000, 16, &i16_bytes(&[16384]));
        // splice a LIST chunk with odd size (plus pad byte) before fmt
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), b"abc\0"].concat();
        wav.splice(12..12, list);
        assert_eq!(decode_wav(&wav).unwrap().channels[0], vec![0.5]);
    }

    #[test]
    fn encoder_header_and_quantization() {
        let one = encode_wav_pcm16(&PcmBuffer::mono(48000, vec![0.0]), false);
        assert_eq!(one.len(), 46);
        let empty = encode_wav_pcm16(&PcmBuffer::mono(48000, vec![]), false);
        assert_eq!(empty.len(), 44);
        assert_eq!(&empty[40..44], &0u32.to_le_bytes());
        assert_eq!(&empty[4..8], &36u32.to_le_bytes());

        let wav = encode_wav_pcm16(&PcmBuffer::mono(48000, vec![1.0, -1.0, 2.0, 0.5]), false);
        let data: Vec<i16> = wav[44..]
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        // 0.5 * 32767 = 16383.5 rounds away from zero
        assert_eq!(data, vec![0x7FFF, -32767, 0x7FFF, 16384]);
        assert_eq!(&wav[36..40], b"data");
        assert_eq!(u16_at(&wav, 20), 1);
        assert_eq!(u32_at(&wav, 16), 16);
        assert_eq!(u16_at(&wav, 34), 16);
    }

    #[test]
    fn stereo_is_interleaved() {
        let buf = PcmBuffer::new(44100, vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let wav = encode_wav_pcm16(&buf, false);
        assert_eq!(&wav[44..48], &[0xFF, 0x7F, 0x01, 0x80]);
        assert_eq!(u32_at(&wav, 28), 44100 * 4);
        let info = probe_wav(&wav).unwrap();
        assert_eq!(info.frames, 2);
        assert_eq!(info.channels, 2);
    }

    #[test]
    fn dither_is_deterministic_and_small() {
        let buf = PcmBuffer::mono(48000, vec![0.1; 64]);
        let a = encode_wav_pcm16(&buf, true);
        assert_eq!(a, encode_wav_pcm16(&buf, true));
        let plain = encode_wav_pcm16(&buf, false);
        for (x, y) in a[44..].chunks_exact(2).zip(plain[44..].chunks_exact(2)) {
            let d = i16::from_le_bytes([x[0], x[1]]) - i16::from_le_bytes([y[0], y[1]]);
            assert!(d.abs() <= 1);
        }
    }

    #[test]
    fn sixteen_bit_round_trip_is_close() {
        let src = PcmBuffer::new(48000, vec![vec![0.3, -0.7], vec![0.0, 0.999]]);
        let back = decode_wav(&encode_wav_pcm16(&src, false)).unwrap();
        for (a, b) in src.channels.iter().flatten().zip(back.channels.iter().flatten()) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }
}
