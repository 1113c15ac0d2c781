use super::PcmBuffer;

/// Linear-interpolation sample-rate conversion.
///
/// Output frame `k` reads the source at position `k * src / dst`; positions at
/// or past the final source frame take that frame's value. Output length is
/// `round(len * dst / src)`.
pub fn resample_linear(buf: &PcmBuffer, dst_rate: u32) -> PcmBuffer {
    assert!(dst_rate > 0, "destination rate must be positive");
    let src_rate = buf.sample_rate;
    if src_rate == dst_rate {
        return buf.clone();
    }
    let src = u64::from(src_rate);
    let dst = u64::from(dst_rate);
    let len = buf.frames() as u64;
    let out_len = ((len * dst + src / 2) / src) as usize;
    let channels = buf
        .channels
        .iter()
        .map(|samples| {
            (0..out_len as u64)
                .map(|k| {
                    let num = k * src;
                    let i = (num / dst) as usize;
                    if i + 1 >= samples.len() {
                        return *samples.last().expect("non-empty when out_len > 0");
                    }
                    let frac = (num % dst) as f64 / dst as f64;
                    let a = samples[i];
                    a + (samples[i + 1] - a) * frac
                })
                .collect()
        })
        .collect();
    PcmBuffer::new(dst_rate, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn upsample_two_to_four() {
        let out = resample_linear(&PcmBuffer::mono(2, vec![0.0, 1.0]), 4);
        assert_eq!(out.channels[0], vec![0.0, 0.5, 1.0, 1.0]);
        assert_eq!(out.sample_rate, 4);
    }

    #[test]
    fn equal_rates_and_empty() {
        let buf = PcmBuffer::mono(48000, vec![0.1, -0.2, 0.3]);
        assert_eq!(resample_linear(&buf, 48000), buf);
        let empty = PcmBuffer::mono(44100, vec![]);
        assert!(resample_linear(&empty, 48000).is_empty());
    }

    #[test]
    fn downsample_picks_positions() {
        // 4 Hz -> 2 Hz: positions 0, 2
        let out = resample_linear(&PcmBuffer::mono(4, vec![0.0, 1.0, 2.0, 3.0]), 2);
        assert_eq!(out.channels[0], vec![0.0, 2.0]);
    }

    proptest! {
        #[test]
        fn length_law(len in 0usize..400, src in 1u32..96_000, dst in 1u32..96_000) {
            let buf = PcmBuffer::mono(src, (0..len).map(|i| i as f64).collect());
            let out = resample_linear(&buf, dst);
            let expected = (len as f64 * dst as f64 / src as f64).round() as usize;
            prop_assert_eq!(out.frames(), expected);
        }

        #[test]
        fn identity_at_equal_rates(samples in proptest::collection::vec(-1.0f64..1.0, 0..64), rate in 1u32..96_000) {
            let buf = PcmBuffer::mono(rate, samples);
            prop_assert_eq!(resample_linear(&buf, rate), buf);
        }

        #[test]
        fn output_within_source_range(samples in proptest::collection::vec(-1.0f64..1.0, 1..64), dst in 1000u32..96_000) {
            let buf = PcmBuffer::mono(22_050, samples.clone());
            let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for s in &resample_linear(&buf, dst).channels[0] {
                prop_assert!(*s >= lo - 1e-12 && *s <= hi + 1e-12);
            }
        }
    }
}
