use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Largest accepted linear gain (+12 dB).
pub const MAX_GAIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("gain {0} outside [0, {MAX_GAIN}]")]
pub struct GainOutOfRange(pub f64);

/// Linear gain factor in `[0, 4]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Gain(f64);

impl Gain {
    pub const UNITY: Gain = Gain(1.0);

    pub fn new(value: f64) -> Result<Self, GainOutOfRange> {
        if (0.0..=MAX_GAIN).contains(&value) {
            Ok(Gain(value))
        } else {
            Err(GainOutOfRange(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Gain {
    fn default() -> Self {
        Gain::UNITY
    }
}

impl<'de> Deserialize<'de> for Gain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Gain::new(value).map_err(serde::de::Error::custom)
    }
}
