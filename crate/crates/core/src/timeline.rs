//! Transport state machine and tap-trigger recording.
//!
//! All clock readings are caller-supplied monotonic milliseconds; nothing in
//! here reads a clock.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SoundBinding;
use crate::gain::{Gain, GainOutOfRange};

/// Hard ceiling on a recorded piece.
pub const MAX_DURATION_MS: u64 = 600_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("no background music selected")]
    NoMusicSelected,
    #[error("a recording is already in progress")]
    AlreadyRecording,
    #[error("not recording")]
    NotRecording,
    #[error("recording has not been stopped")]
    NotStopped,
    #[error("a stopped recording exists; re-recording requires discard confirmation")]
    ConfirmationRequired,
    #[error("object {0} has no bound sound")]
    UnboundObject(String),
    #[error("clock reading {now_ms} precedes session start {start_ms}")]
    ClockBeforeStart { now_ms: u64, start_ms: u64 },
    #[error("offset {0} ms exceeds the {MAX_DURATION_MS} ms cap")]
    PastCap(u64),
    #[error("event index {index} out of range for {len} events")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    GainOutOfRange(#[from] GainOutOfRange),
    #[error("asset {0} is unknown")]
    MissingAsset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportState {
    Idle,
    Recording,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub offset_ms: u64,
    pub object_id: String,
    pub asset_id: String,
    pub gain: Gain,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timeline {
    pub music_asset: Option<String>,
    pub music_gain: Gain,
    pub ambient_asset: Option<String>,
    pub ambient_gain: Gain,
    pub events: Vec<TriggerEvent>,
    pub duration_ms: u64,
}

impl Timeline {
    /// `max(music, last event end)`, capped at [`MAX_DURATION_MS`]. The
    /// ambient bed loops to fit and contributes nothing.
    pub fn compute_duration(
        &self,
        asset_duration_ms: impl Fn(&str) -> Option<u64>,
    ) -> Result<u64, TimelineError> {
        let lookup = |id: &str| {
            asset_duration_ms(id).ok_or_else(|| TimelineError::MissingAsset(id.to_string()))
        };
        let mut duration = match &self.music_asset {
            Some(id) => lookup(id)?,
            None => 0,
        };
        if let Some(id) = &self.ambient_asset {
            lookup(id)?;
        }
        for event in &self.events {
            duration = duration.max(event.offset_ms + lookup(&event.asset_id)?);
        }
        Ok(duration.min(MAX_DURATION_MS))
    }

    fn insert_sorted(&mut self, event: TriggerEvent) -> usize {
        let at = self.events.partition_point(|e| e.offset_ms <= event.offset_ms);
        self.events.insert(at, event);
        at
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub project_id: String,
    pub state: TransportState,
    pub start_wall_ms: u64,
    pub timeline: Timeline,
}

impl Session {
    pub fn idle(id: impl Into<String>, project_id: impl Into<String>) -> Self {
        Session {
            id: id.into(),
            project_id: project_id.into(),
            state: TransportState::Idle,
            start_wall_ms: 0,
            timeline: Timeline::default(),
        }
    }

    /// idle -> recording. Layer settings are copied from `draft`; events start
    /// empty.
    pub fn begin(&mut self, draft: &Timeline, now_wall_ms: u64) -> Result<(), TimelineError> {
        match self.state {
            TransportState::Idle => {}
            TransportState::Recording => return Err(TimelineError::AlreadyRecording),
            TransportState::Stopped => return Err(TimelineError::ConfirmationRequired),
        }
        if draft.music_asset.is_none() {
            return Err(TimelineError::NoMusicSelected);
        }
        self.timeline = Timeline {
            events: Vec::new(),
            duration_ms: 0,
            ..draft.clone()
        };
        self.start_wall_ms = now_wall_ms;
        self.state = TransportState::Recording;
        Ok(())
    }

    /// Marks a tap on `object_id` at `now_wall_ms`. Returns the stored event.
    pub fn record_trigger(
        &mut self,
        object_id: &str,
        now_wall_ms: u64,
        bindings: &BTreeMap<String, SoundBinding>,
    ) -> Result<TriggerEvent, TimelineError> {
        if self.state != TransportState::Recording {
            return Err(TimelineError::NotRecording);
        }
        if now_wall_ms < self.start_wall_ms {
            return Err(TimelineError::ClockBeforeStart {
                now_ms: now_wall_ms,
                start_ms: self.start_wall_ms,
            });
        }
        let binding = bindings
            .get(object_id)
            .ok_or_else(|| TimelineError::UnboundObject(object_id.to_string()))?;
        let offset_ms = now_wall_ms - self.start_wall_ms;
        if offset_ms > MAX_DURATION_MS {
            return Err(TimelineError::PastCap(offset_ms));
        }
        let event = TriggerEvent {
            offset_ms,
            object_id: object_id.to_string(),
            asset_id: binding.asset_id.clone(),
            gain: binding.gain,
        };
        self.timeline.insert_sorted(event.clone());
        Ok(event)
    }

    /// recording -> stopped, fixing the timeline duration.
    pub fn stop(
        &mut self,
        now_wall_ms: u64,
        asset_duration_ms: impl Fn(&str) -> Option<u64>,
    ) -> Result<&Timeline, TimelineError> {
        if self.state != TransportState::Recording {
            return Err(TimelineError::NotRecording);
        }
        if now_wall_ms < self.start_wall_ms {
            return Err(TimelineError::ClockBeforeStart {
                now_ms: now_wall_ms,
                start_ms: self.start_wall_ms,
            });
        }
        self.timeline.duration_ms = self.timeline.compute_duration(asset_duration_ms)?;
        self.state = TransportState::Stopped;
        Ok(&self.timeline)
    }

    /// Post-recording volume edit for one event. Duration is unaffected.
    pub fn set_event_gain(&mut self, index: usize, gain: f64) -> Result<&Timeline, TimelineError> {
        if self.state != TransportState::Stopped {
            return Err(TimelineError::NotStopped);
        }
        let len = self.timeline.events.len();
        let gain = Gain::new(gain)?;
        let event = self
            .timeline
            .events
            .get_mut(index)
            .ok_or(TimelineError::IndexOutOfRange { index, len })?;
        event.gain = gain;
        Ok(&self.timeline)
    }

    /// stopped -> idle, dropping the recorded events. `confirm` must be set.
    pub fn reset(&mut self, confirm: bool) -> Result<(), TimelineError> {
        match self.state {
            TransportState::Stopped if confirm => {
                self.state = TransportState::Idle;
                self.timeline.events.clear();
                self.timeline.duration_ms = 0;
                Ok(())
            }
            TransportState::Stopped => Err(TimelineError::ConfirmationRequired),
            TransportState::Recording => Err(TimelineError::AlreadyRecording),
            TransportState::Idle => Err(TimelineError::NotStopped),
        }
    }
}

/// Starts a recording in `slot`, creating the session if there is none. A
/// stopped session is only replaced when `discard_confirmed` is set.
pub fn start_recording<'a>(
    slot: &'a mut Option<Session>,
    session_id: impl Into<String>,
    project_id: &str,
    draft: &Timeline,
    now_wall_ms: u64,
    discard_confirmed: bool,
) -> Result<&'a Session, TimelineError> {
    if let Some(existing) = slot.as_ref() {
        match existing.state {
            TransportState::Recording => return Err(TimelineError::AlreadyRecording),
            TransportState::Stopped if !discard_confirmed => {
                return Err(TimelineError::ConfirmationRequired)
            }
            _ => {}
        }
    }
    if draft.music_asset.is_none() {
        return Err(TimelineError::NoMusicSelected);
    }
    let mut session = Session::idle(session_id, project_id);
    session.begin(draft, now_wall_ms)?;
    Ok(slot.insert(session))
}
