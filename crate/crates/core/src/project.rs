//! The per-project aggregate persisted as `project.json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::Dialogue;
use crate::audio::{encode_wav_pcm16, mix_timeline, AssetResolver, RenderError, RenderOptions};
use crate::catalog::SoundBinding;
use crate::scene::Scene;
use crate::store::to_canonical_json;
use crate::timeline::{Session, Timeline, TransportState};

#[derive(Debug, Error, PartialEq)]
pub enum ProjectError {
    #[error("project has no timeline")]
    NoTimeline,
    #[error("recording has not been stopped")]
    NotStopped,
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// A finished render stored under the project's `renders/` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRef {
    pub file: String,
    pub frames: u64,
    pub sample_rate: u32,
    pub options: RenderOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub created_at_ms: u64,
    pub scene: Option<Scene>,
    pub bindings: BTreeMap<String, SoundBinding>,
    pub dialogue: Dialogue,
    /// Layer settings before recording; the recorded timeline after stop.
    pub timeline: Option<Timeline>,
    pub session: Option<Session>,
    pub renders: BTreeMap<String, RenderRef>,
}

impl Project {
    pub fn new(id: impl Into<String>, created_at_ms: u64) -> Self {
        Project {
            id: id.into(),
            created_at_ms,
            scene: None,
            bindings: BTreeMap::new(),
            dialogue: Dialogue::default(),
            timeline: None,
            session: None,
            renders: BTreeMap::new(),
        }
    }

    /// Installs a new scene. Bindings to objects that no longer exist are
    /// dropped.
    pub fn set_scene(&mut self, scene: Scene) {
        self.bindings.retain(|obj, _| scene.object(obj).is_some());
        self.scene = Some(scene);
    }

    /// The timeline to mix: present, and not in the middle of a recording.
    pub fn renderable_timeline(&self) -> Result<&Timeline, ProjectError> {
        if let Some(session) = &self.session {
            if session.state != TransportState::Stopped {
                return Err(ProjectError::NotStopped);
            }
            return Ok(&session.timeline);
        }
        self.timeline.as_ref().ok_or(ProjectError::NoTimeline)
    }

    /// Every id the project mentions must point at something it contains.
    pub fn integrity_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let has_object = |id: &str| self.scene.as_ref().is_some_and(|s| s.object(id).is_some());
        for (key, binding) in &self.bindings {
            if key != &binding.object_id {
                problems.push(format!("binding key {key} holds object {}", binding.object_id));
            }
            if !has_object(key) {
                problems.push(format!("binding for unknown object {key}"));
            }
        }
        if let Some(session) = &self.session {
            if session.project_id != self.id {
                problems.push(format!("session belongs to {}", session.project_id));
            }
            for event in &session.timeline.events {
                if !has_object(&event.object_id) {
                    problems.push(format!("event for unknown object {}", event.object_id));
                }
            }
        }
        if let Some(selected) = &self.dialogue.selected_option {
            if self.dialogue.option(selected).is_none() {
                problems.push(format!("selected option {selected} was never offered"));
            }
        }
        for (rid, render) in &self.renders {
            if render.file != format!("renders/{rid}.wav") {
                problems.push(format!("render {rid} points at {}", render.file));
            }
        }
        problems
    }
}

/// Content address of a render: equal (timeline, options) give equal ids.
pub fn render_id(timeline: &Timeline, options: &RenderOptions) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        timeline: &'a Timeline,
        options: &'a RenderOptions,
    }
    let bytes = to_canonical_json(&Key { timeline, options }).expect("timeline serializes");
    let digest = Sha256::digest(&bytes);
    format!("ren-{}", hex::encode(&digest[..8]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMix {
    pub render_id: String,
    pub wav: Vec<u8>,
    pub frames: u64,
    pub sample_rate: u32,
}

impl RenderedMix {
    pub fn reference(&self, options: RenderOptions) -> RenderRef {
        RenderRef {
            file: format!("renders/{}.wav", self.render_id),
            frames: self.frames,
            sample_rate: self.sample_rate,
            options,
        }
    }
}

/// Mixes the project's timeline and encodes it as 16-bit WAV.
pub fn render_project(
    project: &Project,
    resolver: &dyn AssetResolver,
    options: &RenderOptions,
) -> Result<RenderedMix, ProjectError> {
    let timeline = project.renderable_timeline()?;
    let pcm = mix_timeline(timeline, resolver, options)?;
    Ok(RenderedMix {
        render_id: render_id(timeline, options),
        wav: encode_wav_pcm16(&pcm, false),
        frames: pcm.frames() as u64,
        sample_rate: pcm.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{PcmBuffer, ResolveError};
    use crate::gain::Gain;
    use crate::timeline::TriggerEvent;

    fn stopped_project() -> Project {
        let mut p = Project::new("prj-t", 0);
        let mut s = Session::idle("ses-1", "prj-t");
        s.state = TransportState::Stopped;
        s.timeline = Timeline {
            music_asset: Some("m".into()),
            duration_ms: 10,
            events: vec![TriggerEvent {
                offset_ms: 2,
                object_id: "obj-1".into(),
                asset_id: "fx".into(),
                gain: Gain::UNITY,
            }],
            ..Timeline::default()
        };
        p.session = Some(s);
        p
    }

    fn resolver(id: &str) -> Result<PcmBuffer, ResolveError> {
        match id {
            "m" => Ok(PcmBuffer::mono(48_000, vec![0.25; 480])),
            "fx" => Ok(PcmBuffer::mono(48_000, vec![0.5; 10])),
            _ => Err(ResolveError::Missing),
        }
    }

    #[test]
    fn render_needs_timeline() {
        let p = Project::new("prj-x", 0);
        assert_eq!(
            render_project(&p, &resolver, &RenderOptions::default()).unwrap_err(),
            ProjectError::NoTimeline
        );
        let mut p = stopped_project();
        p.session.as_mut().unwrap().state = TransportState::Recording;
        assert_eq!(p.renderable_timeline().unwrap_err(), ProjectError::NotStopped);
    }

    #[test]
    fn render_is_content_addressed() {
        let p = stopped_project();
        let opts = RenderOptions::default();
        let a = render_project(&p, &resolver, &opts).unwrap();
        let b = render_project(&p, &resolver, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames, 480);
        assert_eq!(a.wav.len(), 44 + 480 * 4);
        let louder = RenderOptions {
            master_gain: Gain::new(0.5).unwrap(),
            ..opts
        };
        assert_ne!(render_project(&p, &resolver, &louder).unwrap().render_id, a.render_id);
        assert!(a.render_id.starts_with("ren-") && a.render_id.len() == 20);
    }

    #[test]
    fn integrity_flags_dangling_ids() {
        let p = stopped_project();
        let problems = p.integrity_problems();
        assert_eq!(problems, vec!["event for unknown object obj-1".to_string()]);
        assert!(Project::new("prj-e", 0).integrity_problems().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let p = stopped_project();
        let bytes = to_canonical_json(&p).unwrap();
        let back: Project = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(to_canonical_json(&back).unwrap(), bytes);
    }
}
