//! Conversational agent: scene description, the opening question, and
//! three-option music generation with iterative refinement.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{decode_wav, encode_wav_pcm16, PcmBuffer};
use crate::catalog::{CatalogError, CatalogStore, Role};
use crate::scene::{ImageRef, Scene};
use crate::timeline::Timeline;

/// Asked after every scene description.
pub const OPENING_QUESTION: &str = "What kind of sound memory do you want to create?";

pub const OPTIONS_PER_ROUND: usize = 3;

/// Label attached to every generated music asset in the catalog.
pub const GENERATED_MUSIC_LABEL: &str = "generated";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("operation {operation} not allowed in state {state:?}")]
    StateViolation {
        state: DialogueState,
        operation: &'static str,
    },
    #[error("no image has been imported")]
    NoImage,
    #[error("brief is empty")]
    EmptyBrief,
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("unknown music option {0}")]
    UnknownOption(String),
    #[error("storing generated music: {0}")]
    Catalog(#[from] CatalogError),
}

/// Port-level failure, surfaced as [`AgentError::BackendFailure`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct BackendError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueState {
    #[default]
    AwaitImage,
    Described,
    OptionsOffered,
    MusicSelected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Speaker,
    pub text: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MusicOption {
    pub id: String,
    pub asset_id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRound {
    pub context: String,
    pub options: Vec<MusicOption>,
}

/// What a describer sees.
#[derive(Debug, Clone, Copy)]
pub struct DescribeRequest<'a> {
    pub image: &'a ImageRef,
    pub image_bytes: Option<&'a [u8]>,
    pub labels: &'a [String],
}

pub trait DescriberPort: Send + Sync {
    fn describe(&self, request: DescribeRequest<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedTrack {
    pub caption: String,
    pub wav: Vec<u8>,
}

pub trait MusicGenPort: Send + Sync {
    fn generate(&self, brief: &str, feedback: &[String]) -> Result<Vec<GeneratedTrack>, BackendError>;
}

/// Generation context: the brief followed by each feedback line.
pub fn generation_context(brief: &str, feedback: &[String]) -> String {
    let mut context = brief.to_string();
    for line in feedback {
        context.push('\n');
        context.push_str(line);
    }
    context
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dialogue {
    pub state: DialogueState,
    pub turns: Vec<ChatTurn>,
    pub brief: Option<String>,
    pub feedback: Vec<String>,
    pub rounds: Vec<GenerationRound>,
    pub selected_option: Option<String>,
}

impl Dialogue {
    fn require(&self, allowed: &[DialogueState], operation: &'static str) -> Result<(), AgentError> {
        if allowed.contains(&self.state) {
            Ok(())
        } else {
            Err(AgentError::StateViolation {
                state: self.state,
                operation,
            })
        }
    }

    fn push(&mut self, role: Speaker, text: impl Into<String>, timestamp_ms: u64) -> ChatTurn {
        let turn = ChatTurn {
            role,
            text: text.into(),
            timestamp_ms,
        };
        self.turns.push(turn.clone());
        turn
    }

    pub fn option(&self, option_id: &str) -> Option<&MusicOption> {
        self.rounds
            .iter()
            .flat_map(|r| &r.options)
            .find(|o| o.id == option_id)
    }

    /// Scene recognition: the describer's text followed by the fixed opening
    /// question. The dialogue is untouched when the describer fails.
    pub fn describe_scene(
        &mut self,
        scene: Option<&Scene>,
        image_bytes: Option<&[u8]>,
        describer: &dyn DescriberPort,
        now_ms: u64,
    ) -> Result<[ChatTurn; 2], AgentError> {
        self.require(&[DialogueState::AwaitImage], "describe")?;
        let scene = scene.ok_or(AgentError::NoImage)?;
        let labels = scene.labels();
        let text = describer
            .describe(DescribeRequest {
                image: &scene.image,
                image_bytes,
                labels: &labels,
            })
            .map_err(|e| AgentError::BackendFailure(e.0))?;
        let description = self.push(Speaker::Agent, text, now_ms);
        let question = self.push(Speaker::Agent, OPENING_QUESTION, now_ms);
        self.state = DialogueState::Described;
        Ok([description, question])
    }

    /// Starts a fresh brief and offers a round of options.
    pub fn request_music(
        &mut self,
        brief: &str,
        generator: &dyn MusicGenPort,
        catalog: &mut CatalogStore,
        now_ms: u64,
    ) -> Result<Vec<MusicOption>, AgentError> {
        self.require(
            &[DialogueState::Described, DialogueState::OptionsOffered],
            "request_music",
        )?;
        let brief = brief.trim();
        if brief.is_empty() {
            return Err(AgentError::EmptyBrief);
        }
        let options = self.generate_round(brief, &[], generator, catalog)?;
        self.brief = Some(brief.to_string());
        self.feedback.clear();
        self.finish_round(brief, options, now_ms)
    }

    /// Adds a feedback line to the running context and offers a new round.
    /// Earlier rounds stay selectable.
    pub fn refine_music(
        &mut self,
        feedback: &str,
        generator: &dyn MusicGenPort,
        catalog: &mut CatalogStore,
        now_ms: u64,
    ) -> Result<Vec<MusicOption>, AgentError> {
        self.require(&[DialogueState::OptionsOffered], "refine_music")?;
        let feedback = feedback.trim();
        if feedback.is_empty() {
            return Err(AgentError::EmptyBrief);
        }
        let brief = self.brief.clone().unwrap_or_default();
        let mut lines = self.feedback.clone();
        lines.push(feedback.to_string());
        let options = self.generate_round(&brief, &lines, generator, catalog)?;
        self.feedback = lines;
        self.finish_round(feedback, options, now_ms)
    }

    fn generate_round(
        &self,
        brief: &str,
        feedback: &[String],
        generator: &dyn MusicGenPort,
        catalog: &mut CatalogStore,
    ) -> Result<Vec<MusicOption>, AgentError> {
        let tracks = generator
            .generate(brief, feedback)
            .map_err(|e| AgentError::BackendFailure(e.0))?;
        if tracks.len() != OPTIONS_PER_ROUND {
            return Err(AgentError::BackendFailure(format!(
                "expected {OPTIONS_PER_ROUND} options, backend returned {}",
                tracks.len()
            )));
        }
        for (i, track) in tracks.iter().enumerate() {
            decode_wav(&track.wav).map_err(|e| {
                AgentError::BackendFailure(format!("option {} is not usable audio: {e}", i + 1))
            })?;
        }
        let round = self.rounds.len() + 1;
        let labels = vec![GENERATED_MUSIC_LABEL.to_string()];
        tracks
            .into_iter()
            .enumerate()
            .map(|(i, track)| {
                let asset = catalog.ingest(&track.wav, Role::Music, &labels, false)?;
                Ok(MusicOption {
                    id: format!("r{round}-o{}", i + 1),
                    asset_id: asset.id,
                    caption: track.caption,
                })
            })
            .collect()
    }

    fn finish_round(
        &mut self,
        user_text: &str,
        options: Vec<MusicOption>,
        now_ms: u64,
    ) -> Result<Vec<MusicOption>, AgentError> {
        let context = generation_context(self.brief.as_deref().unwrap_or(""), &self.feedback);
        self.push(Speaker::User, user_text, now_ms);
        let listing: Vec<String> = options
            .iter()
            .map(|o| format!("{}: {}", o.id, o.caption))
            .collect();
        self.push(
            Speaker::Agent,
            format!("Here are three options. {}", listing.join("; ")),
            now_ms,
        );
        self.rounds.push(GenerationRound {
            context,
            options: options.clone(),
        });
        self.state = DialogueState::OptionsOffered;
        Ok(options)
    }

    /// Picks any offered option as background music.
    pub fn select_music(
        &mut self,
        option_id: &str,
        timeline: &mut Option<Timeline>,
    ) -> Result<MusicOption, AgentError> {
        self.require(&[DialogueState::OptionsOffered], "select_music")?;
        let option = self
            .option(option_id)
            .cloned()
            .ok_or_else(|| AgentError::UnknownOption(option_id.to_string()))?;
        timeline.get_or_insert_with(Timeline::default).music_asset = Some(option.asset_id.clone());
        self.selected_option = Some(option.id.clone());
        self.state = DialogueState::MusicSelected;
        Ok(option)
    }
}

/// Offline describer: lists the scene's distinct labels in sorted order.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDescriber;

impl DescriberPort for MockDescriber {
    fn describe(&self, request: DescribeRequest<'_>) -> Result<String, BackendError> {
        let labels: BTreeSet<&str> = request.labels.iter().map(String::as_str).collect();
        if labels.is_empty() {
            return Ok("A scene.".to_string());
        }
        let joined: Vec<&str> = labels.into_iter().collect();
        Ok(format!("A scene containing: {}.", joined.join(", ")))
    }
}

pub const MOCK_RATE: u32 = 48_000;
pub const MOCK_SECONDS: u32 = 8;
pub const MOCK_AMPLITUDE: f64 = 0.3;
/// Root, major third and fifth above it.
pub const MOCK_SEMITONES: [i32; 3] = [0, 4, 7];

/// `220 + (byte sum of context mod 220)` Hz.
pub fn mock_root_frequency(context: &str) -> f64 {
    let sum: u64 = context.bytes().map(u64::from).sum();
    220.0 + (sum % 220) as f64
}

pub fn mock_option_frequencies(context: &str) -> [f64; 3] {
    let root = mock_root_frequency(context);
    MOCK_SEMITONES.map(|st| root * 2f64.powf(f64::from(st) / 12.0))
}

/// Offline generator: three 8 s mono sine stems at 48 kHz.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockMusicGenerator;

impl MockMusicGenerator {
    pub fn sine_stem(frequency: f64) -> PcmBuffer {
        let frames = (MOCK_RATE * MOCK_SECONDS) as usize;
        let step = TAU * frequency / f64::from(MOCK_RATE);
        PcmBuffer::mono(
            MOCK_RATE,
            (0..frames).map(|n| MOCK_AMPLITUDE * (step * n as f64).sin()).collect(),
        )
    }
}

impl MusicGenPort for MockMusicGenerator {
    fn generate(&self, brief: &str, feedback: &[String]) -> Result<Vec<GeneratedTrack>, BackendError> {
        let context = generation_context(brief, feedback);
        Ok(mock_option_frequencies(&context)
            .iter()
            .enumerate()
            .map(|(i, f)| GeneratedTrack {
                caption: format!("Option {}: sine stem at {f:.2} Hz", i + 1),
                wav: encode_wav_pcm16(&Self::sine_stem(*f), false),
            })
            .collect())
    }
}

/// Describer that always fails, for exercising error paths.
#[derive(Debug, Clone, Default)]
pub struct FailingDescriber(pub String);

impl DescriberPort for FailingDescriber {
    fn describe(&self, _request: DescribeRequest<'_>) -> Result<String, BackendError> {
        Err(BackendError(self.0.clone()))
    }
}

/// Generator that always fails, for exercising error paths.
#[derive(Debug, Clone, Default)]
pub struct FailingGenerator(pub String);

impl MusicGenPort for FailingGenerator {
    fn generate(&self, _brief: &str, _feedback: &[String]) -> Result<Vec<GeneratedTrack>, BackendError> {
        Err(BackendError(self.0.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BoundingBox, ContentHash, DetectedObject, ImageFormat, ObjectSource};

    fn scene(labels: &[&str]) -> Scene {
        let objects = labels
            .iter()
            .enumerate()
            .map(|(i, l)| DetectedObject {
                id: format!("obj-{}", i + 1),
                bbox: BoundingBox::new(0, 0, 5, 5),
                label: l.to_string(),
                confidence: 0.5,
                source: ObjectSource::Auto,
            })
            .collect();
        Scene::new(
            ImageRef {
                id: "img".into(),
                width: 10,
                height: 10,
                format: ImageFormat::Png,
                content_hash: ContentHash([1; 32]),
            },
            objects,
        )
        .unwrap()
    }

    fn catalog() -> (tempfile::TempDir, CatalogStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = CatalogStore::open(dir.path()).unwrap();
        (dir, store)
    }

    fn described() -> Dialogue {
        let mut d = Dialogue::default();
        d.describe_scene(Some(&scene(&["dog"])), None, &MockDescriber, 1).unwrap();
        d
    }

    #[test]
    fn describe_with_labels() {
        let mut d = Dialogue::default();
        let [first, second] = d
            .describe_scene(Some(&scene(&["tree", "dog", "tree"])), None, &MockDescriber, 5)
            .unwrap();
        assert_eq!(first.text, "A scene containing: dog, tree.");
        assert_eq!(second.text, OPENING_QUESTION);
        assert_eq!(second.role, Speaker::Agent);
        assert_eq!(d.state, DialogueState::Described);
        assert_eq!(d.turns.len(), 2);
    }

    #[test]
    fn describe_empty_scene() {
        let mut d = Dialogue::default();
        let [first, _] = d.describe_scene(Some(&scene(&[])), None, &MockDescriber, 0).unwrap();
        assert_eq!(first.text, "A scene.");
    }

    #[test]
    fn describe_failure_keeps_state() {
        let mut d = Dialogue::default();
        let err = d
            .describe_scene(Some(&scene(&["dog"])), None, &FailingDescriber("down".into()), 0)
            .unwrap_err();
        assert!(matches!(err, AgentError::BackendFailure(_)));
        assert_eq!(d, Dialogue::default());
        assert!(matches!(
            d.describe_scene(None, None, &MockDescriber, 0),
            Err(AgentError::NoImage)
        ));
    }

    #[test]
    fn calm_frequencies() {
        assert_eq!("calm".bytes().map(u64::from).sum::<u64>(), 413);
        assert_eq!(mock_root_frequency("calm"), 413.0);
        let f = mock_option_frequencies("calm");
        assert_eq!(f[0], 413.0);
        assert!((f[1] - 413.0 * 2f64.powf(4.0 / 12.0)).abs() < 1e-12);
        assert!((f[2] - 413.0 * 2f64.powf(7.0 / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn request_music_offers_three() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        let options = d.request_music("  calm ", &MockMusicGenerator, &mut cat, 2).unwrap();
        assert_eq!(options.len(), OPTIONS_PER_ROUND);
        assert_eq!(d.state, DialogueState::OptionsOffered);
        assert_eq!(d.brief.as_deref(), Some("calm"));
        for o in &options {
            let asset = cat.catalog().get(&o.asset_id).unwrap();
            assert_eq!(asset.role, Role::Music);
            assert_eq!(asset.duration_ms, 8000);
            assert_eq!(asset.sample_rate, 48_000);
        }
        assert!(options[0].caption.contains("413.00 Hz"));
    }

    #[test]
    fn empty_brief_rejected() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        assert!(matches!(
            d.request_music("   ", &MockMusicGenerator, &mut cat, 0),
            Err(AgentError::EmptyBrief)
        ));
        assert_eq!(d.state, DialogueState::Described);
    }

    #[test]
    fn refine_keeps_history() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        d.request_music("calm", &MockMusicGenerator, &mut cat, 0).unwrap();
        let second = d.refine_music("more birds", &MockMusicGenerator, &mut cat, 1).unwrap();
        assert_eq!(d.state, DialogueState::OptionsOffered);
        assert_eq!(d.rounds.len(), 2);
        assert_eq!(d.rounds[1].context, "calm\nmore birds");
        // "calm\nmore birds": 413 + 10 + 999 = 1422 -> 1422 mod 220 = 102
        assert_eq!(mock_root_frequency(&d.rounds[1].context), 322.0);
        assert_ne!(mock_root_frequency(&d.rounds[0].context), 322.0);
        assert_eq!(second[0].id, "r2-o1");
        assert!(d.option("r1-o2").is_some());
        assert_eq!(cat.catalog().len(), 6);
    }

    #[test]
    fn refine_before_options_is_state_violation() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        assert!(matches!(
            d.refine_music("x", &MockMusicGenerator, &mut cat, 0),
            Err(AgentError::StateViolation { state: DialogueState::Described, .. })
        ));
    }

    #[test]
    fn generator_failure_is_retryable() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        let before = d.clone();
        assert!(matches!(
            d.request_music("calm", &FailingGenerator("boom".into()), &mut cat, 0),
            Err(AgentError::BackendFailure(_))
        ));
        assert_eq!(d, before);
        assert!(d.request_music("calm", &MockMusicGenerator, &mut cat, 0).is_ok());
    }

    struct ShortGenerator;

    impl MusicGenPort for ShortGenerator {
        fn generate(&self, brief: &str, fb: &[String]) -> Result<Vec<GeneratedTrack>, BackendError> {
            let mut tracks = MockMusicGenerator.generate(brief, fb)?;
            tracks.pop();
            Ok(tracks)
        }
    }

    #[test]
    fn wrong_option_count_is_backend_failure() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        assert!(matches!(
            d.request_music("calm", &ShortGenerator, &mut cat, 0),
            Err(AgentError::BackendFailure(_))
        ));
        assert!(cat.catalog().is_empty());
    }

    #[test]
    fn select_examples() {
        let (_dir, mut cat) = catalog();
        let mut d = described();
        let options = d.request_music("calm", &MockMusicGenerator, &mut cat, 0).unwrap();
        let mut timeline = None;
        assert!(matches!(
            d.select_music("r9-o9", &mut timeline),
            Err(AgentError::UnknownOption(_))
        ));
        let chosen = d.select_music("r1-o2", &mut timeline).unwrap();
        assert_eq!(chosen, options[1]);
        assert_eq!(timeline.unwrap().music_asset.as_deref(), Some(options[1].asset_id.as_str()));
        assert_eq!(d.state, DialogueState::MusicSelected);
        assert!(matches!(
            d.select_music("r1-o1", &mut None),
            Err(AgentError::StateViolation { .. })
        ));
    }

    #[test]
    fn mock_is_deterministic() {
        let a = MockMusicGenerator.generate("calm", &["slower".into()]).unwrap();
        let b = MockMusicGenerator.generate("calm", &["slower".into()]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].wav, a[1].wav);
    }
}
