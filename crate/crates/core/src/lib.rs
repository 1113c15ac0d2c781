//! Headless composition engine for photo-driven sound memories.
//!
//! A project starts from an imported image whose objects are detected or
//! boxed by hand ([`scene`]). Objects are bound to one-shot effects from the
//! [`catalog`], a conversational agent produces background music options
//! ([`agent`]), taps are recorded against a transport ([`timeline`]) and the
//! result is bounced offline to a 16-bit WAV ([`audio`]). The [`stats`]
//! module carries the questionnaire scoring and paired-t machinery used to
//! evaluate the tool.

pub mod agent;
pub mod audio;
pub mod catalog;
pub mod gain;
pub mod project;
pub mod scene;
pub mod stats;
pub mod store;
pub mod timeline;

pub use gain::Gain;
