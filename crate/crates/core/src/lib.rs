//! Score-to-audio rendering.
//!
//! A score MIDI file is tokenized into note tuples, a Transformer encoder
//! predicts expressive velocity, timing and duration for each note, and the
//! resulting performance is synthesized to audio. Metrics compare predicted
//! and reference performances at the token and audio level.

pub mod align;
pub mod error;
pub mod metrics;
pub mod midi;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
pub use midi::NoteSequence;
pub use model::{M2MConfig, M2MModel};
