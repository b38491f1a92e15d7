//! Command-level orchestration: configuration, the synthetic corpus and the
//! `s2a` subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod corpus;

pub use commands::{
    cmd_align, cmd_demo_data, cmd_evaluate, cmd_render, cmd_render_corpus, cmd_synth, cmd_tokenize,
    cmd_train, synthesize, training_pairs, EvaluationReport, TrainOutcome,
};
pub use config::{PipelineConfig, SamplingConfig, SynthesisConfig};
pub use corpus::{generate_corpus, Corpus, PerformerProfile, Split, SyntheticCorpusSpec};
