use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sample_with_rng, M2MModel, SampledTokens};
use crate::error::Result;
use crate::midi::{resample_grid, NoteSequence, TempoEvent, DEFAULT_US_PER_QUARTER};
use crate::tokenizer::{detokenize, segment, tokenize, TokenTuple, TICKS_PER_BEAT};

/// Runs the model over every 256-note window of a tokenized score and
/// concatenates the sampled tokens in source order.
pub fn predict_tokens(
    model: &M2MModel,
    score_tokens: &[TokenTuple],
    performer_id: usize,
    temperature: f64,
    top_p: f64,
    seed: u64,
) -> Result<SampledTokens> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SampledTokens::default();
    for seg in segment(score_tokens, performer_id) {
        let dist = model.forward(&seg)?;
        let s = sample_with_rng(&dist, temperature, top_p, &mut rng);
        debug_assert_eq!(out.velocity.len(), seg.source_offset);
        out.velocity.extend(s.velocity);
        out.ioi.extend(s.ioi);
        out.duration.extend(s.duration);
    }
    Ok(out)
}

/// Renders a score into a performance: pitches come from the score, velocity,
/// timing and duration from the model. The result is on the 96-tick grid and
/// keeps the score's opening tempo and its time signatures.
pub fn predict_performance(
    model: &M2MModel,
    score: &NoteSequence,
    performer_id: usize,
    temperature: f64,
    top_p: f64,
    seed: u64,
) -> Result<NoteSequence> {
    let grid = if score.ppq == TICKS_PER_BEAT {
        score.clone()
    } else {
        resample_grid(score, TICKS_PER_BEAT)
    };
    let tokens = tokenize(&grid, true)?;
    let predicted = predict_tokens(model, &tokens, performer_id, temperature, top_p, seed)?;
    let pitches: Vec<u32> = tokens.iter().map(|t| t.pitch).collect();
    let mut perf = detokenize(
        &pitches,
        &predicted.velocity,
        &predicted.ioi,
        &predicted.duration,
        &grid.time_signatures,
    )?;
    let opening = grid
        .tempi
        .iter()
        .take_while(|t| t.tick == 0)
        .last()
        .map_or(DEFAULT_US_PER_QUARTER, |t| t.microseconds_per_quarter);
    perf.tempi = vec![TempoEvent {
        tick: 0,
        microseconds_per_quarter: opening,
    }];
    Ok(perf)
}
