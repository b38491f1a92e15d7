//! Scores two synthetic performers against each other with the symbolic
//! metrics: KL divergence, correlation and normalized DTW distance.
//!
//! cargo run --release --example evaluate_metrics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2a_core::align::{align_notes, DEFAULT_GAP_PENALTY};
use s2a_core::metrics::{evaluate_m2m, EvalItem};
use s2a_core::midi::resample_grid;
use s2a_core::pipeline::corpus::{generate_score, perform};
use s2a_core::pipeline::PerformerProfile;
use s2a_core::tokenizer::TICKS_PER_BEAT;

fn main() -> s2a_core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pairs = Vec::new();
    for i in 0..4 {
        let score = generate_score(200, &mut rng);
        let pred = resample_grid(&perform(&score, &PerformerProfile::preset(0), 8.0), TICKS_PER_BEAT);
        let target = resample_grid(&perform(&score, &PerformerProfile::preset(1), 8.0), TICKS_PER_BEAT);
        let map = align_notes(&pred, &target, DEFAULT_GAP_PENALTY);
        pairs.push((format!("piece_{i}"), pred, target, map));
    }
    let items: Vec<EvalItem<'_>> = pairs
        .iter()
        .map(|(name, prediction, target, alignment)| EvalItem {
            name,
            prediction,
            target,
            alignment,
        })
        .collect();
    println!("{}", evaluate_m2m(&items)?.summary_table());
    Ok(())
}
