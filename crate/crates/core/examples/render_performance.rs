//! Renders a score with an untrained model at a few sampling settings. Train
//! first (see `train_overfit`) for musically meaningful output.
//!
//! cargo run --release --example render_performance

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2a_core::model::predict_performance;
use s2a_core::pipeline::corpus::generate_score;
use s2a_core::{M2MConfig, M2MModel};

fn main() -> s2a_core::Result<()> {
    let score = generate_score(48, &mut ChaCha8Rng::seed_from_u64(4));
    let model = M2MModel::new(M2MConfig {
        dropout: 0.0,
        ..M2MConfig::with_shape(2, 64, 4, 256, 2)
    })?;
    for (temperature, top_p) in [(0.0, 1.0), (1.0, 0.9), (1.5, 1.0)] {
        let perf = predict_performance(&model, &score, 1, temperature, top_p, 42)?;
        let velocities: Vec<u8> = perf.notes.iter().take(8).map(|n| n.velocity).collect();
        println!(
            "temperature {temperature:<6} top_p {top_p}: {:.2}s, first velocities {velocities:?}",
            perf.duration_seconds()
        );
    }
    Ok(())
}
