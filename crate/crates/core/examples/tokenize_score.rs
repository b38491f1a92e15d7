//! Tokenizes a score into six-feature tuples and cuts it into model-sized
//! segments.
//!
//! cargo run --example tokenize_score

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2a_core::midi::resample_grid;
use s2a_core::pipeline::corpus::generate_score;
use s2a_core::tokenizer::{segment, to_tsv, tokenize, VocabSpec, TICKS_PER_BEAT};

fn main() -> s2a_core::Result<()> {
    let score = generate_score(600, &mut ChaCha8Rng::seed_from_u64(2));
    let grid = resample_grid(&score, TICKS_PER_BEAT);
    let tokens = tokenize(&grid, true)?;
    println!("vocabulary sizes (pitch, velocity, duration, ioi, position, bar): {:?}", VocabSpec::default().sizes());
    print!("{}", to_tsv(&tokens[..8]).lines().map(|l| format!("  {l}\n")).collect::<String>());
    for s in segment(&tokens, 0) {
        println!("segment at note {:>3}: {} real notes", s.source_offset, s.n_notes());
    }
    Ok(())
}
