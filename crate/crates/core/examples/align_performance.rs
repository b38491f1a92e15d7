//! Aligns a synthetic performance to its score note by note.
//!
//! cargo run --example align_performance

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2a_core::align::{align_notes, DEFAULT_GAP_PENALTY};
use s2a_core::pipeline::corpus::{generate_score, perform};
use s2a_core::pipeline::PerformerProfile;

fn main() {
    let score = generate_score(120, &mut ChaCha8Rng::seed_from_u64(3));
    let mut perf = perform(&score, &PerformerProfile::preset(2), 8.0);
    // drop a few notes to show unmatched score notes
    for k in [90, 40, 10] {
        perf.notes.remove(k);
    }
    let map = align_notes(&score, &perf, DEFAULT_GAP_PENALTY);
    println!(
        "{} pairs, unmatched score notes {:?}, unmatched performance notes {:?}",
        map.pairs.len(),
        map.unmatched_score,
        map.unmatched_perf
    );
    for &(i, j) in map.pairs.iter().take(6) {
        let (s, p) = (&score.notes[i], &perf.notes[j]);
        println!(
            "  pitch {:>3}: score onset {:>5} -> performed {:>5} (velocity {})",
            s.pitch, s.onset_ticks, p.onset_ticks, p.velocity
        );
    }
}
