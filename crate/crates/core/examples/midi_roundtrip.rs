//! Writes a synthetic score to a Standard MIDI File, reads it back and
//! checks the two sequences agree field by field.
//!
//! cargo run --example midi_roundtrip [path.mid]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2a_core::midi::{read_midi_file, write_midi_file};
use s2a_core::pipeline::corpus::generate_score;

fn main() -> s2a_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("s2a_roundtrip.mid"));
    let score = generate_score(64, &mut ChaCha8Rng::seed_from_u64(1));
    write_midi_file(&path, &score)?;
    let back = read_midi_file(&path)?;
    println!(
        "{}: {} notes, ppq {}, {:.2}s, identical after reading back: {}",
        path.display(),
        back.notes.len(),
        back.ppq,
        back.duration_seconds(),
        back == score
    );
    Ok(())
}
