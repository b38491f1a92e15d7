//! Synthesizes a performance to WAV through segmentation and
//! cross-correlation stitching, then compares it with a direct render.
//!
//! cargo run --release --example synthesize_audio [out.wav]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2a_core::metrics::{chroma_mse, spectrogram_mse};
use s2a_core::pipeline::corpus::{generate_score, perform};
use s2a_core::pipeline::{synthesize, PerformerProfile, SynthesisConfig};
use s2a_core::synth::{chromagram, midi_spectrogram, render_audio};

fn main() -> s2a_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("s2a_performance.wav"));
    let score = generate_score(120, &mut ChaCha8Rng::seed_from_u64(5));
    let perf = perform(&score, &PerformerProfile::preset(0), 8.0);
    let cfg = SynthesisConfig::default();
    let stitched = synthesize(&perf, &cfg)?;
    stitched.write_wav(&path)?;

    let direct = render_audio(&perf, &cfg.params);
    let spec = |w| midi_spectrogram(w, cfg.frame_len, cfg.hop);
    let (a, b) = (spec(&stitched), spec(&direct));
    println!("wrote {} ({:.1}s)", path.display(), stitched.duration_seconds());
    println!(
        "stitched vs direct: spectrogram MSE {:.2e}, chroma MSE {:.2e}",
        spectrogram_mse(&a, &b)?,
        chroma_mse(&chromagram(&a), &chromagram(&b))?
    );
    Ok(())
}
