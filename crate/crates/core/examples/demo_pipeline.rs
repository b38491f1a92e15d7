//! Runs the whole pipeline in a temporary directory: synthetic corpus,
//! a short training run, rendering the test split, synthesis and evaluation.
//!
//! cargo run --release --example demo_pipeline

use s2a_core::pipeline::{cmd_demo_data, cmd_evaluate, cmd_render_corpus, cmd_synth, cmd_train, PipelineConfig};

fn main() -> s2a_core::Result<()> {
    let root = std::env::temp_dir().join("s2a_demo");
    let mut cfg = PipelineConfig::default();
    cfg.paths.corpus_dir = root.join("data");
    cfg.paths.output_dir = root.join("out");
    cfg.paths.checkpoint = root.join("out/model.s2a");
    cfg.corpus.n_pieces = 10;
    cfg.corpus.notes_per_piece = 128;
    cfg.train.max_steps = Some(100);
    cfg.train.learning_rate = 1e-3;
    cfg.train.batch_size = 4;

    cmd_demo_data(&cfg)?;
    let trained = cmd_train(&cfg)?;
    let last = trained.log.entries.last().map_or(f64::NAN, |e| e.total);
    println!("trained {} steps on {} segments, final loss {last:.3}", trained.log.entries.len(), trained.n_segments);
    let rendered = cmd_render_corpus(&cfg)?;
    cmd_synth(&cfg.paths.output_dir.join("rendered"), &cfg.paths.output_dir.join("audio"), &cfg.synthesis)?;
    let report = cmd_evaluate(
        &cfg,
        &cfg.paths.output_dir.join("rendered"),
        &cfg.paths.corpus_dir.join("performances"),
        None,
        &cfg.paths.output_dir,
    )?;
    println!("rendered {} pieces into {}", rendered.len(), root.display());
    println!("{}", report.metrics.summary_table());
    Ok(())
}
