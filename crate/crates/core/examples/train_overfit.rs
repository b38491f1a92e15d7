//! Overfits the desk-scale renderer on four synthetic segments and reports
//! training-set accuracy and correlation per feature.
//!
//! cargo run --release --example train_overfit

use std::time::Instant;

use s2a_core::metrics::pearson_values;
use s2a_core::model::{M2MConfig, M2MModel};
use s2a_core::pipeline::{generate_corpus, SyntheticCorpusSpec};
use s2a_core::trainer::{aligned_segments, greedy_predictions, TrainConfig, Trainer};

fn main() -> s2a_core::Result<()> {
    let corpus = generate_corpus(&SyntheticCorpusSpec {
        n_pieces: 4,
        notes_per_piece: 256,
        n_performers: 2,
        seed: 7,
        ..Default::default()
    })?;
    let mut data = Vec::new();
    for it in &corpus.items {
        data.extend(aligned_segments(&it.score, &it.performance, &it.alignment, it.performer_id)?);
    }
    let model = M2MModel::new(M2MConfig {
        dropout: 0.0,
        seed: 1,
        ..M2MConfig::with_shape(2, 64, 4, 256, 2)
    })?;
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            learning_rate: 1e-3,
            warmup_steps: 40,
            batch_size: 4,
            max_steps: Some(2000),
            ..TrainConfig::default()
        },
    )?;
    let start = Instant::now();
    loop {
        let taken = trainer.run_steps(&data, 100)?;
        let preds = greedy_predictions(&trainer.model, &data)?;
        let mut acc = [0.0; 3];
        let mut corr = [0.0; 3];
        for (k, (p, t)) in preds.iter().enumerate() {
            acc[k] = p.iter().zip(t).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            let pf: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
            let tf: Vec<f64> = t.iter().map(|&v| f64::from(v)).collect();
            corr[k] = pearson_values(&pf, &tf).unwrap_or(f64::NAN);
        }
        let last = trainer.log.entries.last().expect("trained");
        println!(
            "step {:4}  loss {:.3?}  acc {:.3?}  r {:.3?}  w {:.2?}  {:.0}s",
            trainer.steps_taken(),
            last.losses,
            acc,
            corr,
            last.weights,
            start.elapsed().as_secs_f64()
        );
        let done = acc.iter().all(|&a| a > 0.9) && corr.iter().all(|&c| c >= 0.9);
        if done || taken == 0 {
            break;
        }
    }
    Ok(())
}
