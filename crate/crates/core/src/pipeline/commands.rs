use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{PipelineConfig, SamplingConfig, SynthesisConfig};
use super::corpus::{generate_corpus, Corpus, Split};
use crate::align::{align_notes, AlignmentMap};
use crate::error::{Error, Result};
use crate::metrics::{chroma_mse, evaluate_m2m, spectrogram_mse, EvalItem, MetricReport};
use crate::midi::{read_midi_file, resample_grid, write_midi_file, NoteSequence};
use crate::model::{load_checkpoint, predict_performance, save_checkpoint, M2MModel};
use crate::synth::{chromagram, midi_spectrogram, render_audio, segment_audio, stitch_segments, Waveform};
use crate::tokenizer::{to_tsv, tokenize, TokenSegment, TICKS_PER_BEAT};
use crate::trainer::{aligned_segments, TrainLog, Trainer};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Saves the configuration a command ran with, seeds included.
fn record_run(cfg: &PipelineConfig, dir: &Path, command: &str) -> Result<()> {
    write_text(&dir.join(format!("{command}.config.json")), &cfg.to_json()?)
}

/// Sorted `.mid` file stems in a directory.
fn midi_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "mid") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Generates the synthetic corpus into `paths.corpus_dir`.
pub fn cmd_demo_data(cfg: &PipelineConfig) -> Result<Corpus> {
    let corpus = generate_corpus(&cfg.corpus)?;
    let dir = &cfg.paths.corpus_dir;
    corpus.write(dir)?;
    record_run(cfg, dir, "demo-data")?;
    log::info!(
        "wrote {} pieces for {} performers to {} (seed {})",
        corpus.items.len(),
        cfg.corpus.n_performers,
        dir.display(),
        cfg.corpus.seed
    );
    Ok(corpus)
}

/// Writes the token tuples of a MIDI file as TSV; returns the note count.
pub fn cmd_tokenize(input: &Path, output: &Path, is_score: bool) -> Result<usize> {
    let seq = resample_grid(&read_midi_file(input)?, TICKS_PER_BEAT);
    let tokens = tokenize(&seq, is_score)?;
    write_text(output, &to_tsv(&tokens))?;
    Ok(tokens.len())
}

pub fn cmd_align(score: &Path, performance: &Path, output: &Path, gap_penalty: f64) -> Result<AlignmentMap> {
    let map = align_notes(&read_midi_file(score)?, &read_midi_file(performance)?, gap_penalty);
    write_text(output, &map.to_json()?)?;
    log::info!(
        "{} pairs, {} unmatched score notes, {} unmatched performance notes",
        map.pairs.len(),
        map.unmatched_score.len(),
        map.unmatched_perf.len()
    );
    Ok(map)
}

/// Aligned (score, performance) segments of every item in a split.
pub fn training_pairs(corpus: &Corpus, split: Split) -> Result<Vec<(TokenSegment, TokenSegment)>> {
    let mut pairs = Vec::new();
    for item in corpus.split(split) {
        pairs.extend(aligned_segments(
            &item.score,
            &item.performance,
            &item.alignment,
            item.performer_id,
        )?);
    }
    Ok(pairs)
}

pub struct TrainOutcome {
    pub model: M2MModel,
    pub log: TrainLog,
    pub n_segments: usize,
}

/// Trains on the corpus training split, then writes the checkpoint and
/// `train_log.csv` into the output directory.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let corpus = Corpus::load(&cfg.paths.corpus_dir)?;
    let needed = corpus.items.iter().map(|it| it.performer_id + 1).max().unwrap_or(0);
    if needed > cfg.model.n_performers {
        return Err(Error::Usage(format!(
            "corpus has {needed} performers but the model is configured for {}",
            cfg.model.n_performers
        )));
    }
    let data = training_pairs(&corpus, Split::Train)?;
    if data.is_empty() {
        return Err(Error::Config("corpus has no training items".into()));
    }
    let model = M2MModel::new(cfg.model.clone())?;
    log::info!(
        "training {} parameters on {} segments (seed {})",
        model.n_params(),
        data.len(),
        cfg.train.seed
    );
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    while trainer.run_steps(&data, 50)? > 0 {
        if let Some(last) = trainer.log.entries.last() {
            log::info!(
                "step {} total {:.4} losses {:.4?} weights {:.3?}",
                last.step,
                last.total,
                last.losses,
                last.weights
            );
        }
    }
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    if let Some(parent) = cfg.paths.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_checkpoint(&trainer.model, &cfg.paths.checkpoint)?;
    write_text(&out.join("train_log.csv"), &trainer.log.to_csv())?;
    record_run(cfg, out, "train")?;
    Ok(TrainOutcome {
        n_segments: data.len(),
        model: trainer.model,
        log: trainer.log,
    })
}

/// Renders one score file with a trained model.
pub fn cmd_render(
    model: &M2MModel,
    score: &Path,
    output: &Path,
    performer_id: usize,
    sampling: &SamplingConfig,
) -> Result<NoteSequence> {
    let seq = read_midi_file(score)?;
    let perf = predict_performance(model, &seq, performer_id, sampling.temperature, sampling.top_p, sampling.seed)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_midi_file(output, &perf)?;
    log::info!(
        "rendered {} notes for performer {performer_id} (seed {})",
        perf.notes.len(),
        sampling.seed
    );
    Ok(perf)
}

/// Renders every test-split score of the corpus into `output_dir/rendered`,
/// each with its own performer. Item `i` samples with seed `seed + i`.
pub fn cmd_render_corpus(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let model = load_checkpoint(&cfg.paths.checkpoint)?;
    let corpus = Corpus::load(&cfg.paths.corpus_dir)?;
    let dir = cfg.paths.output_dir.join("rendered");
    create_dir(&dir)?;
    let mut written = Vec::new();
    for (i, item) in corpus.split(Split::Test).enumerate() {
        let sampling = SamplingConfig {
            seed: cfg.sampling.seed.wrapping_add(i as u64),
            ..cfg.sampling
        };
        let path = dir.join(format!("{}.mid", item.name));
        let perf = predict_performance(
            &model,
            &item.score,
            item.performer_id,
            sampling.temperature,
            sampling.top_p,
            sampling.seed,
        )?;
        write_midi_file(&path, &perf)?;
        written.push(path);
    }
    record_run(cfg, &cfg.paths.output_dir, "render")?;
    Ok(written)
}

/// Additive render of a performance. Anything longer than one segment goes
/// through segmentation and cross-correlation stitching, with the overlap
/// doubling as the crossfade.
pub fn synthesize(seq: &NoteSequence, cfg: &SynthesisConfig) -> Result<Waveform> {
    let direct = render_audio(seq, &cfg.params);
    if direct.duration_seconds() <= cfg.segment_seconds {
        return Ok(direct);
    }
    let segments = segment_audio(&direct, cfg.segment_seconds, cfg.overlap_seconds);
    let stitched = stitch_segments(&segments, cfg.max_lag_seconds, cfg.overlap_seconds)?;
    if stitched.warnings > 0 {
        log::warn!("{} joins fell back to a plain crossfade", stitched.warnings);
    }
    Ok(stitched.waveform)
}

/// Synthesizes a MIDI file, or every `.mid` in a directory, to WAV.
pub fn cmd_synth(input: &Path, output: &Path, cfg: &SynthesisConfig) -> Result<Vec<PathBuf>> {
    let jobs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        create_dir(output)?;
        midi_stems(input)?
            .into_iter()
            .map(|s| (input.join(format!("{s}.mid")), output.join(format!("{s}.wav"))))
            .collect()
    } else {
        vec![(input.to_path_buf(), output.to_path_buf())]
    };
    for (src, dst) in &jobs {
        let seq = read_midi_file(src)?;
        if seq.notes.is_empty() {
            log::warn!("{} has no notes; writing an empty WAV", src.display());
        }
        if let Some(parent) = dst.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        synthesize(&seq, cfg)?.write_wav(dst)?;
    }
    Ok(jobs.into_iter().map(|(_, d)| d).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub sampling_seed: u64,
    pub train_seed: u64,
    pub unmatched: Vec<String>,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

/// Compares every prediction with the target of the same file name.
///
/// Both sides are moved to the 96-tick grid and aligned note by note unless
/// `alignment_dir` holds `<name>.json` mapping prediction to target indices.
/// Audio metrics compare renders of the two over their common frames.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    pred_dir: &Path,
    target_dir: &Path,
    alignment_dir: Option<&Path>,
    output_dir: &Path,
) -> Result<EvaluationReport> {
    let preds: BTreeSet<String> = midi_stems(pred_dir)?.into_iter().collect();
    let targets: BTreeSet<String> = midi_stems(target_dir)?.into_iter().collect();
    let matched: Vec<&String> = preds.intersection(&targets).collect();
    let unmatched: Vec<String> = preds.symmetric_difference(&targets).cloned().collect();
    if !unmatched.is_empty() {
        log::warn!("files without a counterpart: {}", unmatched.join(", "));
    }
    if matched.is_empty() {
        return Err(Error::EmptyEvaluation { unmatched });
    }

    let mut sequences = Vec::with_capacity(matched.len());
    for name in &matched {
        let pred = resample_grid(&read_midi_file(pred_dir.join(format!("{name}.mid")))?, TICKS_PER_BEAT);
        let target = resample_grid(&read_midi_file(target_dir.join(format!("{name}.mid")))?, TICKS_PER_BEAT);
        let given = alignment_dir
            .map(|d| d.join(format!("{name}.json")))
            .filter(|p| p.exists());
        let alignment = match given {
            Some(path) => {
                let map = AlignmentMap::load(&path)?;
                map.validate(&pred.notes, &target.notes)?;
                map
            }
            None => align_notes(&pred, &target, cfg.alignment.gap_penalty),
        };
        sequences.push((name.as_str(), pred, target, alignment));
    }
    let items: Vec<EvalItem<'_>> = sequences
        .iter()
        .map(|(name, pred, target, alignment)| EvalItem {
            name,
            prediction: pred,
            target,
            alignment,
        })
        .collect();
    let mut metrics = evaluate_m2m(&items)?;

    let syn = &cfg.synthesis;
    let mut chroma = Vec::new();
    let mut spec = Vec::new();
    for (_, pred, target, _) in &sequences {
        let sp = midi_spectrogram(&synthesize(pred, syn)?, syn.frame_len, syn.hop);
        let st = midi_spectrogram(&synthesize(target, syn)?, syn.frame_len, syn.hop);
        spec.push(spectrogram_mse(&sp, &st)?);
        chroma.push(chroma_mse(&chromagram(&sp), &chromagram(&st))?);
    }
    metrics.set_audio_metrics(&chroma, &spec);

    let report = EvaluationReport {
        sampling_seed: cfg.sampling.seed,
        train_seed: cfg.train.seed,
        unmatched,
        metrics,
    };
    write_text(&output_dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    write_text(&output_dir.join("report.csv"), &report.metrics.to_csv())?;
    write_text(&output_dir.join("report.txt"), &report.metrics.summary_table())?;
    Ok(report)
}
