//! Synthetic score/performance corpus.
//!
//! Scores are quantized melodies with occasional chords at constant velocity.
//! Each piece is played by one performer, whose profile shapes the
//! performance: a velocity arch over every phrase, sinusoidal rubato and a
//! fixed articulation ratio. Everything derives from the seed.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentMap;
use crate::error::{Error, Result};
use crate::midi::{read_midi_file, write_midi_file, NoteEvent, NoteSequence};
use crate::tokenizer::SCORE_VELOCITY;

/// Resolution of generated files.
pub const CORPUS_PPQ: u32 = 480;
const SIXTEENTH: u64 = CORPUS_PPQ as u64 / 4;
const SPLIT_SALT: u64 = 0x5911_7000_0000_0001;
const MANIFEST: &str = "corpus.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerformerProfile {
    /// Velocity at phrase boundaries.
    pub base_velocity: f64,
    /// Extra velocity at the middle of each phrase.
    pub velocity_arch_depth: f64,
    /// Peak relative tempo deviation, below 1.
    pub rubato_amplitude: f64,
    /// Sounding length as a fraction of the written length.
    pub articulation_ratio: f64,
}

impl PerformerProfile {
    /// Distinct built-in profiles, cycling after four performers.
    pub fn preset(performer: usize) -> Self {
        const TABLE: [(f64, f64, f64, f64); 4] = [
            (44.0, 36.0, 0.12, 0.55),
            (58.0, 20.0, 0.25, 0.95),
            (36.0, 52.0, 0.06, 0.75),
            (66.0, 28.0, 0.18, 1.10),
        ];
        let (base_velocity, velocity_arch_depth, rubato_amplitude, articulation_ratio) =
            TABLE[performer % TABLE.len()];
        Self {
            base_velocity,
            velocity_arch_depth,
            rubato_amplitude,
            articulation_ratio,
        }
    }
}

impl Default for PerformerProfile {
    fn default() -> Self {
        Self::preset(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub n_pieces: usize,
    pub notes_per_piece: usize,
    pub n_performers: usize,
    /// One entry per performer; missing entries use [`PerformerProfile::preset`].
    pub profiles: Vec<PerformerProfile>,
    /// Length of a velocity arch and of one rubato cycle.
    pub phrase_beats: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            n_pieces: 12,
            notes_per_piece: 256,
            n_performers: 2,
            profiles: Vec::new(),
            phrase_beats: 8.0,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pieces > 0 && (self.n_performers == 0 || self.notes_per_piece == 0) {
            return Err(Error::Config("pieces need at least one performer and one note".into()));
        }
        if !(self.phrase_beats > 0.0) {
            return Err(Error::Config("phrase length must be positive".into()));
        }
        for p in 0..self.n_performers {
            let prof = self.profile(p);
            if !(0.0..1.0).contains(&prof.rubato_amplitude) || !(prof.articulation_ratio > 0.0) {
                return Err(Error::Config(format!(
                    "performer {p}: rubato must lie in [0, 1) and articulation be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn profile(&self, performer: usize) -> PerformerProfile {
        self.profiles
            .get(performer)
            .copied()
            .unwrap_or_else(|| PerformerProfile::preset(performer))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub name: String,
    pub performer_id: usize,
    pub split: Split,
    pub score: NoteSequence,
    pub performance: NoteSequence,
    pub alignment: AlignmentMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub performer_id: usize,
    pub split: Split,
    pub n_notes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SyntheticCorpusSpec,
    pub items: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: SyntheticCorpusSpec,
    pub items: Vec<CorpusItem>,
}

pub fn piece_name(index: usize) -> String {
    format!("piece_{index:03}")
}

/// A quantized 4/4 score of exactly `n_notes` notes.
pub fn generate_score<R: Rng + ?Sized>(n_notes: usize, rng: &mut R) -> NoteSequence {
    const IOI_SIXTEENTHS: [u64; 7] = [2, 2, 4, 4, 4, 6, 8];
    let mut notes = Vec::with_capacity(n_notes);
    let mut onset = 0u64;
    let mut pitch: i32 = rng.random_range(55..=72);
    while notes.len() < n_notes {
        pitch = (pitch + rng.random_range(-4..=4)).clamp(48, 84);
        let ioi = IOI_SIXTEENTHS[rng.random_range(0..IOI_SIXTEENTHS.len())] * SIXTEENTH;
        let mut chord = vec![pitch as u8];
        if rng.random_bool(0.2) {
            let below = [3u8, 4, 5, 7][rng.random_range(0..4usize)];
            chord.push(pitch as u8 - below);
        }
        for p in chord.into_iter().take(n_notes - notes.len()) {
            notes.push(NoteEvent {
                onset_ticks: onset,
                duration_ticks: ioi,
                pitch: p,
                velocity: SCORE_VELOCITY,
                channel: 0,
            });
        }
        onset += ioi;
    }
    let mut seq = NoteSequence::empty(CORPUS_PPQ);
    seq.notes = notes;
    NoteSequence::new(
        CORPUS_PPQ,
        seq.notes,
        seq.tempi,
        seq.time_signatures,
        Vec::new(),
    )
}

/// Performance time in beats of score beat `b` under sinusoidal rubato:
/// the integral of a local beat length `1 + a·sin(2πb/P)`.
fn warp(b: f64, amplitude: f64, period: f64) -> f64 {
    b + amplitude * period / (2.0 * PI) * (1.0 - (2.0 * PI * b / period).cos())
}

/// Applies a performer profile to a score. Note `i` of the result plays
/// note `i` of the score.
pub fn perform(score: &NoteSequence, profile: &PerformerProfile, phrase_beats: f64) -> NoteSequence {
    let ppq = f64::from(score.ppq);
    let to_ticks = |beats: f64| (beats * ppq).round() as u64;
    let mut notes: Vec<NoteEvent> = score
        .notes
        .iter()
        .map(|n| {
            let b = n.onset_ticks as f64 / ppq;
            let end = (n.onset_ticks + n.duration_ticks) as f64 / ppq;
            let start = warp(b, profile.rubato_amplitude, phrase_beats);
            let stop = warp(end, profile.rubato_amplitude, phrase_beats);
            let phase = b.rem_euclid(phrase_beats) / phrase_beats;
            let accent = if b.rem_euclid(4.0) == 0.0 { 6.0 } else { 0.0 };
            let velocity = profile.base_velocity + profile.velocity_arch_depth * (PI * phase).sin() + accent;
            NoteEvent {
                onset_ticks: to_ticks(start),
                duration_ticks: to_ticks((stop - start) * profile.articulation_ratio).max(1),
                pitch: n.pitch,
                velocity: velocity.round().clamp(1.0, 127.0) as u8,
                channel: 0,
            }
        })
        .collect();
    // legato must not run into the next note of the same pitch
    for i in 0..notes.len() {
        let next_same = notes[i + 1..]
            .iter()
            .find(|m| m.pitch == notes[i].pitch && m.onset_ticks > notes[i].onset_ticks)
            .map(|m| m.onset_ticks);
        if let Some(next) = next_same {
            let room = next - notes[i].onset_ticks;
            notes[i].duration_ticks = notes[i].duration_ticks.min(room);
        }
    }
    NoteSequence::new(
        score.ppq,
        notes,
        score.tempi.clone(),
        score.time_signatures.clone(),
        Vec::new(),
    )
}

/// Per-performer split by floor of 8:1:1, with at least one test item.
fn assign_splits(performers: &[usize], n_performers: usize, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    let mut splits = vec![Split::Train; performers.len()];
    for p in 0..n_performers {
        let mut mine: Vec<usize> = (0..performers.len()).filter(|&i| performers[i] == p).collect();
        if mine.is_empty() {
            continue;
        }
        mine.shuffle(&mut rng);
        let n_test = (mine.len() / 10).max(1);
        let n_valid = mine.len() / 10;
        for (rank, &i) in mine.iter().enumerate() {
            splits[i] = if rank < n_test {
                Split::Test
            } else if rank < n_test + n_valid {
                Split::Valid
            } else {
                Split::Train
            };
        }
    }
    splits
}

pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let performers: Vec<usize> = (0..spec.n_pieces).map(|i| i % spec.n_performers.max(1)).collect();
    let splits = assign_splits(&performers, spec.n_performers, spec.seed);
    let items = (0..spec.n_pieces)
        .map(|i| {
            let score = generate_score(spec.notes_per_piece, &mut rng);
            let performance = perform(&score, &spec.profile(performers[i]), spec.phrase_beats);
            CorpusItem {
                name: piece_name(i),
                performer_id: performers[i],
                split: splits[i],
                alignment: AlignmentMap::identity(score.notes.len()),
                score,
                performance,
            }
        })
        .collect();
    Ok(Corpus {
        spec: spec.clone(),
        items,
    })
}

impl Corpus {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            spec: self.spec.clone(),
            items: self
                .items
                .iter()
                .map(|it| ManifestEntry {
                    name: it.name.clone(),
                    performer_id: it.performer_id,
                    split: it.split,
                    n_notes: it.score.notes.len(),
                })
                .collect(),
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusItem> {
        self.items.iter().filter(move |it| it.split == split)
    }

    /// Writes `scores/`, `performances/`, `alignments/` and a manifest.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["scores", "performances", "alignments"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for it in &self.items {
            write_midi_file(dir.join("scores").join(format!("{}.mid", it.name)), &it.score)?;
            write_midi_file(
                dir.join("performances").join(format!("{}.mid", it.name)),
                &it.performance,
            )?;
            it.alignment
                .save(dir.join("alignments").join(format!("{}.json", it.name)))?;
        }
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let items = manifest
            .items
            .into_iter()
            .map(|m| {
                Ok(CorpusItem {
                    score: read_midi_file(dir.join("scores").join(format!("{}.mid", m.name)))?,
                    performance: read_midi_file(
                        dir.join("performances").join(format!("{}.mid", m.name)),
                    )?,
                    alignment: AlignmentMap::load(dir.join("alignments").join(format!("{}.json", m.name)))?,
                    name: m.name,
                    performer_id: m.performer_id,
                    split: m.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            spec: manifest.spec,
            items,
        })
    }
}
