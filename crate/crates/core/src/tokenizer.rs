//! Six-feature note tokenization (pitch, velocity, duration, IOI, position, bar).
//!
//! Every feature vocabulary starts with four special tokens (PAD, BOS, EOS,
//! MASK) followed by its value tokens:
//!
//! | feature  | values | size |
//! |----------|--------|------|
//! | pitch    | 88 piano keys, MIDI 21-108 | 92 |
//! | velocity | 64 bins of width 2 | 68 |
//! | duration | 1-1152 ticks | 1156 |
//! | IOI      | 0-767 ticks | 772 |
//! | position | 0-383 ticks into the bar | 388 |
//! | bar      | bar index 0-2999 | 3004 |
//!
//! All ticks are at 96 per quarter note. Duration, IOI, position and bar are
//! clamped into range rather than rejected.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::{NoteEvent, NoteSequence, TempoEvent, TimeSignatureEvent, DEFAULT_US_PER_QUARTER};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const N_SPECIALS: u32 = 4;

/// Ticks per quarter note of the token grid.
pub const TICKS_PER_BEAT: u32 = 96;
/// Notes per model window.
pub const SEGMENT_LEN: usize = 256;
/// Velocity given to every score note before tokenization.
pub const SCORE_VELOCITY: u8 = 60;

pub const LOWEST_PIANO_KEY: u8 = 21;
pub const HIGHEST_PIANO_KEY: u8 = 108;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    Pitch,
    Velocity,
    Duration,
    Ioi,
    Position,
    Bar,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Pitch,
        Feature::Velocity,
        Feature::Duration,
        Feature::Ioi,
        Feature::Position,
        Feature::Bar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Pitch => "pitch",
            Feature::Velocity => "velocity",
            Feature::Duration => "duration",
            Feature::Ioi => "ioi",
            Feature::Position => "position",
            Feature::Bar => "bar",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Vocabulary sizes per feature. Only the default layout is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub n_specials: u32,
    pub pitch: usize,
    pub velocity: usize,
    pub duration: usize,
    pub ioi: usize,
    pub position: usize,
    pub bar: usize,
}

impl Default for VocabSpec {
    fn default() -> Self {
        let spec = Self {
            n_specials: N_SPECIALS,
            pitch: 4 + 88,
            velocity: 4 + 64,
            duration: 4 + 1152,
            ioi: 4 + 768,
            position: 4 + 384,
            bar: 4 + 3000,
        };
        assert_eq!(
            spec.sizes(),
            [92, 68, 1156, 772, 388, 3004],
            "vocabulary layout drifted"
        );
        spec
    }
}

impl VocabSpec {
    pub fn size(&self, feature: Feature) -> usize {
        match feature {
            Feature::Pitch => self.pitch,
            Feature::Velocity => self.velocity,
            Feature::Duration => self.duration,
            Feature::Ioi => self.ioi,
            Feature::Position => self.position,
            Feature::Bar => self.bar,
        }
    }

    /// Sizes in pitch, velocity, duration, IOI, position, bar order.
    pub fn sizes(&self) -> [usize; 6] {
        Feature::ALL.map(|f| self.size(f))
    }

    pub fn value_count(&self, feature: Feature) -> usize {
        self.size(feature) - self.n_specials as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenTuple {
    pub pitch: u32,
    pub velocity: u32,
    pub duration: u32,
    pub ioi: u32,
    pub position: u32,
    pub bar: u32,
}

impl TokenTuple {
    pub const PADDING: TokenTuple = TokenTuple {
        pitch: PAD,
        velocity: PAD,
        duration: PAD,
        ioi: PAD,
        position: PAD,
        bar: PAD,
    };

    pub fn get(&self, feature: Feature) -> u32 {
        match feature {
            Feature::Pitch => self.pitch,
            Feature::Velocity => self.velocity,
            Feature::Duration => self.duration,
            Feature::Ioi => self.ioi,
            Feature::Position => self.position,
            Feature::Bar => self.bar,
        }
    }

    pub fn set(&mut self, feature: Feature, token: u32) {
        match feature {
            Feature::Pitch => self.pitch = token,
            Feature::Velocity => self.velocity = token,
            Feature::Duration => self.duration = token,
            Feature::Ioi => self.ioi = token,
            Feature::Position => self.position = token,
            Feature::Bar => self.bar = token,
        }
    }

    pub fn as_array(&self) -> [u32; 6] {
        Feature::ALL.map(|f| self.get(f))
    }
}

/// A fixed-length model window. Real notes occupy a prefix; the rest is PAD.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSegment {
    pub tuples: Vec<TokenTuple>,
    pub pad_mask: Vec<bool>,
    pub performer_id: usize,
    pub source_offset: usize,
}

impl TokenSegment {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Number of real (non-pad) notes.
    pub fn n_notes(&self) -> usize {
        self.pad_mask.iter().filter(|&&p| !p).count()
    }

    pub fn notes(&self) -> &[TokenTuple] {
        &self.tuples[..self.n_notes()]
    }
}

pub fn pitch_token(pitch: u8) -> u32 {
    N_SPECIALS + u32::from(pitch - LOWEST_PIANO_KEY)
}

pub fn velocity_token(velocity: u8) -> u32 {
    N_SPECIALS + u32::from(velocity.min(127)) / 2
}

pub fn duration_token(ticks: u64) -> u32 {
    N_SPECIALS + ticks.clamp(1, 1152) as u32 - 1
}

pub fn ioi_token(ticks: u64) -> u32 {
    N_SPECIALS + ticks.min(767) as u32
}

pub fn velocity_from_token(token: u32) -> u8 {
    ((token - N_SPECIALS) * 2 + 1).clamp(1, 127) as u8
}

/// Bar index and position-in-bar for an onset, walking the signature map.
/// A signature change always starts a new bar.
pub fn bar_and_position(time_signatures: &[TimeSignatureEvent], ppq: u32, onset: u64) -> (u64, u64) {
    let default = [TimeSignatureEvent::common_time(0)];
    let sigs = if time_signatures.is_empty() {
        &default[..]
    } else {
        time_signatures
    };
    let mut bar = 0u64;
    let mut seg_start = 0u64;
    let mut current = if sigs[0].tick == 0 {
        sigs[0]
    } else {
        TimeSignatureEvent::common_time(0)
    };
    for next in sigs.iter().skip_while(|s| s.tick == 0) {
        if next.tick > onset {
            break;
        }
        let len = current.bar_ticks(ppq);
        bar += (next.tick - seg_start).div_ceil(len);
        seg_start = next.tick;
        current = *next;
    }
    let len = current.bar_ticks(ppq);
    let rel = onset - seg_start;
    (bar + rel / len, rel % len)
}

/// Tokenizes notes in the order given. IOI is measured from the previous note
/// in that order and floors at zero.
pub fn tokenize_notes(
    notes: &[NoteEvent],
    time_signatures: &[TimeSignatureEvent],
    ppq: u32,
    velocity_override: Option<u8>,
) -> Result<Vec<TokenTuple>> {
    let mut out = Vec::with_capacity(notes.len());
    let mut prev_onset: Option<u64> = None;
    for (index, note) in notes.iter().enumerate() {
        if !(LOWEST_PIANO_KEY..=HIGHEST_PIANO_KEY).contains(&note.pitch) {
            return Err(Error::PianoRange {
                index,
                pitch: note.pitch,
            });
        }
        let ioi = prev_onset.map_or(0, |p| note.onset_ticks.saturating_sub(p));
        prev_onset = Some(note.onset_ticks);
        let (bar, position) = bar_and_position(time_signatures, ppq, note.onset_ticks);
        out.push(TokenTuple {
            pitch: pitch_token(note.pitch),
            velocity: velocity_token(velocity_override.unwrap_or(note.velocity)),
            duration: duration_token(note.duration_ticks),
            ioi: ioi_token(ioi),
            position: N_SPECIALS + position.min(383) as u32,
            bar: N_SPECIALS + bar.min(2999) as u32,
        });
    }
    Ok(out)
}

/// Tokenizes a sequence already on the 96-tick grid. Score tokenization
/// replaces every velocity with the constant score velocity.
pub fn tokenize(seq: &NoteSequence, is_score: bool) -> Result<Vec<TokenTuple>> {
    if seq.ppq != TICKS_PER_BEAT {
        return Err(Error::Config(format!(
            "tokenize expects {TICKS_PER_BEAT} ticks per beat, got {}; call resample_grid first",
            seq.ppq
        )));
    }
    tokenize_notes(
        &seq.notes,
        &seq.time_signatures,
        seq.ppq,
        is_score.then_some(SCORE_VELOCITY),
    )
}

fn check_values(feature: Feature, tokens: &[u32], vocab: &VocabSpec) -> Result<()> {
    for (position, &token) in tokens.iter().enumerate() {
        if token < N_SPECIALS {
            return Err(Error::SpecialToken {
                feature: feature.name(),
                position,
                token,
            });
        }
        if token as usize >= vocab.size(feature) {
            return Err(Error::TokenOutOfRange {
                feature: feature.name(),
                position,
                token,
                vocab: vocab.size(feature),
            });
        }
    }
    Ok(())
}

/// Rebuilds a 96-tick note sequence from score pitches and predicted
/// velocity, IOI and duration tokens. The first onset is tick 0.
pub fn detokenize(
    pitch_toks: &[u32],
    velocity_toks: &[u32],
    ioi_toks: &[u32],
    duration_toks: &[u32],
    time_signatures: &[TimeSignatureEvent],
) -> Result<NoteSequence> {
    let n = pitch_toks.len();
    if velocity_toks.len() != n || ioi_toks.len() != n || duration_toks.len() != n {
        return Err(Error::LengthMismatch(format!(
            "pitch {n}, velocity {}, ioi {}, duration {}",
            velocity_toks.len(),
            ioi_toks.len(),
            duration_toks.len()
        )));
    }
    let vocab = VocabSpec::default();
    check_values(Feature::Pitch, pitch_toks, &vocab)?;
    check_values(Feature::Velocity, velocity_toks, &vocab)?;
    check_values(Feature::Ioi, ioi_toks, &vocab)?;
    check_values(Feature::Duration, duration_toks, &vocab)?;

    let mut onset = 0u64;
    let notes = (0..n)
        .map(|i| {
            if i > 0 {
                onset += u64::from(ioi_toks[i] - N_SPECIALS);
            }
            NoteEvent {
                onset_ticks: onset,
                duration_ticks: u64::from(duration_toks[i] - N_SPECIALS) + 1,
                pitch: (pitch_toks[i] - N_SPECIALS) as u8 + LOWEST_PIANO_KEY,
                velocity: velocity_from_token(velocity_toks[i]),
                channel: 0,
            }
        })
        .collect();
    Ok(NoteSequence::new(
        TICKS_PER_BEAT,
        notes,
        vec![TempoEvent {
            tick: 0,
            microseconds_per_quarter: DEFAULT_US_PER_QUARTER,
        }],
        time_signatures.to_vec(),
        Vec::new(),
    ))
}

/// Splits a token stream into PAD-filled windows of [`SEGMENT_LEN`] notes.
pub fn segment(tuples: &[TokenTuple], performer_id: usize) -> Vec<TokenSegment> {
    segment_with_len(tuples, performer_id, SEGMENT_LEN)
}

pub fn segment_with_len(tuples: &[TokenTuple], performer_id: usize, len: usize) -> Vec<TokenSegment> {
    assert!(len > 0);
    tuples
        .chunks(len)
        .enumerate()
        .map(|(i, chunk)| {
            let mut padded = chunk.to_vec();
            padded.resize(len, TokenTuple::PADDING);
            let mut pad_mask = vec![false; chunk.len()];
            pad_mask.resize(len, true);
            TokenSegment {
                tuples: padded,
                pad_mask,
                performer_id,
                source_offset: i * len,
            }
        })
        .collect()
}

/// Tab-separated token dump: a header row, then one note per line.
pub fn to_tsv(tuples: &[TokenTuple]) -> String {
    let mut out = Feature::ALL
        .iter()
        .map(|f| f.name())
        .collect::<Vec<_>>()
        .join("\t");
    out.push('\n');
    for t in tuples {
        let row = t.as_array().map(|v| v.to_string()).join("\t");
        let _ = writeln!(out, "{row}");
    }
    out
}

pub fn from_tsv(text: &str) -> Result<Vec<TokenTuple>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let expected: Vec<_> = Feature::ALL.iter().map(|f| f.name()).collect();
    if header.split('\t').collect::<Vec<_>>() != expected {
        return Err(Error::Config(format!("unexpected token dump header {header:?}")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let values: Vec<u32> = line
                .split('\t')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Config(format!("token dump line {}: {e}", i + 2)))?;
            if values.len() != 6 {
                return Err(Error::Config(format!(
                    "token dump line {} has {} columns",
                    i + 2,
                    values.len()
                )));
            }
            let mut t = TokenTuple::default();
            for (f, v) in Feature::ALL.iter().zip(values) {
                t.set(*f, v);
            }
            Ok(t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(onset: u64, dur: u64, pitch: u8, vel: u8) -> NoteEvent {
        NoteEvent {
            onset_ticks: onset,
            duration_ticks: dur,
            pitch,
            velocity: vel,
            channel: 0,
        }
    }

    fn seq(notes: Vec<NoteEvent>) -> NoteSequence {
        NoteSequence::new(96, notes, vec![], vec![], vec![])
    }

    #[test]
    fn vocabulary_sizes() {
        let v = VocabSpec::default();
        assert_eq!(v.sizes(), [92, 68, 1156, 772, 388, 3004]);
        let values = Feature::ALL.map(|f| v.value_count(f));
        assert_eq!(values, [88, 64, 1152, 768, 384, 3000]);
    }

    #[test]
    fn single_note_layout() {
        let toks = tokenize(&seq(vec![note(0, 96, 21, 60)]), false).unwrap();
        assert_eq!(
            toks[0],
            TokenTuple {
                pitch: 4,
                velocity: 34,
                duration: 99,
                ioi: 4,
                position: 4,
                bar: 4
            }
        );
        let back = detokenize(&[4], &[34], &[4], &[99], &[]).unwrap();
        assert_eq!(back.notes, vec![note(0, 96, 21, 61)]);
    }

    #[test]
    fn score_velocity_forced() {
        let s = seq(vec![note(0, 10, 60, 127), note(96, 10, 62, 127)]);
        let toks = tokenize(&s, true).unwrap();
        assert!(toks.iter().all(|t| t.velocity == 34));
    }

    #[test]
    fn chord_has_zero_ioi() {
        let s = seq(vec![note(96, 10, 60, 60), note(96, 10, 64, 60)]);
        let toks = tokenize(&s, false).unwrap();
        assert_eq!(toks[1].ioi, 4);
    }

    #[test]
    fn clamps_long_values() {
        let s = seq(vec![note(0, 5000, 60, 60), note(10_000, 1, 62, 60)]);
        let toks = tokenize(&s, false).unwrap();
        assert_eq!(toks[0].duration, 1155);
        assert_eq!(toks[1].ioi, 771);
        assert_eq!(toks[1].bar, 4 + 26);
        assert_eq!(toks[1].position, 4 + 10_000 % 384);
    }

    #[test]
    fn rejects_non_piano_pitch() {
        let s = seq(vec![note(0, 1, 60, 60), note(0, 1, 109, 60)]);
        assert!(matches!(
            tokenize(&s, false),
            Err(Error::PianoRange { index: 1, pitch: 109 })
        ));
    }

    #[test]
    fn rejects_wrong_grid() {
        let s = NoteSequence::new(480, vec![note(0, 1, 60, 60)], vec![], vec![], vec![]);
        assert!(tokenize(&s, false).is_err());
    }

    #[test]
    fn bars_follow_signature_changes() {
        let sigs = [
            TimeSignatureEvent::common_time(0),
            TimeSignatureEvent {
                tick: 768,
                numerator: 3,
                denominator_log2: 2,
            },
        ];
        assert_eq!(bar_and_position(&sigs, 96, 0), (0, 0));
        assert_eq!(bar_and_position(&sigs, 96, 400), (1, 16));
        assert_eq!(bar_and_position(&sigs, 96, 768), (2, 0));
        assert_eq!(bar_and_position(&sigs, 96, 768 + 288 + 5), (3, 5));
        // signature change mid-bar starts a fresh bar
        let odd = [
            TimeSignatureEvent::common_time(0),
            TimeSignatureEvent {
                tick: 500,
                numerator: 2,
                denominator_log2: 2,
            },
        ];
        assert_eq!(bar_and_position(&odd, 96, 500), (2, 0));
    }

    #[test]
    fn detokenize_rejects_specials() {
        let err = detokenize(&[4, 5], &[34, 1], &[4, 4], &[10, 10], &[]).unwrap_err();
        assert!(matches!(
            err,
            Error::SpecialToken {
                feature: "velocity",
                position: 1,
                ..
            }
        ));
        assert!(detokenize(&[4], &[34, 34], &[4], &[10], &[]).is_err());
    }

    #[test]
    fn zero_iois_make_one_chord() {
        let out = detokenize(&[40, 44, 47], &[40; 3], &[4; 3], &[50; 3], &[]).unwrap();
        assert!(out.notes.iter().all(|n| n.onset_ticks == 0));
    }

    #[test]
    fn segmentation_counts() {
        let tuples = vec![TokenTuple::default(); 512];
        assert_eq!(segment(&tuples, 0).len(), 2);
        let one = segment(&tuples[..1], 3);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].pad_mask.iter().filter(|&&p| p).count(), 255);
        assert_eq!(one[0].performer_id, 3);
        let segs = segment(&vec![TokenTuple::default(); 300], 0);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].n_notes(), 44);
        assert_eq!(segs[1].len(), 256);
        assert_eq!((segs[0].source_offset, segs[1].source_offset), (0, 256));
        assert!(segment(&[], 0).is_empty());
    }

    #[test]
    fn tsv_round_trip() {
        let s = seq(vec![note(0, 96, 21, 60), note(48, 20, 100, 99)]);
        let toks = tokenize(&s, false).unwrap();
        let text = to_tsv(&toks);
        assert!(text.starts_with("pitch\tvelocity\tduration\tioi\tposition\tbar\n"));
        assert_eq!(from_tsv(&text).unwrap(), toks);
    }
}
