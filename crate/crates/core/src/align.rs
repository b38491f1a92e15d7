//! Note-wise score/performance alignment.
//!
//! A global alignment over both note lists in canonical (onset, pitch) order.
//! Only equal pitches may be matched; each skipped note costs `gap_penalty`.
//! Among alignments with the same score the one with the smallest summed
//! onset distance (in beats) over matched pairs wins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::{NoteEvent, NoteSequence};

pub const DEFAULT_GAP_PENALTY: f64 = 0.5;

const SCORE_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentMap {
    /// `(score_index, perf_index)`, strictly increasing in both.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_score: Vec<usize>,
    pub unmatched_perf: Vec<usize>,
}

impl AlignmentMap {
    /// Pairs every note with the note at the same index.
    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
            ..Self::default()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Checks the structural invariants against the two note lists.
    pub fn validate(&self, score: &[NoteEvent], perf: &[NoteEvent]) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("invalid alignment: {msg}")));
        for w in self.pairs.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return bad(format!("pairs {:?} and {:?} cross", w[0], w[1]));
            }
        }
        let mut seen_s = vec![0u8; score.len()];
        let mut seen_p = vec![0u8; perf.len()];
        for &(i, j) in &self.pairs {
            if i >= score.len() || j >= perf.len() {
                return bad(format!("pair ({i}, {j}) out of range"));
            }
            if score[i].pitch != perf[j].pitch {
                return bad(format!("pair ({i}, {j}) joins different pitches"));
            }
            seen_s[i] += 1;
            seen_p[j] += 1;
        }
        for &i in &self.unmatched_score {
            match seen_s.get_mut(i) {
                Some(c) => *c += 1,
                None => return bad(format!("unmatched score index {i} out of range")),
            }
        }
        for &j in &self.unmatched_perf {
            match seen_p.get_mut(j) {
                Some(c) => *c += 1,
                None => return bad(format!("unmatched performance index {j} out of range")),
            }
        }
        if seen_s.iter().chain(&seen_p).any(|&c| c != 1) {
            return bad("some index is missing or listed twice".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Start,
    Match,
    SkipScore,
    SkipPerf,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    score: f64,
    cost: f64,
    step: Step,
}

impl Cell {
    fn better_than(&self, other: &Cell) -> bool {
        if self.score > other.score + SCORE_EPS {
            return true;
        }
        (self.score - other.score).abs() <= SCORE_EPS && self.cost < other.cost - COST_EPS
    }
}

/// Aligns the notes of a score with the notes of a performance.
pub fn align_notes(score: &NoteSequence, perf: &NoteSequence, gap_penalty: f64) -> AlignmentMap {
    let s_beats: Vec<f64> = score
        .notes
        .iter()
        .map(|n| n.onset_ticks as f64 / f64::from(score.ppq))
        .collect();
    let p_beats: Vec<f64> = perf
        .notes
        .iter()
        .map(|n| n.onset_ticks as f64 / f64::from(perf.ppq))
        .collect();
    let (n, m) = (score.notes.len(), perf.notes.len());
    if n == 0 || m == 0 {
        return AlignmentMap {
            pairs: Vec::new(),
            unmatched_score: (0..n).collect(),
            unmatched_perf: (0..m).collect(),
        };
    }

    let width = m + 1;
    let mut table = vec![
        Cell {
            score: 0.0,
            cost: 0.0,
            step: Step::Start,
        };
        (n + 1) * width
    ];
    for i in 1..=n {
        table[i * width] = Cell {
            score: -gap_penalty * i as f64,
            cost: 0.0,
            step: Step::SkipScore,
        };
    }
    for j in 1..=m {
        table[j] = Cell {
            score: -gap_penalty * j as f64,
            cost: 0.0,
            step: Step::SkipPerf,
        };
    }
    for i in 1..=n {
        for j in 1..=m {
            let up = table[(i - 1) * width + j];
            let left = table[i * width + j - 1];
            let mut best = Cell {
                score: up.score - gap_penalty,
                cost: up.cost,
                step: Step::SkipScore,
            };
            let skip_perf = Cell {
                score: left.score - gap_penalty,
                cost: left.cost,
                step: Step::SkipPerf,
            };
            if skip_perf.better_than(&best) {
                best = skip_perf;
            }
            if score.notes[i - 1].pitch == perf.notes[j - 1].pitch {
                let diag = table[(i - 1) * width + j - 1];
                let matched = Cell {
                    score: diag.score + 1.0,
                    cost: diag.cost + (s_beats[i - 1] - p_beats[j - 1]).abs(),
                    step: Step::Match,
                };
                if !best.better_than(&matched) {
                    best = matched;
                }
            }
            table[i * width + j] = best;
        }
    }

    let mut map = AlignmentMap::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match table[i * width + j].step {
            Step::Match => {
                map.pairs.push((i - 1, j - 1));
                i -= 1;
                j -= 1;
            }
            Step::SkipScore => {
                map.unmatched_score.push(i - 1);
                i -= 1;
            }
            Step::SkipPerf => {
                map.unmatched_perf.push(j - 1);
                j -= 1;
            }
            Step::Start => unreachable!("origin reached early"),
        }
    }
    map.pairs.reverse();
    map.unmatched_score.reverse();
    map.unmatched_perf.reverse();
    map
}

/// Alignment score and onset-distance tie-break cost of a matching.
pub fn alignment_objective(
    score: &NoteSequence,
    perf: &NoteSequence,
    pairs: &[(usize, usize)],
    gap_penalty: f64,
) -> (f64, f64) {
    let gaps = score.notes.len() + perf.notes.len() - 2 * pairs.len();
    let cost = pairs
        .iter()
        .map(|&(i, j)| {
            (score.notes[i].onset_ticks as f64 / f64::from(score.ppq)
                - perf.notes[j].onset_ticks as f64 / f64::from(perf.ppq))
            .abs()
        })
        .sum();
    (pairs.len() as f64 - gap_penalty * gaps as f64, cost)
}

/// Matched notes of both sides, in score order, one entry per pair.
pub fn matched_notes(
    score: &NoteSequence,
    perf: &NoteSequence,
    map: &AlignmentMap,
) -> (Vec<NoteEvent>, Vec<NoteEvent>) {
    map.pairs
        .iter()
        .map(|&(i, j)| (score.notes[i], perf.notes[j]))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(notes: &[(u64, u8)]) -> NoteSequence {
        NoteSequence::new(
            96,
            notes
                .iter()
                .map(|&(onset, pitch)| NoteEvent {
                    onset_ticks: onset,
                    duration_ticks: 48,
                    pitch,
                    velocity: 60,
                    channel: 0,
                })
                .collect(),
            vec![],
            vec![],
            vec![],
        )
    }

    #[test]
    fn self_alignment_is_identity() {
        let s = seq(&[(0, 60), (0, 64), (96, 62), (192, 60)]);
        let map = align_notes(&s, &s, DEFAULT_GAP_PENALTY);
        assert_eq!(map, AlignmentMap::identity(4));
        map.validate(&s.notes, &s.notes).unwrap();
    }

    #[test]
    fn deleted_note_left_unmatched() {
        let s = seq(&[(0, 60), (96, 62), (192, 64), (288, 65)]);
        let p = seq(&[(0, 60), (96, 62), (288, 65)]);
        let map = align_notes(&s, &p, DEFAULT_GAP_PENALTY);
        assert_eq!(map.pairs, vec![(0, 0), (1, 1), (3, 2)]);
        assert_eq!(map.unmatched_score, vec![2]);
        assert!(map.unmatched_perf.is_empty());
    }

    #[test]
    fn repeated_pitch_tie_broken_by_onset() {
        // score plays C three times, performance drops the middle one
        let s = seq(&[(0, 60), (96, 60), (192, 60)]);
        let p = seq(&[(2, 60), (190, 60)]);
        let map = align_notes(&s, &p, DEFAULT_GAP_PENALTY);
        assert_eq!(map.pairs, vec![(0, 0), (2, 1)]);
        assert_eq!(map.unmatched_score, vec![1]);
    }

    #[test]
    fn empty_inputs_leave_everything_unmatched() {
        let s = seq(&[(0, 60), (96, 62)]);
        let e = seq(&[]);
        let map = align_notes(&s, &e, DEFAULT_GAP_PENALTY);
        assert!(map.pairs.is_empty());
        assert_eq!(map.unmatched_score, vec![0, 1]);
        let map = align_notes(&e, &s, DEFAULT_GAP_PENALTY);
        assert_eq!(map.unmatched_perf, vec![0, 1]);
    }

    #[test]
    fn json_shape() {
        let map = AlignmentMap {
            pairs: vec![(0, 0), (2, 1)],
            unmatched_score: vec![1],
            unmatched_perf: vec![],
        };
        let text = map.to_json().unwrap();
        assert_eq!(
            text,
            r#"{"pairs":[[0,0],[2,1]],"unmatched_score":[1],"unmatched_perf":[]}"#
        );
        assert_eq!(AlignmentMap::from_json(&text).unwrap(), map);
    }

    #[test]
    fn validate_catches_crossing_and_pitch_mismatch() {
        let s = seq(&[(0, 60), (96, 62)]);
        let crossing = AlignmentMap {
            pairs: vec![(0, 1), (1, 0)],
            ..Default::default()
        };
        assert!(crossing.validate(&s.notes, &s.notes).is_err());
        let wrong_pitch = AlignmentMap {
            pairs: vec![(0, 1)],
            unmatched_score: vec![1],
            unmatched_perf: vec![0],
        };
        assert!(wrong_pitch.validate(&s.notes, &s.notes).is_err());
    }
}
