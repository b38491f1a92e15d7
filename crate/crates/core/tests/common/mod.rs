//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use s2a_core::midi::{NoteEvent, NoteSequence, SustainEvent, TempoEvent, TimeSignatureEvent};
use s2a_core::tokenizer::TICKS_PER_BEAT;

/// A sequence that tokenization can represent exactly: 96-tick grid, first
/// onset at 0, IOI ≤ 767, duration ≤ 1152, bin-center (odd) velocities,
/// default tempo and 4/4.
pub fn random_grid_sequence<R: Rng>(rng: &mut R, max_notes: usize) -> NoteSequence {
    let n = rng.random_range(0..=max_notes);
    let mut onset = 0u64;
    let notes = (0..n)
        .map(|i| {
            if i > 0 && !rng.random_bool(0.25) {
                onset += rng.random_range(1..=767);
            }
            NoteEvent {
                onset_ticks: onset,
                duration_ticks: rng.random_range(1..=1152),
                pitch: rng.random_range(21..=108),
                velocity: 2 * rng.random_range(0..64u8) + 1,
                channel: 0,
            }
        })
        .collect();
    NoteSequence::new(
        TICKS_PER_BEAT,
        notes,
        vec![TempoEvent {
            tick: 0,
            microseconds_per_quarter: 500_000,
        }],
        vec![TimeSignatureEvent::common_time(0)],
        Vec::new(),
    )
}

/// A sequence with arbitrary MIDI content whose notes never overlap another
/// note of the same channel and pitch (touching is allowed).
pub fn random_midi_sequence<R: Rng>(rng: &mut R) -> NoteSequence {
    let ppq = [24u32, 96, 120, 384, 480, 960][rng.random_range(0..6)];
    let horizon = 40 * u64::from(ppq);
    let mut tempi = vec![TempoEvent {
        tick: 0,
        microseconds_per_quarter: rng.random_range(200_000..=1_500_000),
    }];
    for _ in 0..rng.random_range(0..4) {
        tempi.push(TempoEvent {
            tick: rng.random_range(1..horizon),
            microseconds_per_quarter: rng.random_range(1..=0xFF_FFFF),
        });
    }
    let mut sigs = vec![TimeSignatureEvent {
        tick: 0,
        numerator: rng.random_range(1..=12),
        denominator_log2: rng.random_range(0..=4),
    }];
    if rng.random_bool(0.5) {
        sigs.push(TimeSignatureEvent {
            tick: rng.random_range(1..horizon),
            numerator: rng.random_range(1..=12),
            denominator_log2: rng.random_range(0..=4),
        });
    }
    let mut sustain_ticks: Vec<u64> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..horizon)).collect();
    sustain_ticks.sort_unstable();
    sustain_ticks.dedup();
    let sustain = sustain_ticks
        .into_iter()
        .map(|tick| SustainEvent {
            tick,
            value: rng.random_range(0..=127),
        })
        .collect();

    let mut busy_until = vec![0u64; 16 * 128];
    let mut notes = Vec::new();
    for _ in 0..rng.random_range(0..=200) {
        let channel = rng.random_range(0..16u8);
        let pitch = rng.random_range(0..=127u8);
        let key = usize::from(channel) * 128 + usize::from(pitch);
        let onset = rng.random_range(0..horizon).max(busy_until[key]);
        let duration = rng.random_range(1..=3 * u64::from(ppq));
        busy_until[key] = onset + duration;
        notes.push(NoteEvent {
            onset_ticks: onset,
            duration_ticks: duration,
            pitch,
            velocity: rng.random_range(1..=127),
            channel,
        });
    }
    NoteSequence::new(ppq, notes, tempi, sigs, sustain)
}

/// Sample Pearson correlation by the two-pass formula.
pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Minimum DTW cost over every monotone warping path, and the shortest
/// length among the minimum-cost paths, by explicit enumeration.
pub fn dtw_exhaustive(a: &[u32], b: &[u32]) -> (u64, usize) {
    fn walk(a: &[u32], b: &[u32], i: usize, j: usize, cost: u64, len: usize, best: &mut (u64, usize)) {
        let cost = cost + u64::from(a[i].abs_diff(b[j]));
        let len = len + 1;
        if i + 1 == a.len() && j + 1 == b.len() {
            if (cost, len) < *best {
                *best = (cost, len);
            }
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, cost, len, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, cost, len, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, cost, len, best);
        }
    }
    let mut best = (u64::MAX, usize::MAX);
    walk(a, b, 0, 0, 0, 0, &mut best);
    best
}

/// Every crossing-free, pitch-preserving matching between two note lists.
pub fn all_matchings(score: &[NoteEvent], perf: &[NoteEvent]) -> Vec<Vec<(usize, usize)>> {
    fn extend(
        score: &[NoteEvent],
        perf: &[NoteEvent],
        i0: usize,
        j0: usize,
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        out.push(current.clone());
        for i in i0..score.len() {
            for j in j0..perf.len() {
                if score[i].pitch == perf[j].pitch {
                    current.push((i, j));
                    extend(score, perf, i + 1, j + 1, current, out);
                    current.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    extend(score, perf, 0, 0, &mut Vec::new(), &mut out);
    out
}

/// `(matches − gap · unmatched, Σ |onset beat difference|)` of a matching.
pub fn matching_objective(
    score: &NoteSequence,
    perf: &NoteSequence,
    pairs: &[(usize, usize)],
    gap_penalty: f64,
) -> (f64, f64) {
    let unmatched = score.notes.len() + perf.notes.len() - 2 * pairs.len();
    let beats = |seq: &NoteSequence, k: usize| seq.notes[k].onset_ticks as f64 / f64::from(seq.ppq);
    let cost = pairs
        .iter()
        .map(|&(i, j)| (beats(score, i) - beats(perf, j)).abs())
        .sum();
    (pairs.len() as f64 - gap_penalty * unmatched as f64, cost)
}
