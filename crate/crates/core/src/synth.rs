//! Deterministic MIDI-to-audio rendering and the audio features used for evaluation.
//!
//! Each note is a sum of eight harmonics with `h^-1.3` rolloff, a short
//! linear attack, an exponential decay whose time constant halves every two
//! octaves above middle C, and a linear release at note-off. The mix is peak
//! normalized to 0.95.
//!
//! MIDI-scale spectrograms map a Hann-windowed magnitude STFT through one
//! triangular filter per MIDI pitch. Each filter rises from the previous
//! semitone center and falls to the next, so every FFT bin feeds at most two
//! adjacent filters. Filters centered above Nyquist stay all-zero.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Axis};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::{ticks_to_seconds, NoteSequence};

pub const DEFAULT_SAMPLE_RATE: u32 = 24_000;
pub const N_PITCH_BINS: usize = 128;
/// Length of the audio windows stitched back together after rendering.
pub const SEGMENT_SECONDS: f64 = 9.6;
pub const PEAK_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Writes 16-bit mono PCM.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
        }
        writer.finalize()?;
        Ok(())
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path.as_ref())?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 {
            return Err(Error::Config(format!(
                "expected 16-bit mono WAV, got {} channels at {} bits",
                spec.channels, spec.bits_per_sample
            )));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32767.0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            samples,
            sample_rate: spec.sample_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub sample_rate: u32,
    pub n_harmonics: usize,
    pub harmonic_rolloff: f64,
    /// Decay time constant at middle C, seconds.
    pub decay_seconds: f64,
    /// Semitones over which the decay constant halves.
    pub decay_halving_semitones: f64,
    pub attack_seconds: f64,
    pub release_seconds: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            n_harmonics: 8,
            harmonic_rolloff: 1.3,
            decay_seconds: 0.8,
            decay_halving_semitones: 24.0,
            attack_seconds: 0.005,
            release_seconds: 0.010,
        }
    }
}

pub fn midi_frequency(pitch: f64) -> f64 {
    440.0 * 2f64.powf((pitch - 69.0) / 12.0)
}

/// Frame-wise piano roll: `velocity / 127` where a note sounds, max over overlaps.
pub fn piano_roll(seq: &NoteSequence, frame_rate: f64) -> Array2<f64> {
    assert!(frame_rate > 0.0, "frame rate must be positive");
    let spans: Vec<(f64, f64, usize, f64)> = seq
        .notes
        .iter()
        .map(|n| {
            (
                ticks_to_seconds(seq, n.onset_ticks) * frame_rate,
                ticks_to_seconds(seq, n.offset_ticks()) * frame_rate,
                usize::from(n.pitch.min(127)),
                f64::from(n.velocity) / 127.0,
            )
        })
        .collect();
    let frames = spans
        .iter()
        .map(|s| s.1.ceil() as usize)
        .max()
        .unwrap_or(0);
    let mut roll = Array2::zeros((frames, N_PITCH_BINS));
    for (start, end, pitch, level) in spans {
        let first = start.floor() as usize;
        let last = (end.ceil() as usize).max(first + 1);
        for t in first..last.min(frames) {
            let cell = &mut roll[[t, pitch]];
            *cell = f64::max(*cell, level);
        }
    }
    roll
}

/// Additive render before peak normalization.
pub fn render_unnormalized(seq: &NoteSequence, params: &SynthParams) -> Vec<f64> {
    let sr = f64::from(params.sample_rate);
    let nyquist = sr / 2.0;
    let notes: Vec<(usize, f64, &crate::midi::NoteEvent)> = seq
        .notes
        .iter()
        .map(|n| {
            let on = ticks_to_seconds(seq, n.onset_ticks);
            let off = ticks_to_seconds(seq, n.offset_ticks());
            ((on * sr).round() as usize, off - on, n)
        })
        .collect();
    let total = notes
        .iter()
        .map(|(start, dur, _)| start + ((dur + params.release_seconds) * sr).ceil() as usize)
        .max()
        .unwrap_or(0);
    let mut out = vec![0.0; total];
    for (start, dur, note) in notes {
        let f0 = midi_frequency(f64::from(note.pitch));
        let amp = f64::from(note.velocity) / 127.0;
        let tau = params.decay_seconds
            * 2f64.powf((60.0 - f64::from(note.pitch)) / params.decay_halving_semitones);
        let partials: Vec<(f64, f64)> = (1..=params.n_harmonics)
            .map(|h| (h as f64 * f0, amp * (h as f64).powf(-params.harmonic_rolloff)))
            .filter(|&(f, _)| f < nyquist)
            .collect();
        let len = ((dur + params.release_seconds) * sr).ceil() as usize;
        for (i, slot) in out[start..start + len].iter_mut().enumerate() {
            let t = i as f64 / sr;
            let attack = (t / params.attack_seconds).min(1.0);
            let release = if t > dur {
                (1.0 - (t - dur) / params.release_seconds).max(0.0)
            } else {
                1.0
            };
            let env = attack * release * (-t / tau).exp();
            if env == 0.0 {
                continue;
            }
            let tone: f64 = partials
                .iter()
                .map(|&(f, a)| a * (2.0 * PI * f * t).sin())
                .sum();
            *slot += env * tone;
        }
    }
    out
}

/// Renders a note sequence to a peak-normalized waveform.
pub fn render_audio(seq: &NoteSequence, params: &SynthParams) -> Waveform {
    let mut samples = render_unnormalized(seq, params);
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let gain = PEAK_LEVEL / peak;
        samples.iter_mut().for_each(|s| *s *= gain);
    }
    Waveform {
        samples,
        sample_rate: params.sample_rate,
    }
}

/// T × 128 log-compressed MIDI-pitch spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Array2<f64>,
    pub frame_rate: f64,
}

impl Spectrogram {
    pub fn bin_frequency(m: usize) -> f64 {
        midi_frequency(m as f64)
    }
}

/// T × 12 pitch-class profile, rows L1-normalized (silent rows stay zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    pub frames: Array2<f64>,
    pub frame_rate: f64,
}

/// Triangular MIDI-pitch filterbank: `(frame_len / 2 + 1) × 128`.
pub fn pitch_filterbank(sample_rate: u32, frame_len: usize) -> Array2<f64> {
    let n_bins = frame_len / 2 + 1;
    let sr = f64::from(sample_rate);
    let nyquist = sr / 2.0;
    let mut fb = Array2::zeros((n_bins, N_PITCH_BINS));
    for m in 0..N_PITCH_BINS {
        let center = midi_frequency(m as f64);
        if center > nyquist {
            continue;
        }
        let lower = midi_frequency(m as f64 - 1.0);
        let upper = midi_frequency(m as f64 + 1.0);
        for k in 0..n_bins {
            let f = k as f64 * sr / frame_len as f64;
            let w = if f > lower && f <= center {
                (f - lower) / (center - lower)
            } else if f > center && f < upper {
                (upper - f) / (upper - center)
            } else {
                0.0
            };
            fb[[k, m]] = w;
        }
    }
    fb
}

pub fn hann(frame_len: usize) -> Vec<f64> {
    (0..frame_len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame_len as f64).cos())
        .collect()
}

/// Hann-windowed magnitude STFT, `ceil(len / hop)` frames, zero-padded at the end.
pub fn stft_magnitude(w: &Waveform, frame_len: usize, hop: usize) -> Array2<f64> {
    assert!(hop > 0 && frame_len >= hop, "need frame_len >= hop > 0");
    let n_frames = w.samples.len().div_ceil(hop);
    let n_bins = frame_len / 2 + 1;
    let window = hann(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    let mut mags = Array2::zeros((n_frames, n_bins));
    for t in 0..n_frames {
        let start = t * hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            let x = w.samples.get(start + n).copied().unwrap_or(0.0);
            *slot = Complex::new(x * window[n], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            mags[[t, k]] = buf[k].norm();
        }
    }
    mags
}

/// MIDI-scale spectrogram with `log(1 + x)` compression.
pub fn midi_spectrogram(w: &Waveform, frame_len: usize, hop: usize) -> Spectrogram {
    let mags = stft_magnitude(w, frame_len, hop);
    let fb = pitch_filterbank(w.sample_rate, frame_len);
    Spectrogram {
        frames: mags.dot(&fb).mapv(f64::ln_1p),
        frame_rate: f64::from(w.sample_rate) / hop as f64,
    }
}

pub fn chromagram(s: &Spectrogram) -> Chromagram {
    let t = s.frames.nrows();
    let mut frames = Array2::zeros((t, 12));
    for (m, col) in s.frames.axis_iter(Axis(1)).enumerate() {
        let mut target = frames.column_mut(m % 12);
        target += &col;
    }
    for mut row in frames.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row /= total;
        }
    }
    Chromagram {
        frames,
        frame_rate: s.frame_rate,
    }
}

/// Sample offsets at which [`segment_audio`] cuts.
pub fn segment_starts(n_samples: usize, seg_len: usize, overlap: usize) -> Vec<usize> {
    assert!(overlap < seg_len, "overlap must be shorter than a segment");
    let step = seg_len - overlap;
    let mut starts = Vec::new();
    let mut start = 0;
    while start < n_samples {
        starts.push(start);
        if start + seg_len >= n_samples {
            break;
        }
        start += step;
    }
    starts
}

/// Cuts audio into windows of `seg_seconds` that share `overlap_seconds`
/// with their neighbour. The last window may be shorter.
pub fn segment_audio(w: &Waveform, seg_seconds: f64, overlap_seconds: f64) -> Vec<Waveform> {
    let sr = f64::from(w.sample_rate);
    let seg_len = (seg_seconds * sr).round() as usize;
    let overlap = (overlap_seconds * sr).round() as usize;
    segment_starts(w.samples.len(), seg_len, overlap)
        .into_iter()
        .map(|s| Waveform {
            samples: w.samples[s..(s + seg_len).min(w.samples.len())].to_vec(),
            sample_rate: w.sample_rate,
        })
        .collect()
}

/// Result of joining two segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Stitch {
    pub waveform: Waveform,
    /// Chosen lag in samples: `b[0]` sits at `a.len() - fade + lag`.
    pub lag: isize,
    /// Output sample range covered by the crossfade.
    pub fade_range: (usize, usize),
    /// Set when an input was shorter than the correlation window and the
    /// segments were joined without a lag search.
    pub butt_joined: bool,
}

fn normalized_xcorr(x: &[f64], y: &[f64]) -> f64 {
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}

fn crossfade_join(a: &[f64], b: &[f64], join_at: usize, fade: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(join_at + b.len());
    out.extend_from_slice(&a[..join_at]);
    for n in 0..fade {
        let theta = 0.5 * PI * (n as f64 + 0.5) / fade as f64;
        out.push(a[join_at + n] * theta.cos() + b[n] * theta.sin());
    }
    out.extend_from_slice(&b[fade..]);
    out
}

/// Joins `b` after `a`, choosing the lag within `±max_lag_seconds` that best
/// correlates `a`'s last `fade_seconds` with the head of `b`, then applies an
/// equal-power crossfade. Ties prefer the smallest |lag|, negative first.
pub fn concat_crosscorr(
    a: &Waveform,
    b: &Waveform,
    max_lag_seconds: f64,
    fade_seconds: f64,
) -> Result<Stitch> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::Config(format!(
            "sample rates differ: {} vs {}",
            a.sample_rate, b.sample_rate
        )));
    }
    let sr = f64::from(a.sample_rate);
    let window = ((fade_seconds * sr).round() as usize).max(1);
    let max_lag = (max_lag_seconds * sr).round() as isize;
    let (xa, xb) = (&a.samples, &b.samples);
    let sample_rate = a.sample_rate;

    if xa.len() < window || xb.len() < window {
        log::warn!(
            "segment shorter than the {window}-sample correlation window; joining without lag search"
        );
        let fade = window.min(xa.len()).min(xb.len());
        let join_at = xa.len() - fade;
        return Ok(Stitch {
            waveform: Waveform {
                samples: crossfade_join(xa, xb, join_at, fade),
                sample_rate,
            },
            lag: 0,
            fade_range: (join_at, join_at + fade),
            butt_joined: true,
        });
    }

    let base = (xa.len() - window) as isize;
    let lowest = max_lag.min(base);
    let highest = max_lag.min(window as isize - 1);
    let mut best_lag = 0isize;
    let mut best = f64::NEG_INFINITY;
    let mut candidates = vec![0isize];
    for d in 1..=max_lag.max(0) {
        candidates.push(-d);
        candidates.push(d);
    }
    for lag in candidates {
        if lag < -lowest || lag > highest {
            continue;
        }
        let p = (base + lag) as usize;
        let len = window - lag.max(0) as usize;
        let c = normalized_xcorr(&xa[p..p + len], &xb[..len]);
        if c > best + 1e-12 {
            best = c;
            best_lag = lag;
        }
    }
    let join_at = (base + best_lag) as usize;
    let fade = window - best_lag.max(0) as usize;
    Ok(Stitch {
        waveform: Waveform {
            samples: crossfade_join(xa, xb, join_at, fade),
            sample_rate,
        },
        lag: best_lag,
        fade_range: (join_at, join_at + fade),
        butt_joined: false,
    })
}

/// Joins consecutive overlapping segments left to right.
pub fn stitch_segments(
    segments: &[Waveform],
    max_lag_seconds: f64,
    fade_seconds: f64,
) -> Result<Stitched> {
    let mut iter = segments.iter();
    let Some(first) = iter.next() else {
        return Ok(Stitched {
            waveform: Waveform {
                samples: Vec::new(),
                sample_rate: DEFAULT_SAMPLE_RATE,
            },
            fades: Vec::new(),
            lags: Vec::new(),
            warnings: 0,
        });
    };
    let mut acc = first.clone();
    let mut fades = Vec::new();
    let mut lags = Vec::new();
    let mut warnings = 0;
    for next in iter {
        let s = concat_crosscorr(&acc, next, max_lag_seconds, fade_seconds)?;
        fades.push(s.fade_range);
        lags.push(s.lag);
        warnings += usize::from(s.butt_joined);
        acc = s.waveform;
    }
    Ok(Stitched {
        waveform: acc,
        fades,
        lags,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stitched {
    pub waveform: Waveform,
    pub fades: Vec<(usize, usize)>,
    pub lags: Vec<isize>,
    pub warnings: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::NoteEvent;

    fn single(pitch: u8, velocity: u8, beats: u64) -> NoteSequence {
        let mut seq = NoteSequence::empty(96);
        seq.notes.push(NoteEvent {
            onset_ticks: 0,
            duration_ticks: beats * 96,
            pitch,
            velocity,
            channel: 0,
        });
        seq
    }

    fn sine(freq: f64, seconds: f64, sr: u32) -> Waveform {
        let n = (seconds * f64::from(sr)) as usize;
        Waveform {
            samples: (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / f64::from(sr)).sin())
                .collect(),
            sample_rate: sr,
        }
    }

    #[test]
    fn empty_inputs() {
        let seq = NoteSequence::empty(96);
        assert_eq!(piano_roll(&seq, 100.0).nrows(), 0);
        assert!(render_audio(&seq, &SynthParams::default()).samples.is_empty());
        let silent = Waveform {
            samples: vec![0.0; 4800],
            sample_rate: 24_000,
        };
        let spec = midi_spectrogram(&silent, 2048, 240);
        assert!(spec.frames.iter().all(|&v| v == 0.0));
        assert!(chromagram(&spec).frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn piano_roll_definition() {
        // two beats at 120 BPM is one second
        let roll = piano_roll(&single(60, 127, 2), 100.0);
        assert_eq!(roll.nrows(), 100);
        assert!((0..100).all(|t| roll[[t, 60]] == 1.0));
        assert_eq!(roll.sum(), 100.0);
    }

    #[test]
    fn piano_roll_takes_max_of_overlaps() {
        let mut seq = single(60, 64, 2);
        seq.notes.push(NoteEvent {
            onset_ticks: 48,
            duration_ticks: 48,
            pitch: 60,
            velocity: 127,
            channel: 1,
        });
        let roll = piano_roll(&seq, 100.0);
        assert_eq!(roll[[30, 60]], 1.0);
        assert_eq!(roll[[10, 60]], 64.0 / 127.0);
    }

    #[test]
    fn amplitude_is_linear_in_velocity() {
        let p = SynthParams::default();
        let soft = render_unnormalized(&single(60, 32, 1), &p);
        let loud = render_unnormalized(&single(60, 64, 1), &p);
        for (s, l) in soft.iter().zip(&loud) {
            assert!((l - 2.0 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn render_is_peak_normalized() {
        let w = render_audio(&single(40, 100, 4), &SynthParams::default());
        assert!((w.peak() - PEAK_LEVEL).abs() < 1e-12);
    }

    #[test]
    fn sine_lands_in_a4_bin() {
        let spec = midi_spectrogram(&sine(440.0, 1.0, 24_000), 2048, 240);
        for row in spec.frames.rows() {
            if row.iter().any(|&v| v > 1e-6) {
                let argmax = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0;
                assert_eq!(argmax, 69);
            }
        }
    }

    #[test]
    fn filterbank_touches_at_most_two_filters_and_drops_above_nyquist() {
        let fb = pitch_filterbank(8_000, 1024);
        for row in fb.rows() {
            let nz: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, _)| i)
                .collect();
            assert!(nz.len() <= 2);
            if nz.len() == 2 {
                assert_eq!(nz[1], nz[0] + 1);
            }
        }
        // 4 kHz Nyquist: pitch 108 (4186 Hz) has no response
        assert!(fb.column(108).iter().all(|&w| w == 0.0));
        assert!(fb.column(100).iter().any(|&w| w > 0.0));
    }

    #[test]
    fn louder_signal_never_lowers_a_bin() {
        let w = render_audio(&single(57, 90, 2), &SynthParams::default());
        let mut louder = w.clone();
        louder.samples.iter_mut().for_each(|s| *s *= 2.0);
        let a = midi_spectrogram(&w, 1024, 256);
        let b = midi_spectrogram(&louder, 1024, 256);
        assert!(a.frames.iter().zip(b.frames.iter()).all(|(x, y)| y >= x));
    }

    #[test]
    fn segmentation_points() {
        assert_eq!(segment_starts(96, 96, 0), vec![0]);
        assert_eq!(segment_starts(192, 96, 0), vec![0, 96]);
        assert_eq!(segment_starts(200, 96, 5), vec![0, 91, 182]);
        assert!(segment_starts(0, 96, 0).is_empty());
        let w = Waveform {
            samples: vec![0.0; 1000 * 20],
            sample_rate: 1000,
        };
        let segs = segment_audio(&w, 9.6, 0.5);
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].samples.len(), 20_000 - 18_200);
    }

    #[test]
    fn identical_overlap_selects_zero_lag() {
        let x = sine(313.0, 1.0, 8_000);
        let a = Waveform {
            samples: x.samples[..5000].to_vec(),
            sample_rate: 8000,
        };
        let b = Waveform {
            samples: x.samples[4600..].to_vec(),
            sample_rate: 8000,
        };
        let s = concat_crosscorr(&a, &b, 0.01, 0.05).unwrap();
        assert_eq!(s.lag, 0);
        assert!(!s.butt_joined);
        assert_eq!(s.waveform.samples.len(), x.samples.len());
    }

    #[test]
    fn short_segment_is_butt_joined() {
        let a = Waveform {
            samples: vec![0.1; 100],
            sample_rate: 1000,
        };
        let b = Waveform {
            samples: vec![0.2; 10],
            sample_rate: 1000,
        };
        let s = concat_crosscorr(&a, &b, 0.005, 0.05).unwrap();
        assert!(s.butt_joined);
        assert_eq!(s.waveform.samples.len(), 100);
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = sine(440.0, 0.1, 24_000);
        w.write_wav(&path).unwrap();
        let back = Waveform::read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 24_000);
        assert_eq!(back.samples.len(), w.samples.len());
        assert!(back
            .samples
            .iter()
            .zip(&w.samples)
            .all(|(a, b)| (a - b).abs() < 1e-4));
    }
}
