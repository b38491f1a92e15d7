//! Standard MIDI File reading and writing, plus tick/beat/second conversion.
//!
//! Files are flattened into a [`NoteSequence`]: note-on/note-off pairs become
//! [`NoteEvent`]s, tracks are merged on absolute tick, and the tempo and
//! time-signature meta events are kept as maps. Overlapping notes of the same
//! pitch on one channel are paired first-in first-out, so a re-parsed file
//! only reproduces sequences whose same-pitch overlaps end in start order.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tempo assumed before the first tempo event (120 BPM).
pub const DEFAULT_US_PER_QUARTER: u32 = 500_000;

/// Largest value a four-byte variable-length quantity can hold.
pub const MAX_VLQ: u64 = 0x0FFF_FFFF;

const SUSTAIN_CONTROLLER: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_ticks: u64,
    pub duration_ticks: u64,
    pub pitch: u8,
    pub velocity: u8,
    pub channel: u8,
}

impl NoteEvent {
    pub fn offset_ticks(&self) -> u64 {
        self.onset_ticks + self.duration_ticks
    }

    fn sort_key(&self) -> (u64, u8, u64, u8, u8) {
        (
            self.onset_ticks,
            self.pitch,
            self.duration_ticks,
            self.velocity,
            self.channel,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub tick: u64,
    pub microseconds_per_quarter: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSignatureEvent {
    pub tick: u64,
    pub numerator: u8,
    /// Denominator as a power of two: 2 means quarter notes, 3 eighths.
    pub denominator_log2: u8,
}

impl TimeSignatureEvent {
    pub fn common_time(tick: u64) -> Self {
        Self {
            tick,
            numerator: 4,
            denominator_log2: 2,
        }
    }

    /// Bar length in ticks at the given resolution, with the quarter note as the beat.
    pub fn bar_ticks(&self, ppq: u32) -> u64 {
        let quarter_fraction_num = u64::from(self.numerator) * 4 * u64::from(ppq);
        (quarter_fraction_num >> self.denominator_log2).max(1)
    }
}

/// Controller-64 event on any channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SustainEvent {
    pub tick: u64,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSequence {
    pub ppq: u32,
    pub notes: Vec<NoteEvent>,
    pub tempi: Vec<TempoEvent>,
    pub time_signatures: Vec<TimeSignatureEvent>,
    pub sustain_events: Vec<SustainEvent>,
}

impl NoteSequence {
    /// Builds a sequence in canonical form: notes sorted by (onset, pitch),
    /// tempo and signature maps sorted with one entry per tick, and a 4/4
    /// signature inserted when none is given.
    pub fn new(
        ppq: u32,
        mut notes: Vec<NoteEvent>,
        tempi: Vec<TempoEvent>,
        time_signatures: Vec<TimeSignatureEvent>,
        mut sustain_events: Vec<SustainEvent>,
    ) -> Self {
        for n in &mut notes {
            n.duration_ticks = n.duration_ticks.max(1);
            n.velocity = n.velocity.clamp(1, 127);
        }
        notes.sort_by_key(NoteEvent::sort_key);
        sustain_events.sort_by_key(|s| s.tick);
        let tempi = dedup_last_by_tick(tempi, |t| t.tick);
        let mut time_signatures = dedup_last_by_tick(time_signatures, |t| t.tick);
        if time_signatures.is_empty() {
            time_signatures.push(TimeSignatureEvent::common_time(0));
        }
        Self {
            ppq,
            notes,
            tempi,
            time_signatures,
            sustain_events,
        }
    }

    /// Empty sequence at the given resolution with a 120 BPM tempo and 4/4 time.
    pub fn empty(ppq: u32) -> Self {
        Self::new(
            ppq,
            Vec::new(),
            vec![TempoEvent {
                tick: 0,
                microseconds_per_quarter: DEFAULT_US_PER_QUARTER,
            }],
            Vec::new(),
            Vec::new(),
        )
    }

    pub fn end_tick(&self) -> u64 {
        self.notes
            .iter()
            .map(NoteEvent::offset_ticks)
            .max()
            .unwrap_or(0)
    }

    pub fn duration_seconds(&self) -> f64 {
        ticks_to_seconds(self, self.end_tick())
    }
}

fn dedup_last_by_tick<T: Copy>(mut events: Vec<T>, tick: impl Fn(&T) -> u64) -> Vec<T> {
    events.sort_by_key(|e| tick(e));
    let mut out: Vec<T> = Vec::with_capacity(events.len());
    for e in events {
        match out.last_mut() {
            Some(last) if tick(last) == tick(&e) => *last = e,
            _ => out.push(e),
        }
    }
    out
}

/// Converts an absolute tick to seconds by integrating over the tempo map.
/// The last tempo extends past the final event.
pub fn ticks_to_seconds(seq: &NoteSequence, tick: u64) -> f64 {
    let ppq = f64::from(seq.ppq);
    let mut seconds = 0.0;
    let mut span_start = 0u64;
    let mut us_per_quarter = DEFAULT_US_PER_QUARTER;
    for tempo in &seq.tempi {
        if tempo.tick >= tick {
            break;
        }
        seconds += (tempo.tick - span_start) as f64 / ppq * f64::from(us_per_quarter) / 1e6;
        span_start = tempo.tick;
        us_per_quarter = tempo.microseconds_per_quarter;
    }
    seconds + (tick - span_start) as f64 / ppq * f64::from(us_per_quarter) / 1e6
}

pub fn ticks_to_beats(seq: &NoteSequence, tick: u64) -> f64 {
    tick as f64 / f64::from(seq.ppq)
}

fn rescale_tick(tick: u64, from: u32, to: u32) -> u64 {
    // round half up: floor(tick * to / from + 1/2)
    let (from, to) = (u128::from(from), u128::from(to));
    ((2 * u128::from(tick) * to + from) / (2 * from)) as u64
}

/// Rescales every tick position to `target_ticks_per_beat` ticks per quarter note.
pub fn resample_grid(seq: &NoteSequence, target_ticks_per_beat: u32) -> NoteSequence {
    assert!(target_ticks_per_beat > 0, "target resolution must be positive");
    let (from, to) = (seq.ppq, target_ticks_per_beat);
    let notes = seq
        .notes
        .iter()
        .map(|n| NoteEvent {
            onset_ticks: rescale_tick(n.onset_ticks, from, to),
            duration_ticks: rescale_tick(n.duration_ticks, from, to).max(1),
            ..*n
        })
        .collect();
    let tempi = seq
        .tempi
        .iter()
        .map(|t| TempoEvent {
            tick: rescale_tick(t.tick, from, to),
            ..*t
        })
        .collect();
    let time_signatures = seq
        .time_signatures
        .iter()
        .map(|t| TimeSignatureEvent {
            tick: rescale_tick(t.tick, from, to),
            ..*t
        })
        .collect();
    let sustain_events = seq
        .sustain_events
        .iter()
        .map(|s| SustainEvent {
            tick: rescale_tick(s.tick, from, to),
            ..*s
        })
        .collect();
    NoteSequence::new(to, notes, tempi, time_signatures, sustain_events)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::MidiParse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!("unexpected end of data (wanted {n} bytes)")));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u64> {
        let start = self.pos;
        let mut value = 0u64;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u64::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::MidiParse {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes".into(),
        })
    }

    fn data_byte(&mut self) -> Result<u8> {
        let at = self.pos;
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(Error::MidiParse {
                offset: at,
                reason: format!("expected data byte, found status 0x{b:02x}"),
            });
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy)]
enum RawEvent {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Sustain(u8),
    Tempo(u32),
    TimeSignature { numerator: u8, denominator_log2: u8 },
}

/// Parses a format 0 or 1 Standard MIDI File.
pub fn parse_smf(bytes: &[u8]) -> Result<NoteSequence> {
    let (seq, warnings) = parse_smf_with_warnings(bytes)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(seq)
}

/// Like [`parse_smf`] but returns recoverable problems instead of logging them.
pub fn parse_smf_with_warnings(bytes: &[u8]) -> Result<(NoteSequence, Vec<String>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(Error::MidiParse {
            offset: 0,
            reason: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err(format!("header length {header_len} is shorter than 6")));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    if format > 1 {
        return Err(Error::MidiParse {
            offset: header_start,
            reason: format!("unsupported SMF format {format}"),
        });
    }
    let n_tracks = r.u16()?;
    let division_at = r.pos;
    let division = r.u16()?;
    if division & 0x8000 != 0 || division == 0 {
        return Err(Error::MidiParse {
            offset: division_at,
            reason: format!("unsupported time division 0x{division:04x}"),
        });
    }
    r.take(header_len - 6)?;

    // (tick, track, order-within-track, event)
    let mut events: Vec<(u64, usize, usize, RawEvent)> = Vec::new();
    let mut final_tick = 0u64;
    let mut track = 0usize;
    while track < usize::from(n_tracks) && r.pos < bytes.len() {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if id != b"MTrk" {
            // unknown chunk types are skipped
            r.take(len).map_err(|_| Error::MidiParse {
                offset: chunk_at,
                reason: "chunk length runs past end of file".into(),
            })?;
            continue;
        }
        let end = r.pos.checked_add(len).filter(|&e| e <= bytes.len()).ok_or(
            Error::MidiParse {
                offset: chunk_at,
                reason: "track length runs past end of file".into(),
            },
        )?;
        let mut tick = 0u64;
        let mut running: Option<u8> = None;
        let mut order = 0usize;
        while r.pos < end {
            tick += r.vlq()?;
            let status_at = r.pos;
            let first = r.u8()?;
            let (status, first_data) = if first & 0x80 != 0 {
                (first, None)
            } else {
                let s = running.ok_or(Error::MidiParse {
                    offset: status_at,
                    reason: "data byte without running status".into(),
                })?;
                (s, Some(first))
            };
            let data = |r: &mut Reader<'_>, used: &mut Option<u8>| -> Result<u8> {
                match used.take() {
                    Some(b) => Ok(b),
                    None => r.data_byte(),
                }
            };
            let mut pending = first_data;
            let raw = match status {
                0xff => {
                    running = None;
                    let kind = r.u8()?;
                    let len = r.vlq()? as usize;
                    let payload = r.take(len)?;
                    match kind {
                        0x51 if len == 3 => Some(RawEvent::Tempo(
                            u32::from(payload[0]) << 16
                                | u32::from(payload[1]) << 8
                                | u32::from(payload[2]),
                        )),
                        0x58 if len >= 2 => Some(RawEvent::TimeSignature {
                            numerator: payload[0],
                            denominator_log2: payload[1],
                        }),
                        0x2f => {
                            final_tick = final_tick.max(tick);
                            None
                        }
                        _ => None,
                    }
                }
                0xf0 | 0xf7 => {
                    running = None;
                    let len = r.vlq()? as usize;
                    r.take(len)?;
                    None
                }
                0xf1..=0xfe => {
                    return Err(Error::MidiParse {
                        offset: status_at,
                        reason: format!("system message 0x{status:02x} not allowed in a file"),
                    })
                }
                _ => {
                    running = Some(status);
                    let channel = status & 0x0f;
                    match status & 0xf0 {
                        0x80 => {
                            let pitch = data(&mut r, &mut pending)?;
                            data(&mut r, &mut pending)?;
                            Some(RawEvent::NoteOff { channel, pitch })
                        }
                        0x90 => {
                            let pitch = data(&mut r, &mut pending)?;
                            let velocity = data(&mut r, &mut pending)?;
                            Some(if velocity == 0 {
                                RawEvent::NoteOff { channel, pitch }
                            } else {
                                RawEvent::NoteOn {
                                    channel,
                                    pitch,
                                    velocity,
                                }
                            })
                        }
                        0xb0 => {
                            let controller = data(&mut r, &mut pending)?;
                            let value = data(&mut r, &mut pending)?;
                            (controller == SUSTAIN_CONTROLLER).then_some(RawEvent::Sustain(value))
                        }
                        0xa0 | 0xe0 => {
                            data(&mut r, &mut pending)?;
                            data(&mut r, &mut pending)?;
                            None
                        }
                        0xc0 | 0xd0 => {
                            data(&mut r, &mut pending)?;
                            None
                        }
                        _ => unreachable!("status byte has its high bit set"),
                    }
                }
            };
            if let Some(ev) = raw {
                events.push((tick, track, order, ev));
                order += 1;
            }
            final_tick = final_tick.max(tick);
        }
        if r.pos != end {
            return Err(r.err("event runs past end of track chunk"));
        }
        track += 1;
    }
    if track < usize::from(n_tracks) {
        return Err(r.err(format!(
            "header declares {n_tracks} tracks but only {track} were found"
        )));
    }

    events.sort_by_key(|&(tick, track, order, _)| (tick, track, order));
    let mut warnings = Vec::new();
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut notes = Vec::new();
    let mut tempi = Vec::new();
    let mut time_signatures = Vec::new();
    let mut sustain_events = Vec::new();
    for (tick, _, _, ev) in events {
        match ev {
            RawEvent::NoteOn {
                channel,
                pitch,
                velocity,
            } => open
                .entry((channel, pitch))
                .or_default()
                .push_back((tick, velocity)),
            RawEvent::NoteOff { channel, pitch } => {
                if let Some((onset, velocity)) = open
                    .get_mut(&(channel, pitch))
                    .and_then(VecDeque::pop_front)
                {
                    notes.push(NoteEvent {
                        onset_ticks: onset,
                        duration_ticks: (tick - onset).max(1),
                        pitch,
                        velocity,
                        channel,
                    });
                }
            }
            RawEvent::Sustain(value) => sustain_events.push(SustainEvent { tick, value }),
            RawEvent::Tempo(us) if us > 0 => tempi.push(TempoEvent {
                tick,
                microseconds_per_quarter: us,
            }),
            RawEvent::Tempo(_) => warnings.push(format!("ignored zero tempo at tick {tick}")),
            RawEvent::TimeSignature {
                numerator,
                denominator_log2,
            } => time_signatures.push(TimeSignatureEvent {
                tick,
                numerator: numerator.max(1),
                denominator_log2: denominator_log2.min(6),
            }),
        }
    }
    let mut dangling: Vec<_> = open
        .into_iter()
        .flat_map(|((channel, pitch), q)| {
            q.into_iter().map(move |(onset, velocity)| (channel, pitch, onset, velocity))
        })
        .collect();
    dangling.sort_unstable();
    for (channel, pitch, onset, velocity) in dangling {
        warnings.push(format!(
            "note-on without note-off (channel {channel}, pitch {pitch}, tick {onset}); closed at tick {final_tick}"
        ));
        notes.push(NoteEvent {
            onset_ticks: onset,
            duration_ticks: final_tick.saturating_sub(onset).max(1),
            pitch,
            velocity,
            channel,
        });
    }
    let seq = NoteSequence::new(
        u32::from(division),
        notes,
        tempi,
        time_signatures,
        sustain_events,
    );
    Ok((seq, warnings))
}

fn push_vlq(out: &mut Vec<u8>, value: u64) -> Result<()> {
    if value > MAX_VLQ {
        return Err(Error::VlqOverflow { value });
    }
    let mut groups = [0u8; 4];
    let mut n = 0;
    let mut v = value;
    loop {
        groups[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let cont = if i > 0 { 0x80 } else { 0 };
        out.push(groups[i] | cont);
    }
    Ok(())
}

fn track_chunk(events: &[(u64, Vec<u8>)]) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    let mut last = 0u64;
    for (tick, msg) in events {
        push_vlq(&mut body, tick - last)?;
        body.extend_from_slice(msg);
        last = *tick;
    }
    push_vlq(&mut body, 0)?;
    body.extend_from_slice(&[0xff, 0x2f, 0x00]);
    let mut chunk = Vec::with_capacity(body.len() + 8);
    chunk.extend_from_slice(b"MTrk");
    chunk.extend_from_slice(&(body.len() as u32).to_be_bytes());
    chunk.extend_from_slice(&body);
    Ok(chunk)
}

/// Serializes a sequence as a format-1 file: a conductor track holding tempo
/// and time signatures, then one track with every note and sustain event.
/// Running status is never emitted.
pub fn write_smf(seq: &NoteSequence) -> Result<Vec<u8>> {
    if seq.ppq == 0 || seq.ppq > 0x7fff {
        return Err(Error::Config(format!("ppq {} not encodable", seq.ppq)));
    }
    let mut conductor: Vec<(u64, u8, Vec<u8>)> = Vec::new();
    for ts in &seq.time_signatures {
        conductor.push((
            ts.tick,
            0,
            vec![0xff, 0x58, 0x04, ts.numerator, ts.denominator_log2, 24, 8],
        ));
    }
    for t in &seq.tempi {
        let us = t.microseconds_per_quarter;
        if us == 0 || us > 0x00ff_ffff {
            return Err(Error::Config(format!("tempo {us} not encodable")));
        }
        conductor.push((
            t.tick,
            1,
            vec![0xff, 0x51, 0x03, (us >> 16) as u8, (us >> 8) as u8, us as u8],
        ));
    }
    conductor.sort_by_key(|&(tick, kind, _)| (tick, kind));

    // priority at equal ticks: note-offs, pedal, note-ons
    let mut body: Vec<(u64, u8, usize, Vec<u8>)> = Vec::new();
    for (i, n) in seq.notes.iter().enumerate() {
        let ch = n.channel & 0x0f;
        body.push((n.offset_ticks(), 0, i, vec![0x80 | ch, n.pitch & 0x7f, 0x40]));
        body.push((
            n.onset_ticks,
            2,
            i,
            vec![0x90 | ch, n.pitch & 0x7f, n.velocity.clamp(1, 127)],
        ));
    }
    for (i, s) in seq.sustain_events.iter().enumerate() {
        body.push((s.tick, 1, i, vec![0xb0, SUSTAIN_CONTROLLER, s.value & 0x7f]));
    }
    body.sort_by_key(|&(tick, prio, i, _)| (tick, prio, i));

    let conductor: Vec<_> = conductor.into_iter().map(|(t, _, m)| (t, m)).collect();
    let body: Vec<_> = body.into_iter().map(|(t, _, _, m)| (t, m)).collect();

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&2u16.to_be_bytes());
    out.extend_from_slice(&(seq.ppq as u16).to_be_bytes());
    out.extend(track_chunk(&conductor)?);
    out.extend(track_chunk(&body)?);
    Ok(out)
}

pub fn read_midi_file(path: impl AsRef<std::path::Path>) -> Result<NoteSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_smf(&bytes)
}

pub fn write_midi_file(path: impl AsRef<std::path::Path>, seq: &NoteSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_smf(seq)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_note_file() -> Vec<u8> {
        let mut track = vec![
            0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, // tempo 500000
            0x00, 0x90, 60, 80, // note on
            0x83, 0x60, 0x80, 60, 0x40, // delta 480, note off
            0x00, 0xff, 0x2f, 0x00,
        ];
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xe0]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(track.len() as u32).to_be_bytes());
        out.append(&mut track);
        out
    }

    #[test]
    fn parses_single_note() {
        let seq = parse_smf(&one_note_file()).unwrap();
        assert_eq!(seq.ppq, 480);
        assert_eq!(
            seq.notes,
            vec![NoteEvent {
                onset_ticks: 0,
                duration_ticks: 480,
                pitch: 60,
                velocity: 80,
                channel: 0
            }]
        );
        assert_eq!(seq.tempi.len(), 1);
        assert_eq!(seq.tempi[0].microseconds_per_quarter, 500_000);
        assert_eq!(seq.time_signatures, vec![TimeSignatureEvent::common_time(0)]);
    }

    #[test]
    fn rewrite_preserves_single_note() {
        let seq = parse_smf(&one_note_file()).unwrap();
        let again = parse_smf(&write_smf(&seq).unwrap()).unwrap();
        assert_eq!(again, seq);
    }

    #[test]
    fn header_without_tracks_has_no_notes() {
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 1, 0, 0, 0, 96]);
        let seq = parse_smf(&bytes).unwrap();
        assert!(seq.notes.is_empty());
    }

    #[test]
    fn tempo_only_file() {
        let track = [0x00, 0xff, 0x51, 0x03, 0x0f, 0x42, 0x40, 0x00, 0xff, 0x2f, 0x00];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0, 96]);
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let seq = parse_smf(&bytes).unwrap();
        assert!(seq.notes.is_empty());
        assert_eq!(
            seq.tempi,
            vec![TempoEvent {
                tick: 0,
                microseconds_per_quarter: 1_000_000
            }]
        );
    }

    #[test]
    fn running_status_and_zero_velocity_note_off() {
        // note on 60, running-status note on 64, then both released via velocity 0
        let track = [
            0x00, 0x90, 60, 100, 0x00, 64, 90, 0x60, 60, 0, 0x00, 64, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0, 96]);
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let seq = parse_smf(&bytes).unwrap();
        assert_eq!(seq.notes.len(), 2);
        assert!(seq.notes.iter().all(|n| n.duration_ticks == 96));
        assert_eq!(seq.notes[1].velocity, 90);
    }

    #[test]
    fn overlapping_same_pitch_is_fifo() {
        let track = [
            0x00, 0x90, 60, 10, // on A @0
            0x10, 0x90, 60, 20, // on B @16
            0x10, 0x80, 60, 0, // off @32 closes A
            0x10, 0x80, 60, 0, // off @48 closes B
            0x00, 0xff, 0x2f, 0x00,
        ];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0, 96]);
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let seq = parse_smf(&bytes).unwrap();
        assert_eq!((seq.notes[0].velocity, seq.notes[0].duration_ticks), (10, 32));
        assert_eq!((seq.notes[1].velocity, seq.notes[1].duration_ticks), (20, 32));
    }

    #[test]
    fn dangling_note_closed_at_final_tick_with_warning() {
        let track = [0x00, 0x90, 60, 10, 0x60, 0xff, 0x2f, 0x00];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0, 96]);
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let (seq, warnings) = parse_smf_with_warnings(&bytes).unwrap();
        assert_eq!(seq.notes[0].duration_ticks, 96);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn malformed_header_reports_offset() {
        match parse_smf(b"MThx\0\0\0\x06") {
            Err(Error::MidiParse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        let mut truncated = one_note_file();
        truncated.truncate(30);
        assert!(matches!(
            parse_smf(&truncated),
            Err(Error::MidiParse { .. })
        ));
    }

    #[test]
    fn format_two_rejected() {
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 2, 0, 0, 0, 96]);
        assert!(matches!(
            parse_smf(&bytes),
            Err(Error::MidiParse { offset: 8, .. })
        ));
    }

    #[test]
    fn oversized_delta_is_an_error() {
        let mut seq = NoteSequence::empty(96);
        seq.notes.push(NoteEvent {
            onset_ticks: MAX_VLQ + 1,
            duration_ticks: 1,
            pitch: 60,
            velocity: 64,
            channel: 0,
        });
        assert!(matches!(write_smf(&seq), Err(Error::VlqOverflow { .. })));
    }

    #[test]
    fn seconds_from_ticks() {
        let mut seq = NoteSequence::empty(480);
        assert_eq!(ticks_to_seconds(&seq, 480), 0.5);
        assert_eq!(ticks_to_seconds(&seq, 0), 0.0);
        seq.tempi.push(TempoEvent {
            tick: 480,
            microseconds_per_quarter: 250_000,
        });
        assert!((ticks_to_seconds(&seq, 960) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn grid_resampling_rounds_half_up_and_clamps() {
        let mut seq = NoteSequence::empty(480);
        for (onset, dur) in [(480, 480), (479, 2), (240, 2)] {
            seq.notes.push(NoteEvent {
                onset_ticks: onset,
                duration_ticks: dur,
                pitch: 60,
                velocity: 64,
                channel: 0,
            });
        }
        let seq = NoteSequence::new(seq.ppq, seq.notes, seq.tempi, seq.time_signatures, vec![]);
        let out = resample_grid(&seq, 96);
        assert_eq!(out.ppq, 96);
        let onsets: Vec<_> = out.notes.iter().map(|n| n.onset_ticks).collect();
        assert_eq!(onsets, vec![48, 96, 96]);
        assert!(out.notes.iter().all(|n| n.duration_ticks >= 1));
        // 2 ticks at 480 -> 0.4 ticks at 96 -> clamped
        assert_eq!(out.notes[0].duration_ticks, 1);
        assert_eq!(rescale_tick(2, 480, 96), 0);
        assert_eq!(rescale_tick(5, 10, 1), 1);
    }

    #[test]
    fn bar_lengths() {
        assert_eq!(TimeSignatureEvent::common_time(0).bar_ticks(96), 384);
        let six_eight = TimeSignatureEvent {
            tick: 0,
            numerator: 6,
            denominator_log2: 3,
        };
        assert_eq!(six_eight.bar_ticks(96), 288);
    }
}
