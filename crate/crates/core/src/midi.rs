//! Standard MIDI File ingestion.
//!
//! Files are reduced to onset-only [`NoteEvent`]s on a fixed grid of
//! `steps_per_quarter` steps per quarter note. Durations, note-offs,
//! controllers and tempo are dropped; only the time-signature meta events
//! survive, as the [`QuantizedTrackSet::meter_ok`] flag.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use globset::{Glob, GlobMatcher};
use midly::num::{u15, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pianoroll::{Flavor, PianoRoll};

pub const DEFAULT_STEPS_PER_QUARTER: u32 = 4;

/// One quantized note onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NoteEvent {
    pub step: u32,
    pub pitch: u8,
    pub velocity: u8,
}

/// The onsets of the selected tracks of one file, on a common grid.
///
/// `events` are sorted by `(step, pitch)` and hold at most one event per
/// `(step, pitch)` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedTrackSet {
    pub events: Vec<NoteEvent>,
    pub steps_per_quarter: u32,
    pub total_steps: u32,
    pub source_id: String,
    /// True iff every time-signature event in the file is 4/4.
    pub meter_ok: bool,
}

impl QuantizedTrackSet {
    /// Bar length in steps, assuming 4/4.
    pub fn steps_per_bar(&self) -> u32 {
        4 * self.steps_per_quarter
    }
}

#[derive(Debug, Clone)]
enum TrackSelector {
    Index(usize),
    Name(GlobMatcher),
}

/// Track selection by index or by glob pattern on the track name.
///
/// Parsed from a comma list such as `"1,piano*"`: purely numeric items are
/// track indices, anything else is matched against `TrackName` meta events.
#[derive(Debug, Clone)]
pub struct TrackFilter {
    raw: String,
    selectors: Vec<TrackSelector>,
}

impl TrackFilter {
    pub fn indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let selectors: Vec<_> = indices.into_iter().map(TrackSelector::Index).collect();
        let raw = selectors
            .iter()
            .map(|s| match s {
                TrackSelector::Index(i) => i.to_string(),
                TrackSelector::Name(_) => unreachable!(),
            })
            .collect::<Vec<_>>()
            .join(",");
        Self { raw, selectors }
    }

    pub fn matches(&self, index: usize, name: Option<&str>) -> bool {
        self.selectors.iter().any(|s| match s {
            TrackSelector::Index(i) => *i == index,
            TrackSelector::Name(glob) => name.is_some_and(|n| glob.is_match(n)),
        })
    }
}

impl FromStr for TrackFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut selectors = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            if let Ok(index) = item.parse::<usize>() {
                selectors.push(TrackSelector::Index(index));
            } else {
                let glob = Glob::new(item).map_err(|_| Error::BadTrackFilter(item.to_owned()))?;
                selectors.push(TrackSelector::Name(glob.compile_matcher()));
            }
        }
        if selectors.is_empty() {
            return Err(Error::BadTrackFilter(s.to_owned()));
        }
        Ok(Self {
            raw: s.to_owned(),
            selectors,
        })
    }
}

impl fmt::Display for TrackFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub steps_per_quarter: u32,
    pub tracks: Option<TrackFilter>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            steps_per_quarter: DEFAULT_STEPS_PER_QUARTER,
            tracks: None,
        }
    }
}

/// Nearest grid step, ties rounded up.
pub fn quantize_tick(tick: u64, steps_per_quarter: u32, tpqn: u32) -> u64 {
    let (spq, tpqn) = (u64::from(steps_per_quarter), u64::from(tpqn));
    (2 * tick * spq + tpqn) / (2 * tpqn)
}

fn quantize_tick_ceil(tick: u64, steps_per_quarter: u32, tpqn: u32) -> u64 {
    let (spq, tpqn) = (u64::from(steps_per_quarter), u64::from(tpqn));
    (tick * spq).div_ceil(tpqn)
}

/// Parses an SMF byte stream into quantized onsets.
pub fn parse_midi(bytes: &[u8], source_id: &str, opts: &IngestOptions) -> Result<QuantizedTrackSet> {
    if opts.steps_per_quarter == 0 {
        return Err(Error::InvalidParams("steps_per_quarter must be positive".into()));
    }
    let smf = Smf::parse(bytes).map_err(|e| Error::MalformedFile(e.to_string()))?;
    if smf.header.format == Format::Sequential {
        return Err(Error::UnsupportedFormat);
    }
    let tpqn = match smf.header.timing {
        Timing::Metrical(t) if t.as_int() > 0 => u32::from(t.as_int()),
        Timing::Metrical(_) => {
            return Err(Error::MalformedFile("zero ticks per quarter note".into()))
        }
        Timing::Timecode(..) => return Err(Error::UnsupportedDivision),
    };
    let spq = opts.steps_per_quarter;

    let mut meter_ok = true;
    // (step, pitch) -> max velocity
    let mut cells: BTreeMap<(u32, u8), u8> = BTreeMap::new();
    let mut end_step = 0u64;

    for (index, track) in smf.tracks.iter().enumerate() {
        let name = track.iter().find_map(|ev| match ev.kind {
            TrackEventKind::Meta(MetaMessage::TrackName(raw)) => {
                Some(String::from_utf8_lossy(raw).into_owned())
            }
            _ => None,
        });
        let selected = opts
            .tracks
            .as_ref()
            .is_none_or(|f| f.matches(index, name.as_deref()));

        let mut tick = 0u64;
        for ev in track {
            tick += u64::from(ev.delta.as_int());
            match ev.kind {
                // Meter applies file-wide, whichever track carries it.
                TrackEventKind::Meta(MetaMessage::TimeSignature(num, denom_pow, _, _)) => {
                    if num != 4 || denom_pow != 2 {
                        meter_ok = false;
                    }
                }
                TrackEventKind::Midi {
                    message: MidiMessage::NoteOn { key, vel },
                    ..
                } if selected && vel.as_int() > 0 => {
                    let step = quantize_tick(tick, spq, tpqn);
                    let step = u32::try_from(step)
                        .map_err(|_| Error::MalformedFile("onset beyond grid range".into()))?;
                    let slot = cells.entry((step, key.as_int())).or_insert(0);
                    *slot = (*slot).max(vel.as_int());
                }
                _ => {}
            }
        }
        if selected {
            end_step = end_step.max(quantize_tick_ceil(tick, spq, tpqn));
        }
    }

    if opts.tracks.is_some() && cells.is_empty() {
        return Err(Error::EmptySelection);
    }

    let events: Vec<NoteEvent> = cells
        .into_iter()
        .map(|((step, pitch), velocity)| NoteEvent {
            step,
            pitch,
            velocity,
        })
        .collect();
    let last_onset = events.last().map_or(0, |e| u64::from(e.step) + 1);
    let total_steps = u32::try_from(end_step.max(last_onset).max(1))
        .map_err(|_| Error::MalformedFile("file longer than grid range".into()))?;

    Ok(QuantizedTrackSet {
        events,
        steps_per_quarter: spq,
        total_steps,
        source_id: source_id.to_owned(),
        meter_ok,
    })
}

/// Reads and parses a MIDI file; the source id is the file name.
pub fn load_midi_file(path: &Path, opts: &IngestOptions) -> Result<QuantizedTrackSet> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let source_id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_midi(&bytes, &source_id, opts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeterVerdict {
    Accepted(QuantizedTrackSet),
    /// The file carries a non-4/4 time signature.
    Rejected { source_id: String },
}

impl MeterVerdict {
    pub fn accepted(self) -> Option<QuantizedTrackSet> {
        match self {
            MeterVerdict::Accepted(ts) => Some(ts),
            MeterVerdict::Rejected { .. } => None,
        }
    }
}

/// Keeps 4/4 material. Files without any time signature count as 4/4.
pub fn filter_meter(ts: QuantizedTrackSet) -> MeterVerdict {
    if ts.meter_ok {
        MeterVerdict::Accepted(ts)
    } else {
        MeterVerdict::Rejected {
            source_id: ts.source_id,
        }
    }
}

/// Writes a roll as a single-track format-0 file. Each onset becomes a note
/// one step long; binary cells are written at velocity 100.
pub fn roll_to_smf(roll: &PianoRoll, tpqn: u16) -> Vec<u8> {
    let ticks_per_step = u32::from(tpqn) * 4 / roll.steps_per_bar() as u32;
    let mut timeline: Vec<(u32, bool, u8, u8)> = Vec::new();
    for (step, pitch, v) in roll.onsets() {
        let on = step as u32 * ticks_per_step;
        let vel = match roll.flavor() {
            Flavor::Binary => 100,
            Flavor::Velocity => v,
        };
        timeline.push((on, true, pitch as u8, vel));
        timeline.push((on + ticks_per_step - 1, false, pitch as u8, 0));
    }
    timeline.sort_unstable();
    let mut track = Vec::with_capacity(timeline.len() + 1);
    let mut last = 0;
    for (tick, is_on, pitch, vel) in timeline {
        let (key, vel) = (u7::new(pitch), u7::new(vel));
        let message = if is_on {
            MidiMessage::NoteOn { key, vel }
        } else {
            MidiMessage::NoteOff { key, vel }
        };
        track.push(TrackEvent {
            delta: u28::new(tick - last),
            kind: TrackEventKind::Midi {
                channel: u4::new(0),
                message,
            },
        });
        last = tick;
    }
    track.push(TrackEvent {
        delta: u28::new(roll.steps() as u32 * ticks_per_step - last),
        kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
    });
    let mut smf = Smf::new(Header::new(Format::SingleTrack, Timing::Metrical(u15::new(tpqn))));
    smf.tracks.push(track);
    let mut out = Vec::new();
    smf.write_std(&mut out).expect("writing to a Vec cannot fail");
    out
}
