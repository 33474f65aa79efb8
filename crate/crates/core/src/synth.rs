//! Seeded generator of small multi-track MIDI pieces.
//!
//! Each piece has a conductor track (name, tempo, time signature), a
//! `melody` track and a `piano` accompaniment track. Pieces differ in key,
//! mode, chord progression, accompaniment figure and dynamic shape, so the
//! output is a usable stand-in corpus for the replication benchmark and the
//! test suites when no real dataset is at hand.

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub bars: usize,
    pub tpqn: u16,
    /// Beats per bar, written as `n/4`.
    pub beats_per_bar: u8,
    pub write_time_signature: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            bars: 32,
            tpqn: 480,
            beats_per_bar: 4,
            write_time_signature: true,
        }
    }
}

const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR: [i32; 7] = [0, 2, 3, 5, 7, 8, 10];

struct Note {
    step: usize,
    len: usize,
    pitch: u8,
    velocity: u8,
}

struct Style {
    root: i32,
    scale: [i32; 7],
    progression: [usize; 4],
    figure: u8,
    base_velocity: f64,
    arc: f64,
    density: f64,
}

// Common four-chord loops, as scale degrees, one chord per bar.
const PROGRESSIONS: [[usize; 4]; 6] = [
    [0, 4, 5, 3],
    [5, 3, 0, 4],
    [0, 5, 3, 4],
    [0, 3, 4, 3],
    [1, 4, 0, 5],
    [0, 3, 5, 4],
];

// Phrase order over 4-bar phrases; 0 = A, 1 = B.
const FORM: [usize; 8] = [0, 0, 1, 0, 0, 1, 1, 0];

fn degree_pitch(style: &Style, degree: i32, octave_base: i32) -> i32 {
    let oct = degree.div_euclid(7);
    octave_base + style.root + style.scale[degree.rem_euclid(7) as usize] + 12 * oct
}

fn velocity(style: &Style, rng: &mut ChaCha8Rng, bar_level: f64, step: usize, steps_per_bar: usize, phrase_steps: usize, offset: f64) -> u8 {
    let phase = (step % phrase_steps) as f64 / phrase_steps as f64;
    let arc = style.arc * (std::f64::consts::PI * phase).sin();
    let accent = match step % steps_per_bar {
        0 => 8.0,
        s if s % 4 == 0 => 3.0,
        _ => 0.0,
    };
    let jitter = rng.random_range(-6.0..6.0);
    (style.base_velocity + bar_level + arc + accent + jitter + offset).round().clamp(1.0, 127.0) as u8
}

/// One bar of melody as `(step in bar, length, scale degree)`.
type MelodyBar = Vec<(usize, usize, i32)>;

fn melody_bar(style: &Style, rng: &mut ChaCha8Rng, chord: i32, degree: &mut i32, steps_per_bar: usize) -> MelodyBar {
    let onsets: Vec<usize> = (0..steps_per_bar)
        .filter(|&s| {
            let p = if s % 4 == 0 { 0.85 } else if s % 2 == 0 { style.density } else { style.density * 0.35 };
            rng.random_bool(p)
        })
        .collect();
    let mut bar = Vec::with_capacity(onsets.len());
    for (i, &s) in onsets.iter().enumerate() {
        if s % 4 == 0 && rng.random_bool(0.5) {
            // land on a chord tone
            let target = chord + [0, 2, 4][rng.random_range(0..3)];
            *degree = target + 7 * ((*degree - target) as f64 / 7.0).round() as i32;
        } else {
            *degree += [-2, -1, -1, 0, 1, 1, 2, 3, -3][rng.random_range(0..9)];
        }
        *degree = (*degree).clamp(3, 17);
        let next = onsets.get(i + 1).copied().unwrap_or(steps_per_bar);
        bar.push((s, (next - s).clamp(1, 4), *degree));
    }
    bar
}

fn compose(rng: &mut ChaCha8Rng, opts: &SynthOptions) -> (Vec<Note>, Vec<Note>) {
    let style = Style {
        root: rng.random_range(0..12),
        scale: if rng.random_bool(0.6) { MAJOR } else { MINOR },
        progression: PROGRESSIONS[rng.random_range(0..PROGRESSIONS.len())],
        figure: rng.random_range(0..3),
        base_velocity: rng.random_range(50.0..90.0),
        arc: rng.random_range(4.0..24.0),
        density: rng.random_range(0.3..0.6),
    };
    let steps_per_bar = 4 * opts.beats_per_bar as usize;
    let phrase_steps = 4 * steps_per_bar;

    // two 4-bar melodic phrases, reused through the form with light variation
    let mut degree: i32 = rng.random_range(7..12);
    let phrases: Vec<Vec<MelodyBar>> = (0..2)
        .map(|_| {
            (0..4)
                .map(|b| melody_bar(&style, rng, style.progression[b] as i32, &mut degree, steps_per_bar))
                .collect()
        })
        .collect();

    let mut melody = Vec::new();
    let mut accomp = Vec::new();
    let mut bar_level = 0.0;

    for bar in 0..opts.bars {
        if bar % 4 == 0 {
            bar_level = rng.random_range(-12.0..12.0);
        }
        let chord = style.progression[bar % 4] as i32;
        let start = bar * steps_per_bar;

        let phrase = FORM[(bar / 4) % FORM.len()];
        let mut line = phrases[phrase][bar % 4].clone();
        if rng.random_bool(0.35) {
            let mut d = line.last().map_or(degree, |n| n.2);
            line = melody_bar(&style, rng, chord, &mut d, steps_per_bar);
        }
        for (s, len, d) in line {
            let step = start + s;
            melody.push(Note {
                step,
                len,
                pitch: degree_pitch(&style, d, 48).clamp(0, 127) as u8,
                velocity: velocity(&style, rng, bar_level, step, steps_per_bar, phrase_steps, 6.0),
            });
        }

        let triad: Vec<i32> = [0, 2, 4].iter().map(|d| degree_pitch(&style, chord + d, 48)).collect();
        let bass = degree_pitch(&style, chord, 36);
        let mut push = |s: usize, len: usize, pitch: i32, offset: f64, rng: &mut ChaCha8Rng| {
            let step = start + s;
            accomp.push(Note {
                step,
                len,
                pitch: pitch.clamp(0, 127) as u8,
                velocity: velocity(&style, rng, bar_level, step, steps_per_bar, phrase_steps, offset),
            });
        };
        match style.figure {
            0 => {
                // eighth-note comping over a half-note bass
                for s in (0..steps_per_bar).step_by(8) {
                    push(s, 8, bass, -8.0, rng);
                }
                for s in (0..steps_per_bar).step_by(2) {
                    for &p in &triad {
                        push(s, 2, p, -14.0, rng);
                    }
                }
            }
            1 => {
                push(0, 8, bass, -6.0, rng);
                for (k, s) in (0..steps_per_bar).step_by(2).enumerate() {
                    let p = triad[[0, 1, 2, 1][k % 4]];
                    push(s, 2, p + 12 * i32::from(k % 8 >= 4), -16.0, rng);
                }
            }
            _ => {
                for s in (0..steps_per_bar).step_by(8) {
                    push(s, 4, bass, -6.0, rng);
                }
                for s in (4..steps_per_bar).step_by(8) {
                    for &p in &triad {
                        push(s, 3, p + 12, -14.0, rng);
                    }
                }
                if rng.random_bool(0.5) {
                    push(steps_per_bar - 2, 2, bass + 7, -10.0, rng);
                }
            }
        }
    }
    (melody, accomp)
}

fn meta(m: MetaMessage<'_>) -> TrackEvent<'_> {
    TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(m),
    }
}

fn note_track<'a>(name: &'a [u8], notes: &[Note], channel: u8, ticks_per_step: u32) -> Vec<TrackEvent<'a>> {
    // (tick, is_on, pitch, velocity); offs sort before ons at the same tick
    let mut timeline: Vec<(u32, bool, u8, u8)> = Vec::with_capacity(notes.len() * 2);
    for n in notes {
        let on = n.step as u32 * ticks_per_step;
        timeline.push((on, true, n.pitch, n.velocity));
        timeline.push((on + n.len as u32 * ticks_per_step - 1, false, n.pitch, 0));
    }
    timeline.sort_unstable();
    let mut events = vec![meta(MetaMessage::TrackName(name))];
    let mut last = 0;
    for (tick, is_on, pitch, vel) in timeline {
        let message = if is_on {
            MidiMessage::NoteOn {
                key: u7::new(pitch),
                vel: u7::new(vel),
            }
        } else {
            MidiMessage::NoteOff {
                key: u7::new(pitch),
                vel: u7::new(64),
            }
        };
        events.push(TrackEvent {
            delta: u28::new(tick - last),
            kind: TrackEventKind::Midi {
                channel: u4::new(channel),
                message,
            },
        });
        last = tick;
    }
    events.push(meta(MetaMessage::EndOfTrack));
    events
}

/// One format-1 piece, fully determined by `seed` and `opts`.
pub fn synth_piece(seed: u64, opts: &SynthOptions) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (melody, accomp) = compose(&mut rng, opts);
    let ticks_per_step = u32::from(opts.tpqn / 4).max(1);
    let title = format!("synth {seed}");

    let mut conductor = vec![
        meta(MetaMessage::TrackName(title.as_bytes())),
        meta(MetaMessage::Tempo(u24::new(500_000))),
    ];
    if opts.write_time_signature {
        conductor.push(meta(MetaMessage::TimeSignature(opts.beats_per_bar, 2, 24, 8)));
    }
    conductor.push(meta(MetaMessage::EndOfTrack));

    let mut smf = Smf::new(Header::new(Format::Parallel, Timing::Metrical(u15::new(opts.tpqn))));
    smf.tracks.push(conductor);
    smf.tracks.push(note_track(b"melody", &melody, 0, ticks_per_step));
    smf.tracks.push(note_track(b"piano", &accomp, 1, ticks_per_step));
    let mut out = Vec::new();
    smf.write_std(&mut out).expect("writing to a Vec cannot fail");
    out
}

/// `pieces` files named `piece_000.mid`, ... with seeds derived from `seed`.
pub fn synth_corpus(pieces: usize, seed: u64, opts: &SynthOptions) -> Vec<(String, Vec<u8>)> {
    (0..pieces)
        .map(|i| {
            let piece_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            (format!("piece_{i:03}.mid"), synth_piece(piece_seed, opts))
        })
        .collect()
}
