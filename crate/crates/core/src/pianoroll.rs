//! Binary and velocity piano rolls, pitch-class folding and clip surgery.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::QuantizedTrackSet;

pub const PITCHES: usize = 128;
pub const PITCH_CLASSES: usize = 12;
pub const DEFAULT_STEPS_PER_BAR: usize = 16;
pub const DEFAULT_CLIP_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Binary,
    Velocity,
}

/// A `steps × 128` onset matrix, stored step-major.
///
/// Binary rolls hold `0` or `1`; velocity rolls hold `0` or a MIDI velocity
/// in `1..=127`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PianoRoll {
    grid: Vec<u8>,
    steps: usize,
    flavor: Flavor,
    steps_per_bar: usize,
}

impl PianoRoll {
    pub fn silent(steps: usize, flavor: Flavor, steps_per_bar: usize) -> Self {
        Self {
            grid: vec![0; steps * PITCHES],
            steps,
            flavor,
            steps_per_bar,
        }
    }

    /// Builds a roll from a step-major `steps × 128` grid, checking the
    /// flavor's value range.
    pub fn from_grid(grid: Vec<u8>, flavor: Flavor, steps_per_bar: usize) -> Result<Self> {
        if !grid.len().is_multiple_of(PITCHES) {
            return Err(Error::InvalidParams(format!(
                "grid length {} is not a multiple of {PITCHES}",
                grid.len()
            )));
        }
        let max = match flavor {
            Flavor::Binary => 1,
            Flavor::Velocity => 127,
        };
        if grid.iter().any(|&v| v > max) {
            return Err(Error::InvalidParams(format!("{flavor:?} roll value above {max}")));
        }
        if steps_per_bar == 0 {
            return Err(Error::InvalidParams("steps_per_bar must be positive".into()));
        }
        let steps = grid.len() / PITCHES;
        Ok(Self {
            grid,
            steps,
            flavor,
            steps_per_bar,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn steps_per_bar(&self) -> usize {
        self.steps_per_bar
    }

    pub fn bars(&self) -> usize {
        self.steps / self.steps_per_bar
    }

    pub fn get(&self, step: usize, pitch: usize) -> u8 {
        self.grid[step * PITCHES + pitch]
    }

    pub fn set(&mut self, step: usize, pitch: usize, value: u8) {
        let value = match self.flavor {
            Flavor::Binary => u8::from(value > 0),
            Flavor::Velocity => value.min(127),
        };
        self.grid[step * PITCHES + pitch] = value;
    }

    /// The 128 cells of one time step.
    pub fn row(&self, step: usize) -> &[u8] {
        &self.grid[step * PITCHES..(step + 1) * PITCHES]
    }

    pub fn cells(&self) -> &[u8] {
        &self.grid
    }

    /// Iterates `(step, pitch, value)` over nonzero cells in step-major order.
    pub fn onsets(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (i / PITCHES, i % PITCHES, v))
    }

    pub fn onset_count(&self) -> usize {
        self.grid.iter().filter(|&&v| v > 0).count()
    }

    pub fn is_silent(&self) -> bool {
        self.grid.iter().all(|&v| v == 0)
    }

    /// Same onsets with every nonzero cell set to 1.
    pub fn to_binary(&self) -> PianoRoll {
        PianoRoll {
            grid: self.grid.iter().map(|&v| u8::from(v > 0)).collect(),
            steps: self.steps,
            flavor: Flavor::Binary,
            steps_per_bar: self.steps_per_bar,
        }
    }

    /// Cyclic time shift: step `t` of the result is step `t - dt` (mod T) of `self`.
    pub fn time_shifted(&self, dt: isize) -> PianoRoll {
        let mut out = PianoRoll::silent(self.steps, self.flavor, self.steps_per_bar);
        if self.steps == 0 {
            return out;
        }
        let t_len = self.steps as isize;
        for t in 0..self.steps {
            let src = (t as isize - dt).rem_euclid(t_len) as usize;
            out.grid[t * PITCHES..(t + 1) * PITCHES].copy_from_slice(self.row(src));
        }
        out
    }

    /// Moves every onset by `semitones`; onsets leaving `0..=127` are dropped.
    pub fn transposed(&self, semitones: i32) -> PianoRoll {
        let mut out = PianoRoll::silent(self.steps, self.flavor, self.steps_per_bar);
        for (step, pitch, v) in self.onsets() {
            let p = pitch as i32 + semitones;
            if (0..PITCHES as i32).contains(&p) {
                out.grid[step * PITCHES + p as usize] = v;
            }
        }
        out
    }

    /// Greyscale PGM (P5) with time on the x axis and pitch 127 at the top.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.steps, PITCHES).into_bytes();
        for pitch in (0..PITCHES).rev() {
            for step in 0..self.steps {
                let v = u32::from(self.get(step, pitch));
                let level = match self.flavor {
                    Flavor::Binary => v * 255,
                    Flavor::Velocity => v * 255 / 127,
                };
                out.push(level as u8);
            }
        }
        out
    }

    /// `step,pitch,value` rows for every nonzero cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,pitch,value\n");
        for (step, pitch, v) in self.onsets() {
            let _ = writeln!(out, "{step},{pitch},{v}");
        }
        out
    }
}

/// Builds a roll from quantized onsets, padded with silence to whole bars.
pub fn build_roll(ts: &QuantizedTrackSet, flavor: Flavor) -> Result<PianoRoll> {
    if ts.events.is_empty() {
        return Err(Error::EmptyInput);
    }
    let steps_per_bar = ts.steps_per_bar() as usize;
    let last = ts.events.iter().map(|e| e.step as usize + 1).max().unwrap_or(0);
    let steps = (ts.total_steps as usize).max(last).div_ceil(steps_per_bar) * steps_per_bar;
    let mut roll = PianoRoll::silent(steps, flavor, steps_per_bar);
    for e in &ts.events {
        let cell = &mut roll.grid[e.step as usize * PITCHES + e.pitch as usize];
        let v = match flavor {
            Flavor::Binary => 1,
            Flavor::Velocity => e.velocity.clamp(1, 127),
        };
        *cell = (*cell).max(v);
    }
    Ok(roll)
}

/// A `steps × 12` matrix of pitch-class onset counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FoldedRoll {
    grid: Vec<u16>,
    steps: usize,
}

impl FoldedRoll {
    pub fn from_counts(grid: Vec<u16>) -> Result<Self> {
        if !grid.len().is_multiple_of(PITCH_CLASSES) {
            return Err(Error::InvalidParams(format!(
                "folded grid length {} is not a multiple of 12",
                grid.len()
            )));
        }
        let steps = grid.len() / PITCH_CLASSES;
        Ok(Self { grid, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, step: usize, class: usize) -> u16 {
        self.grid[step * PITCH_CLASSES + class]
    }

    pub fn row(&self, step: usize) -> &[u16] {
        &self.grid[step * PITCH_CLASSES..(step + 1) * PITCH_CLASSES]
    }

    pub fn total(&self) -> u64 {
        self.grid.iter().map(|&c| u64::from(c)).sum()
    }

    /// Bit `k` is set iff pitch class `k` has at least one onset at `step`.
    pub fn active_mask(&self, step: usize) -> u16 {
        self.row(step)
            .iter()
            .enumerate()
            .fold(0u16, |m, (k, &c)| if c > 0 { m | (1 << k) } else { m })
    }

    pub fn active_masks(&self) -> Vec<u16> {
        (0..self.steps).map(|t| self.active_mask(t)).collect()
    }

    /// Steps `[start, start + len)` as a standalone roll.
    pub fn window(&self, start: usize, len: usize) -> FoldedRoll {
        FoldedRoll {
            grid: self.grid[start * PITCH_CLASSES..(start + len) * PITCH_CLASSES].to_vec(),
            steps: len,
        }
    }
}

/// Sums the 128 pitch rows into 12 pitch classes (`pitch mod 12`).
pub fn fold_pitch_classes(pr: &PianoRoll) -> Result<FoldedRoll> {
    if pr.flavor != Flavor::Binary {
        return Err(Error::WrongFlavor { expected: "binary" });
    }
    let mut grid = vec![0u16; pr.steps * PITCH_CLASSES];
    for step in 0..pr.steps {
        for (pitch, &v) in pr.row(step).iter().enumerate() {
            grid[step * PITCH_CLASSES + pitch % PITCH_CLASSES] += u16::from(v);
        }
    }
    Ok(FoldedRoll {
        grid,
        steps: pr.steps,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ClipOrigin {
    pub source_id: String,
    pub start_step: usize,
}

/// A fixed-length excerpt of a piece.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clip {
    pub roll: PianoRoll,
    pub origin: ClipOrigin,
}

impl Clip {
    pub fn new(roll: PianoRoll, source_id: impl Into<String>, start_step: usize) -> Self {
        Self {
            roll,
            origin: ClipOrigin {
                source_id: source_id.into(),
                start_step,
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.roll.is_silent()
    }

    pub fn steps(&self) -> usize {
        self.roll.steps()
    }
}

/// Cuts consecutive, non-overlapping clips of `clip_steps` steps. A trailing
/// remainder shorter than one clip is dropped.
pub fn segment_clips(pr: &PianoRoll, source_id: &str, clip_steps: usize) -> Result<Vec<Clip>> {
    if clip_steps == 0 || !clip_steps.is_multiple_of(pr.steps_per_bar) {
        return Err(Error::BadClipLength {
            clip_steps,
            steps_per_bar: pr.steps_per_bar,
        });
    }
    Ok((0..pr.steps / clip_steps)
        .map(|i| {
            let start = i * clip_steps;
            let grid = pr.grid[start * PITCHES..(start + clip_steps) * PITCHES].to_vec();
            let roll = PianoRoll {
                grid,
                steps: clip_steps,
                flavor: pr.flavor,
                steps_per_bar: pr.steps_per_bar,
            };
            Clip::new(roll, source_id, start)
        })
        .collect())
}

/// Returns a copy of `dst` with `n_bars` bars starting at `dst_bar`
/// overwritten, across all pitches, by the bars of `src` starting at `src_bar`.
pub fn paste_segment(dst: &Clip, src: &Clip, src_bar: usize, dst_bar: usize, n_bars: usize) -> Result<Clip> {
    if src.roll.steps != dst.roll.steps {
        return Err(Error::LengthMismatch {
            left: dst.roll.steps,
            right: src.roll.steps,
        });
    }
    if src.roll.flavor != dst.roll.flavor {
        return Err(Error::WrongFlavor {
            expected: match dst.roll.flavor {
                Flavor::Binary => "binary",
                Flavor::Velocity => "velocity",
            },
        });
    }
    let bars = dst.roll.bars();
    for bar in [src_bar, dst_bar] {
        if n_bars == 0 || bar + n_bars > bars {
            return Err(Error::OutOfRange { bar, n_bars, bars });
        }
    }
    let spb = dst.roll.steps_per_bar;
    let len = n_bars * spb * PITCHES;
    let (s0, d0) = (src_bar * spb * PITCHES, dst_bar * spb * PITCHES);
    let mut out = dst.clone();
    out.roll.grid[d0..d0 + len].copy_from_slice(&src.roll.grid[s0..s0 + len]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::midi::NoteEvent;

    fn ts(events: &[(u32, u8, u8)], total_steps: u32) -> QuantizedTrackSet {
        QuantizedTrackSet {
            events: events
                .iter()
                .map(|&(step, pitch, velocity)| NoteEvent { step, pitch, velocity })
                .collect(),
            steps_per_quarter: 4,
            total_steps,
            source_id: "t".into(),
            meter_ok: true,
        }
    }

    fn roll_with(steps: usize, flavor: Flavor, notes: &[(usize, usize, u8)]) -> PianoRoll {
        let mut r = PianoRoll::silent(steps, flavor, 16);
        for &(s, p, v) in notes {
            r.set(s, p, v);
        }
        r
    }

    #[test]
    fn build_binary_and_velocity() {
        let t = ts(&[(0, 60, 80)], 1);
        let b = build_roll(&t, Flavor::Binary).unwrap();
        assert_eq!(b.steps(), 16);
        assert_eq!(b.onsets().collect::<Vec<_>>(), vec![(0, 60, 1)]);
        let v = build_roll(&t, Flavor::Velocity).unwrap();
        assert_eq!(v.onsets().collect::<Vec<_>>(), vec![(0, 60, 80)]);
        assert!(matches!(build_roll(&ts(&[], 16), Flavor::Binary), Err(Error::EmptyInput)));
    }

    #[test]
    fn build_keeps_max_of_duplicates() {
        let v = build_roll(&ts(&[(0, 60, 80), (0, 60, 90)], 16), Flavor::Velocity).unwrap();
        assert_eq!(v.get(0, 60), 90);
        assert_eq!(v.onset_count(), 1);
    }

    #[test]
    fn build_pads_to_bar() {
        let r = build_roll(&ts(&[(17, 60, 80)], 20), Flavor::Binary).unwrap();
        assert_eq!(r.steps(), 32);
    }

    #[test]
    fn folding() {
        let r = roll_with(16, Flavor::Binary, &[(0, 60, 1), (0, 72, 1), (3, 48, 1), (3, 50, 1), (3, 55, 1)]);
        let f = fold_pitch_classes(&r).unwrap();
        assert_eq!(f.get(0, 0), 2);
        assert_eq!(f.row(3), &[1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0]);
        assert_eq!(f.active_mask(3), 0b1000_0101);
        let empty = fold_pitch_classes(&PianoRoll::silent(16, Flavor::Binary, 16)).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.steps(), 16);
        let vel = roll_with(16, Flavor::Velocity, &[(0, 60, 90)]);
        assert!(matches!(fold_pitch_classes(&vel), Err(Error::WrongFlavor { .. })));
    }

    #[test]
    fn segmenting() {
        let r = PianoRoll::silent(512, Flavor::Binary, 16);
        let clips = segment_clips(&r, "a", 256).unwrap();
        assert_eq!(clips.iter().map(|c| c.origin.start_step).collect::<Vec<_>>(), vec![0, 256]);
        assert_eq!(segment_clips(&PianoRoll::silent(304, Flavor::Binary, 16), "a", 256).unwrap().len(), 1);
        assert!(segment_clips(&PianoRoll::silent(240, Flavor::Binary, 16), "a", 256).unwrap().is_empty());
        assert!(matches!(segment_clips(&r, "a", 250), Err(Error::BadClipLength { .. })));
        assert!(clips[0].is_empty());
    }

    #[test]
    fn segmenting_a_non_bar_length_roll() {
        // 300 steps is not a whole number of bars, but segmentation only needs clip_steps aligned.
        let r = PianoRoll::from_grid(vec![0; 300 * PITCHES], Flavor::Binary, 16).unwrap();
        assert_eq!(segment_clips(&r, "a", 256).unwrap().len(), 1);
    }

    #[test]
    fn paste_full_and_single_bar() {
        let dst = Clip::new(roll_with(256, Flavor::Velocity, &[(0, 60, 10), (20, 61, 20), (100, 62, 30)]), "d", 0);
        let src = Clip::new(roll_with(256, Flavor::Velocity, &[(5, 70, 40), (17, 71, 50), (250, 72, 60)]), "s", 0);

        let full = paste_segment(&dst, &src, 0, 0, 16).unwrap();
        assert_eq!(full.roll, src.roll);

        let one = paste_segment(&dst, &src, 1, 6, 1).unwrap();
        let changed: Vec<_> = (0..256).filter(|&t| one.roll.row(t) != dst.roll.row(t)).collect();
        assert!(changed.iter().all(|t| (96..112).contains(t)));
        assert_eq!(one.roll.get(97, 71), 50);
        assert_eq!(one.roll.get(100, 62), 0);
        assert_eq!(dst.roll.get(100, 62), 30);

        let silent = Clip::new(PianoRoll::silent(256, Flavor::Velocity, 16), "z", 0);
        let cleared = paste_segment(&dst, &silent, 0, 6, 1).unwrap();
        assert!((96..112).all(|t| cleared.roll.row(t).iter().all(|&v| v == 0)));

        assert!(matches!(paste_segment(&dst, &src, 15, 0, 2), Err(Error::OutOfRange { .. })));
        assert!(matches!(paste_segment(&dst, &src, 0, 9, 8), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn shifts_and_transpose() {
        let r = roll_with(32, Flavor::Binary, &[(0, 60, 1), (31, 127, 1)]);
        let s = r.time_shifted(1);
        assert_eq!(s.onsets().collect::<Vec<_>>(), vec![(0, 127, 1), (1, 60, 1)]);
        assert_eq!(r.time_shifted(-33), r.time_shifted(-1));
        let t = r.transposed(1);
        assert_eq!(t.onsets().collect::<Vec<_>>(), vec![(0, 61, 1)]);
    }

    #[test]
    fn dumps() {
        let r = roll_with(16, Flavor::Velocity, &[(2, 127, 127), (3, 0, 1)]);
        let pgm = r.to_pgm();
        let header = b"P5\n16 128\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let pixels = &pgm[header.len()..];
        assert_eq!(pixels.len(), 16 * 128);
        assert_eq!(pixels[2], 255);
        assert_eq!(pixels[127 * 16 + 3], 2);
        assert_eq!(r.to_csv(), "step,pitch,value\n2,127,127\n3,0,1\n");
    }

    fn arb_roll(steps: usize) -> impl Strategy<Value = PianoRoll> {
        proptest::collection::vec((0..steps, 0..PITCHES, 1u8..=127), 0..80).prop_map(move |notes| {
            let mut r = PianoRoll::silent(steps, Flavor::Velocity, 16);
            for (s, p, v) in notes {
                r.set(s, p, v);
            }
            r
        })
    }

    proptest! {
        #[test]
        fn fold_preserves_mass(r in arb_roll(64)) {
            let b = r.to_binary();
            let f = fold_pitch_classes(&b).unwrap();
            prop_assert_eq!(f.total(), b.onset_count() as u64);
        }

        #[test]
        fn segments_reproduce_prefix(r in arb_roll(96)) {
            let clips = segment_clips(&r, "p", 32).unwrap();
            prop_assert_eq!(clips.len(), 3);
            let cat: Vec<u8> = clips.iter().flat_map(|c| c.roll.cells().to_vec()).collect();
            prop_assert_eq!(&cat[..], r.cells());
        }

        #[test]
        fn paste_is_idempotent_and_local(
            a in arb_roll(256), b in arb_roll(256),
            n in 1usize..=16, sb in 0usize..16, db in 0usize..16,
        ) {
            prop_assume!(sb + n <= 16 && db + n <= 16);
            let dst = Clip::new(a, "d", 0);
            let src = Clip::new(b, "s", 0);
            let once = paste_segment(&dst, &src, sb, db, n).unwrap();
            let twice = paste_segment(&once, &src, sb, db, n).unwrap();
            prop_assert_eq!(&once, &twice);
            for t in 0..256 {
                if t < db * 16 || t >= (db + n) * 16 {
                    prop_assert_eq!(once.roll.row(t), dst.roll.row(t));
                } else {
                    prop_assert_eq!(once.roll.row(t), src.roll.row(t - db * 16 + sb * 16));
                }
            }
        }
    }
}
