#![allow(dead_code)]

use std::collections::HashSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssimuse::corpus::clips_from_bytes;
use ssimuse::midi::{IngestOptions, TrackFilter};
use ssimuse::pianoroll::{Clip, Flavor, PianoRoll};
use ssimuse::synth::{synth_corpus, SynthOptions};

pub const DESK_PIECES: usize = 48;

/// Clips cut from a seeded synthetic corpus of `pieces` 32-bar pieces.
pub fn synth_clips(pieces: usize, seed: u64, tracks: Option<&str>) -> Vec<Clip> {
    let opts = IngestOptions {
        tracks: tracks.map(|t| t.parse::<TrackFilter>().unwrap()),
        ..Default::default()
    };
    synth_corpus(pieces, seed, &SynthOptions::default())
        .iter()
        .flat_map(|(name, bytes)| clips_from_bytes(bytes, name, &opts, 256).unwrap().unwrap())
        .collect()
}

pub fn random_roll(rng: &mut ChaCha8Rng, steps: usize, flavor: Flavor, density: f64) -> PianoRoll {
    let mut r = PianoRoll::silent(steps, flavor, 16);
    for t in 0..steps {
        for p in 36..84 {
            if rng.random_bool(density) {
                r.set(t, p, rng.random_range(1..=127));
            }
        }
    }
    r
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Jaccard index over the sets of active (step, pitch class) cells, built
/// straight from the unfolded roll. Two empty sets score 1.
pub fn brute_force_jaccard(x: &PianoRoll, y: &PianoRoll) -> f64 {
    let cells = |r: &PianoRoll| -> HashSet<(usize, usize)> {
        let mut set = HashSet::new();
        for t in 0..r.steps() {
            for p in 0..128 {
                if r.get(t, p) > 0 {
                    set.insert((t, p % 12));
                }
            }
        }
        set
    };
    let (a, b) = (cells(x), cells(y));
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Minimum |a_i - b_j| path cost over every monotone path from (0, 0) to
/// the far corner with unit steps, found by explicit enumeration.
pub fn brute_force_dtw(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}
