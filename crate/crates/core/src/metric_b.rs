//! SSIMuse-B: composition similarity of binary piano rolls.
//!
//! The score is the product of two terms:
//!
//! * `l`, the SSIM luminance term applied to note density (the mean of the
//!   full `T × 128` binary grid);
//! * `s`, a structure term: the pitch-class-folded rolls are compared window
//!   by window with the Jaccard index, the window scores are averaged with
//!   self-weights `s_i^e`, and the best value over all cyclic time and pitch
//!   class shifts is kept after a linear penalty on the time offset.
//!
//! The contrast term of SSIM carries no information for binary data and is
//! left out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pianoroll::{fold_pitch_classes, FoldedRoll, PianoRoll, PITCHES, PITCH_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BParams {
    pub window_steps: usize,
    pub hop_steps: usize,
    pub weight_exponent: f64,
    /// Time-offset penalty strength, `Penalty(dt) = 1 - lambda * |dt| / T`.
    pub lambda: f64,
    pub c1: f64,
}

impl Default for BParams {
    fn default() -> Self {
        Self {
            window_steps: 16,
            hop_steps: 16,
            weight_exponent: 1.0,
            lambda: 0.5,
            c1: 1e-4,
        }
    }
}

impl BParams {
    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.window_steps == 0 || self.window_steps > steps {
            return Err(Error::InvalidParams(format!(
                "window_steps {} must be in 1..={steps}",
                self.window_steps
            )));
        }
        if self.hop_steps == 0 {
            return Err(Error::InvalidParams("hop_steps must be at least 1".into()));
        }
        if !(self.weight_exponent >= 0.0 && self.weight_exponent.is_finite()) {
            return Err(Error::InvalidParams("weight_exponent must be a nonnegative number".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParams("lambda must lie in [0, 1]".into()));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::InvalidParams("c1 must be positive".into()));
        }
        Ok(())
    }

    fn window_starts(&self, steps: usize) -> impl Iterator<Item = usize> {
        let window = self.window_steps;
        (0..)
            .step_by(self.hop_steps)
            .take_while(move |start| start + window <= steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BReport {
    pub l: f64,
    pub s: f64,
    pub ssimuse_b: f64,
    /// `[dt, dp]` applied to the second roll at the best match.
    pub best_shift: (i64, u8),
    pub per_window_s: Vec<f64>,
}

fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

/// SSIM luminance term over note density.
pub fn density_l(x: &PianoRoll, y: &PianoRoll, c1: f64) -> Result<f64> {
    check_len(x.steps(), y.steps())?;
    let cells = (x.steps() * PITCHES) as f64;
    let mx = x.onset_count() as f64 / cells;
    let my = y.onset_count() as f64 / cells;
    Ok((2.0 * mx * my + c1) / (mx * mx + my * my + c1))
}

/// Jaccard index of the active cells (count > 0) of two folded windows.
/// Two silent windows count as identical.
pub fn window_jaccard(xw: &FoldedRoll, yw: &FoldedRoll) -> Result<f64> {
    if xw.steps() != yw.steps() {
        return Err(Error::ShapeMismatch {
            left: xw.steps(),
            right: yw.steps(),
        });
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for t in 0..xw.steps() {
        let (a, b) = (xw.active_mask(t), yw.active_mask(t));
        inter += (a & b).count_ones();
        union += (a | b).count_ones();
    }
    Ok(jaccard(inter, union))
}

fn jaccard(inter: u32, union: u32) -> f64 {
    if union == 0 {
        1.0
    } else {
        f64::from(inter) / f64::from(union)
    }
}

/// `Σ w_i s_i / Σ w_i` with `w_i = s_i^exponent`; zero when all weights vanish.
pub fn weighted_mean(scores: &[f64], exponent: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &s in scores {
        let w = if exponent == 1.0 { s } else { s.powf(exponent) };
        num += w * s;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Per-window Jaccard scores of two aligned folded rolls.
pub fn window_scores(xf: &FoldedRoll, yf: &FoldedRoll, p: &BParams) -> Result<Vec<f64>> {
    check_len(xf.steps(), yf.steps())?;
    p.validate(xf.steps())?;
    let (xm, ym) = (xf.active_masks(), yf.active_masks());
    let mut scratch = Scratch::new(xm.len());
    scratch.fill(&xm, |t| ym[t]);
    Ok(scratch.scores(p))
}

/// Weighted window average of the Jaccard index, without any shift.
pub fn weighted_window_s(xf: &FoldedRoll, yf: &FoldedRoll, p: &BParams) -> Result<f64> {
    Ok(weighted_mean(&window_scores(xf, yf, p)?, p.weight_exponent))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSearch {
    pub s: f64,
    pub best_shift: (i64, u8),
    pub per_window_s: Vec<f64>,
}

/// Prefix sums of per-step intersection and union popcounts.
struct Scratch {
    inter: Vec<u32>,
    union: Vec<u32>,
}

impl Scratch {
    fn new(steps: usize) -> Self {
        Self {
            inter: vec![0; steps + 1],
            union: vec![0; steps + 1],
        }
    }

    fn fill(&mut self, fixed: &[u16], moving: impl Fn(usize) -> u16) {
        for (t, &a) in fixed.iter().enumerate() {
            let b = moving(t);
            self.inter[t + 1] = self.inter[t] + (a & b).count_ones();
            self.union[t + 1] = self.union[t] + (a | b).count_ones();
        }
    }

    fn window(&self, start: usize, len: usize) -> f64 {
        jaccard(
            self.inter[start + len] - self.inter[start],
            self.union[start + len] - self.union[start],
        )
    }

    fn scores(&self, p: &BParams) -> Vec<f64> {
        let steps = self.inter.len() - 1;
        p.window_starts(steps).map(|s| self.window(s, p.window_steps)).collect()
    }

    fn weighted(&self, p: &BParams) -> f64 {
        let steps = self.inter.len() - 1;
        let (mut num, mut den) = (0.0, 0.0);
        for start in p.window_starts(steps) {
            let s = self.window(start, p.window_steps);
            let w = if p.weight_exponent == 1.0 { s } else { s.powf(p.weight_exponent) };
            num += w * s;
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

fn rotate_classes(mask: u16, dp: usize) -> u16 {
    if dp == 0 {
        return mask;
    }
    ((mask << dp) | (mask >> (PITCH_CLASSES - dp))) & 0x0FFF
}

/// Time offsets in tie-break order: 0, 1, -1, 2, -2, ...
fn time_offsets(steps: usize) -> impl Iterator<Item = i64> {
    let steps = steps as i64;
    std::iter::once(0).chain((1..steps).flat_map(|d| [d, -d]))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    dt: i64,
    dp: u8,
}

impl Candidate {
    /// Higher value first, then smaller |dt|, then smaller dp.
    fn beats(&self, other: &Candidate) -> bool {
        if self.value != other.value {
            return self.value > other.value;
        }
        (self.dt.unsigned_abs(), self.dp) < (other.dt.unsigned_abs(), other.dp)
    }
}

/// Exhaustive search over cyclic shifts of `moving` against `fixed`.
fn search_direction(fixed: &[u16], moving: &[u16], p: &BParams) -> Candidate {
    let steps = fixed.len();
    let rotated: Vec<Vec<u16>> = (0..PITCH_CLASSES)
        .map(|dp| moving.iter().map(|&m| rotate_classes(m, dp)).collect())
        .collect();
    let mut scratch = Scratch::new(steps);
    let mut best = Candidate {
        value: f64::NEG_INFINITY,
        dt: 0,
        dp: 0,
    };
    for dt in time_offsets(steps) {
        let penalty = 1.0 - p.lambda * dt.unsigned_abs() as f64 / steps as f64;
        // The structure term never exceeds 1, so no larger offset can win.
        if penalty <= best.value {
            break;
        }
        for (dp, rot) in rotated.iter().enumerate() {
            scratch.fill(fixed, |t| rot[(t as i64 - dt).rem_euclid(steps as i64) as usize]);
            let value = scratch.weighted(p) * penalty;
            if value > best.value {
                best = Candidate {
                    value,
                    dt,
                    dp: dp as u8,
                };
            }
        }
    }
    best
}

fn scores_at(fixed: &[u16], moving: &[u16], dt: i64, dp: u8, p: &BParams) -> Vec<f64> {
    let steps = fixed.len();
    let mut scratch = Scratch::new(steps);
    scratch.fill(fixed, |t| {
        rotate_classes(moving[(t as i64 - dt).rem_euclid(steps as i64) as usize], dp as usize)
    });
    scratch.scores(p)
}

/// Best penalized structure score over all cyclic time shifts and pitch
/// class rotations.
///
/// The window grid is anchored on whichever roll stays fixed, so the search
/// runs in both directions and keeps the better one; this makes the score
/// symmetric in its arguments. `best_shift` is always expressed as the shift
/// of `yf` relative to `xf`.
pub fn shift_search_s(xf: &FoldedRoll, yf: &FoldedRoll, p: &BParams) -> Result<ShiftSearch> {
    check_len(xf.steps(), yf.steps())?;
    p.validate(xf.steps())?;
    let (xm, ym) = (xf.active_masks(), yf.active_masks());

    let x_silent = xm.iter().all(|&m| m == 0);
    let y_silent = ym.iter().all(|&m| m == 0);
    if x_silent != y_silent {
        let n = p.window_starts(xm.len()).count();
        return Ok(ShiftSearch {
            s: 0.0,
            best_shift: (0, 0),
            per_window_s: vec![0.0; n],
        });
    }

    let forward = search_direction(&xm, &ym, p);
    let backward = search_direction(&ym, &xm, p);
    // Moving x by (dt, dp) is moving y by (-dt, -dp).
    let mirrored = Candidate {
        value: backward.value,
        dt: -backward.dt,
        dp: ((PITCH_CLASSES - backward.dp as usize) % PITCH_CLASSES) as u8,
    };
    let (best, per_window_s) = if mirrored.beats(&forward) {
        (mirrored, scores_at(&ym, &xm, backward.dt, backward.dp, p))
    } else {
        (forward, scores_at(&xm, &ym, forward.dt, forward.dp, p))
    };
    Ok(ShiftSearch {
        s: best.value,
        best_shift: (best.dt, best.dp),
        per_window_s,
    })
}

/// SSIMuse-B of two rolls of equal length. Velocity rolls are binarized first.
pub fn ssimuse_b(x: &PianoRoll, y: &PianoRoll, p: &BParams) -> Result<BReport> {
    check_len(x.steps(), y.steps())?;
    let (xb, yb) = (x.to_binary(), y.to_binary());
    let l = density_l(&xb, &yb, p.c1)?;
    let search = shift_search_s(&fold_pitch_classes(&xb)?, &fold_pitch_classes(&yb)?, p)?;
    Ok(BReport {
        l,
        s: search.s,
        ssimuse_b: l * search.s,
        best_shift: search.best_shift,
        per_window_s: search.per_window_s,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::pianoroll::Flavor;

    fn roll(steps: usize, notes: &[(usize, usize)]) -> PianoRoll {
        let mut r = PianoRoll::silent(steps, Flavor::Binary, 16);
        for &(s, p) in notes {
            r.set(s, p, 1);
        }
        r
    }

    fn folded(steps: usize, cells: &[(usize, usize)]) -> FoldedRoll {
        let mut g = vec![0u16; steps * 12];
        for &(t, k) in cells {
            g[t * 12 + k] += 1;
        }
        FoldedRoll::from_counts(g).unwrap()
    }

    fn random_roll(rng: &mut ChaCha8Rng, steps: usize, density: f64) -> PianoRoll {
        let mut r = PianoRoll::silent(steps, Flavor::Binary, 16);
        for t in 0..steps {
            for p in 36..96 {
                if rng.random_bool(density) {
                    r.set(t, p, 1);
                }
            }
        }
        r
    }

    #[test]
    fn density_examples() {
        assert_eq!(density_l(&roll(16, &[(0, 1)]), &roll(16, &[(3, 9)]), 1e-4).unwrap(), 1.0);
        assert_eq!(density_l(&roll(16, &[]), &roll(16, &[]), 1e-4).unwrap(), 1.0);
        // μx = 0.1, μy = 0.2 on a 10 × 128 grid
        let mut x = PianoRoll::silent(10, Flavor::Binary, 10);
        let mut y = PianoRoll::silent(10, Flavor::Binary, 10);
        for i in 0..128 {
            x.set(i % 10, i, 1);
            y.set(i % 10, i, 1);
            y.set((i + 5) % 10, i, 1);
        }
        let expected = (2.0 * 0.1 * 0.2 + 1e-4) / (0.01 + 0.04 + 1e-4);
        assert!((density_l(&x, &y, 1e-4).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.800399).abs() < 1e-6);
        assert!(matches!(density_l(&roll(16, &[]), &roll(32, &[]), 1e-4), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn jaccard_examples() {
        let a = folded(16, &[(0, 0), (4, 4), (9, 2)]);
        assert_eq!(window_jaccard(&a, &a).unwrap(), 1.0);
        let b = folded(16, &[(1, 0), (5, 5)]);
        assert_eq!(window_jaccard(&a, &b).unwrap(), 0.0);
        let x = folded(16, &[(0, 0), (4, 4)]);
        let y = folded(16, &[(0, 0)]);
        assert_eq!(window_jaccard(&x, &y).unwrap(), 0.5);
        let silent = folded(16, &[]);
        assert_eq!(window_jaccard(&silent, &silent).unwrap(), 1.0);
        assert_eq!(window_jaccard(&silent, &y).unwrap(), 0.0);
        // counts above one still count once
        let doubled = folded(16, &[(0, 0), (0, 0)]);
        assert_eq!(window_jaccard(&doubled, &y).unwrap(), 1.0);
        assert!(matches!(window_jaccard(&silent, &folded(8, &[])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn weighting_examples() {
        assert!((weighted_mean(&[0.5, 1.0], 1.0) - 1.25 / 1.5).abs() < 1e-15);
        assert_eq!(weighted_mean(&[1.0, 0.0], 1.0), 1.0);
        assert_eq!(weighted_mean(&[0.0, 0.0], 1.0), 0.0);
        assert_eq!(weighted_mean(&[0.25, 0.75], 0.0), 0.5);
        let a = folded(32, &[(0, 0), (20, 3)]);
        let p = BParams::default();
        assert_eq!(weighted_window_s(&a, &a, &p).unwrap(), 1.0);
    }

    #[test]
    fn window_grid() {
        let p = BParams {
            window_steps: 16,
            hop_steps: 4,
            ..Default::default()
        };
        assert_eq!(p.window_starts(256).count(), 61);
        assert_eq!(BParams::default().window_starts(256).count(), 16);
        let p = BParams {
            window_steps: 8,
            ..Default::default()
        };
        assert_eq!(p.window_starts(256).collect::<Vec<_>>()[..3], [0, 16, 32]);
        assert!(BParams { window_steps: 300, ..Default::default() }.validate(256).is_err());
        assert!(BParams { hop_steps: 0, ..Default::default() }.validate(256).is_err());
    }

    #[test]
    fn rotation() {
        assert_eq!(rotate_classes(0b1, 3), 0b1000);
        assert_eq!(rotate_classes(0b1000_0000_0000, 1), 0b1);
        assert_eq!(time_offsets(3).collect::<Vec<_>>(), vec![0, 1, -1, 2, -2]);
    }

    #[test]
    fn identity_shift_and_transposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_roll(&mut rng, 256, 0.02);
        let p = BParams::default();
        let r = ssimuse_b(&x, &x, &p).unwrap();
        assert_eq!((r.l, r.s, r.ssimuse_b, r.best_shift), (1.0, 1.0, 1.0, (0, 0)));

        let shifted = x.time_shifted(16);
        let r = ssimuse_b(&x, &shifted, &p).unwrap();
        assert_eq!(r.s, 0.96875);
        assert_eq!(r.best_shift, (-16, 0));
        let r = ssimuse_b(&shifted, &x, &p).unwrap();
        assert_eq!(r.best_shift, (16, 0));

        let up = x.transposed(3);
        let r = ssimuse_b(&x, &up, &p).unwrap();
        assert_eq!(r.s, 1.0);
        assert_eq!(r.best_shift, (0, 9));
    }

    #[test]
    fn empty_versus_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_roll(&mut rng, 256, 0.05);
        let x = roll(256, &[]);
        let r = ssimuse_b(&x, &y, &BParams::default()).unwrap();
        let my = y.onset_count() as f64 / (256.0 * 128.0);
        assert!((r.l - 1e-4 / (my * my + 1e-4)).abs() < 1e-12);
        assert_eq!(r.s, 0.0);
        assert_eq!(r.ssimuse_b, 0.0);
    }

    #[test]
    fn brute_force_single_window() {
        // window = clip length, no shift: s is the plain Jaccard of active cells
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = BParams {
            window_steps: 32,
            hop_steps: 32,
            ..Default::default()
        };
        for _ in 0..50 {
            let x = fold_pitch_classes(&random_roll(&mut rng, 32, 0.03)).unwrap();
            let y = fold_pitch_classes(&random_roll(&mut rng, 32, 0.03)).unwrap();
            let set = |f: &FoldedRoll| -> BTreeSet<(usize, usize)> {
                (0..32)
                    .flat_map(|t| (0..12).map(move |k| (t, k)))
                    .filter(|&(t, k)| f.get(t, k) > 0)
                    .collect()
            };
            let (a, b) = (set(&x), set(&y));
            let expected = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
            assert!((weighted_window_s(&x, &y, &p).unwrap() - expected).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn symmetric_and_bounded(seed in any::<u64>(), d1 in 0.005f64..0.05, d2 in 0.005f64..0.05) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_roll(&mut rng, 64, d1);
            let y = random_roll(&mut rng, 64, d2);
            let p = BParams::default();
            let a = ssimuse_b(&x, &y, &p).unwrap();
            let b = ssimuse_b(&y, &x, &p).unwrap();
            prop_assert_eq!(a.ssimuse_b, b.ssimuse_b);
            prop_assert_eq!(a.s, b.s);
            prop_assert!(a.l > 0.0 && a.l <= 1.0);
            prop_assert!((0.0..=1.0).contains(&a.s));
            prop_assert!(a.per_window_s.iter().all(|s| (0.0..=1.0).contains(s)));
        }

        #[test]
        fn transposition_invariance(seed in any::<u64>(), k in 1i32..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_roll(&mut rng, 64, 0.03);
            let y = x.transposed(k);
            let r = ssimuse_b(&x, &y, &BParams::default()).unwrap();
            prop_assert_eq!(r.s, 1.0);
        }

        #[test]
        fn exponent_orders_scores(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = fold_pitch_classes(&random_roll(&mut rng, 64, 0.02)).unwrap();
            let y = fold_pitch_classes(&random_roll(&mut rng, 64, 0.02)).unwrap();
            let at = |e: f64| shift_search_s(&x, &y, &BParams { weight_exponent: e, ..Default::default() }).unwrap().s;
            prop_assert!(at(2.0) >= at(1.0) - 1e-12);
            prop_assert!(at(1.0) >= at(0.5) - 1e-12);
        }
    }

    #[test]
    fn penalty_decreases_with_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_roll(&mut rng, 256, 0.03);
        let p = BParams::default();
        let xf = fold_pitch_classes(&x).unwrap();
        let mut last = f64::INFINITY;
        for d in [0usize, 1, 5, 16, 40, 64, 100, 128] {
            let yf = fold_pitch_classes(&x.time_shifted(d as isize)).unwrap();
            let s = shift_search_s(&xf, &yf, &p).unwrap().s;
            assert_eq!(s, 1.0 - 0.5 * d as f64 / 256.0);
            assert!(s < last || d == 0);
            last = s;
        }
    }
}
