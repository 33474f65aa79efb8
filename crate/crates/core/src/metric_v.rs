//! SSIMuse-V: performance-dynamics similarity of velocity piano rolls.
//!
//! Velocities are scaled into `(0, 1]`. The SSIM luminance and contrast terms
//! are taken over note-on cells only, so silence does not dilute either
//! statistic. The structure term compares the per-step loudest velocity
//! curves after aligning them with dynamic time warping.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pianoroll::{Flavor, PianoRoll};
use crate::stats::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VParams {
    pub c1: f64,
    pub c2: f64,
    pub velocity_scale: f64,
}

impl Default for VParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 9e-4,
            velocity_scale: 127.0,
        }
    }
}

impl VParams {
    pub fn c3(&self) -> f64 {
        self.c2 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("velocity_scale", self.velocity_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VReport {
    pub l: f64,
    pub c: f64,
    pub s: f64,
    pub ssimuse_v: f64,
    pub dtw_path_len: usize,
    /// Set when an aligned curve had fewer than two points and `s` fell back to 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn require_velocity(x: &PianoRoll) -> Result<()> {
    if x.flavor() != Flavor::Velocity {
        return Err(Error::WrongFlavor { expected: "velocity" });
    }
    Ok(())
}

/// Mean and sample standard deviation of the scaled velocities at note-on cells.
pub fn onset_stats(x: &PianoRoll, p: &VParams) -> Result<OnsetStats> {
    require_velocity(x)?;
    let values: Vec<f64> = x.onsets().map(|(_, _, v)| f64::from(v) / p.velocity_scale).collect();
    if values.is_empty() {
        return Err(Error::EmptyClip);
    }
    let (mean, std) = mean_std(&values);
    Ok(OnsetStats {
        mean,
        std,
        count: values.len(),
    })
}

fn ssim_ratio(a: f64, b: f64, c: f64) -> f64 {
    (2.0 * a * b + c) / (a * a + b * b + c)
}

/// Luminance term over onset velocities.
pub fn dynamic_l(x: &PianoRoll, y: &PianoRoll, p: &VParams) -> Result<f64> {
    let (sx, sy) = (onset_stats(x, p)?, onset_stats(y, p)?);
    Ok(ssim_ratio(sx.mean, sy.mean, p.c1))
}

/// Contrast term over onset velocities.
pub fn dynamic_c(x: &PianoRoll, y: &PianoRoll, p: &VParams) -> Result<f64> {
    let (sx, sy) = (onset_stats(x, p)?, onset_stats(y, p)?);
    Ok(ssim_ratio(sx.std, sy.std, p.c2))
}

/// Loudest scaled velocity of every non-silent step.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCurve {
    pub values: Vec<f64>,
    pub step_index: Vec<usize>,
}

pub fn extract_curve(x: &PianoRoll, p: &VParams) -> Result<VelocityCurve> {
    require_velocity(x)?;
    let mut values = Vec::new();
    let mut step_index = Vec::new();
    for step in 0..x.steps() {
        let loudest = x.row(step).iter().copied().max().unwrap_or(0);
        if loudest > 0 {
            values.push(f64::from(loudest) / p.velocity_scale);
            step_index.push(step);
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyClip);
    }
    Ok(VelocityCurve { values, step_index })
}

/// Two sequences expanded along an optimal warping path.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `(i, j)` index pairs from `(0, 0)` to `(|a|-1, |b|-1)`.
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Classic DTW with `|a_i - b_j|` cost and the three unit steps.
///
/// Backtracking prefers the diagonal predecessor, then `(i-1, j)`, then
/// `(i, j-1)` when accumulated costs tie.
pub fn dtw_align(a: &[f64], b: &[f64]) -> Result<Alignment> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut acc = vec![f64::INFINITY; (n + 1) * width];
    acc[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = acc[(i - 1) * width + j - 1]
                .min(acc[(i - 1) * width + j])
                .min(acc[i * width + j - 1]);
            acc[i * width + j] = (a[i - 1] - b[j - 1]).abs() + best;
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    loop {
        path.push((i - 1, j - 1));
        if i == 1 && j == 1 {
            break;
        }
        let diag = acc[(i - 1) * width + j - 1];
        let up = acc[(i - 1) * width + j];
        let left = acc[i * width + j - 1];
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    path.reverse();

    Ok(Alignment {
        a: path.iter().map(|&(i, _)| a[i]).collect(),
        b: path.iter().map(|&(_, j)| b[j]).collect(),
        path,
        cost: acc[n * width + m],
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Aligns two curves in a canonical argument order, so swapping the inputs
/// swaps the outputs even when backtracking meets ties.
fn align_symmetric(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if lexicographic(a, b) == Ordering::Greater {
        let al = dtw_align(b, a)?;
        Ok((al.b, al.a))
    } else {
        let al = dtw_align(a, b)?;
        Ok((al.a, al.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityStructure {
    pub s: f64,
    pub path_len: usize,
    pub degenerate: bool,
}

/// SSIM structure term on two equal-length sequences, (N−1) convention.
pub fn structure_term(a: &[f64], b: &[f64], c3: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 1.0;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    let (cov, va, vb) = (cov / (n - 1.0), va / (n - 1.0), vb / (n - 1.0));
    (cov + c3) / ((va * vb).sqrt() + c3)
}

/// Structure term of the DTW-aligned velocity curves.
pub fn velocity_s(x: &PianoRoll, y: &PianoRoll, p: &VParams) -> Result<VelocityStructure> {
    let (cx, cy) = (extract_curve(x, p)?, extract_curve(y, p)?);
    let (a, b) = align_symmetric(&cx.values, &cy.values)?;
    Ok(VelocityStructure {
        s: structure_term(&a, &b, p.c3()),
        path_len: a.len(),
        degenerate: a.len() < 2,
    })
}

/// SSIMuse-V of two velocity rolls; `EmptyClip` if either has no onsets.
pub fn ssimuse_v(x: &PianoRoll, y: &PianoRoll, p: &VParams) -> Result<VReport> {
    p.validate()?;
    if x.steps() != y.steps() {
        return Err(Error::LengthMismatch {
            left: x.steps(),
            right: y.steps(),
        });
    }
    let (sx, sy) = (onset_stats(x, p)?, onset_stats(y, p)?);
    let l = ssim_ratio(sx.mean, sy.mean, p.c1);
    let c = ssim_ratio(sx.std, sy.std, p.c2);
    let st = velocity_s(x, y, p)?;
    Ok(VReport {
        l,
        c,
        s: st.s,
        ssimuse_v: l * c * st.s,
        dtw_path_len: st.path_len,
        degenerate: st.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn vroll(steps: usize, notes: &[(usize, usize, u8)]) -> PianoRoll {
        let mut r = PianoRoll::silent(steps, Flavor::Velocity, 16);
        for &(s, p, v) in notes {
            r.set(s, p, v);
        }
        r
    }

    fn random_vroll(rng: &mut ChaCha8Rng, steps: usize) -> PianoRoll {
        let mut r = PianoRoll::silent(steps, Flavor::Velocity, 16);
        for t in 0..steps {
            if rng.random_bool(0.5) {
                for _ in 0..rng.random_range(1..4) {
                    r.set(t, rng.random_range(40..90), rng.random_range(20..120));
                }
            }
        }
        r
    }

    /// Minimum DTW cost by enumerating every monotone path.
    fn brute_force_cost(a: &[f64], b: &[f64]) -> f64 {
        fn go(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let here = (a[i] - b[j]).abs();
            if i + 1 == a.len() && j + 1 == b.len() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(a, b, i + 1, j + 1));
            }
            if i + 1 < a.len() {
                best = best.min(go(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(go(a, b, i, j + 1));
            }
            here + best
        }
        go(a, b, 0, 0)
    }

    #[test]
    fn onset_stats_examples() {
        let p = VParams::default();
        let flat = onset_stats(&vroll(16, &[(0, 60, 64), (3, 62, 64), (9, 70, 64)]), &p).unwrap();
        assert!((flat.mean - 64.0 / 127.0).abs() < 1e-15);
        assert_eq!(flat.std, 0.0);
        let two = onset_stats(&vroll(16, &[(0, 60, 40), (5, 60, 80)]), &p).unwrap();
        assert!((two.mean - 60.0 / 127.0).abs() < 1e-15);
        assert!((two.std - 40.0 / (127.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!((two.std - 0.22271).abs() < 1e-5);
        let one = onset_stats(&vroll(16, &[(0, 60, 99)]), &p).unwrap();
        assert_eq!(one.std, 0.0);
        assert!(matches!(onset_stats(&vroll(16, &[]), &p), Err(Error::EmptyClip)));
        assert!(matches!(
            onset_stats(&PianoRoll::silent(16, Flavor::Binary, 16), &p),
            Err(Error::WrongFlavor { .. })
        ));
    }

    #[test]
    fn ssim_ratio_examples() {
        assert!((ssim_ratio(0.5, 0.6, 1e-4) - 0.6001 / 0.6101).abs() < 1e-15);
        assert!((ssim_ratio(0.5, 0.6, 1e-4) - 0.98361).abs() < 1e-5);
        assert!((ssim_ratio(0.1, 0.2, 9e-4) - 0.0409 / 0.0509).abs() < 1e-15);
        assert!((ssim_ratio(0.1, 0.2, 9e-4) - 0.80354).abs() < 1e-5);
        assert_eq!(ssim_ratio(0.0, 0.0, 9e-4), 1.0);
        let x = vroll(16, &[(0, 60, 40), (5, 60, 80)]);
        let p = VParams::default();
        assert_eq!(dynamic_l(&x, &x, &p).unwrap(), 1.0);
        assert_eq!(dynamic_c(&x, &x, &p).unwrap(), 1.0);
    }

    #[test]
    fn curve_extraction() {
        let p = VParams::default();
        let c = extract_curve(&vroll(16, &[(0, 60, 50), (0, 64, 90)]), &p).unwrap();
        assert_eq!(c.values, vec![90.0 / 127.0]);
        assert_eq!(c.step_index, vec![0]);
        let c = extract_curve(&vroll(16, &[(0, 60, 50), (4, 64, 90)]), &p).unwrap();
        assert_eq!(c.step_index, vec![0, 4]);
        let dense: Vec<_> = (0..16).map(|t| (t, 60, 10 + t as u8)).collect();
        assert_eq!(extract_curve(&vroll(16, &dense), &p).unwrap().values.len(), 16);
    }

    #[test]
    fn dtw_examples() {
        let al = dtw_align(&[0.2, 0.4, 0.6], &[0.2, 0.4, 0.6]).unwrap();
        assert_eq!(al.path, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(al.cost, 0.0);

        let al = dtw_align(&[0.1, 0.2], &[0.1, 0.1, 0.2]).unwrap();
        assert_eq!(al.a, vec![0.1, 0.1, 0.2]);
        assert_eq!(al.b, vec![0.1, 0.1, 0.2]);
        assert_eq!(al.cost, 0.0);

        let al = dtw_align(&[0.5], &[0.1, 0.9]).unwrap();
        assert_eq!(al.a, vec![0.5, 0.5]);
        assert_eq!(al.b, vec![0.1, 0.9]);

        assert!(matches!(dtw_align(&[], &[0.1]), Err(Error::EmptyCurve)));
    }

    #[test]
    fn structure_examples() {
        let c3 = VParams::default().c3();
        assert_eq!(c3, 4.5e-4);
        let s = structure_term(&[0.1, 0.2, 0.3], &[0.3, 0.2, 0.1], c3);
        assert!((s - (-0.01 + 4.5e-4) / (0.01 + 4.5e-4)).abs() < 1e-12);
        assert!((s + 0.91388).abs() < 1e-5);
        assert_eq!(structure_term(&[0.4, 0.4], &[0.7, 0.7], c3), 1.0);
        assert_eq!(structure_term(&[0.4], &[0.7], c3), 1.0);
    }

    #[test]
    fn identity_and_flattened() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vroll(&mut rng, 256);
        let p = VParams::default();
        let r = ssimuse_v(&x, &x, &p).unwrap();
        assert_eq!((r.l, r.c), (1.0, 1.0));
        assert!((r.s - 1.0).abs() < 1e-12);
        assert!((r.ssimuse_v - 1.0).abs() < 1e-12);

        let flat = PianoRoll::from_grid(
            x.cells().iter().map(|&v| if v > 0 { 127 } else { 0 }).collect(),
            Flavor::Velocity,
            16,
        )
        .unwrap();
        let r = ssimuse_v(&x, &flat, &p).unwrap();
        assert!(r.l < 1.0);
        assert!(r.c < 0.1);
        // one side is constant: covariance 0, product of deviations 0
        assert_eq!(r.s, 1.0);

        let silent = vroll(256, &[]);
        assert!(matches!(ssimuse_v(&x, &silent, &p), Err(Error::EmptyClip)));
    }

    #[test]
    fn dtw_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(1..=127) as f64 / 127.0).collect();
            let b: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(1..=127) as f64 / 127.0).collect();
            let al = dtw_align(&a, &b).unwrap();
            assert!((al.cost - brute_force_cost(&a, &b)).abs() < 1e-12);
            let path_cost: f64 = al.path.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum();
            assert!((path_cost - al.cost).abs() < 1e-12);
            assert!(al.path.len() >= a.len().max(b.len()));
            assert!(al.path.len() < a.len() + b.len());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn symmetric_and_bounded(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_vroll(&mut rng, 64);
            let y = random_vroll(&mut rng, 64);
            prop_assume!(!x.is_silent() && !y.is_silent());
            let p = VParams::default();
            let a = ssimuse_v(&x, &y, &p).unwrap();
            let b = ssimuse_v(&y, &x, &p).unwrap();
            prop_assert!((a.ssimuse_v - b.ssimuse_v).abs() < 1e-9);
            prop_assert_eq!(a.dtw_path_len, b.dtw_path_len);
            prop_assert!(a.l > 0.0 && a.l <= 1.0);
            prop_assert!(a.c > 0.0 && a.c <= 1.0);
            prop_assert!((-1.0..=1.0 + 1e-12).contains(&a.s));
        }

        #[test]
        fn offset_leaves_structure_unchanged(
            a in proptest::collection::vec(0.1f64..0.5, 2..20),
            b in proptest::collection::vec(0.1f64..0.5, 2..20),
            k in 0.05f64..0.4,
        ) {
            // non-constant curves; a global offset moves both mean and DTW
            // costs, so compare on a fixed alignment
            let (ea, eb) = {
                let al = dtw_align(&a, &b).unwrap();
                (al.a, al.b)
            };
            let shifted: Vec<f64> = eb.iter().map(|v| v + k).collect();
            let c3 = VParams::default().c3();
            prop_assert!((structure_term(&ea, &eb, c3) - structure_term(&ea, &shifted, c3)).abs() < 1e-9);
        }
    }
}
