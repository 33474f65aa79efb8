//! Forced-replication benchmark.
//!
//! Clips are split into a reference pool and a mixture pool drawn from
//! disjoint source pieces. A *target* at level `k` is a mixture clip with `k`
//! bars overwritten by a bar-aligned excerpt of a reference clip; each target
//! is scored against the reference it copies from. Random reference–mixture
//! pairs form the baseline group. All random draws happen up front from
//! ChaCha streams keyed by the seed, so parallel scoring cannot change the
//! result.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_b::{ssimuse_b, BParams, BReport};
use crate::metric_v::{ssimuse_v, VParams, VReport};
use crate::pianoroll::{paste_segment, Clip, DEFAULT_CLIP_STEPS, DEFAULT_STEPS_PER_BAR};
use crate::report::{line_chart, Series};
use crate::stats::{kruskal_wallis, mean_std, KruskalWallis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Binary,
    Velocity,
    Both,
}

impl Mode {
    pub fn binary(self) -> bool {
        matches!(self, Mode::Binary | Mode::Both)
    }

    pub fn velocity(self) -> bool {
        matches!(self, Mode::Velocity | Mode::Both)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Binary => "binary",
            Mode::Velocity => "velocity",
            Mode::Both => "both",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Mode::Binary),
            "velocity" => Ok(Mode::Velocity),
            "both" => Ok(Mode::Both),
            other => Err(Error::InvalidParams(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub clip_steps: usize,
    pub set_size: usize,
    pub synthetics_per_reference: usize,
    pub levels: Vec<usize>,
    pub seed: u64,
    pub mode: Mode,
    pub metric_b: BParams,
    pub metric_v: VParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            clip_steps: DEFAULT_CLIP_STEPS,
            set_size: 20,
            synthetics_per_reference: 5,
            levels: vec![1, 2, 4, 8],
            seed: 0,
            mode: Mode::Both,
            metric_b: BParams::default(),
            metric_v: VParams::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_steps == 0 || !self.clip_steps.is_multiple_of(DEFAULT_STEPS_PER_BAR) {
            return Err(Error::BadClipLength {
                clip_steps: self.clip_steps,
                steps_per_bar: DEFAULT_STEPS_PER_BAR,
            });
        }
        if self.set_size == 0 || self.synthetics_per_reference == 0 {
            return Err(Error::InvalidParams(
                "set_size and synthetics_per_reference must be positive".into(),
            ));
        }
        let bars = self.clip_steps / DEFAULT_STEPS_PER_BAR;
        if let Some(&bad) = self.levels.iter().find(|&&l| l == 0 || l > bars) {
            return Err(Error::InvalidParams(format!("level {bad} outside 1..={bars} bars")));
        }
        self.metric_b.validate(self.clip_steps)?;
        self.metric_v.validate()
    }

    fn pairs_per_level(&self) -> usize {
        self.set_size * self.synthetics_per_reference
    }
}

/// A replication level; `Baseline` is the unrelated-pair control group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Baseline,
    Bars(usize),
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Baseline => f.write_str("baseline"),
            Level::Bars(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pools {
    pub reference: Vec<Clip>,
    pub mixture: Vec<Clip>,
}

// ChaCha stream ids; one per independent draw sequence.
const POOL_STREAM: u64 = 1;
const BASELINE_STREAM: u64 = 2;
const LEVEL_STREAM_BASE: u64 = 100;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeded split into reference and mixture pools, one clip per source piece
/// and no piece in both pools.
pub fn build_pools(corpus: &[Clip], cfg: &BenchConfig) -> Result<Pools> {
    let needed = 2 * cfg.set_size;
    let mut candidates: Vec<&Clip> = corpus.iter().filter(|c| !c.is_empty()).collect();
    let available = candidates
        .iter()
        .map(|c| c.origin.source_id.as_str())
        .collect::<HashSet<_>>()
        .len();
    if available < needed {
        return Err(Error::InsufficientCorpus { needed, available });
    }
    candidates.shuffle(&mut stream_rng(cfg.seed, POOL_STREAM));
    let mut seen = HashSet::new();
    let picked: Vec<Clip> = candidates
        .into_iter()
        .filter(|c| seen.insert(c.origin.source_id.clone()))
        .take(needed)
        .cloned()
        .collect();
    let mixture = picked[cfg.set_size..].to_vec();
    let mut reference = picked;
    reference.truncate(cfg.set_size);
    Ok(Pools { reference, mixture })
}

/// A scored pair and how it was built.
#[derive(Debug, Clone)]
pub struct ClipPair {
    pub target: Clip,
    pub reference: Clip,
    pub reference_index: usize,
    pub mixture_index: usize,
    pub src_bar: usize,
    pub dst_bar: usize,
}

/// Pastes `level_bars` reference bars into `synthetics_per_reference`
/// mixture clips per reference. Mixture clips are not repeated within one
/// reference when the pool is large enough.
pub fn synthesize_targets(pools: &Pools, level_bars: usize, cfg: &BenchConfig) -> Result<Vec<ClipPair>> {
    let mut rng = stream_rng(cfg.seed, LEVEL_STREAM_BASE + level_bars as u64);
    let n = cfg.synthetics_per_reference;
    let mut pairs = Vec::with_capacity(pools.reference.len() * n);
    for (ri, reference) in pools.reference.iter().enumerate() {
        let bars = reference.roll.bars();
        if level_bars == 0 || level_bars > bars {
            return Err(Error::OutOfRange {
                bar: 0,
                n_bars: level_bars,
                bars,
            });
        }
        let mixture_picks: Vec<usize> = if pools.mixture.len() >= n {
            index::sample(&mut rng, pools.mixture.len(), n).into_vec()
        } else {
            (0..n).map(|_| rng.random_range(0..pools.mixture.len())).collect()
        };
        for mi in mixture_picks {
            let src_bar = rng.random_range(0..=bars - level_bars);
            let dst_bar = rng.random_range(0..=bars - level_bars);
            let target = paste_segment(&pools.mixture[mi], reference, src_bar, dst_bar, level_bars)?;
            pairs.push(ClipPair {
                target,
                reference: reference.clone(),
                reference_index: ri,
                mixture_index: mi,
                src_bar,
                dst_bar,
            });
        }
    }
    Ok(pairs)
}

/// Random reference–mixture pairs, as many as one replication level has.
pub fn baseline_pairs(pools: &Pools, cfg: &BenchConfig) -> Vec<ClipPair> {
    let mut rng = stream_rng(cfg.seed, BASELINE_STREAM);
    (0..cfg.pairs_per_level())
        .map(|_| {
            let ri = rng.random_range(0..pools.reference.len());
            let mi = rng.random_range(0..pools.mixture.len());
            ClipPair {
                target: pools.mixture[mi].clone(),
                reference: pools.reference[ri].clone(),
                reference_index: ri,
                mixture_index: mi,
                src_bar: 0,
                dst_bar: 0,
            }
        })
        .collect()
}

/// Every group of pairs a bench run scores: baseline first, then `cfg.levels`.
pub fn prepare_groups(corpus: &[Clip], cfg: &BenchConfig) -> Result<Vec<(Level, Vec<ClipPair>)>> {
    cfg.validate()?;
    let pools = build_pools(corpus, cfg)?;
    let mut groups = vec![(Level::Baseline, baseline_pairs(&pools, cfg))];
    for &level in &cfg.levels {
        groups.push((Level::Bars(level), synthesize_targets(&pools, level, cfg)?));
    }
    Ok(groups)
}

/// Per-metric result for one pair; `Err` holds the skip reason.
pub type Outcome<T> = std::result::Result<T, String>;

#[derive(Debug, Clone)]
pub struct PairScore {
    pub pair_id: usize,
    pub b: Option<Outcome<BReport>>,
    pub v: Option<Outcome<VReport>>,
}

/// Scores every pair in order. Per-pair failures become skips.
pub fn run_battery(pairs: &[ClipPair], mode: Mode, bp: &BParams, vp: &VParams) -> Vec<PairScore> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(pair_id, pair)| PairScore {
            pair_id,
            b: mode
                .binary()
                .then(|| ssimuse_b(&pair.target.roll, &pair.reference.roll, bp).map_err(|e| e.to_string())),
            v: mode
                .velocity()
                .then(|| ssimuse_v(&pair.target.roll, &pair.reference.roll, vp).map_err(|e| e.to_string())),
        })
        .collect()
}

/// Named score components, as used in the summary CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    BL,
    BS,
    BScore,
    VL,
    VC,
    VS,
    VScore,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::BL,
        Component::BS,
        Component::BScore,
        Component::VL,
        Component::VC,
        Component::VS,
        Component::VScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::BL => "b_l",
            Component::BS => "b_s",
            Component::BScore => "ssimuse_b",
            Component::VL => "v_l",
            Component::VC => "v_c",
            Component::VS => "v_s",
            Component::VScore => "ssimuse_v",
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, Component::BL | Component::BS | Component::BScore)
    }

    pub fn value(self, score: &PairScore) -> Option<f64> {
        match self {
            Component::BL | Component::BS | Component::BScore => {
                let r = score.b.as_ref()?.as_ref().ok()?;
                Some(match self {
                    Component::BL => r.l,
                    Component::BS => r.s,
                    _ => r.ssimuse_b,
                })
            }
            _ => {
                let r = score.v.as_ref()?.as_ref().ok()?;
                Some(match self {
                    Component::VL => r.l,
                    Component::VC => r.c,
                    Component::VS => r.s,
                    _ => r.ssimuse_v,
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelScores {
    pub level: Level,
    pub scores: Vec<PairScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub level: Level,
    pub component: Component,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub metric: &'static str,
    pub kw: KruskalWallis,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub corpus: String,
    pub mode: Mode,
    pub levels: Vec<LevelScores>,
    pub summary: Vec<SummaryRow>,
    pub stats: Vec<StatsRow>,
}

impl BenchResult {
    pub fn values(&self, level: Level, component: Component) -> Vec<f64> {
        self.levels
            .iter()
            .filter(|g| g.level == level)
            .flat_map(|g| g.scores.iter().filter_map(|s| component.value(s)))
            .collect()
    }

    pub fn summary_for(&self, level: Level, component: Component) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.level == level && r.component == component)
    }

    pub fn stats_for(&self, metric: &str) -> Option<&KruskalWallis> {
        self.stats.iter().find(|r| r.metric == metric).map(|r| &r.kw)
    }

    /// `corpus,mode,level,pair_id,l,c,s,score,skipped`, one row per pair and metric.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("corpus,mode,level,pair_id,l,c,s,score,skipped\n");
        for group in &self.levels {
            for score in &group.scores {
                if let Some(b) = &score.b {
                    let _ = match b {
                        Ok(r) => writeln!(
                            out,
                            "{},binary,{},{},{},,{},{},false",
                            self.corpus, group.level, score.pair_id, r.l, r.s, r.ssimuse_b
                        ),
                        Err(_) => writeln!(out, "{},binary,{},{},,,,,true", self.corpus, group.level, score.pair_id),
                    };
                }
                if let Some(v) = &score.v {
                    let _ = match v {
                        Ok(r) => writeln!(
                            out,
                            "{},velocity,{},{},{},{},{},{},false",
                            self.corpus, group.level, score.pair_id, r.l, r.c, r.s, r.ssimuse_v
                        ),
                        Err(_) => writeln!(out, "{},velocity,{},{},,,,,true", self.corpus, group.level, score.pair_id),
                    };
                }
            }
        }
        out
    }

    /// `level,component,mean,std,n`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("level,component,mean,std,n\n");
        for r in &self.summary {
            let _ = writeln!(out, "{},{},{},{},{}", r.level, r.component.name(), r.mean, r.std, r.n);
        }
        out
    }

    /// `metric,H,df,p`.
    pub fn stats_csv(&self) -> String {
        let mut out = String::from("metric,H,df,p\n");
        for r in &self.stats {
            let _ = writeln!(out, "{},{},{},{}", r.metric, r.kw.h, r.kw.df, r.kw.p);
        }
        out
    }

    /// One chart per metric: every component's mean ± std against level.
    pub fn svg_charts(&self) -> Vec<(String, String)> {
        let labels: Vec<String> = self.levels.iter().map(|g| g.level.to_string()).collect();
        let mut charts = Vec::new();
        for (metric, binary) in [("ssimuse_b", true), ("ssimuse_v", false)] {
            if (binary && !self.mode.binary()) || (!binary && !self.mode.velocity()) {
                continue;
            }
            let series: Vec<Series> = Component::ALL
                .iter()
                .filter(|c| c.is_binary() == binary)
                .map(|&c| Series {
                    name: c.name().to_owned(),
                    points: self
                        .levels
                        .iter()
                        .map(|g| {
                            self.summary_for(g.level, c)
                                .map_or((f64::NAN, 0.0), |r| (r.mean, r.std))
                        })
                        .collect(),
                })
                .collect();
            let title = format!("{metric} by replication level ({})", self.corpus);
            charts.push((format!("{metric}.svg"), line_chart(&title, "score", &labels, &series)));
        }
        charts
    }
}

fn summarize(levels: &[LevelScores], mode: Mode) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for group in levels {
        for c in Component::ALL {
            if (c.is_binary() && !mode.binary()) || (!c.is_binary() && !mode.velocity()) {
                continue;
            }
            let values: Vec<f64> = group.scores.iter().filter_map(|s| c.value(s)).collect();
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                level: group.level,
                component: c,
                mean,
                std,
                n: values.len(),
            });
        }
    }
    rows
}

fn significance(levels: &[LevelScores], mode: Mode) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for (metric, component, on) in [
        ("ssimuse_b", Component::BScore, mode.binary()),
        ("ssimuse_v", Component::VScore, mode.velocity()),
    ] {
        if !on {
            continue;
        }
        let groups: Vec<Vec<f64>> = levels
            .iter()
            .map(|g| g.scores.iter().filter_map(|s| component.value(s)).collect())
            .collect();
        if let Ok(kw) = kruskal_wallis(&groups) {
            rows.push(StatsRow { metric, kw });
        }
    }
    rows
}

/// Full benchmark: pools, targets, baseline, scores, summary and
/// Kruskal–Wallis across all groups.
pub fn run_bench(corpus: &[Clip], corpus_name: &str, cfg: &BenchConfig) -> Result<BenchResult> {
    let groups = prepare_groups(corpus, cfg)?;
    let levels: Vec<LevelScores> = groups
        .iter()
        .map(|(level, pairs)| LevelScores {
            level: *level,
            scores: run_battery(pairs, cfg.mode, &cfg.metric_b, &cfg.metric_v),
        })
        .collect();
    Ok(BenchResult {
        corpus: corpus_name.to_owned(),
        mode: cfg.mode,
        summary: summarize(&levels, cfg.mode),
        stats: significance(&levels, cfg.mode),
        levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    WindowSteps,
    HopSteps,
    WeightExponent,
}

impl SweepParameter {
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParameter::WindowSteps => vec![8.0, 16.0, 32.0],
            SweepParameter::HopSteps => vec![4.0, 8.0, 16.0],
            SweepParameter::WeightExponent => vec![0.5, 1.0, 2.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::WindowSteps => "window_steps",
            SweepParameter::HopSteps => "hop_steps",
            SweepParameter::WeightExponent => "weight_exponent",
        }
    }

    fn apply(self, base: &BParams, value: f64) -> Result<BParams> {
        let steps = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidParams(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        let mut p = *base;
        match self {
            SweepParameter::WindowSteps => p.window_steps = steps()?,
            SweepParameter::HopSteps => p.hop_steps = steps()?,
            SweepParameter::WeightExponent => p.weight_exponent = value,
        }
        Ok(p)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window_steps" | "window" => Ok(SweepParameter::WindowSteps),
            "hop_steps" | "hop" => Ok(SweepParameter::HopSteps),
            "weight_exponent" | "weight-exp" | "weight_exp" => Ok(SweepParameter::WeightExponent),
            other => Err(Error::InvalidParams(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub base: BenchConfig,
}

impl SweepConfig {
    pub fn new(parameter: SweepParameter, base: BenchConfig) -> Self {
        Self {
            parameter,
            values: parameter.default_values(),
            base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub level: Level,
    pub mean_s: f64,
    pub std_s: f64,
    pub n: usize,
}

/// Re-scores the same pairs under each parameter value, holding the other
/// structure parameters at the base configuration, and reports the
/// structure term per level.
pub fn run_sweep(sweep: &SweepConfig, corpus: &[Clip]) -> Result<Vec<SweepRow>> {
    if sweep.values.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one value".into()));
    }
    let params: Vec<BParams> = sweep
        .values
        .iter()
        .map(|&v| {
            let p = sweep.parameter.apply(&sweep.base.metric_b, v)?;
            p.validate(sweep.base.clip_steps)?;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let groups = prepare_groups(corpus, &sweep.base)?;
    let mut rows = Vec::new();
    for (&value, p) in sweep.values.iter().zip(&params) {
        for (level, pairs) in &groups {
            let scores = run_battery(pairs, Mode::Binary, p, &sweep.base.metric_v);
            let s: Vec<f64> = scores.iter().filter_map(|r| Component::BS.value(r)).collect();
            let (mean_s, std_s) = mean_std(&s);
            rows.push(SweepRow {
                parameter: sweep.parameter,
                value,
                level: *level,
                mean_s,
                std_s,
                n: s.len(),
            });
        }
    }
    Ok(rows)
}

/// `parameter,value,level,mean_s,std_s,n`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,value,level,mean_s,std_s,n\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.parameter.name(),
            r.value,
            r.level,
            r.mean_s,
            r.std_s,
            r.n
        );
    }
    out
}

/// Mean s against level, one series per parameter value.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let mut levels: Vec<Level> = rows.iter().map(|r| r.level).collect();
    levels.sort();
    levels.dedup();
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    let name = rows.first().map_or("parameter", |r| r.parameter.name());
    let series: Vec<Series> = values
        .iter()
        .map(|&v| Series {
            name: format!("{name} = {v}"),
            points: levels
                .iter()
                .map(|&l| {
                    rows.iter()
                        .find(|r| r.value == v && r.level == l)
                        .map_or((f64::NAN, 0.0), |r| (r.mean_s, r.std_s))
                })
                .collect(),
        })
        .collect();
    let labels: Vec<String> = levels.iter().map(Level::to_string).collect();
    line_chart(&format!("structure term s, {name} sweep"), "mean s", &labels, &series)
}
