use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use ssimuse::bench::{
    run_bench, run_sweep, sweep_csv, sweep_svg, BenchConfig, BenchResult, Mode, SweepConfig,
};
use ssimuse::corpus::{load_corpus_dir, Corpus};
use ssimuse::metric_b::{ssimuse_b, BParams, BReport};
use ssimuse::metric_v::{ssimuse_v, VParams, VReport};
use ssimuse::midi::{filter_meter, load_midi_file, IngestOptions, MeterVerdict};
use ssimuse::pianoroll::{build_roll, segment_clips, Clip, Flavor, DEFAULT_CLIP_STEPS};
use ssimuse::synth::{synth_corpus, SynthOptions};

use crate::config::{bench_config, metric_params, sweep_config};
use crate::{Cli, CliResult, Command, Common, Emit, Failure};

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Compare { a, b, common } => {
            init_workers(&common)?;
            compare(&a, &b, &common)
        }
        Command::Audit {
            query,
            corpus,
            top_k,
            common,
        } => {
            init_workers(&common)?;
            audit(&query, &corpus, top_k, &common)
        }
        Command::Bench { corpus, bench, common } => {
            init_workers(&common)?;
            let cfg = bench_config(&bench, &common)?;
            run_bench_command(&corpus, &cfg, &common)
        }
        Command::Sweep {
            corpus,
            parameter,
            values,
            bench,
            common,
        } => {
            init_workers(&common)?;
            let sweep = sweep_config(parameter, values.as_deref(), &bench, &common)?;
            run_sweep_command(&corpus, &sweep, &common)
        }
        Command::SynthCorpus { dir, pieces, bars, seed } => {
            let opts = SynthOptions {
                bars,
                ..Default::default()
            };
            fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
            for (name, bytes) in synth_corpus(pieces, seed, &opts) {
                let path = dir.join(name);
                fs::write(&path, bytes).map_err(|e| io_failure(&path, e))?;
            }
            println!("wrote {pieces} pieces to {}", dir.display());
            Ok(())
        }
    }
}

fn init_workers(common: &Common) -> CliResult {
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Failure::Config(anyhow!("--workers must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    Ok(())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(anyhow!("{}: {e}", path.display()))
}

fn ingest(common: &Common) -> IngestOptions {
    IngestOptions {
        steps_per_quarter: common.steps_per_quarter,
        tracks: common.tracks.clone(),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// All full clips of one piece. A non-4/4 piece is a `Rejected` failure.
fn load_piece(path: &Path, opts: &IngestOptions) -> CliResult<Vec<Clip>> {
    let ts = load_midi_file(path, opts).map_err(|e| Failure::Input(anyhow!("{}: {e}", path.display())))?;
    let ts = match filter_meter(ts) {
        MeterVerdict::Accepted(ts) => ts,
        MeterVerdict::Rejected { source_id } => {
            return Err(Failure::Rejected(format!("{source_id} is not in 4/4")));
        }
    };
    let name = file_name(path);
    let roll = build_roll(&ts, Flavor::Velocity).map_err(|e| Failure::Input(anyhow!("{name}: {e}")))?;
    let clips = segment_clips(&roll, &name, DEFAULT_CLIP_STEPS)?;
    if clips.is_empty() {
        return Err(Failure::Input(anyhow!(
            "{name}: shorter than one {DEFAULT_CLIP_STEPS}-step clip ({} steps)",
            roll.steps()
        )));
    }
    Ok(clips)
}

fn prepare_out(common: &Common) -> CliResult<&Path> {
    fs::create_dir_all(&common.out).map_err(|e| io_failure(&common.out, e))?;
    Ok(&common.out)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

fn emits(common: &Common, e: Emit) -> bool {
    common.emit.contains(&e)
}

#[derive(Debug, Serialize)]
struct ClipScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<BReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<VReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    skipped: Vec<String>,
}

fn score_pair(x: &Clip, y: &Clip, mode: Mode, bp: &BParams, vp: &VParams) -> CliResult<ClipScores> {
    let mut out = ClipScores {
        b: None,
        v: None,
        skipped: Vec::new(),
    };
    if mode.binary() {
        out.b = Some(ssimuse_b(&x.roll, &y.roll, bp)?);
    }
    if mode.velocity() {
        match ssimuse_v(&x.roll, &y.roll, vp) {
            Ok(r) => out.v = Some(r),
            Err(ssimuse::Error::EmptyClip) => {
                let side = match (x.is_empty(), y.is_empty()) {
                    (true, true) => "both clips are silent",
                    (true, false) => "first clip is silent",
                    _ => "second clip is silent",
                };
                out.skipped.push(format!("velocity: {side}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn metric_row(out: &mut String, prefix: &str, scores: &ClipScores) {
    if let Some(b) = &scores.b {
        let _ = writeln!(out, "{prefix},binary,{},,{},{},false", b.l, b.s, b.ssimuse_b);
    }
    if let Some(v) = &scores.v {
        let _ = writeln!(out, "{prefix},velocity,{},{},{},{},false", v.l, v.c, v.s, v.ssimuse_v);
    } else if !scores.skipped.is_empty() {
        let _ = writeln!(out, "{prefix},velocity,,,,,true");
    }
}

fn max_by_score<'a>(items: impl Iterator<Item = (usize, f64)> + 'a) -> Option<(usize, f64)> {
    // first index wins ties
    items.fold(None, |best, (i, s)| match best {
        Some((_, b)) if b >= s => best,
        _ => Some((i, s)),
    })
}

fn compare(a: &Path, b: &Path, common: &Common) -> CliResult {
    let (bp, vp) = metric_params(common)?;
    let mode = common.mode.unwrap_or(Mode::Both);
    let opts = ingest(common);
    let xa = load_piece(a, &opts)?;
    let xb = load_piece(b, &opts)?;
    let n = xa.len().min(xb.len());
    let clips: Vec<ClipScores> = (0..n)
        .into_par_iter()
        .map(|i| score_pair(&xa[i], &xb[i], mode, &bp, &vp))
        .collect::<CliResult<_>>()?;

    let best_b = max_by_score(clips.iter().enumerate().filter_map(|(i, c)| c.b.as_ref().map(|r| (i, r.ssimuse_b))));
    let best_v = max_by_score(clips.iter().enumerate().filter_map(|(i, c)| c.v.as_ref().map(|r| (i, r.ssimuse_v))));

    let dir = prepare_out(common)?;
    if emits(common, Emit::Json) {
        let report = json!({
            "a": file_name(a),
            "b": file_name(b),
            "mode": mode,
            "clips_compared": n,
            "clips": clips,
            "max_ssimuse_b": best_b.map(|(i, s)| json!({"clip": i, "score": s})),
            "max_ssimuse_v": best_v.map(|(i, s)| json!({"clip": i, "score": s})),
        });
        write(dir, "compare.json", to_json(&report))?;
    }
    if emits(common, Emit::Csv) {
        let mut csv = String::from("clip,metric,l,c,s,score,skipped\n");
        for (i, c) in clips.iter().enumerate() {
            metric_row(&mut csv, &i.to_string(), c);
        }
        write(dir, "compare.csv", csv)?;
    }

    println!("{} vs {}: {n} clip(s) compared", file_name(a), file_name(b));
    if let Some((i, s)) = best_b {
        println!("max SSIMuse-B {s:.6} (clip {i})");
    }
    if let Some((i, s)) = best_v {
        println!("max SSIMuse-V {s:.6} (clip {i})");
    }
    for (i, c) in clips.iter().enumerate() {
        for note in &c.skipped {
            println!("clip {i}: skipped {note}");
        }
    }
    Ok(())
}

fn load_corpus(dir: &Path, opts: &IngestOptions) -> CliResult<Corpus> {
    let corpus = load_corpus_dir(dir, opts, DEFAULT_CLIP_STEPS)?;
    for name in &corpus.rejected {
        eprintln!("skipping {name}: not in 4/4");
    }
    for (name, reason) in &corpus.failed {
        eprintln!("skipping {name}: {reason}");
    }
    if corpus.pieces == 0 {
        return Err(Failure::Input(anyhow!("{}: no usable MIDI files", dir.display())));
    }
    Ok(corpus)
}

#[derive(Debug, Serialize)]
struct AuditRow {
    rank: usize,
    query_clip: usize,
    file: String,
    clip_index: usize,
    score: f64,
    #[serde(flatten)]
    scores: ClipScores,
}

fn audit(query: &Path, corpus_dir: &Path, top_k: usize, common: &Common) -> CliResult {
    let (bp, vp) = metric_params(common)?;
    let mode = common.mode.unwrap_or(Mode::Both);
    let opts = ingest(common);
    let queries = load_piece(query, &opts)?;
    let corpus = load_corpus(corpus_dir, &opts)?;
    if corpus.clips.is_empty() {
        return Err(Failure::Input(anyhow!("{}: no complete clips in corpus", corpus_dir.display())));
    }

    let jobs: Vec<(usize, &Clip)> = (0..queries.len())
        .flat_map(|q| corpus.clips.iter().map(move |c| (q, c)))
        .collect();
    let scored: Vec<(usize, &Clip, ClipScores)> = jobs
        .into_par_iter()
        .map(|(q, c)| score_pair(&queries[q], c, mode, &bp, &vp).map(|s| (q, c, s)))
        .collect::<CliResult<_>>()?;

    let rank_score = |s: &ClipScores| match mode {
        Mode::Velocity => s.v.as_ref().map_or(f64::NEG_INFINITY, |r| r.ssimuse_v),
        _ => s.b.as_ref().map_or(f64::NEG_INFINITY, |r| r.ssimuse_b),
    };
    let clip_index = |c: &Clip| c.origin.start_step / DEFAULT_CLIP_STEPS;
    let mut rows: Vec<AuditRow> = scored
        .into_iter()
        .map(|(q, c, s)| AuditRow {
            rank: 0,
            query_clip: q,
            file: c.origin.source_id.clone(),
            clip_index: clip_index(c),
            score: rank_score(&s),
            scores: s,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.file.cmp(&b.file))
            .then_with(|| a.clip_index.cmp(&b.clip_index))
            .then_with(|| a.query_clip.cmp(&b.query_clip))
    });
    rows.truncate(top_k);
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }

    let dir = prepare_out(common)?;
    if emits(common, Emit::Json) {
        let report = json!({
            "query": file_name(query),
            "corpus": corpus_dir.display().to_string(),
            "mode": mode,
            "candidates": corpus.clips.len() * queries.len(),
            "rows": rows,
        });
        write(dir, "audit.json", to_json(&report))?;
    }
    if emits(common, Emit::Csv) {
        let mut csv = String::from("rank,query_clip,file,clip_index,metric,l,c,s,score,skipped\n");
        for r in &rows {
            metric_row(&mut csv, &format!("{},{},{},{}", r.rank, r.query_clip, r.file, r.clip_index), &r.scores);
        }
        write(dir, "audit.csv", csv)?;
    }

    println!("{:>4}  {:>5}  {:<32} {:>4}  {:>9}", "rank", "query", "file", "clip", "score");
    for r in &rows {
        println!(
            "{:>4}  {:>5}  {:<32} {:>4}  {:>9.6}",
            r.rank, r.query_clip, r.file, r.clip_index, r.score
        );
    }
    Ok(())
}

fn corpus_label(dir: &Path) -> String {
    file_name(dir).replace(',', "_")
}

fn summary_json(result: &BenchResult, cfg: &BenchConfig) -> serde_json::Value {
    json!({
        "corpus": result.corpus,
        "config": cfg,
        "summary": result.summary.iter().map(|r| json!({
            "level": r.level.to_string(),
            "component": r.component.name(),
            "mean": r.mean,
            "std": r.std,
            "n": r.n,
        })).collect::<Vec<_>>(),
        "stats": result.stats.iter().map(|r| json!({
            "metric": r.metric,
            "H": r.kw.h,
            "df": r.kw.df,
            "p": r.kw.p,
        })).collect::<Vec<_>>(),
    })
}

fn run_bench_command(corpus_dir: &Path, cfg: &BenchConfig, common: &Common) -> CliResult {
    let corpus = load_corpus(corpus_dir, &ingest(common))?;
    let label = corpus_label(corpus_dir);
    let result = run_bench(&corpus.clips, &label, cfg)?;

    let dir = prepare_out(common)?;
    if emits(common, Emit::Csv) {
        write(dir, "scores.csv", result.scores_csv())?;
        write(dir, "summary.csv", result.summary_csv())?;
        write(dir, "stats.csv", result.stats_csv())?;
    }
    if emits(common, Emit::Json) {
        write(dir, "bench.json", to_json(&summary_json(&result, cfg)))?;
    }
    if emits(common, Emit::Svg) {
        for (name, svg) in result.svg_charts() {
            write(dir, &name, svg)?;
        }
    }

    println!(
        "{label}: {} pieces, {} clips, seed {}, mode {}",
        corpus.pieces,
        corpus.clips.len(),
        cfg.seed,
        cfg.mode
    );
    print!("{}", result.summary_csv());
    for r in &result.stats {
        println!(
            "Kruskal-Wallis {}: H = {:.4}, df = {}, p = {:.3e}",
            r.metric, r.kw.h, r.kw.df, r.kw.p
        );
    }
    Ok(())
}

fn run_sweep_command(corpus_dir: &Path, sweep: &SweepConfig, common: &Common) -> CliResult {
    let corpus = load_corpus(corpus_dir, &ingest(common))?;
    let rows = run_sweep(sweep, &corpus.clips)?;

    let dir = prepare_out(common)?;
    let csv = sweep_csv(&rows);
    if emits(common, Emit::Csv) {
        write(dir, "sweep.csv", &csv)?;
    }
    if emits(common, Emit::Json) {
        let report = json!({
            "corpus": corpus_label(corpus_dir),
            "config": sweep,
            "rows": rows.iter().map(|r| json!({
                "value": r.value,
                "level": r.level.to_string(),
                "mean_s": r.mean_s,
                "std_s": r.std_s,
                "n": r.n,
            })).collect::<Vec<_>>(),
        });
        write(dir, "sweep.json", to_json(&report))?;
    }
    if emits(common, Emit::Svg) {
        write(dir, "sweep.svg", sweep_svg(&rows))?;
    }
    print!("{csv}");
    Ok(())
}

