//! Turning MIDI files into benchmark clips.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::midi::{filter_meter, parse_midi, IngestOptions, MeterVerdict};
use crate::pianoroll::{build_roll, segment_clips, Clip, Flavor};

/// Clips of one piece, or `None` when its meter is rejected.
///
/// Rolls are velocity-flavored; the binary metric binarizes on the fly.
pub fn clips_from_bytes(bytes: &[u8], source_id: &str, opts: &IngestOptions, clip_steps: usize) -> Result<Option<Vec<Clip>>> {
    let ts = match filter_meter(parse_midi(bytes, source_id, opts)?) {
        MeterVerdict::Accepted(ts) => ts,
        MeterVerdict::Rejected { .. } => return Ok(None),
    };
    if ts.events.is_empty() {
        return Ok(Some(Vec::new()));
    }
    let roll = build_roll(&ts, Flavor::Velocity)?;
    segment_clips(&roll, source_id, clip_steps).map(Some)
}

#[derive(Debug, Default)]
pub struct Corpus {
    pub clips: Vec<Clip>,
    pub pieces: usize,
    pub rejected: Vec<String>,
    /// Files that failed to parse, with the reason.
    pub failed: Vec<(String, String)>,
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

/// `.mid`/`.midi` files directly inside `dir`, sorted by file name.
pub fn midi_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| Error::Io {
        path: dir.to_owned(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && is_midi(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads every MIDI file in `dir`. Unparseable files and rejected meters are
/// recorded, not fatal.
pub fn load_corpus_dir(dir: &Path, opts: &IngestOptions, clip_steps: usize) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for path in midi_files(dir)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let bytes = std::fs::read(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        match clips_from_bytes(&bytes, &name, opts, clip_steps) {
            Ok(Some(clips)) => {
                corpus.pieces += 1;
                corpus.clips.extend(clips);
            }
            Ok(None) => corpus.rejected.push(name),
            Err(e) => corpus.failed.push((name, e.to_string())),
        }
    }
    Ok(corpus)
}
