use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed MIDI file: {0}")]
    MalformedFile(String),

    #[error("SMPTE timecode division is not supported")]
    UnsupportedDivision,

    #[error("MIDI format 2 (sequential tracks) is not supported")]
    UnsupportedFormat,

    #[error("track filter selected no notes")]
    EmptySelection,

    #[error("invalid track filter `{0}`")]
    BadTrackFilter(String),

    #[error("no note events to build a piano roll from")]
    EmptyInput,

    #[error("expected a {expected} piano roll")]
    WrongFlavor { expected: &'static str },

    #[error("clip length {clip_steps} is not a positive multiple of the bar length {steps_per_bar}")]
    BadClipLength { clip_steps: usize, steps_per_bar: usize },

    #[error("segment of {n_bars} bars at bar {bar} exceeds a {bars}-bar clip")]
    OutOfRange { bar: usize, n_bars: usize, bars: usize },

    #[error("length mismatch: {left} vs {right} time steps")]
    LengthMismatch { left: usize, right: usize },

    #[error("window shape mismatch: {left} vs {right} steps")]
    ShapeMismatch { left: usize, right: usize },

    #[error("clip has no note onsets")]
    EmptyClip,

    #[error("velocity curve is empty")]
    EmptyCurve,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("corpus too small: need {needed} distinct pieces with non-empty clips, found {available}")]
    InsufficientCorpus { needed: usize, available: usize },

    #[error("Kruskal-Wallis needs at least 2 non-empty groups and 3 observations")]
    DegenerateGroups,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
