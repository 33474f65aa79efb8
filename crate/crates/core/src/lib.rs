//! Structural similarity metrics for symbolic music.
//!
//! Two scores compare fixed-length piano-roll clips:
//!
//! - [`metric_b::ssimuse_b`] works on binary onset rolls and looks for shared
//!   pitch-class structure under time shifts and transpositions.
//! - [`metric_v::ssimuse_v`] works on velocity rolls and compares dynamics
//!   after aligning the two loudness curves.
//!
//! [`bench`] runs the forced-replication benchmark that checks both scores
//! grow with the amount of copied material.
//!
//! ```
//! use ssimuse::pianoroll::{Flavor, PianoRoll};
//! use ssimuse::metric_b::{ssimuse_b, BParams};
//!
//! let mut x = PianoRoll::silent(64, Flavor::Binary, 16);
//! for t in (0..64).step_by(4) {
//!     x.set(t, 60 + t % 12, 1);
//! }
//! let y = x.transposed(5);
//! let report = ssimuse_b(&x, &y, &BParams::default()).unwrap();
//! assert_eq!(report.s, 1.0);
//! ```

pub mod bench;
pub mod corpus;
pub mod error;
pub mod metric_b;
pub mod metric_v;
pub mod midi;
pub mod pianoroll;
pub mod report;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/pianorolls.md")]
    pub mod pianorolls {}
    #[doc = include_str!("../../../book/src/metric_b.md")]
    pub mod metric_b {}
    #[doc = include_str!("../../../book/src/metric_v.md")]
    pub mod metric_v {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    pub mod benchmark {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    pub mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
