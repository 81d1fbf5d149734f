//! Topical phase detection and per-phase topic modeling for timestamped
//! short-text corpora.
//!
//! The pipeline runs in stages: daily volumes are smoothed and
//! differentiated ([`signal`]), thresholds learned at an anchor date split the
//! timeline into phases ([`phasing`]), each phase is tokenised ([`textprep`])
//! and modelled with LDA at the topic count of lowest perplexity ([`lda`]),
//! and major topics are summarised and turned into daily trend tables
//! ([`themes`]). [`pipeline`] wires the stages to files, and [`synth`]
//! generates corpora with known answers for testing.

pub mod chart;
pub mod config;
pub mod corpus;
pub mod error;
pub mod lda;
pub mod phasing;
pub mod pipeline;
pub mod signal;
pub mod synth;
pub mod textprep;
pub mod themes;

pub use error::{Error, Result};
