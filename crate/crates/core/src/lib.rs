//! Corpus tooling and evaluation for detecting and correcting semantic errors in Chinese sentences.
//!
//! * [`deptree`]: CoNLL-U dependency trees and structural queries.
//! * [`dedup`]: Levenshtein-ratio leakage filtering between splits.
//! * [`sampler`]: structure/relation prediction examples (DSP, DSP+, DRP, DSRP).
//! * [`corruptor`]: dependency-driven pseudo-error generation.
//! * [`edits`]: token edit extraction and the M2 format.
//! * [`metrics`]: MaxMatch scoring, sentence classification metrics.
//! * [`baseline`]: a logistic-regression probe over sampled pairs.
//! * [`stats`]: dataset statistics tables.

pub mod baseline;
pub mod corruptor;
pub mod dedup;
pub mod deptree;
pub mod edits;
pub mod metrics;
pub mod sampler;
pub mod seed;
pub mod stats;
