//! Trace-driven model of out-of-order load/store handling with a store-sets
//! memory dependence predictor, paired with a static labelling pass that
//! proves loads dependence-free within their loop nest so they can bypass
//! the predictor at run time.
//!
//! The crate is organized along the pipeline of an experiment:
//!
//! - [`mir`] — the mini loop IR: text format, parser, printer, validator.
//! - [`analysis`] — the nest-scoped no-dependence ("PND") labelling pass.
//! - [`lower`] — unrolling to a dynamic instruction trace, plus the
//!   in-order reference executor used as the architectural oracle.
//! - [`storesets`] — the SSIT/LFST predictor with clear period and
//!   instrumentation counters.
//! - [`sim`] — the cycle-based out-of-order window model: speculative load
//!   issue, store-to-load forwarding, violation detection, squash/replay.
//! - [`harness`] — scenario files, labelled-vs-unlabelled comparison runs,
//!   and CSV/JSON reports.

pub mod analysis;
pub mod harness;
pub mod lower;
pub mod mir;
pub mod sim;
pub mod storesets;

#[cfg(test)]
pub(crate) mod samples;
