//! Cycle-level model of a two-wide out-of-order RV32I core.
//!
//! The crate bundles the pieces needed to run and cross-check a timing
//! simulation: an RV32I decoder and functional executor ([`isa`]), a gshare
//! predictor with BTB ([`predictor`]), non-blocking L1 caches ([`cache`]),
//! the out-of-order pipeline ([`pipeline`]), run statistics and ratio
//! reports ([`metrics`]), Kanata trace output ([`trace`]) and the embedded
//! microbenchmark suite ([`benchkit`]).

pub mod benchkit;
pub mod cache;
pub mod isa;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod trace;
