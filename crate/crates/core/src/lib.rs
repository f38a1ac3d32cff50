//! Generation-and-evaluation toolkit for song-lyric meaning.
//!
//! The pipeline runs corpus ingestion and cleaning ([`corpus`]), prompt
//! rendering ([`prompt`]), next-token models ([`lm`]), five decoding
//! strategies ([`decode`]) and the metric suite ([`metrics`]), and the
//! [`harness`] drives a model × prompt × decoder experiment grid over them.

pub mod cli;
pub mod corpus;
pub mod decode;
pub mod harness;
pub mod lm;
pub mod metrics;
pub mod num;
pub mod prompt;
pub mod provenance;
pub mod rng;
pub mod text;

pub use num::Scalar;

/// Metric report in double precision, the precision used by the harness.
pub type MetricReport = metrics::MetricReport<f64>;
/// Total Score weights in double precision.
pub type TotalScoreWeights = metrics::TotalScoreWeights<f64>;
/// Single-precision metric report.
pub type MetricReportF32 = metrics::MetricReport<f32>;

/// Toolkit version recorded in provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
