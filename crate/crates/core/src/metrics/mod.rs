//! Packet logs and the statistics derived from them.
//!
//! [`log`] defines the on-disk receive log, [`report`] reduces it to the
//! ITGDec-style per-flow and total statistics, and [`series`] bins it into
//! bitrate/delay/jitter time series.

pub mod log;
pub mod report;
pub mod series;

pub use log::{FlowLabel, PacketLog, PacketLogEntry, LOG_HEADER};
pub use report::{decode, render_report, Decoded, FlowReport};
pub use series::{binned_series, Metric};
