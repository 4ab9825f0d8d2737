use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::log::{PacketLog, PacketLogEntry};
use crate::dat::DatTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Kbit/s received in the bin.
    Bitrate,
    /// Mean one-way delay of packets received in the bin.
    Delay,
    /// Mean `|Δdelay|` of consecutive received pairs whose later packet lands
    /// in the bin.
    Jitter,
}

impl Metric {
    pub fn file_name(self) -> &'static str {
        match self {
            Metric::Bitrate => "bitrate.dat",
            Metric::Delay => "delay.dat",
            Metric::Jitter => "jitter.dat",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Bitrate => "bitrate",
            Metric::Delay => "delay",
            Metric::Jitter => "jitter",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bitrate" => Ok(Metric::Bitrate),
            "delay" => Ok(Metric::Delay),
            "jitter" => Ok(Metric::Jitter),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

struct Bins {
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl Bins {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    fn add(&mut self, i: usize, v: f64) {
        self.sum[i] += v;
        self.count[i] += 1;
    }

    fn means(&self) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }
}

fn column(
    stream: &[&PacketLogEntry],
    metric: Metric,
    bin_of: impl Fn(f64) -> usize,
    n_bins: usize,
    bin_s: f64,
) -> Vec<f64> {
    let mut bins = Bins::new(n_bins);
    let mut prev_delay: Option<f64> = None;
    for e in stream {
        let Some(recv) = e.t_recv else { continue };
        let i = bin_of(recv);
        let d = recv - e.t_send;
        match metric {
            Metric::Bitrate => bins.add(i, e.size as f64),
            Metric::Delay => bins.add(i, d),
            Metric::Jitter => {
                if let Some(p) = prev_delay {
                    bins.add(i, (d - p).abs());
                }
            }
        }
        prev_delay = Some(d);
    }
    match metric {
        Metric::Bitrate => bins.sum.iter().map(|b| b * 8.0 / bin_s / 1000.0).collect(),
        Metric::Delay | Metric::Jitter => bins.means(),
    }
}

/// Bins received packets by arrival time into `bin_ms` windows anchored at
/// the first reception.
///
/// The table has a `time` column (bin start relative to the first
/// reception), one `flowN` column per flow and a final `aggregate` column
/// treating all flows as a single stream. Empty bins are 0.
pub fn binned_series(log: &PacketLog, bin_ms: f64, metric: Metric) -> Result<DatTable> {
    if !(bin_ms.is_finite() && bin_ms > 0.0) {
        return Err(Error::InvalidParams(format!(
            "bin width must be positive, got {bin_ms} ms"
        )));
    }
    if log.entries.is_empty() {
        return Err(Error::EmptyLog);
    }
    let bin_s = bin_ms / 1000.0;
    let received = log.entries.iter().filter_map(|e| e.t_recv);
    let (t0, t1) = received.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t), hi.max(t))
    });

    let mut by_flow: BTreeMap<u32, Vec<&PacketLogEntry>> = BTreeMap::new();
    for e in &log.entries {
        by_flow.entry(e.flow).or_default().push(e);
    }
    let mut columns = vec!["time".to_string()];
    columns.extend(by_flow.keys().map(|f| format!("flow{f}")));
    columns.push("aggregate".into());
    let mut table = DatTable::new(columns);
    table
        .comments
        .push(format!("metric={metric} bin_ms={bin_ms}"));

    if !t0.is_finite() {
        // Nothing received: a single all-zero bin.
        let mut row = vec![0.0];
        row.extend(std::iter::repeat_n(0.0, by_flow.len() + 1));
        table.rows.push(row);
        return Ok(table);
    }

    // Positions within EDGE of a bin boundary snap to it, so that receptions
    // on a regular grid do not straddle edges through rounding.
    const EDGE: f64 = 1e-9;
    let n_bins = (((t1 - t0) / bin_s - EDGE).ceil() as usize).max(1);
    let bin_of = |t: f64| (((t - t0) / bin_s + EDGE).floor() as usize).min(n_bins - 1);

    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(by_flow.len() + 1);
    for entries in by_flow.values_mut() {
        entries.sort_by_key(|e| e.seq);
        cols.push(column(entries, metric, bin_of, n_bins, bin_s));
    }
    let mut pooled: Vec<&PacketLogEntry> = log.entries.iter().collect();
    pooled.sort_by(|a, b| {
        a.t_send
            .total_cmp(&b.t_send)
            .then(a.flow.cmp(&b.flow))
            .then(a.seq.cmp(&b.seq))
    });
    cols.push(column(&pooled, metric, bin_of, n_bins, bin_s));

    for i in 0..n_bins {
        let mut row = Vec::with_capacity(cols.len() + 1);
        row.push(i as f64 * bin_s);
        row.extend(cols.iter().map(|c| c[i]));
        table.rows.push(row);
    }
    Ok(table)
}
