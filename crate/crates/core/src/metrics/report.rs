use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::log::{FlowLabel, PacketLog, PacketLogEntry};
use crate::{Error, Result};

/// ITGDec-style statistics of one flow (or of all flows pooled).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowReport {
    /// `None` for the pooled total.
    pub flow: Option<u32>,
    pub label: FlowLabel,
    /// `max(t_recv) − min(t_send)` over received packets, seconds.
    pub total_time: f64,
    /// Received packets.
    pub total_packets: u64,
    pub min_delay: f64,
    pub max_delay: f64,
    pub avg_delay: f64,
    /// Mean `|d_i − d_{i−1}|` over consecutively received packets.
    pub avg_jitter: f64,
    /// Population standard deviation of the delays.
    pub delay_stddev: f64,
    pub bytes_received: u64,
    /// Kbit/s with K = 1000.
    pub avg_bitrate: f64,
    pub avg_packet_rate: f64,
    pub sent: u64,
    pub dropped: u64,
    pub dropped_percent: f64,
    /// Mean length of maximal runs of consecutive lost packets.
    pub avg_loss_burst: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decoded {
    pub flows: Vec<FlowReport>,
    pub total: FlowReport,
    pub error_lines: u64,
}

/// Builds a report from entries already in stream order, plus the loss-run
/// lengths belonging to the stream.
fn stream_report(entries: &[&PacketLogEntry], bursts: &[u64]) -> FlowReport {
    let mut r = FlowReport {
        sent: entries.len() as u64,
        ..FlowReport::default()
    };
    let mut first_send = f64::INFINITY;
    let mut last_recv = f64::NEG_INFINITY;
    let mut min_delay = f64::INFINITY;
    let mut max_delay = f64::NEG_INFINITY;
    let mut mean = 0.0;
    let mut jitter_sum = 0.0;
    let mut jitter_n = 0u64;
    let mut prev: Option<f64> = None;
    let mut delays = Vec::with_capacity(entries.len());

    for e in entries {
        let Some(recv) = e.t_recv else {
            r.dropped += 1;
            continue;
        };
        let d = recv - e.t_send;
        r.total_packets += 1;
        r.bytes_received += e.size as u64;
        first_send = first_send.min(e.t_send);
        last_recv = last_recv.max(recv);
        min_delay = min_delay.min(d);
        max_delay = max_delay.max(d);
        // Running mean: exact for a constant-delay stream.
        mean += (d - mean) / r.total_packets as f64;
        if let Some(p) = prev {
            jitter_sum += (d - p).abs();
            jitter_n += 1;
        }
        prev = Some(d);
        delays.push(d);
    }

    if r.total_packets > 0 {
        r.total_time = last_recv - first_send;
        r.min_delay = min_delay;
        r.max_delay = max_delay;
        r.avg_delay = mean;
        r.delay_stddev =
            (delays.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / delays.len() as f64).sqrt();
        if jitter_n > 0 {
            r.avg_jitter = jitter_sum / jitter_n as f64;
        }
        if r.total_time > 0.0 {
            r.avg_bitrate = r.bytes_received as f64 * 8.0 / r.total_time / 1000.0;
            r.avg_packet_rate = r.total_packets as f64 / r.total_time;
        }
    }
    if r.sent > 0 {
        r.dropped_percent = r.dropped as f64 * 100.0 / r.sent as f64;
    }
    if !bursts.is_empty() {
        r.avg_loss_burst = bursts.iter().sum::<u64>() as f64 / bursts.len() as f64;
    }
    r
}

fn loss_runs(entries: &[&PacketLogEntry]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = 0;
    for e in entries {
        if e.t_recv.is_none() {
            current += 1;
        } else if current > 0 {
            runs.push(current);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current);
    }
    runs
}

/// Reduces a packet log to per-flow reports and a pooled total.
///
/// Within a flow packets are taken in sequence order. The total treats every
/// packet as one stream ordered by send time; its loss bursts are the union of
/// the per-flow bursts.
pub fn decode(log: &PacketLog) -> Result<Decoded> {
    if log.entries.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut by_flow: BTreeMap<u32, Vec<&PacketLogEntry>> = BTreeMap::new();
    for e in &log.entries {
        by_flow.entry(e.flow).or_default().push(e);
    }

    let mut flows = Vec::with_capacity(by_flow.len());
    let mut all_bursts = Vec::new();
    for (flow, entries) in &mut by_flow {
        entries.sort_by_key(|e| e.seq);
        let bursts = loss_runs(entries);
        let mut r = stream_report(entries, &bursts);
        r.flow = Some(*flow);
        r.label = log.labels.get(flow).cloned().unwrap_or_else(|| FlowLabel {
            from: "unknown".into(),
            to: "unknown".into(),
        });
        all_bursts.extend(bursts);
        flows.push(r);
    }

    let mut pooled: Vec<&PacketLogEntry> = log.entries.iter().collect();
    pooled.sort_by(|a, b| {
        a.t_send
            .total_cmp(&b.t_send)
            .then(a.flow.cmp(&b.flow))
            .then(a.seq.cmp(&b.seq))
    });
    let total = stream_report(&pooled, &all_bursts);

    Ok(Decoded {
        flows,
        total,
        error_lines: 0,
    })
}

const RULE: &str = "|----------------------------------------------------------|";

fn field(out: &mut String, name: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{name:<20} = {value}");
}

fn stats_block(out: &mut String, r: &FlowReport, total: bool) {
    field(out, "Total time", format_args!("{:.6} s", r.total_time));
    field(out, "Total packets", r.total_packets);
    field(out, "Minimum delay", format_args!("{:.6} s", r.min_delay));
    field(out, "Maximum delay", format_args!("{:.6} s", r.max_delay));
    field(out, "Average delay", format_args!("{:.6} s", r.avg_delay));
    field(out, "Average jitter", format_args!("{:.6} s", r.avg_jitter));
    field(
        out,
        "Delay standard deviation",
        format_args!("{:.6} s", r.delay_stddev),
    );
    field(out, "Bytes received", r.bytes_received);
    field(
        out,
        "Average bitrate",
        format_args!("{:.6} Kbit/s", r.avg_bitrate),
    );
    field(
        out,
        "Average packet rate",
        format_args!("{:.6} pkt/s", r.avg_packet_rate),
    );
    field(
        out,
        "Packets dropped",
        format_args!("{} ({:.2} %)", r.dropped, r.dropped_percent),
    );
    if total && r.avg_loss_burst == 0.0 {
        field(out, "Average loss-burst size", "0 pkt");
    } else {
        field(
            out,
            "Average loss-burst size",
            format_args!("{:.6} pkt", r.avg_loss_burst),
        );
    }
}

/// Renders the report in ITGDec's layout: one block per flow followed by the
/// `TOTAL RESULTS` block.
pub fn render_report(decoded: &Decoded) -> String {
    let mut out = String::new();
    for r in &decoded.flows {
        out.push_str(RULE);
        out.push('\n');
        let _ = writeln!(out, "Flow number: {}", r.flow.unwrap_or(0));
        let _ = writeln!(out, "From {}", r.label.from);
        let _ = writeln!(out, "To {}", r.label.to);
        out.push_str(RULE);
        out.push('\n');
        stats_block(&mut out, r, false);
    }
    out.push_str(RULE);
    out.push('\n');
    out.push_str("***** TOTAL RESULTS *****\n");
    out.push_str(RULE);
    out.push('\n');
    field(&mut out, "Number of flows", decoded.flows.len());
    stats_block(&mut out, &decoded.total, true);
    field(&mut out, "Error lines", decoded.error_lines);
    out.push_str(RULE);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(seq: u64, t_send: f64, t_recv: Option<f64>) -> PacketLogEntry {
        PacketLogEntry {
            flow: 1,
            seq,
            size: 512,
            t_send,
            t_recv,
        }
    }

    fn log_of(entries: Vec<PacketLogEntry>) -> PacketLog {
        PacketLog {
            entries,
            ..PacketLog::default()
        }
    }

    #[test]
    fn three_packet_toy() {
        let log = log_of(vec![
            entry(1, 0.0, Some(0.10)),
            entry(2, 1.0, Some(1.12)),
            entry(3, 2.0, Some(2.11)),
        ]);
        let d = decode(&log).unwrap();
        let r = &d.flows[0];
        assert!((r.avg_delay - 0.11).abs() < 1e-12);
        assert!((r.avg_jitter - 0.015).abs() < 1e-12);
        assert!((r.min_delay - 0.10).abs() < 1e-12);
        assert!((r.max_delay - 0.12).abs() < 1e-12);
        assert!((r.total_time - 2.11).abs() < 1e-12);
        assert_eq!(r.bytes_received, 1536);
    }

    #[test]
    fn loss_bursts() {
        let pattern = [true, false, false, true, false, true];
        let entries = pattern
            .iter()
            .enumerate()
            .map(|(i, &ok)| {
                let t = i as f64;
                entry(i as u64 + 1, t, ok.then_some(t + 0.1))
            })
            .collect();
        let d = decode(&log_of(entries)).unwrap();
        let r = &d.flows[0];
        assert_eq!(r.dropped, 3);
        assert_eq!(r.dropped_percent, 50.0);
        assert_eq!(r.avg_loss_burst, 1.5);
        assert_eq!(d.total.avg_loss_burst, 1.5);
    }

    #[test]
    fn entries_are_reordered_by_seq() {
        let log = log_of(vec![
            entry(3, 2.0, Some(2.11)),
            entry(1, 0.0, Some(0.10)),
            entry(2, 1.0, Some(1.12)),
        ]);
        assert!((decode(&log).unwrap().flows[0].avg_jitter - 0.015).abs() < 1e-12);
    }

    #[test]
    fn all_lost_flow_has_zero_rates() {
        let d = decode(&log_of(vec![entry(0, 0.0, None), entry(1, 1.0, None)])).unwrap();
        let r = &d.flows[0];
        assert_eq!(r.total_packets, 0);
        assert_eq!(r.avg_bitrate, 0.0);
        assert_eq!(r.dropped_percent, 100.0);
        assert_eq!(r.avg_loss_burst, 2.0);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(
            decode(&PacketLog::default()),
            Err(Error::EmptyLog)
        ));
    }

    #[test]
    fn report_layout() {
        let log = log_of(vec![entry(0, 0.0, Some(0.5)), entry(1, 0.5, Some(1.0))]);
        let text = render_report(&decode(&log).unwrap());
        assert!(text.contains("\nFlow number: 1\nFrom unknown\nTo unknown\n"));
        assert!(text.contains("\nTotal time           = 1.000000 s\n"));
        assert!(text.contains("\nDelay standard deviation = 0.000000 s\n"));
        assert!(text.contains("\nAverage loss-burst size = 0.000000 pkt\n"));
        assert!(text.contains("\nNumber of flows      = 1\n"));
        assert!(text.contains("\nAverage loss-burst size = 0 pkt\nError lines          = 0\n"));
    }
}
