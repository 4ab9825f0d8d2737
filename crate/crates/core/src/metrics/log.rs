use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const LOG_HEADER: &str = "#red-bench-log v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketLogEntry {
    pub flow: u32,
    pub seq: u64,
    pub size: u32,
    pub t_send: f64,
    /// `None` when the packet was lost.
    pub t_recv: Option<f64>,
}

impl PacketLogEntry {
    pub fn delay(&self) -> Option<f64> {
        self.t_recv.map(|r| r - self.t_send)
    }
}

/// Endpoint labels printed in the report's flow header.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlowLabel {
    pub from: String,
    pub to: String,
}

/// A receive log: one line per sent packet, lost packets marked `-`.
///
/// ```text
/// #red-bench-log v1
/// # seed=1
/// # flow 1 from sender:1 to 10.2.0.10
/// 1 0 512 0.000000000 0.000409600
/// 1 1 512 0.001000000 -
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PacketLog {
    pub comments: Vec<String>,
    pub labels: BTreeMap<u32, FlowLabel>,
    pub entries: Vec<PacketLogEntry>,
}

impl PacketLog {
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 40 + 256);
        out.push_str(LOG_HEADER);
        out.push('\n');
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        for (flow, l) in &self.labels {
            let _ = writeln!(out, "# flow {flow} from {} to {}", l.from, l.to);
        }
        for e in &self.entries {
            let _ = write!(out, "{} {} {} {:.9} ", e.flow, e.seq, e.size, e.t_send);
            match e.t_recv {
                Some(r) => {
                    let _ = writeln!(out, "{r:.9}");
                }
                None => out.push_str("-\n"),
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == LOG_HEADER => {}
            Some(_) => return Err(Error::parse(1, format!("expected header {LOG_HEADER:?}"))),
            None => return Err(Error::EmptyLog),
        }
        let mut log = PacketLog::default();
        for (i, raw) in lines {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                match parse_label(rest) {
                    Some((flow, label)) => {
                        log.labels.insert(flow, label);
                    }
                    None => log.comments.push(rest.to_string()),
                }
                continue;
            }
            log.entries.push(parse_entry(line, n)?);
        }
        if log.entries.is_empty() {
            return Err(Error::EmptyLog);
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn parse_label(rest: &str) -> Option<(u32, FlowLabel)> {
    let mut t = rest.split_whitespace();
    if t.next()? != "flow" {
        return None;
    }
    let flow = t.next()?.parse().ok()?;
    if t.next()? != "from" {
        return None;
    }
    let from = t.next()?.to_string();
    if t.next()? != "to" {
        return None;
    }
    let to = t.next()?.to_string();
    Some((flow, FlowLabel { from, to }))
}

fn parse_entry(line: &str, n: usize) -> Result<PacketLogEntry> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            n,
            format!("expected 5 fields, found {}", fields.len()),
        ));
    }
    let bad = |what: &str, v: &str| Error::parse(n, format!("malformed {what} {v:?}"));
    let flow = fields[0].parse().map_err(|_| bad("flow", fields[0]))?;
    let seq = fields[1].parse().map_err(|_| bad("seq", fields[1]))?;
    let size = fields[2].parse().map_err(|_| bad("size", fields[2]))?;
    let t_send: f64 = fields[3].parse().map_err(|_| bad("send time", fields[3]))?;
    let t_recv = match fields[4] {
        "-" => None,
        v => Some(v.parse::<f64>().map_err(|_| bad("receive time", v))?),
    };
    if !t_send.is_finite() || t_recv.is_some_and(|r| !r.is_finite()) {
        return Err(Error::parse(n, "non-finite timestamp"));
    }
    if let Some(r) = t_recv {
        if r < t_send {
            return Err(Error::parse(n, "received before sent"));
        }
    }
    Ok(PacketLogEntry {
        flow,
        seq,
        size,
        t_send,
        t_recv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PacketLog {
        let mut log = PacketLog::default();
        log.comments.push("seed=3".into());
        log.labels.insert(
            1,
            FlowLabel {
                from: "a:1".into(),
                to: "b".into(),
            },
        );
        log.entries = vec![
            PacketLogEntry {
                flow: 1,
                seq: 0,
                size: 512,
                t_send: 0.0,
                t_recv: Some(0.25),
            },
            PacketLogEntry {
                flow: 1,
                seq: 1,
                size: 512,
                t_send: 0.5,
                t_recv: None,
            },
        ];
        log
    }

    #[test]
    fn render_format() {
        let text = sample().render();
        assert_eq!(
            text,
            "#red-bench-log v1\n# seed=3\n# flow 1 from a:1 to b\n\
             1 0 512 0.000000000 0.250000000\n1 1 512 0.500000000 -\n"
        );
        assert_eq!(PacketLog::parse(&text).unwrap(), sample());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(PacketLog::parse(""), Err(Error::EmptyLog)));
        assert!(matches!(
            PacketLog::parse("#red-bench-log v1\n# nothing\n"),
            Err(Error::EmptyLog)
        ));
        assert!(matches!(
            PacketLog::parse("1 0 512 0 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let err =
            PacketLog::parse("#red-bench-log v1\n1 0 512 0.0 0.1\n1 x 512 0.0 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = PacketLog::parse("#red-bench-log v1\n1 0 512 0.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = PacketLog::parse("#red-bench-log v1\n1 0 512 1.0 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
