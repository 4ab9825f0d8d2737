//! D-ITG-style traffic description.
//!
//! A flow script holds one flow per line using ITGSend's option letters:
//!
//! ```text
//! # comment
//! -a 10.2.0.10 -C 1000 -c 512 -T UDP
//! -a 10.2.0.10 -C 2000 -c 512 -T UDP -t 20000
//! ```
//!
//! `-a` destination (required), `-T` transport (`UDP`|`TCP`, default UDP),
//! `-C` constant rate in pkt/s (default 1000), `-c` constant payload in bytes
//! (default 512), `-t` duration in ms (default 20000). Stochastic
//! inter-departure times are selected with `-E rate` (exponential),
//! `-O rate` (Poisson process) or `-U min_rate max_rate` (uniform); payload
//! sizes with `-e mean`, `-o mean` (Poisson byte count) or `-u min max`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Cauchy, Distribution as _, Exp, Gamma, Normal, Pareto, Poisson, Uniform};

use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_RATE: f64 = 1000.0;
pub const DEFAULT_PAYLOAD: u32 = 512;
pub const DEFAULT_DURATION_MS: f64 = 20_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transport {
    Udp,
    Tcp,
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "UDP" => Ok(Transport::Udp),
            "TCP" => Ok(Transport::Tcp),
            other => Err(format!("unsupported transport {other:?}")),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::Udp => "UDP",
            Transport::Tcp => "TCP",
        })
    }
}

/// Distribution of inter-departure times (seconds) or payload sizes (bytes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Constant(f64),
    Uniform { low: f64, high: f64 },
    Exponential { mean: f64 },
    Normal { mean: f64, std_dev: f64 },
    Gamma { shape: f64, scale: f64 },
    Pareto { shape: f64, scale: f64 },
    Cauchy { location: f64, scale: f64 },
    Poisson { mean: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Constant(v) => v.is_finite() && v >= 0.0,
            Distribution::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && 0.0 <= low && low <= high
            }
            Distribution::Exponential { mean } | Distribution::Poisson { mean } => {
                mean.is_finite() && mean > 0.0
            }
            Distribution::Normal { mean, std_dev } => {
                mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0
            }
            Distribution::Gamma { shape, scale } | Distribution::Pareto { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
            Distribution::Cauchy { location, scale } => {
                location.is_finite() && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "invalid distribution {self:?}"
            )))
        }
    }

    /// Draws one raw value; no truncation applied.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let bad = |e: &dyn fmt::Display| Error::InvalidParams(format!("{self:?}: {e}"));
        Ok(match *self {
            Distribution::Constant(v) => v,
            Distribution::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    Uniform::new(low, high).map_err(|e| bad(&e))?.sample(rng)
                }
            }
            Distribution::Exponential { mean } => {
                Exp::new(1.0 / mean).map_err(|e| bad(&e))?.sample(rng)
            }
            Distribution::Normal { mean, std_dev } => {
                Normal::new(mean, std_dev).map_err(|e| bad(&e))?.sample(rng)
            }
            Distribution::Gamma { shape, scale } => {
                Gamma::new(shape, scale).map_err(|e| bad(&e))?.sample(rng)
            }
            Distribution::Pareto { shape, scale } => {
                Pareto::new(scale, shape).map_err(|e| bad(&e))?.sample(rng)
            }
            Distribution::Cauchy { location, scale } => Cauchy::new(location, scale)
                .map_err(|e| bad(&e))?
                .sample(rng),
            Distribution::Poisson { mean } => Poisson::new(mean).map_err(|e| bad(&e))?.sample(rng),
        })
    }
}

/// Samples one inter-departure time in seconds for a flow of nominal `rate`
/// (pkt/s).
///
/// Negative draws are clamped to 0. Cauchy draws are additionally capped at
/// `10³/rate` because the distribution has no mean. A Poisson interval is an
/// exponential inter-arrival with the given mean (a Poisson process).
pub fn sample_interval<R: Rng + ?Sized>(
    dist: &Distribution,
    rate: f64,
    rng: &mut R,
) -> Result<f64> {
    dist.validate()?;
    let x = match *dist {
        Distribution::Poisson { mean } => Distribution::Exponential { mean }.draw(rng)?,
        Distribution::Cauchy { .. } => dist.draw(rng)?.clamp(0.0, 1e3 / rate),
        _ => dist.draw(rng)?,
    };
    Ok(x.max(0.0))
}

/// Samples one payload size in bytes (at least 1). Poisson sizes are literal
/// Poisson byte counts; Cauchy sizes are capped at `10³·location`.
pub fn sample_size<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> Result<u32> {
    dist.validate()?;
    let mut x = dist.draw(rng)?;
    if let Distribution::Cauchy { location, scale } = *dist {
        x = x.min(1e3 * location.abs().max(scale));
    }
    Ok(x.round().clamp(1.0, u32::MAX as f64) as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub dest: String,
    pub transport: Transport,
    /// Nominal rate in packets/s.
    pub rate: f64,
    /// Nominal payload in bytes.
    pub payload: u32,
    pub duration_ms: f64,
    pub interval_dist: Distribution,
    pub size_dist: Distribution,
}

impl FlowSpec {
    /// Constant-rate, constant-size flow.
    pub fn constant(
        dest: impl Into<String>,
        transport: Transport,
        rate: f64,
        payload: u32,
        duration_ms: f64,
    ) -> Self {
        Self {
            dest: dest.into(),
            transport,
            rate,
            payload,
            duration_ms,
            interval_dist: Distribution::Constant(1.0 / rate),
            size_dist: Distribution::Constant(payload as f64),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ms / 1000.0
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.interval_dist, Distribution::Constant(_))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidParams(format!(
                "rate must be positive, got {}",
                self.rate
            )));
        }
        if self.payload == 0 {
            return Err(Error::InvalidParams(
                "payload must be at least 1 byte".into(),
            ));
        }
        if !(self.duration_ms.is_finite() && self.duration_ms > 0.0) {
            return Err(Error::InvalidParams(format!(
                "duration must be positive, got {} ms",
                self.duration_ms
            )));
        }
        if !(self.rate * self.duration_s()).is_finite() {
            return Err(Error::InvalidParams(
                "expected packet count overflows".into(),
            ));
        }
        self.interval_dist.validate()?;
        self.size_dist.validate()
    }
}

fn flag_value<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    flag: &str,
    line: usize,
) -> Result<&'a str> {
    tokens
        .next()
        .ok_or_else(|| Error::parse(line, format!("{flag} expects a value")))
}

fn number<T: FromStr>(s: &str, flag: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("malformed number {s:?} for {flag}")))
}

/// Parses one script line (already stripped of comments and blank input).
pub fn parse_flow_line(text: &str, line: usize) -> Result<FlowSpec> {
    let mut dest = None;
    let mut transport = Transport::Udp;
    let mut rate = DEFAULT_RATE;
    let mut payload = DEFAULT_PAYLOAD;
    let mut duration_ms = DEFAULT_DURATION_MS;
    let mut interval: Option<Distribution> = None;
    let mut size: Option<Distribution> = None;

    let mut tokens = text.split_whitespace();
    while let Some(flag) = tokens.next() {
        match flag {
            "-a" => dest = Some(flag_value(&mut tokens, flag, line)?.to_string()),
            "-T" => {
                transport = flag_value(&mut tokens, flag, line)?
                    .parse()
                    .map_err(|e| Error::parse(line, e))?
            }
            "-C" => rate = number(flag_value(&mut tokens, flag, line)?, flag, line)?,
            "-c" => payload = number(flag_value(&mut tokens, flag, line)?, flag, line)?,
            "-t" => duration_ms = number(flag_value(&mut tokens, flag, line)?, flag, line)?,
            "-E" | "-O" => {
                rate = number(flag_value(&mut tokens, flag, line)?, flag, line)?;
                let mean = 1.0 / rate;
                interval = Some(if flag == "-E" {
                    Distribution::Exponential { mean }
                } else {
                    Distribution::Poisson { mean }
                });
            }
            "-U" => {
                let lo: f64 = number(flag_value(&mut tokens, flag, line)?, flag, line)?;
                let hi: f64 = number(flag_value(&mut tokens, flag, line)?, flag, line)?;
                if !(lo > 0.0 && hi >= lo) {
                    return Err(Error::parse(line, "-U needs 0 < min_rate <= max_rate"));
                }
                rate = 2.0 / (1.0 / lo + 1.0 / hi);
                interval = Some(Distribution::Uniform {
                    low: 1.0 / hi,
                    high: 1.0 / lo,
                });
            }
            "-e" | "-o" => {
                let mean: f64 = number(flag_value(&mut tokens, flag, line)?, flag, line)?;
                payload = mean.round().max(1.0) as u32;
                size = Some(if flag == "-e" {
                    Distribution::Exponential { mean }
                } else {
                    Distribution::Poisson { mean }
                });
            }
            "-u" => {
                let lo: f64 = number(flag_value(&mut tokens, flag, line)?, flag, line)?;
                let hi: f64 = number(flag_value(&mut tokens, flag, line)?, flag, line)?;
                payload = ((lo + hi) / 2.0).round().max(1.0) as u32;
                size = Some(Distribution::Uniform { low: lo, high: hi });
            }
            other => return Err(Error::parse(line, format!("unknown flag {other:?}"))),
        }
    }

    let dest = dest.ok_or_else(|| Error::parse(line, "missing -a destination"))?;
    let mut spec = FlowSpec::constant(dest, transport, rate, payload, duration_ms);
    if let Some(d) = interval {
        spec.interval_dist = d;
    }
    if let Some(d) = size {
        spec.size_dist = d;
    }
    spec.validate()
        .map_err(|e| Error::parse(line, e.to_string()))?;
    Ok(spec)
}

/// Parses a flow script; flows are numbered 1..n in file order.
pub fn parse_flow_script(text: &str) -> Result<Vec<FlowSpec>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| parse_flow_line(l, i + 1))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    /// Seconds since the start of the flow.
    pub time: f64,
    pub size: u32,
}

/// Departure schedule of one flow over `[0, duration)`.
///
/// Constant-interval flows emit exactly `floor(rate·duration)` packets at
/// `i/rate`. Stochastic flows draw one interval and one size per packet from
/// a generator seeded with `seed`.
pub fn generate_departures(spec: &FlowSpec, seed: u64) -> Result<Vec<Departure>> {
    spec.validate()?;
    let duration = spec.duration_s();
    let mut rng = rng::seeded(seed);
    let mut out = Vec::new();

    if let Distribution::Constant(interval) = spec.interval_dist {
        let count = if interval > 0.0 {
            // Guard against products like 0.1·30 landing just below an integer.
            let exact = duration / interval;
            (exact * (1.0 + 1e-12)).floor() as usize
        } else {
            return Err(Error::InvalidParams(
                "constant interval must be positive".into(),
            ));
        };
        out.reserve(count);
        for i in 0..count {
            let time = i as f64 * interval;
            if time >= duration {
                break;
            }
            out.push(Departure {
                time,
                size: sample_size(&spec.size_dist, &mut rng)?,
            });
        }
        return Ok(out);
    }

    let mut t = 0.0;
    while t < duration {
        let size = sample_size(&spec.size_dist, &mut rng)?;
        out.push(Departure { time: t, size });
        t += sample_interval(&spec.interval_dist, spec.rate, &mut rng)?;
    }
    Ok(out)
}
