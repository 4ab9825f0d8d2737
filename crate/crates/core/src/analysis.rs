//! Series comparison helpers for packet-vs-fluid checks.

use crate::{Error, Result};

/// Value of a right-continuous step function (`times` ascending) at `t`.
/// Before the first knot the first value is used.
pub fn step_value(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.partition_point(|&x| x <= t) {
        0 => values[0],
        i => values[i - 1],
    }
}

/// Samples a step function on a grid.
pub fn resample(times: &[f64], values: &[f64], grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&t| step_value(times, values, t)).collect()
}

/// Uniform grid `start, start+dt, …` up to and including `end`.
pub fn grid(start: f64, end: f64, dt: f64) -> Vec<f64> {
    let n = ((end - start) / dt * (1.0 + 1e-12)).floor().max(0.0) as usize;
    (0..=n).map(|k| start + k as f64 * dt).collect()
}

/// Common time range `[max(starts) + warmup, min(ends)]` of two series.
pub fn overlap(a: &[f64], b: &[f64], warmup: f64) -> Result<(f64, f64)> {
    let (Some(&a0), Some(&a1), Some(&b0), Some(&b1)) = (a.first(), a.last(), b.first(), b.last())
    else {
        return Err(Error::EmptyTrace);
    };
    let start = a0.max(b0) + warmup;
    let end = a1.min(b1);
    if start >= end {
        return Err(Error::DisjointRanges(format!(
            "[{a0}, {a1}] and [{b0}, {b1}] after {warmup} s warm-up"
        )));
    }
    Ok((start, end))
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// `Σ|a − b| / Σ|b|` (0 when both vanish).
pub fn relative_l1(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = reference.iter().map(|y| y.abs()).sum();
    ratio(num, den)
}

/// `max|a − b| / max|b|` (0 when both vanish).
pub fn relative_linf(a: &[f64], reference: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(reference)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = reference.iter().map(|y| y.abs()).fold(0.0, f64::max);
    ratio(num, den)
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Lag `k ∈ [-max_lag, max_lag]` (in samples) maximising the correlation
/// of `x(t)` with `y(t + k)`. A positive result means `y` trails `x`.
pub fn cross_correlation_peak(x: &[f64], y: &[f64], max_lag: usize) -> i64 {
    let n = x.len().min(y.len());
    let mx = mean(&x[..n]);
    let my = mean(&y[..n]);
    let max_lag = max_lag.min(n.saturating_sub(2)) as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    for k in -max_lag..=max_lag {
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..n as i64 {
            let j = i + k;
            if j < 0 || j >= n as i64 {
                continue;
            }
            acc += (x[i as usize] - mx) * (y[j as usize] - my);
            count += 1;
        }
        let c = if count == 0 { 0.0 } else { acc / count as f64 };
        if c > best.0 {
            best = (c, k);
        }
    }
    best.1
}
