//! Random Early Detection.
//!
//! The average queue `Q̂` is an exponentially weighted moving average of the
//! instantaneous occupancy, updated on every packet arrival. Arrivals are
//! dropped with a probability that ramps linearly from 0 at `q_min` to
//! `p_max` just below `q_max`, and is 1 from `q_max` upwards. Thresholds are
//! in packets.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedParams {
    pub q_min: f64,
    pub q_max: f64,
    pub p_max: f64,
    pub w_q: f64,
    /// Spread drops with the "packets since last drop" correction instead of
    /// treating each arrival as an independent trial.
    pub use_count: bool,
}

impl Default for RedParams {
    fn default() -> Self {
        Self {
            q_min: 5.0,
            q_max: 15.0,
            p_max: 0.1,
            w_q: 0.002,
            use_count: false,
        }
    }
}

impl RedParams {
    pub fn new(q_min: f64, q_max: f64, p_max: f64, w_q: f64) -> Result<Self> {
        let params = Self {
            q_min,
            q_max,
            p_max,
            w_q,
            use_count: false,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_count(mut self, use_count: bool) -> Self {
        self.use_count = use_count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_min.is_finite() && self.q_max.is_finite() && self.q_min > 0.0) {
            return Err(Error::InvalidParams(format!(
                "q_min must be positive and finite, got {}",
                self.q_min
            )));
        }
        if self.q_max <= self.q_min {
            return Err(Error::InvalidParams(format!(
                "q_max ({}) must exceed q_min ({})",
                self.q_max, self.q_min
            )));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "p_max must lie in (0, 1], got {}",
                self.p_max
            )));
        }
        if !(self.w_q > 0.0 && self.w_q <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "w_q must lie in (0, 1], got {}",
                self.w_q
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RedState {
    pub avg_queue: f64,
    /// Packets enqueued since the last drop; only consulted with `use_count`.
    pub count: u64,
    pub occupancy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropCause {
    /// Probabilistic drop decided by the RED law.
    Early,
    /// The buffer was full.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Enqueue,
    Drop(DropCause),
}

impl Decision {
    pub fn is_drop(self) -> bool {
        matches!(self, Decision::Drop(_))
    }
}

/// One step of the discrete EWMA recurrence `(1 - w_q)·q_hat + w_q·q`.
pub fn ewma_update(q_hat: f64, q: f64, w_q: f64) -> Result<f64> {
    if !(q_hat.is_finite() && q.is_finite() && w_q.is_finite()) {
        return Err(Error::Domain("ewma inputs must be finite".into()));
    }
    if q_hat < 0.0 || q < 0.0 {
        return Err(Error::Domain(format!(
            "queue lengths must be non-negative (q_hat={q_hat}, q={q})"
        )));
    }
    if !(0.0..=1.0).contains(&w_q) {
        return Err(Error::Domain(format!("w_q must lie in [0, 1], got {w_q}")));
    }
    Ok((1.0 - w_q) * q_hat + w_q * q)
}

/// Piecewise-linear RED drop probability `p_b` for an average queue `q_hat`.
pub fn drop_probability(q_hat: f64, params: &RedParams) -> f64 {
    if q_hat < params.q_min {
        0.0
    } else if q_hat < params.q_max {
        params.p_max * (q_hat - params.q_min) / (params.q_max - params.q_min)
    } else {
        1.0
    }
}

/// The count-corrected probability `p_b / (1 - count·p_b)`, clamped to
/// `[p_b, 1]`.
pub fn count_adjusted(p_b: f64, count: u64) -> f64 {
    if p_b <= 0.0 {
        return 0.0;
    }
    let denom = 1.0 - count as f64 * p_b;
    if denom <= 0.0 {
        1.0
    } else {
        (p_b / denom).clamp(p_b, 1.0)
    }
}

/// Decides the fate of one arriving packet.
///
/// `state.avg_queue` must already include this arrival's EWMA update; `u` is
/// a uniform draw in `[0, 1)`. A full buffer forces a drop regardless of the
/// draw. Returns the decision together with the updated state (occupancy
/// incremented on enqueue).
pub fn red_decide(
    state: &RedState,
    params: &RedParams,
    buffer: usize,
    u: f64,
) -> (Decision, RedState) {
    let p_b = drop_probability(state.avg_queue, params);
    let p = if params.use_count {
        count_adjusted(p_b, state.count)
    } else {
        p_b
    };

    let mut next = *state;
    let decision = if state.occupancy >= buffer {
        Decision::Drop(DropCause::Forced)
    } else if u < p {
        Decision::Drop(DropCause::Early)
    } else {
        Decision::Enqueue
    };

    match decision {
        Decision::Drop(_) => next.count = 0,
        Decision::Enqueue => {
            next.occupancy += 1;
            next.count = if p_b > 0.0 { state.count + 1 } else { 0 };
        }
    }
    (decision, next)
}

/// Continuous-time EWMA drift `w_q·c·(q - q_hat)`, i.e. the discrete
/// recurrence with one averaging step per service interval `1/c`.
pub fn continuous_ewma_rate(q_hat: f64, q: f64, w_q: f64, c: f64) -> f64 {
    w_q * c * (q - q_hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RedParams {
        RedParams::new(5.0, 15.0, 0.1, 0.002).unwrap()
    }

    #[test]
    fn ewma_examples() {
        assert_eq!(ewma_update(4.0, 8.0, 0.5).unwrap(), 6.0);
        assert_eq!(ewma_update(3.0, 7.0, 1.0).unwrap(), 7.0);
        assert_eq!(ewma_update(3.0, 7.0, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn ewma_rejects_bad_domain() {
        assert!(matches!(ewma_update(-1.0, 2.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(ewma_update(1.0, -2.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(ewma_update(1.0, 2.0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(ewma_update(1.0, 2.0, -0.1), Err(Error::Domain(_))));
        assert!(ewma_update(f64::NAN, 2.0, 0.1).is_err());
    }

    #[test]
    fn drop_probability_branches() {
        let p = params();
        assert_eq!(drop_probability(4.0, &p), 0.0);
        assert_eq!(drop_probability(10.0, &p), 0.05);
        assert_eq!(drop_probability(20.0, &p), 1.0);
        assert_eq!(drop_probability(5.0, &p), 0.0);
        assert_eq!(drop_probability(15.0, &p), 1.0);
    }

    #[test]
    fn params_validation() {
        assert!(RedParams::new(0.0, 15.0, 0.1, 0.002).is_err());
        assert!(RedParams::new(5.0, 5.0, 0.1, 0.002).is_err());
        assert!(RedParams::new(5.0, 15.0, 0.0, 0.002).is_err());
        assert!(RedParams::new(5.0, 15.0, 1.5, 0.002).is_err());
        assert!(RedParams::new(5.0, 15.0, 0.1, 0.0).is_err());
        assert!(RedParams::new(5.0, 15.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn decide_in_zero_region_always_enqueues() {
        let p = params();
        let st = RedState {
            avg_queue: 4.0,
            count: 3,
            occupancy: 2,
        };
        for u in [0.0, 0.5, 0.999] {
            let (d, next) = red_decide(&st, &p, 40, u);
            assert_eq!(d, Decision::Enqueue);
            assert_eq!(next.occupancy, 3);
            assert_eq!(next.count, 0);
        }
    }

    #[test]
    fn decide_above_max_always_drops() {
        let p = params();
        let st = RedState {
            avg_queue: 20.0,
            count: 0,
            occupancy: 2,
        };
        for u in [0.0, 0.5, 0.999_999] {
            let (d, next) = red_decide(&st, &p, 40, u);
            assert_eq!(d, Decision::Drop(DropCause::Early));
            assert_eq!(next.occupancy, 2);
        }
    }

    #[test]
    fn full_buffer_is_a_forced_drop() {
        let p = params();
        let st = RedState {
            avg_queue: 0.0,
            count: 0,
            occupancy: 10,
        };
        let (d, _) = red_decide(&st, &p, 10, 0.9);
        assert_eq!(d, Decision::Drop(DropCause::Forced));
    }

    #[test]
    fn count_adjustment() {
        assert!((count_adjusted(0.05, 10) - 0.1).abs() < 1e-15);
        assert_eq!(count_adjusted(0.05, 0), 0.05);
        assert_eq!(count_adjusted(0.05, 20), 1.0);
        assert_eq!(count_adjusted(0.05, 40), 1.0);
        assert_eq!(count_adjusted(0.0, 40), 0.0);
    }

    #[test]
    fn count_bookkeeping() {
        let p = params().with_count(true);
        let st = RedState {
            avg_queue: 10.0,
            count: 10,
            occupancy: 1,
        };
        // p_a = 0.1: a draw just above enqueues and bumps the count.
        let (d, next) = red_decide(&st, &p, 40, 0.1 + 1e-9);
        assert_eq!(d, Decision::Enqueue);
        assert_eq!(next.count, 11);
        let (d, next) = red_decide(&st, &p, 40, 0.099);
        assert_eq!(d, Decision::Drop(DropCause::Early));
        assert_eq!(next.count, 0);
    }

    #[test]
    fn continuous_rate_examples() {
        assert_eq!(continuous_ewma_rate(6.0, 6.0, 0.3, 77.0), 0.0);
        assert!((continuous_ewma_rate(0.0, 10.0, 0.002, 1000.0) - 20.0).abs() < 1e-12);
        assert!(continuous_ewma_rate(1.0, 2.0, 0.002, 1000.0) > 0.0);
        assert!(continuous_ewma_rate(3.0, 2.0, 0.002, 1000.0) < 0.0);
    }

    #[test]
    fn continuous_rate_matches_discrete_step_with_service_interval() {
        // One EWMA step per 1/C seconds: (q̂' - q̂)·C equals the continuous rate.
        let (q_hat, q, w_q, c) = (3.0, 11.0, 0.01, 250.0);
        let stepped = ewma_update(q_hat, q, w_q).unwrap();
        let rate = continuous_ewma_rate(q_hat, q, w_q, c);
        assert!(((stepped - q_hat) * c - rate).abs() < 1e-12);
    }
}
