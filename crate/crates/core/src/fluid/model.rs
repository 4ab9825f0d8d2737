use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::red::{drop_probability, RedParams};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// One segment is always in flight.
pub const W_FLOOR: f64 = 1.0;

/// How the marking intensity `λ` (rate of `dN` events) is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkingLaw {
    /// `λ = p(Q̂)·W/T` with `p` the RED drop law.
    Red,
    /// `λ = p·W/T` with a frozen probability (diagnostics).
    ConstantProbability(f64),
    /// `λ` frozen at the given rate (events/s).
    FixedIntensity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkingMode {
    /// Marks enter through their expected rate `-(W/2)·λ` in the drift.
    ExpectedDrift,
    /// Marks are sampled as Poisson events, each halving the window.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingProcess {
    pub intensity: f64,
    pub mode: MarkingMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    /// Round-trip time `T` in seconds (propagation part when `delay_coupled`).
    pub rtt: f64,
    /// Service intensity `C` in packets/s.
    pub capacity: f64,
    /// Maximum queue `B` in packets.
    pub buffer: f64,
    pub red: RedParams,
    pub noise_enabled: bool,
    pub marking_enabled: bool,
    pub marking_law: MarkingLaw,
    pub marking_mode: MarkingMode,
    /// Use `T = rtt + Q/C` instead of a constant round-trip time.
    pub delay_coupled: bool,
}

impl FluidParams {
    pub fn new(rtt: f64, capacity: f64, buffer: f64, red: RedParams) -> Result<Self> {
        let p = Self {
            rtt,
            capacity,
            buffer,
            red,
            noise_enabled: true,
            marking_enabled: true,
            marking_law: MarkingLaw::Red,
            marking_mode: MarkingMode::ExpectedDrift,
            delay_coupled: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtt", self.rtt),
            ("capacity", self.capacity),
            ("buffer", self.buffer),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        self.red.validate()?;
        match self.marking_law {
            MarkingLaw::ConstantProbability(p) if !(0.0..=1.0).contains(&p) => Err(
                Error::InvalidParams(format!("marking probability must lie in [0, 1], got {p}")),
            ),
            MarkingLaw::FixedIntensity(l) if !(l.is_finite() && l >= 0.0) => Err(
                Error::InvalidParams(format!("marking intensity must be >= 0, got {l}")),
            ),
            _ => Ok(()),
        }
    }

    /// Default integration step, `T/100`.
    pub fn default_dt(&self) -> f64 {
        self.rtt / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidState {
    pub w: f64,
    pub q: f64,
    pub q_hat: f64,
    pub t: f64,
}

impl FluidState {
    pub fn new(w: f64, q: f64, q_hat: f64) -> Self {
        Self {
            w,
            q,
            q_hat,
            t: 0.0,
        }
    }

    pub fn validate(&self, params: &FluidParams) -> Result<()> {
        if !(self.w.is_finite() && self.w >= W_FLOOR) {
            return Err(Error::InvalidParams(format!(
                "window must be >= {W_FLOOR}, got {}",
                self.w
            )));
        }
        if !(self.q >= 0.0 && self.q <= params.buffer) {
            return Err(Error::InvalidParams(format!(
                "queue must lie in [0, {}], got {}",
                params.buffer, self.q
            )));
        }
        if !(self.q_hat.is_finite() && self.q_hat >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "average queue must be >= 0, got {}",
                self.q_hat
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w, self.q, self.q_hat]
    }
}

impl Default for FluidState {
    fn default() -> Self {
        Self::new(W_FLOOR, 0.0, 0.0)
    }
}

/// Time derivatives `(dW/dt, dQ/dt, dQ̂/dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub w: f64,
    pub q: f64,
    pub q_hat: f64,
}

impl Drift {
    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.q * self.q + self.q_hat * self.q_hat).sqrt()
    }
}

/// Noise amplitudes `(σ_W, σ_Q)` multiplying `dV¹`, `dV²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusion {
    pub w: f64,
    pub q: f64,
}

/// Per-acknowledgement window growth `W + 1/W`.
pub fn window_per_ack(w: f64) -> Result<f64> {
    if !(w.is_finite() && w >= W_FLOOR) {
        return Err(Error::Domain(format!(
            "window must be >= {W_FLOOR}, got {w}"
        )));
    }
    Ok(w + 1.0 / w)
}

pub fn effective_rtt(state: &FluidState, params: &FluidParams) -> f64 {
    if params.delay_coupled {
        params.rtt + state.q / params.capacity
    } else {
        params.rtt
    }
}

/// Current marking intensity `λ` (0 when marking is disabled).
pub fn marking_intensity(state: &FluidState, params: &FluidParams) -> f64 {
    if !params.marking_enabled {
        return 0.0;
    }
    let t = effective_rtt(state, params);
    match params.marking_law {
        MarkingLaw::Red => drop_probability(state.q_hat, &params.red) * state.w / t,
        MarkingLaw::ConstantProbability(p) => p * state.w / t,
        MarkingLaw::FixedIntensity(l) => l,
    }
}

pub fn marking_process(state: &FluidState, params: &FluidParams) -> MarkingProcess {
    MarkingProcess {
        intensity: marking_intensity(state, params),
        mode: params.marking_mode,
    }
}

/// Expected-value drift of the fluid system.
pub fn drift(state: &FluidState, params: &FluidParams) -> Drift {
    drift_with_intensity(state, params, marking_intensity(state, params))
}

/// Drift for an externally supplied marking intensity `lambda`.
pub fn drift_with_intensity(state: &FluidState, params: &FluidParams, lambda: f64) -> Drift {
    let t = effective_rtt(state, params);
    let dw = 1.0 / t - 0.5 * state.w * lambda;
    let mut dq = state.w / t - params.capacity;
    if state.q <= 0.0 {
        dq = dq.max(0.0);
    }
    if state.q >= params.buffer {
        dq = dq.min(0.0);
    }
    let dq_hat =
        crate::red::continuous_ewma_rate(state.q_hat, state.q, params.red.w_q, params.capacity);
    Drift {
        w: dw,
        q: dq,
        q_hat: dq_hat,
    }
}

pub fn diffusion(state: &FluidState, params: &FluidParams) -> Diffusion {
    diffusion_with_intensity(state, params, marking_intensity(state, params))
}

/// `σ_W = √(1/T + (W/2)·λ)`, `σ_Q = √|W/T − C|`.
pub fn diffusion_with_intensity(
    state: &FluidState,
    params: &FluidParams,
    lambda: f64,
) -> Diffusion {
    let t = effective_rtt(state, params);
    Diffusion {
        w: (1.0 / t + 0.5 * state.w * lambda).max(0.0).sqrt(),
        q: (state.w / t - params.capacity).abs().sqrt(),
    }
}

fn check_step(dt: f64, params: &FluidParams) -> Result<()> {
    let limit = params.rtt / 10.0;
    if !(dt > 0.0 && dt <= limit) {
        return Err(Error::StepSize { dt, limit });
    }
    Ok(())
}

/// One Euler–Maruyama step.
///
/// `z1`, `z2` are standard normal draws (ignored when noise is disabled);
/// `n_events` is the number of marking events in the step and is only used
/// in [`MarkingMode::Poisson`], where each event halves the window and the
/// `λ` term is removed from the drift.
pub fn step_euler_maruyama(
    state: &FluidState,
    params: &FluidParams,
    dt: f64,
    z1: f64,
    z2: f64,
    n_events: u32,
) -> Result<FluidState> {
    check_step(dt, params)?;
    Ok(step_unchecked(state, params, dt, z1, z2, n_events))
}

fn step_unchecked(
    state: &FluidState,
    params: &FluidParams,
    dt: f64,
    z1: f64,
    z2: f64,
    n_events: u32,
) -> FluidState {
    let lambda = marking_intensity(state, params);
    let sampled = params.marking_enabled && params.marking_mode == MarkingMode::Poisson;
    let d = drift_with_intensity(state, params, if sampled { 0.0 } else { lambda });

    let mut w = state.w + d.w * dt;
    let mut q = state.q + d.q * dt;
    if params.noise_enabled {
        let s = diffusion_with_intensity(state, params, lambda);
        let sq = dt.sqrt();
        w += s.w * sq * z1;
        q += s.q * sq * z2;
    }
    if sampled && n_events > 0 {
        w *= 0.5f64.powi(n_events as i32);
    }
    let q_hat = state.q_hat + d.q_hat * dt;

    FluidState {
        w: w.max(W_FLOOR),
        q: q.clamp(0.0, params.buffer),
        q_hat: q_hat.max(0.0),
        t: state.t + dt,
    }
}

/// Draws the random inputs of one step and advances the state.
pub fn step_random<R: Rng + ?Sized>(
    state: &FluidState,
    params: &FluidParams,
    dt: f64,
    rng: &mut R,
) -> FluidState {
    let (z1, z2) = if params.noise_enabled {
        (rng.sample(StandardNormal), rng.sample(StandardNormal))
    } else {
        (0.0, 0.0)
    };
    let n_events = if params.marking_enabled && params.marking_mode == MarkingMode::Poisson {
        let mean = marking_intensity(state, params) * dt;
        if mean > 0.0 {
            Poisson::new(mean)
                .map(|p| p.sample(rng) as u32)
                .unwrap_or(0)
        } else {
            0
        }
    } else {
        0
    };
    step_unchecked(state, params, dt, z1, z2, n_events)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_traj: usize,
    /// Integration steps between recorded samples.
    pub sample_every: usize,
    /// Number of individual trajectories to keep in the result.
    pub keep: usize,
}

impl EnsembleConfig {
    pub fn new(t_end: f64, dt: f64, seed: u64, n_traj: usize) -> Self {
        Self {
            t_end,
            dt,
            seed,
            n_traj,
            sample_every: 1,
            keep: 0,
        }
    }

    fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Sampled states of one trajectory; entry 0 is the initial state.
pub type Trajectory = Vec<FluidState>;

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    /// Per-sample mean of `(W, Q, Q̂)` across trajectories.
    pub mean: Vec<[f64; 3]>,
    /// Per-sample population variance of `(W, Q, Q̂)`.
    pub variance: Vec<[f64; 3]>,
    pub n_traj: usize,
    pub trajectories: Vec<Trajectory>,
}

fn validate_run(params: &FluidParams, initial: &FluidState, cfg: &EnsembleConfig) -> Result<()> {
    params.validate()?;
    initial.validate(params)?;
    if !(cfg.t_end.is_finite() && cfg.t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end must be positive, got {}",
            cfg.t_end
        )));
    }
    if cfg.n_traj == 0 {
        return Err(Error::InvalidParams("n_traj must be at least 1".into()));
    }
    if cfg.sample_every == 0 {
        return Err(Error::InvalidParams(
            "sample_every must be at least 1".into(),
        ));
    }
    check_step(cfg.dt, params)
}

fn integrate(
    params: &FluidParams,
    initial: &FluidState,
    dt: f64,
    n_steps: usize,
    sample_every: usize,
    rng: &mut SimRng,
) -> Trajectory {
    let mut out = Vec::with_capacity(n_steps / sample_every + 2);
    let mut s = *initial;
    out.push(s);
    for k in 1..=n_steps {
        s = step_random(&s, params, dt, rng);
        s.t = initial.t + k as f64 * dt;
        if k % sample_every == 0 || k == n_steps {
            out.push(s);
        }
    }
    out
}

/// Integrates trajectory `index` of an ensemble seeded with `cfg.seed`.
pub fn simulate_trajectory(
    params: &FluidParams,
    initial: &FluidState,
    cfg: &EnsembleConfig,
    index: u64,
) -> Result<Trajectory> {
    validate_run(params, initial, cfg)?;
    let mut rng = rng::stream(cfg.seed, index);
    Ok(integrate(
        params,
        initial,
        cfg.dt,
        cfg.n_steps(),
        cfg.sample_every,
        &mut rng,
    ))
}

/// Noise-free, expected-marking solution sampled like an ensemble run.
pub fn solve_deterministic(
    params: &FluidParams,
    initial: &FluidState,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    let mut p = *params;
    p.noise_enabled = false;
    p.marking_mode = MarkingMode::ExpectedDrift;
    let cfg = EnsembleConfig {
        sample_every,
        ..EnsembleConfig::new(t_end, dt, 0, 1)
    };
    simulate_trajectory(&p, initial, &cfg, 0)
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: [f64; 3],
    m2: [f64; 3],
}

impl Moments {
    fn push(&mut self, x: [f64; 3]) {
        self.n += 1.0;
        for i in 0..3 {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }
}

const CHUNK: usize = 512;

/// Runs `cfg.n_traj` independent trajectories and reduces them to per-sample
/// ensemble moments.
///
/// Trajectory `i` uses the random stream derived from `(cfg.seed, i)`, so the
/// result does not depend on how the work is scheduled across threads.
pub fn simulate_fluid(
    params: &FluidParams,
    initial: &FluidState,
    cfg: &EnsembleConfig,
) -> Result<Ensemble> {
    validate_run(params, initial, cfg)?;
    let n_steps = cfg.n_steps();
    let mut moments: Vec<Moments> = Vec::new();
    let mut times = Vec::new();
    let mut kept = Vec::new();

    let mut start = 0;
    while start < cfg.n_traj {
        let end = (start + CHUNK).min(cfg.n_traj);
        let batch: Vec<Trajectory> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(cfg.seed, i as u64);
                integrate(params, initial, cfg.dt, n_steps, cfg.sample_every, &mut rng)
            })
            .collect();
        for (offset, traj) in batch.into_iter().enumerate() {
            if moments.is_empty() {
                moments = vec![Moments::default(); traj.len()];
                times = traj.iter().map(|s| s.t).collect();
            }
            for (m, s) in moments.iter_mut().zip(&traj) {
                m.push(s.as_array());
            }
            if start + offset < cfg.keep {
                kept.push(traj);
            }
        }
        start = end;
    }

    Ok(Ensemble {
        times,
        mean: moments.iter().map(|m| m.mean).collect(),
        variance: moments
            .iter()
            .map(|m| [m.m2[0] / m.n, m.m2[1] / m.n, m.m2[2] / m.n])
            .collect(),
        n_traj: cfg.n_traj,
        trajectories: kept,
    })
}

/// Equilibrium of the drift field.
///
/// With the RED law the interior equilibrium satisfies `W/T = C`, `Q = Q̂`
/// and `p(Q̂)·W² = 2`. For a constant round-trip time the linear ramp is
/// inverted directly; with `delay_coupled` the root in `Q̂` is bracketed on
/// the ramp and found by bisection. Diagnostic laws with a frozen
/// probability or intensity fix `W*` first and then require the queue
/// balance to hold.
pub fn fixed_point(params: &FluidParams) -> Result<FluidState> {
    params.validate()?;
    if !params.marking_enabled {
        return Err(Error::NoEquilibrium(
            "marking disabled: dW/dt = 1/T > 0 everywhere".into(),
        ));
    }
    let c = params.capacity;
    let fixed_window = match params.marking_law {
        MarkingLaw::Red => None,
        MarkingLaw::ConstantProbability(p) if p > 0.0 => Some((2.0 / p).sqrt()),
        MarkingLaw::FixedIntensity(l) if l > 0.0 && !params.delay_coupled => {
            Some(2.0 / (params.rtt * l))
        }
        MarkingLaw::FixedIntensity(_) if params.delay_coupled => {
            return Err(Error::NoEquilibrium(
                "frozen intensity with delay-coupled RTT is not supported".into(),
            ))
        }
        _ => {
            return Err(Error::NoEquilibrium(
                "zero marking: the window never decreases".into(),
            ))
        }
    };

    if let Some(w) = fixed_window {
        let q = if params.delay_coupled {
            w - c * params.rtt
        } else {
            let imbalance = w / params.rtt - c;
            if imbalance.abs() > 1e-9 * c {
                return Err(Error::NoEquilibrium(format!(
                    "W*/T - C = {imbalance} != 0: the queue drifts at W* = {w}"
                )));
            }
            0.0
        };
        if !(0.0..=params.buffer).contains(&q) {
            return Err(Error::NoEquilibrium(format!(
                "equilibrium queue {q} outside [0, {}]",
                params.buffer
            )));
        }
        return Ok(FluidState::new(w, q, q));
    }

    let red = &params.red;
    let upper = red.q_max.min(params.buffer);
    if upper <= red.q_min {
        return Err(Error::NoEquilibrium(format!(
            "buffer {} does not reach the RED ramp starting at {}",
            params.buffer, red.q_min
        )));
    }
    let window_at = |q: f64| c * effective_rtt(&FluidState::new(1.0, q, q), params);

    let q_star = if !params.delay_coupled {
        let w = c * params.rtt;
        let p_needed = 2.0 / (w * w);
        if p_needed >= red.p_max {
            return Err(Error::NoEquilibrium(format!(
                "W* = C*T = {w} needs drop probability {p_needed} >= p_max = {}",
                red.p_max
            )));
        }
        let q = red.q_min + p_needed / red.p_max * (red.q_max - red.q_min);
        if q >= upper {
            return Err(Error::NoEquilibrium(format!(
                "equilibrium average queue {q} exceeds buffer {}",
                params.buffer
            )));
        }
        q
    } else {
        let g = |q: f64| drop_probability(q, red) * window_at(q).powi(2) - 2.0;
        // p is continuous on [q_min, q_max) and the window grows with Q, so g
        // is strictly increasing on the ramp.
        let mut lo = red.q_min;
        let mut hi = upper;
        let hi_val = if upper < red.q_max {
            g(hi)
        } else {
            red.p_max * window_at(hi).powi(2) - 2.0
        };
        if hi_val <= 0.0 {
            return Err(Error::NoEquilibrium(format!(
                "p(Q)·W(Q)² stays below 2 on the ramp (reaches {} at Q = {hi})",
                hi_val + 2.0
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    Ok(FluidState::new(window_at(q_star), q_star, q_star))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> FluidParams {
        FluidParams::new(0.1, 100.0, 50.0, RedParams::default()).unwrap()
    }

    #[test]
    fn window_per_ack_examples() {
        assert_eq!(window_per_ack(1.0).unwrap(), 2.0);
        assert_eq!(window_per_ack(2.0).unwrap(), 2.5);
        assert!((window_per_ack(10.0).unwrap() - 10.1).abs() < 1e-12);
        assert!(window_per_ack(0.5).is_err());
    }

    #[test]
    fn drift_examples() {
        let mut p = base();
        p.marking_enabled = false;
        let s = FluidState::new(10.0, 5.0, 5.0);
        let d = drift(&s, &p);
        assert!((d.w - 10.0).abs() < 1e-12);
        assert!(d.q.abs() < 1e-12);

        p.marking_enabled = true;
        p.marking_law = MarkingLaw::ConstantProbability(0.02);
        assert!((marking_intensity(&s, &p) - 2.0).abs() < 1e-12);
        assert!(drift(&s, &p).w.abs() < 1e-12);
    }

    #[test]
    fn queue_drift_is_reflected_at_boundaries() {
        let mut p = base();
        p.marking_enabled = false;
        let empty = FluidState::new(5.0, 0.0, 0.0);
        assert_eq!(drift(&empty, &p).q, 0.0);
        let full = FluidState::new(20.0, p.buffer, 0.0);
        assert_eq!(drift(&full, &p).q, 0.0);
    }

    #[test]
    fn diffusion_examples() {
        let mut p = base();
        p.marking_enabled = false;
        let d = diffusion(&FluidState::new(10.0, 1.0, 0.0), &p);
        assert!((d.w - 10f64.sqrt()).abs() < 1e-12);
        assert!(d.q.abs() < 1e-12);
        let d = diffusion(&FluidState::new(20.0, 1.0, 0.0), &p);
        assert!((d.q - 10.0).abs() < 1e-12);
        // Draining queue keeps a real noise amplitude.
        let d = diffusion(&FluidState::new(5.0, 1.0, 0.0), &p);
        assert!((d.q - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn euler_step_examples() {
        let mut p = base();
        p.marking_enabled = false;
        p.noise_enabled = false;
        let s = FluidState::new(10.0, 5.0, 5.0);
        let next = step_euler_maruyama(&s, &p, 0.01, 3.0, -2.0, 0).unwrap();
        assert!((next.w - 10.1).abs() < 1e-12);

        let empty = FluidState::new(2.0, 0.0, 0.0);
        let next = step_euler_maruyama(&empty, &p, 0.01, 0.0, 0.0, 0).unwrap();
        assert_eq!(next.q, 0.0);
    }

    #[test]
    fn step_guard() {
        let p = base();
        let s = FluidState::new(10.0, 5.0, 5.0);
        assert!(matches!(
            step_euler_maruyama(&s, &p, 0.02, 0.0, 0.0, 0),
            Err(Error::StepSize { .. })
        ));
        assert!(step_euler_maruyama(&s, &p, 0.0, 0.0, 0.0, 0).is_err());
        assert!(step_euler_maruyama(&s, &p, 0.01, 0.0, 0.0, 0).is_ok());
    }

    #[test]
    fn poisson_events_halve_the_window() {
        let mut p = base();
        p.noise_enabled = false;
        p.marking_mode = MarkingMode::Poisson;
        p.marking_law = MarkingLaw::FixedIntensity(3.0);
        let s = FluidState::new(16.0, 5.0, 5.0);
        let none = step_euler_maruyama(&s, &p, 0.01, 0.0, 0.0, 0).unwrap();
        // λ is removed from the drift in sampled mode.
        assert!((none.w - (16.0 + 0.1)).abs() < 1e-12);
        let two = step_euler_maruyama(&s, &p, 0.01, 0.0, 0.0, 2).unwrap();
        assert!((two.w - (16.1 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn box_constraints_hold_under_extreme_noise() {
        let p = base();
        let s = FluidState::new(1.0, 0.0, 0.0);
        let lo = step_euler_maruyama(&s, &p, 0.01, -50.0, -50.0, 0).unwrap();
        assert_eq!(lo.w, W_FLOOR);
        assert_eq!(lo.q, 0.0);
        let s = FluidState::new(40.0, 49.0, 0.0);
        let hi = step_euler_maruyama(&s, &p, 0.01, 50.0, 500.0, 0).unwrap();
        assert_eq!(hi.q, p.buffer);
    }

    #[test]
    fn linear_window_growth_without_marking() {
        let mut p = base();
        p.marking_enabled = false;
        let traj = solve_deterministic(&p, &FluidState::default(), 0.5, 0.001, 10).unwrap();
        for s in &traj {
            assert!((s.w - (1.0 + s.t / p.rtt)).abs() < 1e-9, "{s:?}");
        }
    }

    #[test]
    fn fixed_point_worked_case() {
        let fp = fixed_point(&base()).unwrap();
        assert_eq!(fp.w, 10.0);
        assert_eq!(fp.q_hat, 7.0);
        assert_eq!(fp.q, 7.0);
        assert!(drift(&fp, &base()).norm() < 1e-9);
    }

    #[test]
    fn fixed_point_constant_probability() {
        let mut p = base();
        p.marking_law = MarkingLaw::ConstantProbability(0.02);
        assert!((fixed_point(&p).unwrap().w - 10.0).abs() < 1e-12);
        p.marking_law = MarkingLaw::ConstantProbability(0.08);
        assert!(matches!(fixed_point(&p), Err(Error::NoEquilibrium(_))));
    }

    #[test]
    fn fixed_point_delay_coupled_residual() {
        let mut p = base();
        p.delay_coupled = true;
        let fp = fixed_point(&p).unwrap();
        assert!(fp.q > p.red.q_min && fp.q < p.red.q_max);
        assert!(drift(&fp, &p).norm() < 1e-9, "{:?}", drift(&fp, &p));
    }

    #[test]
    fn fixed_point_reports_missing_equilibrium() {
        let mut p = base();
        p.capacity = 10.0; // W* = 1 needs p = 2
        assert!(matches!(fixed_point(&p), Err(Error::NoEquilibrium(_))));
        let mut p = base();
        p.marking_enabled = false;
        assert!(matches!(fixed_point(&p), Err(Error::NoEquilibrium(_))));
    }

    #[test]
    fn ensemble_is_seed_deterministic() {
        let p = base();
        let cfg = EnsembleConfig {
            keep: 2,
            sample_every: 5,
            ..EnsembleConfig::new(1.0, 0.001, 42, 20)
        };
        let a = simulate_fluid(&p, &FluidState::default(), &cfg).unwrap();
        let b = simulate_fluid(&p, &FluidState::default(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectories.len(), 2);
        let single = simulate_trajectory(&p, &FluidState::default(), &cfg, 1).unwrap();
        assert_eq!(single, a.trajectories[1]);
    }

    #[test]
    fn noiseless_ensemble_collapses_to_deterministic() {
        let mut p = base();
        p.noise_enabled = false;
        let cfg = EnsembleConfig {
            sample_every: 10,
            ..EnsembleConfig::new(2.0, 0.001, 3, 7)
        };
        let ens = simulate_fluid(&p, &FluidState::default(), &cfg).unwrap();
        let det = solve_deterministic(&p, &FluidState::default(), 2.0, 0.001, 10).unwrap();
        for (m, s) in ens.mean.iter().zip(&det) {
            assert_eq!(*m, s.as_array());
        }
        assert!(ens.variance.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn run_validation() {
        let p = base();
        let bad = EnsembleConfig::new(1.0, 0.001, 0, 0);
        assert!(simulate_fluid(&p, &FluidState::default(), &bad).is_err());
        let bad = EnsembleConfig::new(-1.0, 0.001, 0, 1);
        assert!(simulate_fluid(&p, &FluidState::default(), &bad).is_err());
        let bad_state = FluidState::new(0.5, 0.0, 0.0);
        let cfg = EnsembleConfig::new(1.0, 0.001, 0, 1);
        assert!(simulate_fluid(&p, &bad_state, &cfg).is_err());
    }
}
