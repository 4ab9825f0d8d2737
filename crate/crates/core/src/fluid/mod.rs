//! Stochastic fluid model of a TCP population behind a RED queue.
//!
//! State is the window `W`, the instantaneous queue `Q` and its EWMA `Q̂`:
//!
//! ```text
//! dW = (1/T) dt − (W/2) dN + √(1/T + (W/2)·λ) dV¹
//! dQ = (W/T − C) dt + √|W/T − C| dV²
//! dQ̂ = w_q·C·(Q − Q̂) dt
//! ```
//!
//! where `dN` counts RED marks with intensity `λ = p(Q̂)·W/T`. [`model`]
//! holds the drift/diffusion, the Euler–Maruyama integrator and the
//! equilibrium solver; [`fokker_planck`] evolves the matching 1-D densities.

pub mod fokker_planck;
pub mod model;

pub use fokker_planck::{
    solve_fokker_planck_1d, FpSolution, Grid1D, QueueEquation, WindowCoefficients, WindowEquation,
};
pub use model::{
    diffusion, diffusion_with_intensity, drift, drift_with_intensity, effective_rtt, fixed_point,
    marking_intensity, marking_process, simulate_fluid, simulate_trajectory, solve_deterministic,
    step_euler_maruyama, step_random, window_per_ack, Diffusion, Drift, Ensemble, EnsembleConfig,
    FluidParams, FluidState, MarkingLaw, MarkingMode, MarkingProcess, Trajectory, W_FLOOR,
};
