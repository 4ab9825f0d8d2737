//! Desk-scale verification workbench for the RED active queue management
//! discipline.
//!
//! The crate bundles the pieces needed to check a stochastic fluid model of
//! a RED bottleneck against packet-level dynamics:
//!
//! - [`red`]: EWMA averaging, the piecewise-linear drop law and the per-packet
//!   accept/drop decision.
//! - [`fluid`]: the window/queue/average-queue fluid model, its Langevin
//!   (Euler–Maruyama) integrator, equilibrium solver and a 1-D Fokker–Planck
//!   solver.
//! - [`traffic`]: D-ITG-style flow scripts and departure schedules.
//! - [`sim`]: a discrete-event single-bottleneck simulator with UDP and
//!   AIMD (TCP-like) sources.
//! - [`metrics`]: packet logs, the ITGDec-style statistics report and binned
//!   bitrate/delay/jitter series.
//! - [`cli`]: the subcommands behind the `red-bench` binary.
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod analysis;
pub mod cli;
pub mod dat;
mod error;
pub mod fluid;
pub mod metrics;
pub mod red;
pub mod rng;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
