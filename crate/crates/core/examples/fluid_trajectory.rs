//! Deterministic and stochastic fluid trajectories against the fixed point.
use red_bench::fluid::{self, EnsembleConfig, FluidParams, FluidState};
use red_bench::red::RedParams;

fn main() -> red_bench::Result<()> {
    let params = FluidParams::new(0.1, 100.0, 100.0, RedParams::default())?;
    let star = fluid::fixed_point(&params)?;
    println!("fixed point W* = {}, Q* = Q̂* = {}", star.w, star.q_hat);

    let det = fluid::solve_deterministic(&params, &FluidState::default(), 60.0, 1e-3, 5000)?;
    println!("# t  W  Q  Q̂ (deterministic)");
    for s in &det {
        println!("{:5.1}  {:7.3}  {:7.3}  {:7.3}", s.t, s.w, s.q, s.q_hat);
    }

    let cfg = EnsembleConfig {
        sample_every: 5000,
        ..EnsembleConfig::new(60.0, 1e-3, 1, 500)
    };
    let ens = fluid::simulate_fluid(&params, &FluidState::default(), &cfg)?;
    println!("# t  mean W  mean Q  sd Q (500 paths)");
    for ((t, m), v) in ens.times.iter().zip(&ens.mean).zip(&ens.variance) {
        println!("{t:5.1}  {:7.3}  {:7.3}  {:7.3}", m[0], m[1], v[1].sqrt());
    }
    Ok(())
}
