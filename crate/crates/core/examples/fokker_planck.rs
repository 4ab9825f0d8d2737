//! Evolves the window density under a frozen marking intensity and checks it
//! against an Euler–Maruyama histogram.
use rand::Rng;
use rand_distr::StandardNormal;
use red_bench::fluid::{self, FluidParams, FluidState, Grid1D, MarkingLaw};
use red_bench::fluid::{WindowCoefficients, WindowEquation};
use red_bench::red::RedParams;
use red_bench::rng;

fn main() -> red_bench::Result<()> {
    let eq = WindowEquation {
        coefficients: WindowCoefficients::FinalSystem,
        rtt: 0.1,
        lambda: 2.0,
    };
    let grid = Grid1D::from_fn(1.0, 31.0, 100, |w| (-(w - 10.0) * (w - 10.0) / 2.0).exp())?;
    let dt = 0.5 * grid.dx * grid.dx / eq.diffusion_sq(grid.hi);
    let sol = fluid::solve_fokker_planck_1d(
        grid.clone(),
        |w| eq.drift(w),
        |w| eq.diffusion_sq(w),
        dt,
        1.0,
    )?;
    println!(
        "FP: {} steps, mass {:.12}, mean {:.4}, variance {:.4}, clip events {}",
        sol.steps,
        sol.grid.mass(),
        sol.grid.mean(),
        sol.grid.variance(),
        sol.clip_events
    );

    let mut params = FluidParams::new(0.1, 1e6, 1e9, RedParams::default())?;
    params.marking_law = MarkingLaw::FixedIntensity(2.0);
    let mut g = rng::seeded(3);
    let samples: Vec<f64> = (0..20_000)
        .map(|_| {
            let z: f64 = g.sample(StandardNormal);
            let mut s = FluidState::new((10.0 + z).max(1.0), 0.0, 0.0);
            for _ in 0..1000 {
                s = fluid::step_random(&s, &params, 1e-3, &mut g);
            }
            s.w
        })
        .collect();
    let hist = grid.histogram(&samples);
    println!(
        "L1 distance to a 20000-path histogram: {:.4}",
        hist.l1_distance(&sol.grid)?
    );
    Ok(())
}
