//! One TCP flow through a RED queue at C = 100 pkt/s, T = 0.1 s, compared
//! with the fluid model: mean queue against Q* and the lag of Q̂ behind Q.
use red_bench::analysis;
use red_bench::fluid::{self, FluidParams};
use red_bench::red::RedParams;
use red_bench::sim::{self, LinkConfig};
use red_bench::traffic::{FlowSpec, Transport};

fn main() -> red_bench::Result<()> {
    let link = LinkConfig {
        capacity: 800_000.0,
        buffer: 100,
        rtt_base: 0.09,
        ..LinkConfig::default()
    };
    let flow = FlowSpec::constant("sink", Transport::Tcp, 1e5, 1000, 200_000.0);
    let q_star = fluid::fixed_point(&FluidParams::new(0.1, 100.0, 100.0, RedParams::default())?)?.q;

    let mut means = Vec::new();
    for seed in 1..=10 {
        let res = sim::run_simulation(std::slice::from_ref(&flow), &link, 200.0, seed)?;
        let series = sim::queue_timeseries(&res.trace, 0.1)?;
        let steady: Vec<_> = series.iter().filter(|s| s.t >= 50.0).collect();
        let q: Vec<f64> = steady.iter().map(|s| s.q).collect();
        let q_hat: Vec<f64> = steady.iter().map(|s| s.q_hat).collect();
        let lag = analysis::cross_correlation_peak(&q, &q_hat, 200) as f64 * 0.1;
        println!(
            "seed {seed:2}: mean Q {:.3}, Q̂ lags Q by {lag:.1} s",
            analysis::mean(&q)
        );
        means.push(analysis::mean(&q));
    }
    let m = analysis::mean(&means);
    println!(
        "ensemble mean Q {m:.3}, fluid Q* {q_star}, relative error {:.3}",
        (m - q_star).abs() / q_star
    );
    Ok(())
}
