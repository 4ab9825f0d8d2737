//! Five constant-rate UDP flows (1000..5000 pkt/s, 512 B) share a 10 Mbit/s
//! RED bottleneck for 20 s.
use red_bench::sim::{self, LinkConfig};
use red_bench::traffic::{FlowSpec, Transport};

fn main() -> red_bench::Result<()> {
    let flows: Vec<FlowSpec> = (1..=5)
        .map(|k| {
            FlowSpec::constant(
                "10.2.0.10",
                Transport::Udp,
                1000.0 * k as f64,
                512,
                20_000.0,
            )
        })
        .collect();
    let link = LinkConfig {
        capacity: 10e6,
        ..LinkConfig::default()
    };
    let res = sim::run_simulation(&flows, &link, 20.0, 1)?;
    let offered = 15_000.0 * 512.0 * 8.0;
    println!("loss fraction {:.4}", res.loss_fraction());
    println!(
        "fluid estimate 1 - C/offered = {:.4}",
        1.0 - link.capacity / offered
    );
    for flow in 1..=5 {
        let s = res.stats_at(Some(flow), 20.0);
        println!("flow {flow}: {s:?}");
    }
    Ok(())
}
