//! Simulates a lightly loaded flow, decodes its log into the ITGDec-style
//! report and writes one-second bitrate bins.
use red_bench::metrics::{self, Metric};
use red_bench::sim::{self, LinkConfig};
use red_bench::traffic::{FlowSpec, Transport};

fn main() -> red_bench::Result<()> {
    let flow = FlowSpec::constant("10.2.0.10:8999", Transport::Udp, 460.0, 512, 20_000.0);
    let link = LinkConfig {
        prop_delay: 0.14,
        ..LinkConfig::default()
    };
    let log = sim::run_simulation(&[flow], &link, 20.0, 1)?.packet_log();
    print!("{}", metrics::render_report(&metrics::decode(&log)?));

    let bins = metrics::binned_series(&log, 1000.0, Metric::Bitrate)?;
    print!("{}", bins.render());
    Ok(())
}
