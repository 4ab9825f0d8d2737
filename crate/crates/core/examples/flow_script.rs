//! Parses an ITGSend-style flow script and summarises the departures.
use red_bench::traffic;

const SCRIPT: &str = "\
-a 10.2.0.10 -T UDP -C 1000 -c 512 -t 2000
-a 10.2.0.10 -T UDP -C 500 -c 512 -t 2000 -E 500
-a 10.2.0.10 -T TCP -C 200 -c 1000 -t 2000 -u 200 1400
";

fn main() -> red_bench::Result<()> {
    for (i, flow) in traffic::parse_flow_script(SCRIPT)?.iter().enumerate() {
        let deps = traffic::generate_departures(flow, 7 + i as u64)?;
        let bytes: u64 = deps.iter().map(|d| d.size as u64).sum();
        let last = deps.last().map_or(0.0, |d| d.time);
        println!(
            "flow {} {} to {}: {} packets, {} bytes, last departure {:.4} s",
            i + 1,
            flow.transport,
            flow.dest,
            deps.len(),
            bytes,
            last
        );
    }
    Ok(())
}
