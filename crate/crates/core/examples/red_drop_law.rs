//! Prints the RED drop curve and how the count correction sharpens it.
use red_bench::red::{self, RedParams};

fn main() -> red_bench::Result<()> {
    let params = RedParams::default();
    println!("# q_hat  p_b  p_a(count=10)");
    for i in 0..=20 {
        let q_hat = i as f64;
        let p_b = red::drop_probability(q_hat, &params);
        println!("{q_hat:5.1}  {p_b:.4}  {:.4}", red::count_adjusted(p_b, 10));
    }

    // The average follows a step in the instantaneous queue geometrically.
    let mut q_hat = 0.0;
    for _ in 0..1000 {
        q_hat = red::ewma_update(q_hat, 10.0, params.w_q)?;
    }
    println!("q_hat after 1000 arrivals at Q = 10: {q_hat:.4}");
    Ok(())
}
