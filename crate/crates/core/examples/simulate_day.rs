//! One day of individual trips crossing fixed counters, compared with the
//! expected counts `N_k a_k(i, x)`.

use disagg::experiment::{guiding, theoretical_table};
use disagg::microsim::simulate_day;

fn main() -> disagg::Result<()> {
    let cfg = guiding::config();
    let counters = [0.25, 0.5, 0.75];
    let table = theoretical_table(&cfg, &counters)?;
    let trips: Vec<u64> = cfg.true_n.iter().map(|n| *n as u64).collect();
    let day = simulate_day(&cfg.journeys, &trips, &counters, &cfg.grid, 0, 7)?;

    for (j, x) in counters.iter().enumerate() {
        println!("counter at x = {x}");
        println!("  hour   observed   expected");
        for i in 6..22 {
            let expected: f64 = (0..cfg.journeys.len())
                .map(|k| cfg.true_n[k] * table.get(k, i, j))
                .sum();
            println!("  {i:>4} {:>10} {expected:>10.1}", day.count(i, j));
        }
    }
    println!("total crossings: {}", day.total());
    Ok(())
}
